//! Reports depend only on the seed and the configuration.

use lbs_core::catalog::{self, Case};
use lbs_core::run::run;
use lbs_core::{Kind, RunConfig};

/// A few records of every kind, skipping the slowest groups.
fn sample(cases: &[Case]) -> Vec<&Case> {
    let mut out = Vec::new();
    for k in Kind::ALL {
        out.extend(cases.iter().filter(|c| c.kind == k && !c.id.starts_with("prop1-")).take(6));
    }
    out
}

/// JSON with the wall-clock fields removed.
fn stable_json(cases: &[&Case], cfg: &RunConfig) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&run(cases, cfg).to_json()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    for c in v["cases"].as_array_mut().unwrap() {
        c.as_object_mut().unwrap().remove("seconds");
    }
    v
}

#[test]
fn serial_and_parallel_reports_agree() {
    let cases = catalog::bundled().unwrap();
    let sel = sample(&cases);
    assert!(sel.len() >= 30);
    let serial = stable_json(&sel, &RunConfig { jobs: Some(1), ..RunConfig::default() });
    let parallel = stable_json(&sel, &RunConfig { jobs: Some(4), ..RunConfig::default() });
    assert_eq!(serial, parallel);
}

#[test]
fn same_seed_same_report() {
    let cases = catalog::bundled().unwrap();
    let sel = sample(&cases);
    let cfg = RunConfig { seed: 2024, ..RunConfig::default() };
    assert_eq!(stable_json(&sel, &cfg), stable_json(&sel, &cfg));
}

#[test]
fn verdicts_do_not_depend_on_the_seed() {
    let cases = catalog::bundled().unwrap();
    let sel = sample(&cases);
    let a = run(&sel, &RunConfig { seed: 1, ..RunConfig::default() });
    let b = run(&sel, &RunConfig { seed: 99, ..RunConfig::default() });
    for (x, y) in a.cases.iter().zip(&b.cases) {
        assert_eq!(x.outcome, y.outcome, "{}", x.id);
    }
}
