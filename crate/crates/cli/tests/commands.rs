use std::io::Write;
use std::process::{Command, Output};

fn lbsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbsr")).args(args).output().expect("lbsr runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("valid json")
}

/// Strip fields that legitimately differ between runs.
fn stable(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("timestamp");
    for c in v["cases"].as_array_mut().unwrap() {
        c.as_object_mut().unwrap().remove("seconds");
    }
    v
}

fn case_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn lbs_pair_suite_passes_with_exit_zero() {
    let o = lbsr(&["run", "--filter", "prop1-*", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let cases = v["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 11);
    for c in cases {
        assert!(c["status"].as_str().unwrap().starts_with("PASS"), "{}", c);
        for k in ["id", "kind", "status", "stage", "max_residual", "samples", "seconds", "notes"] {
            assert!(c.get(k).is_some(), "missing {}", k);
        }
    }
}

#[test]
fn expected_failures_count_as_matches() {
    let o = lbsr(&["verify", "--filter", "airy-neg-q?", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    for c in v["cases"].as_array().unwrap() {
        assert_eq!(c["status"], "FAIL");
        assert_eq!(c["outcome"], "MATCH");
    }
}

#[test]
fn empty_selection_exits_zero() {
    let o = lbsr(&["--filter", "none-matching"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 cases"));
}

#[test]
fn mismatch_exits_one() {
    let f = case_file(
        "[case]\nid = wrong\nkind = symmetry-check\n[manifold]\nrule: u_xx = 0\n[operator]\neta = u^2\n[expect]\nverdict = PASS\n",
    );
    let o = lbsr(&["--catalog", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("MISMATCH"));
}

#[test]
fn bad_inputs_exit_two() {
    assert_eq!(lbsr(&["--catalog", "/nonexistent/file.cases"]).status.code(), Some(2));
    let f = case_file("[case]\nid = x\nkind = symmetry-check\n[operator]\neta = q_x\n[expect]\nverdict = PASS\n");
    assert_eq!(lbsr(&["--catalog", f.path().to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(lbsr(&["--tol-pass", "1e-3", "--tol-fail", "1e-6"]).status.code(), Some(2));
    assert_eq!(lbsr(&["--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(lbsr(&["show", "no-such-case"]).status.code(), Some(2));
}

#[test]
fn repeated_runs_are_identical_modulo_timing() {
    let args = ["--filter", "a6a8-*", "--format", "json", "--seed", "7"];
    let a = stable(json(&lbsr(&args)));
    let b = stable(json(&lbsr(&args)));
    assert_eq!(a, b);
}

#[test]
fn serial_and_parallel_verdicts_agree() {
    let a = stable(json(&lbsr(&["--filter", "case-*", "--format", "json", "--jobs", "1"])));
    let b = stable(json(&lbsr(&["--filter", "case-*", "--format", "json", "--jobs", "4"])));
    assert_eq!(a, b);
}

#[test]
fn list_filters_by_kind() {
    let o = lbsr(&["list", "--filter", "kind=commutator-check", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let ids: Vec<String> = json(&o).as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap().to_string()).collect();
    assert!(ids.contains(&"airy-commutator".to_string()));
    assert!(ids.iter().all(|i| !i.starts_with("prop1")));
}

#[test]
fn show_and_explain_print_intermediates() {
    let o = lbsr(&["show", "control-heat-solution"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("id = control-heat-solution"));
    assert!(s.contains("residual:"));
    let o = lbsr(&["explain", "control-translation-on-linear"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("X H (on the manifold)"));
    assert!(s.contains("PASS"));
}
