//! Catalog loading, validation, selection and the coverage manifest.

use std::collections::BTreeSet;

use lbs_core::catalog::{self, load_str, parse_records, select, to_text, CatalogError};
use lbs_core::{Expect, Kind};

/// Every bundled record, grouped by the claim it encodes.
const MANIFEST: &[(&str, &[&str])] = &[
    ("hand-checked controls", &[
        "control-square-on-linear", "control-translation-on-linear", "control-scaling-on-linear-first-order",
        "control-scaling-on-riccati", "control-self-commutator", "control-constant-ansatz",
        "control-constant-ansatz-wrong", "control-heat-solution", "control-heat-nonsolution",
    ]),
    ("third-order operators of u_xx = 2u/x^2", &[
        "inverse-square-q1", "inverse-square-q2-printed", "inverse-square-q2-alt", "inverse-square-q3",
    ]),
    ("the x^2, 1/x ansatz and its solution", &["inverse-square-reduction", "inverse-square-reduction-mutated", "inverse-square-solution"]),
    ("operators not admitted by the Airy-type ODE", &["airy-neg-q1", "airy-neg-q2", "airy-neg-q2-alt"]),
    ("operators admitted by the Airy-type ODE", &["airy-q3-printed", "airy-q3-alt", "airy-q4"]),
    ("commutation relation of Q3, Q4", &["airy-commutator", "airy-commutator-zero"]),
    ("operators Y0..Y3 of the modified Airy ODE", &[
        "modified-airy-y0", "modified-airy-y1", "modified-airy-y2", "modified-airy-y3-u", "modified-airy-y3-ux",
    ]),
    ("exponential ansatz of the modified Airy ODE", &["modified-airy-reduction"]),
    ("linear hyperbolic equation with opaque F", &[
        "hyper1-q1", "hyper1-q2", "hyper1-solution-a", "hyper1-solution-b", "hyper1-solution-c",
    ]),
    ("nonlinear hyperbolic equation", &[
        "hyper2-q1-printed", "hyper2-q1-corrected", "hyper2-q2-printed", "hyper2-q2-corrected",
        "hyper2-solution-a", "hyper2-solution-b", "hyper2-solution-c",
    ]),
    ("multi-field Riccati operator", &["riccati-printed", "riccati-source", "riccati-corrupted-vt"]),
    ("KdV stationary operators and implicit ansatz", &["kdv-x", "kdv-q1", "kdv-q2", "kdv-reduction"]),
    ("the eleven (K, V) pairs admitting (K/u)_xx", &[
        "prop1-a", "prop1-b", "prop1-c", "prop1-d", "prop1-e", "prop1-f", "prop1-g", "prop1-h", "prop1-i", "prop1-j",
        "prop1-k",
    ]),
    ("diffusion reductions with opaque A1, A2", &[
        "case-i", "case-i-negative-branch", "case-ii-printed", "case-ii-corrected", "case-iii-printed",
        "case-iii-corrected", "case-iii-display", "case-iv", "case-iv-display", "case-v-printed", "case-v-corrected",
        "case-v-display", "case-vi", "case-vi-display",
    ]),
    ("time-independent reduction to an algebraic system", &["case-i-algebraic"]),
    ("five-parameter source: reduction and general form", &[
        "a1a5-reduction", "a1a5-general-form-printed", "a1a5-general-form-corrected",
    ]),
    ("five-parameter source: point symmetries", &[
        "a1a5-y1", "a1a5-y2-a", "a1a5-y2-b", "a1a5-y2-c", "a1a5-y3-a", "a1a5-y3-b",
    ]),
    ("five-parameter source: closed-form families", &[
        "family1", "family2", "family3", "family4-printed", "family4-corrected", "family5-printed", "family5-corrected",
    ]),
    ("closed-form families are not invariant", &["noninv-1", "noninv-2", "noninv-3", "noninv-4", "noninv-5"]),
    ("invariant solution forms", &["inv-form-1", "inv-form-2-printed", "inv-form-2-corrected", "inv-form-3"]),
    ("three-parameter source: reduction, symmetries, criterion", &[
        "a6a8-reduction", "a6a8-general-form", "a6a8-q1", "a6a8-q2", "a6a8-criterion", "a6a8-criterion-system",
        "a6a8-criterion-split-printed", "a6a8-criterion-split-corrected",
    ]),
    ("inherited symmetries and first integrals", &[
        "a6a8-inherited-q1", "a6a8-inherited-q2", "first-integrals", "a6a8-drift", "a6a8-ratio-relation",
    ]),
    ("three-parameter source: closed form for a8 = -beta", &["a6a8-closed-form", "a6a8-closed-form-noninvariance"]),
    ("pure diffusion: reduction, solution, X1..X3", &[
        "pure-diffusion-reduction", "pure-diffusion-solution", "pure-diffusion-x1", "pure-diffusion-x2",
        "pure-diffusion-x3",
    ]),
    ("invariance of the partial solution under X1..X3", &[
        "invariant-combo", "invariant-x1x3", "invariant-span-x1", "invariant-span-x2", "invariant-span-x3",
        "invariant-span-q1",
    ]),
    ("abelian pair Q1, Q2", &["abelian-q1-minus-beta-q2", "abelian-commutator"]),
];

/// Fixed when the catalog was assembled.
const BUNDLED_RECORDS: usize = 128;

#[test]
fn coverage_manifest_matches_bundled_catalog() {
    let cases = catalog::bundled().unwrap();
    let ids: BTreeSet<&str> = cases.iter().map(|c| c.id.as_str()).collect();
    let mut listed = BTreeSet::new();
    for (anchor, group) in MANIFEST {
        assert!(!group.is_empty(), "{}", anchor);
        for id in *group {
            assert!(ids.contains(id), "manifest id {} ({}) is not in the catalog", id, anchor);
            assert!(listed.insert(*id), "{} listed twice", id);
        }
    }
    let unlisted: Vec<_> = ids.difference(&listed).collect();
    assert!(unlisted.is_empty(), "records without an anchor: {:?}", unlisted);
    assert_eq!(cases.len(), BUNDLED_RECORDS);
    assert!(cases.len() >= 40);
}

#[test]
fn every_kind_is_represented() {
    let cases = catalog::bundled().unwrap();
    for k in Kind::ALL {
        assert!(cases.iter().any(|c| c.kind == k), "no {} record", k.as_str());
    }
}

#[test]
fn typo_suspect_groups_have_two_members() {
    let cases = catalog::bundled().unwrap();
    let groups: BTreeSet<&str> = cases.iter().filter(|c| c.has_flag("typo-suspect")).filter_map(|c| c.variant.as_deref()).collect();
    assert!(groups.len() >= 8);
    for g in groups {
        let n = cases.iter().filter(|c| c.variant.as_deref() == Some(g)).count();
        assert!(n >= 2, "{} has {} member(s)", g, n);
    }
}

#[test]
fn records_round_trip_through_text() {
    for (name, text) in catalog::BUNDLED {
        let recs = parse_records(text).unwrap();
        for r in &recs {
            let again = parse_records(&r.to_text()).unwrap();
            assert_eq!(again.len(), 1);
            assert_eq!(&again[0], r, "{} in {}", r.id(), name);
        }
        assert_eq!(parse_records(&to_text(&recs)).unwrap(), recs);
        // and the rendered form loads into the same cases
        let a = load_str(text).unwrap();
        let b = load_str(&to_text(&recs)).unwrap();
        assert_eq!(a.iter().map(|c| &c.id).collect::<Vec<_>>(), b.iter().map(|c| &c.id).collect::<Vec<_>>());
    }
}

#[test]
fn empty_file_gives_no_records() {
    assert!(load_str("").unwrap().is_empty());
    assert!(load_str("# only a comment\n\n").unwrap().is_empty());
}

const GOOD: &str = "[case]\nid = ok\nkind = symmetry-check\n[manifold]\nrule: u_xx = 0\n[operator]\neta = u_x\n[expect]\nverdict = PASS\n";

#[test]
fn undeclared_symbol_is_rejected() {
    let text = GOOD.replace("eta = u_x", "eta = w_x");
    match load_str(&text) {
        Err(CatalogError::Invalid { id, .. }) => assert_eq!(id, "ok"),
        other => panic!("expected a validation error, got {:?}", other.map(|v| v.len())),
    }
    let text = GOOD.replace("rule: u_xx = 0", "rule: u_xx = gamma*u");
    assert!(matches!(load_str(&text), Err(CatalogError::Invalid { .. })));
    // declaring it fixes the record
    let text = text.replace("[manifold]", "[params]\ngamma in [1, 2]\n[manifold]");
    assert_eq!(load_str(&text).unwrap().len(), 1);
}

#[test]
fn malformed_files_are_rejected() {
    assert!(matches!(load_str(&format!("{}{}", GOOD, GOOD)), Err(CatalogError::Duplicate(_))));
    assert!(matches!(load_str("[nonsense]\n"), Err(CatalogError::Syntax { .. })));
    assert!(matches!(load_str("id = floating\n"), Err(CatalogError::Syntax { .. })));
    assert!(load_str(&GOOD.replace("verdict = PASS", "verdict = MAYBE")).is_err());
    assert!(load_str(&GOOD.replace("kind = symmetry-check", "kind = guess-check")).is_err());
    assert!(load_str(&GOOD.replace("eta = u_x", "eta = u_x +")).is_err());
    let lonely = GOOD.replace("[manifold]", "flags = typo-suspect\nvariant = solo\n[manifold]");
    assert!(matches!(load_str(&lonely), Err(CatalogError::LonelyVariant(..))));
    assert!(matches!(catalog::load(std::path::Path::new("/no/such/file.cases")), Err(CatalogError::Io(..))));
}

#[test]
fn select_by_glob_and_kind() {
    let cases = catalog::bundled().unwrap();
    let p = select(&cases, Some("prop1-*"));
    assert_eq!(p.len(), 11);
    assert!(p.iter().all(|c| c.expect == Expect::Pass));
    let comm = select(&cases, Some("kind=commutator-check"));
    assert!(comm.iter().any(|c| c.id == "airy-commutator"));
    assert!(comm.iter().all(|c| c.kind == Kind::CommutatorCheck));
    assert!(select(&cases, Some("none-matching")).is_empty());
    let all = select(&cases, None);
    assert_eq!(all.len(), cases.len());
    assert!(all.windows(2).all(|w| w[0].id < w[1].id), "stable order by id");
}

#[test]
fn glob_matching() {
    assert!(catalog::glob_match("prop1-*", "prop1-k"));
    assert!(catalog::glob_match("*-q?", "airy-neg-q2"));
    assert!(!catalog::glob_match("*-q?", "airy-neg-q2-alt"));
    assert!(catalog::glob_match("*", ""));
    assert!(!catalog::glob_match("a", ""));
}
