//! Randomized properties of the expression engine: derivatives against
//! finite differences, printer/parser round trips and normal forms against
//! direct evaluation.

use lbs_core::expr::{diff, eval_num, normalize, Bindings};
use lbs_core::jet::{prolong_apply_opt, GeneralizedField};
use lbs_core::parse;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

/// Smooth expressions in x, y, u, u_x that stay finite on the sampled box.
fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        Just("u".to_string()),
        Just("u_x".to_string()),
        (1i32..7).prop_map(|n| n.to_string()),
        (1i32..5, 2i32..6).prop_map(|(a, b)| format!("({}/{})", a, b)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} + {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} - {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} * {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} / (1 + ({})^2))", a, b)),
            (inner.clone(), 2i32..4).prop_map(|(a, n)| format!("({})^{}", a, n)),
            inner.clone().prop_map(|a| format!("sin({})", a)),
            inner.clone().prop_map(|a| format!("cos({})", a)),
            inner.clone().prop_map(|a| format!("exp(sin({}))", a)),
            inner.clone().prop_map(|a| format!("ln(1 + ({})^2)", a)),
            inner.clone().prop_map(|a| format!("sqrt(2 + cos({}))", a)),
            inner.clone().prop_map(|a| format!("tanh({})", a)),
            inner.prop_map(|a| format!("(1 + ({})^2)^(-3/2)", a)),
        ]
    })
}

fn point() -> impl Strategy<Value = [f64; 4]> {
    [-1.0f64..1.0, -1.0f64..1.0, 0.2f64..2.0, -1.0f64..1.0]
}

fn bind(p: &[f64; 4]) -> Bindings {
    let mut b = Bindings::new();
    b.set("x", p[0]).set("y", p[1]).set_jet("u", 0, 0, p[2]).set_jet("u", 1, 0, p[3]);
    b
}

/// Five-point central difference in x.
fn fd_x(e: &lbs_core::Expr, p: &[f64; 4]) -> f64 {
    let h = 1e-3;
    let at = |dx: f64| {
        let mut q = *p;
        q[0] += dx;
        eval_num(e, &bind(&q)).unwrap()
    };
    (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Rounding error of `fd_x`, about 18 eps |f| / (12 h).
fn fd_rounding(e: &lbs_core::Expr, p: &[f64; 4]) -> f64 {
    2.0 * f64::EPSILON * eval_num(e, &bind(p)).unwrap().abs() / 1e-3
}

#[test]
fn derivative_matches_finite_differences_on_1000_expressions() {
    let mut runner = TestRunner::new(Config { cases: 1000, ..Config::default() });
    let x = parse("x").unwrap();
    let u = parse("u").unwrap();
    runner
        .run(&(expr_text(), point()), |(s, p)| {
            let e = parse(&s).unwrap();
            let d = eval_num(&diff(&e, &x), &bind(&p)).unwrap();
            let fd = fd_x(&e, &p);
            prop_assert!((d - fd).abs() <= 1e-5 * d.abs().max(fd.abs()).max(1.0) + fd_rounding(&e, &p), "d/dx {}: {} vs fd {}", s, d, fd);
            // the normalized derivative agrees too
            let dn = eval_num(&normalize(&diff(&e, &x)), &bind(&p)).unwrap();
            prop_assert!(close(dn, d, 1e-8), "normalized d/dx {}: {} vs {}", s, dn, d);
            // a partial in a jet variable: u is treated as an independent atom
            let du = eval_num(&diff(&e, &u), &bind(&p)).unwrap();
            let h = 1e-6;
            let (mut a, mut b) = (p, p);
            a[2] += h;
            b[2] -= h;
            let fdu = (eval_num(&e, &bind(&a)).unwrap() - eval_num(&e, &bind(&b)).unwrap()) / (2.0 * h);
            prop_assert!(close(du, fdu, 1e-5), "d/du {}: {} vs fd {}", s, du, fdu);
            Ok(())
        })
        .unwrap();
}

proptest! {
    #![proptest_config(Config { cases: 500, ..Config::default() })]

    #[test]
    fn printed_form_is_a_parser_fixed_point(s in expr_text(), p in point()) {
        // the printer may regroup (a/b)/c as a/(b*c) and the parser folds
        // nested powers, so trees are compared after one round and values at a random point
        let e = parse(&s).unwrap();
        let printed = e.to_string();
        let back = parse(&printed).unwrap();
        let again = parse(&back.to_string()).unwrap();
        prop_assert_eq!(&again, &back);
        prop_assert_eq!(again.to_string(), back.to_string());
        let (v, w) = (eval_num(&e, &bind(&p)).unwrap(), eval_num(&back, &bind(&p)).unwrap());
        prop_assert!(close(v, w, 1e-12), "{} printed as {}: {} vs {}", s, printed, v, w);
    }

    #[test]
    fn normal_form_round_trips_through_the_printer(s in expr_text()) {
        let n = normalize(&parse(&s).unwrap());
        let back = parse(&n.to_string()).unwrap();
        prop_assert_eq!(normalize(&back), n);
    }

    #[test]
    fn normal_form_evaluates_like_the_input(s in expr_text(), p in point()) {
        let e = parse(&s).unwrap();
        let v = eval_num(&e, &bind(&p)).unwrap();
        let n = eval_num(&normalize(&e), &bind(&p)).unwrap();
        prop_assert!(close(v, n, 1e-9), "{}: {} vs normalized {}", s, v, n);
    }

    #[test]
    fn normalize_is_idempotent(s in expr_text()) {
        let n = normalize(&parse(&s).unwrap());
        prop_assert_eq!(normalize(&n), n.clone());
    }

    #[test]
    fn prolongation_is_linear_in_the_characteristic(a in expr_text(), b in expr_text(), h in expr_text()) {
        let (ea, eb, eh) = (parse(&a).unwrap(), parse(&b).unwrap(), parse(&h).unwrap());
        let sum = GeneralizedField::new("u", ea.clone() + eb.clone());
        let lhs = prolong_apply_opt(&sum, &eh, None);
        let rhs = prolong_apply_opt(&GeneralizedField::new("u", ea), &eh, None) + prolong_apply_opt(&GeneralizedField::new("u", eb), &eh, None);
        prop_assert_eq!(normalize(&(lhs - rhs)), lbs_core::Expr::zero());
    }

    #[test]
    fn prolongation_obeys_leibniz(a in expr_text(), f in expr_text(), g in expr_text(), p in point()) {
        let x = GeneralizedField::new("u", parse(&a).unwrap());
        let (ef, eg) = (parse(&f).unwrap(), parse(&g).unwrap());
        let lhs = prolong_apply_opt(&x, &(ef.clone() * eg.clone()), None);
        let rhs = prolong_apply_opt(&x, &ef, None) * eg.clone() + ef * prolong_apply_opt(&x, &eg, None);
        // compared numerically; prolongations reach u_xx, u_xxx
        let mut b = bind(&p);
        b.set_jet("u", 2, 0, 0.3).set_jet("u", 3, 0, -0.7).set_jet("u", 4, 0, 0.2);
        let (l, r) = (eval_num(&lhs, &b).unwrap(), eval_num(&rhs, &b).unwrap());
        prop_assert!(close(l, r, 1e-9), "{} vs {}", l, r);
    }
}
