//! Small worked examples for each engine layer. Expected values come from
//! hand algebra or from numeric oracles written here (finite differences,
//! composite Simpson), never from the engine under test.

use lbs_core::catalog::{self, Case};
use lbs_core::detcheck::{check_lbs, Mode, Status, Tolerances};
use lbs_core::expr::{diff, eval_num, normalize, substitute, Bindings, JetVar, Node, Rules, Slot};
use lbs_core::invariance::{check_inherited, defect, span_decompose, PointField, SolutionWithConstants};
use lbs_core::jet::{commutator, prolong_apply, reduce_to_manifold, total_derivative, GeneralizedField, Independents, Manifold};
use lbs_core::reduce::{apply_ansatz, eval_implicit, extract_reduced_numeric};
use lbs_core::sampling::{case_rng, Space};
use lbs_core::{parse_in, Context, Expr};

fn p(s: &str) -> Expr {
    let ctx = Context::lenient().with_fields(&["psi", "v"]).with_functions(&["phi1", "phi2"]);
    parse_in(s, &ctx).unwrap()
}

fn same(a: &Expr, b: &Expr) -> bool {
    normalize(&(a.clone() - b.clone())) == Expr::zero()
}

fn manifold(rules: &[(&str, &str)]) -> Manifold {
    let rs = rules
        .iter()
        .map(|(l, r)| match p(l).node() {
            Node::Jet(j) => (j.clone(), p(r)),
            _ => panic!("{} is not a jet", l),
        })
        .collect();
    Manifold::new(rs, Independents::default()).unwrap()
}

fn case(id: &str) -> Case {
    catalog::bundled().unwrap().into_iter().find(|c| c.id == id).unwrap()
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

// ---- parsing and calculus ----

#[test]
fn parser_builds_jets_integrals_and_zero() {
    let e = p("u_xx - (2/x^2)*u");
    assert!(e.jets().contains(&JetVar::new("u", 2, 0)));
    assert_eq!(p("0"), Expr::zero());
    let i = p("Int(s, 0, u, 1/sqrt(phi1 - s^3/3))");
    assert!(matches!(i.node(), Node::Integral { .. }));
}

#[test]
fn partial_derivatives_by_hand() {
    assert!(same(&diff(&p("x^2"), &p("x")), &p("2*x")));
    assert!(same(&diff(&p("exp(beta*x)/u"), &p("u")), &p("-exp(beta*x)/u^2")));
    // boundary term of the fundamental theorem
    let i = p("Int(s, 0, u, 1/sqrt(phi1 - s^3/3))");
    assert!(same(&diff(&i, &p("u")), &p("1/sqrt(phi1 - u^3/3)")));
}

#[test]
fn normal_forms_of_simple_identities() {
    assert_eq!(normalize(&p("u/u - 1")), Expr::zero());
    assert_eq!(normalize(&p("exp(beta*x)*exp(-beta*x)")), Expr::one());
    let a = normalize(&p("(phi1*exp(beta*x) + phi2)*(phi1*exp(beta*x) + phi2)^(-3/2)"));
    assert_eq!(a, normalize(&p("(phi1*exp(beta*x) + phi2)^(-1/2)")));
}

#[test]
fn substitution_leaves_unlisted_jets_alone() {
    let mut r = Rules::new();
    r.insert(p("u"), p("x^2"));
    assert!(same(&substitute(&p("u_x + u"), &r), &p("u_x + x^2")));
    let mut r = Rules::new();
    r.insert(p("x"), Expr::zero());
    assert_eq!(substitute(&p("x^2"), &r), Expr::zero());
}

#[test]
fn first_integral_equals_phi1_on_the_exp_ansatz() {
    // u = e^{bx} S^{-1/2}, S = phi1 e^{bx} + phi2; u_x differentiated by hand
    let u = p("exp(beta*x)*(phi1*exp(beta*x) + phi2)^(-1/2)");
    let ux = p("beta*exp(beta*x)*(phi1*exp(beta*x) + phi2)^(-1/2) - beta/2*phi1*exp(2*beta*x)*(phi1*exp(beta*x) + phi2)^(-3/2)");
    let mut r = Rules::new();
    r.insert(p("u"), u);
    r.insert(p("u_x"), ux);
    let i1 = p("2*exp(beta*x)/u^3*(u - u_x/beta)");
    let i2 = p("exp(2*beta*x)/u^3*(2*u_x/beta - u)");
    assert!(same(&substitute(&i1, &r), &p("phi1")));
    assert!(same(&substitute(&i2, &r), &p("phi2")));
}

#[test]
fn numeric_evaluation() {
    let mut b = Bindings::new();
    b.set("x", 2.0).set("t", 0.0);
    assert_eq!(eval_num(&p("x^2 + 1"), &b).unwrap(), 5.0);
    let k = eval_num(&p("sqrt(2)/(3*sqrt(3*(t + 1)))"), &b).unwrap();
    assert!((k - 2f64.sqrt() / (3.0 * 3f64.sqrt())).abs() < 1e-15);
    assert!((k - 0.2721655).abs() < 1e-7);
}

#[test]
fn quadrature_atom_matches_fine_simpson() {
    let e = p("Int(s, 0, 1, 1/sqrt(1 - s^3/3))");
    let v = eval_num(&e, &Bindings::new()).unwrap();
    let oracle = simpson(|s| 1.0 / (1.0 - s * s * s / 3.0).sqrt(), 0.0, 1.0, 1_000_000);
    assert!((v - oracle).abs() < 1e-10, "{} vs {}", v, oracle);
}

// ---- jets, manifolds, prolongation ----

#[test]
fn total_derivatives_on_and_off_the_manifold() {
    assert!(same(&total_derivative(&p("u^2"), Slot::X, None), &p("2*u*u_x")));
    let m = manifold(&[("u_xx", "2*u/x^2")]);
    assert!(same(&total_derivative(&p("u_x"), Slot::X, Some(&m)), &p("2*u/x^2")));
    // D_t u_x on u_t = F equals D_x F
    let m = manifold(&[("u_t", "exp(u)*u_x + u_xx")]);
    let dt = total_derivative(&p("u_x"), Slot::T, Some(&m));
    assert!(same(&dt, &p("exp(u)*u_x^2 + exp(u)*u_xx + u_xxx")));
}

#[test]
fn reduction_to_the_manifold() {
    let m = manifold(&[("u_xx", "2*u/x^2")]);
    assert_eq!(reduce_to_manifold(&p("u_xx - (2/x^2)*u"), &m), Expr::zero());
    // hand: D_t (x u / (6(t+1))) = -x u/(6(t+1)^2) + x u_t/(6(t+1))
    let m = manifold(&[("u_xx", "x*u/(6*(t + 1))")]);
    let r = reduce_to_manifold(&p("u_xxt"), &m);
    assert!(same(&r, &p("-x*u/(6*(t + 1)^2) + x*u_t/(6*(t + 1))")));
    let m = Manifold::new(
        vec![(JetVar::new("psi", 1, 0), p("u*psi^2 + v"))],
        Independents::default(),
    )
    .unwrap();
    assert!(same(&reduce_to_manifold(&p("psi_x"), &m), &p("u*psi^2 + v")));
}

#[test]
fn prolonged_fields_on_linear_odes() {
    let h = p("u_xx - (2/x^2)*u");
    let m = manifold(&[("u_xx", "2*u/x^2")]);
    assert_eq!(normalize(&prolong_apply(&GeneralizedField::new("u", p("u")), &h, &m)), Expr::zero());
    assert_eq!(normalize(&prolong_apply(&GeneralizedField::new("u", p("u_t")), &h, &m)), Expr::zero());
    // time-dependent coefficient: D_x^2 u_t - x u_t/(6(t+1)) on the manifold
    // is D_t(x u/(6(t+1))) - x u_t/(6(t+1)) = -x u/(6(t+1)^2)
    let h = p("u_xx - x*u/(6*(t + 1))");
    let m = manifold(&[("u_xx", "x*u/(6*(t + 1))")]);
    let r = prolong_apply(&GeneralizedField::new("u", p("u_t")), &h, &m);
    assert!(same(&r, &p("-x*u/(6*(t + 1)^2)")));
}

#[test]
fn self_commutator_vanishes() {
    let x = GeneralizedField::new("u", p("u_xxx + u*u_x"));
    let c = commutator(&x, &x, None).unwrap();
    assert_eq!(normalize(&c.eta), Expr::zero());
}

// ---- determining-equation checks ----

#[test]
fn square_is_not_a_symmetry_of_u_xx_zero() {
    let m = manifold(&[("u_xx", "0")]);
    let x = GeneralizedField::new("u", p("u^2"));
    let h = p("u_xx");
    assert!(same(&prolong_apply(&x, &h, &m), &p("2*u_x^2")));
    let mut rng = case_rng(42, "square", 0);
    let v = check_lbs(&m, &x, &h, Mode::Both, &Space::default(), &Tolerances::default(), &mut rng);
    assert_eq!(v.status, Status::Fail);
}

#[test]
fn scaling_on_linear_first_order_ode() {
    let m = Manifold::new(vec![(JetVar::new("psi", 1, 0), p("psi"))], Independents::default()).unwrap();
    let x = GeneralizedField::new("psi", p("psi"));
    let mut rng = case_rng(42, "scaling", 0);
    let v = check_lbs(&m, &x, &p("psi_x - psi"), Mode::Both, &Space::default(), &Tolerances::default(), &mut rng);
    assert_eq!(v.status, Status::PassSymbolic);
}

// ---- reductions ----

#[test]
fn inverse_square_ansatz_residual_by_hand() {
    let c = case("inverse-square-reduction");
    let pde = lbs_core::run::pde(&c).unwrap();
    let a = lbs_core::run::ansatz(&c).unwrap();
    let r = apply_ansatz(&pde, &a).unwrap();
    let oracle = p("(phi1_t - lambda*phi1)*x^2 + (phi2_t - lambda*phi2 + 12*phi1)/x");
    // the residual is normalized by u, so compare after clearing it
    let u = p("phi1*x^2 + phi2/x");
    let scaled_ok = same(&r, &oracle) || same(&(r.clone() * u.clone()), &oracle) || same(&r, &(oracle.clone() / u));
    assert!(scaled_ok, "residual {}", normalize(&r));
}

fn phi_dot(id: &str, point: &[(&str, f64)], xs: &[f64], round: usize) -> (Vec<f64>, f64) {
    let c = case(id);
    let pde = lbs_core::run::pde(&c).unwrap();
    let a = lbs_core::run::ansatz(&c).unwrap();
    let r = apply_ansatz(&pde, &a).unwrap();
    let mut b = c.space.opaque_bindings(round);
    for (k, v) in point {
        b.set(k, *v);
    }
    let e = extract_reduced_numeric(&r, &a, &b, xs).unwrap();
    (e.phi_dot, e.defect)
}

#[test]
fn pure_diffusion_phi_dot_at_a_point() {
    let xs: Vec<f64> = (0..12).map(|i| -1.0 + i as f64 * 0.2).collect();
    let (d, defect) = phi_dot("pure-diffusion-reduction", &[("beta", 1.0), ("t", 0.0), ("phi1", 1.0), ("phi2", 1.0)], &xs, 0);
    assert!((d[0] + 0.5).abs() < 1e-9 && (d[1] + 1.0).abs() < 1e-9, "{:?}", d);
    assert!(defect < 1e-9);
    // the five-parameter equation with every a_i = 0 gives the same values
    let zero = [("a1", 0.0), ("a2", 0.0), ("a3", 0.0), ("a4", 0.0), ("a5", 0.0)];
    let mut pt = vec![("beta", 1.0), ("t", 0.0), ("phi1", 1.0), ("phi2", 1.0)];
    pt.extend(zero);
    let (d2, _) = phi_dot("a1a5-reduction", &pt, &xs, 0);
    assert!((d2[0] - d[0]).abs() < 1e-9 && (d2[1] - d[1]).abs() < 1e-9);
}

#[test]
fn kdv_implicit_ansatz_phi_dot() {
    // first instantiation: h1 = 1, h2 = z
    let xs: Vec<f64> = (0..10).map(|i| 0.1 + i as f64 * 0.05).collect();
    let (d, defect) = phi_dot("kdv-reduction", &[("t", 0.3), ("phi1", 1.0), ("phi2", 0.0)], &xs, 0);
    assert!((d[0] - 6.0).abs() < 1e-6 && (d[1] - 1.0).abs() < 1e-6, "{:?}", d);
    assert!(defect < 1e-7, "{}", defect);
}

#[test]
fn implicit_ansatz_root_finding() {
    let c = case("kdv-reduction");
    let a = lbs_core::run::ansatz(&c).unwrap();
    let mut b = c.space.opaque_bindings(0);
    b.set("t", 0.0).set("phi1", 1.0).set("phi2", -0.4);
    // x + phi2 = 0 puts the upper limit at 0
    assert!(eval_implicit(&a, &b, 0.4).unwrap().abs() < 1e-12);
    b.set("phi2", 0.0);
    let x = 1e-3;
    assert!((eval_implicit(&a, &b, x).unwrap() - x).abs() < 1e-9);
    // du/dx = sqrt(phi1 - u^3/3) by central differences
    let (x, h) = (0.5, 1e-5);
    let u = eval_implicit(&a, &b, x).unwrap();
    let fd = (eval_implicit(&a, &b, x + h).unwrap() - eval_implicit(&a, &b, x - h).unwrap()) / (2.0 * h);
    assert!((fd - (1.0 - u * u * u / 3.0).sqrt()).abs() < 1e-6);
}

// ---- invariance ----

fn partial_family() -> SolutionWithConstants {
    let f = p("exp(beta*x)/sqrt(2/(beta^2*t + c1)*exp(beta*x) + c2/(beta^2*t + c1)^2)");
    SolutionWithConstants::new("u", f, &["c1", "c2"])
}

/// Checks `defect = a1 df/dc1 + a2 df/dc2` at a few points with the
/// c-derivatives taken by central differences.
fn assert_defect(x: &PointField, a: [&str; 2]) {
    let s = partial_family();
    let d = defect(x, &s);
    let (a1, a2) = (p(a[0]), p(a[1]));
    for (xv, tv, beta, c1, c2) in [(0.3, 0.2, 0.9, 1.1, 0.7), (-0.8, 0.9, 1.3, 0.6, 1.8), (1.2, 0.5, 0.6, 1.9, 0.9)] {
        let bind = |c1: f64, c2: f64| {
            let mut b = Bindings::new();
            b.set("x", xv).set("t", tv).set("beta", beta).set("c1", c1).set("c2", c2);
            b
        };
        let b = bind(c1, c2);
        let h = 1e-6;
        let f = |c1: f64, c2: f64| eval_num(&s.f, &bind(c1, c2)).unwrap();
        let fc1 = (f(c1 + h, c2) - f(c1 - h, c2)) / (2.0 * h);
        let fc2 = (f(c1, c2 + h) - f(c1, c2 - h)) / (2.0 * h);
        let want = eval_num(&a1, &b).unwrap() * fc1 + eval_num(&a2, &b).unwrap() * fc2;
        let got = eval_num(&d, &b).unwrap();
        assert!((got - want).abs() < 1e-7 * (1.0 + want.abs()), "{} vs {}", got, want);
    }
}

#[test]
fn point_field_defects_on_the_partial_solution() {
    let pf = |a: &str, b: &str, c: &str| PointField::new(p(a), p(b), p(c));
    assert_defect(&pf("1", "0", "0"), ["beta^2", "0"]);
    assert_defect(&pf("0", "2", "beta*u"), ["0", "-2*beta*c2"]);
    assert_defect(&pf("2*t", "0", "u"), ["-2*c1", "-2*c2"]);
    assert_defect(&pf("2*(beta^2*t + c1)", "0", "beta^2*u"), ["0", "-2*c2*beta^2"]);
    // zero family, scaling field
    let z = SolutionWithConstants::new("u", Expr::zero(), &[]);
    assert_eq!(normalize(&defect(&pf("0", "0", "u"), &z)), Expr::zero());
}

#[test]
fn span_coefficients_of_the_scaling_defect() {
    let s = partial_family();
    let x2 = PointField::new(p("2*t"), Expr::zero(), p("u"));
    let mut b = Bindings::new();
    b.set("beta", 0.8).set("c1", 1.3).set("c2", 0.9);
    let pts: Vec<(f64, f64)> = (0..25).map(|i| (-1.0 + (i % 5) as f64 * 0.5, (i / 5) as f64 * 0.25)).collect();
    let fit = span_decompose(&defect(&x2, &s), &s, &pts, &b).unwrap();
    assert!((fit.coefficients[0] + 2.6).abs() < 1e-8 && (fit.coefficients[1] + 1.8).abs() < 1e-8, "{:?}", fit.coefficients);
    assert!(fit.residual < 1e-9);
}

#[test]
fn scaling_acts_linearly_on_a_trivial_first_integral() {
    let m = manifold(&[("u_x", "0")]);
    let q = PointField::new(Expr::zero(), Expr::zero(), p("u"));
    let names = [lbs_core::expr::Symbol::new("I1")];
    let tol = Tolerances::default();
    let mut rng = case_rng(42, "inherited", 0);
    let ok = check_inherited(&q, &[p("u")], &names, &m, "u", &[p("I1")], &Expr::zero(), &Space::default(), &tol, &mut rng);
    assert!(ok.status.is_pass(), "{:?}", ok.notes);
    let bad = check_inherited(&q, &[p("u")], &names, &m, "u", &[p("-I1")], &Expr::zero(), &Space::default(), &tol, &mut rng);
    assert_eq!(bad.status, Status::Fail);
}
