//! Invariance of solution families under point generators: defects, span
//! decomposition, nullspace search and inherited symmetries of reduced
//! systems.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::detcheck::{zero_test, Mode, Stage, Status, Tolerances, Verdict};
use crate::expr::{eval_num, normalize, substitute, Bindings, EvalError, Expr, Rules, Slot, Symbol};
use crate::jet::{reduce_to_manifold, total_derivative_in, Independents, Manifold};
use crate::numeric::linalg;
use crate::sampling::{free_atoms, Range, Space};

/// `xi_t d/dt + xi_x d/dx + eta d/du` with coefficients in `(t, x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointField {
    pub xi_t: Expr,
    pub xi_x: Expr,
    pub eta: Expr,
}

impl PointField {
    pub fn new(xi_t: Expr, xi_x: Expr, eta: Expr) -> Self {
        PointField { xi_t, xi_x, eta }
    }

    /// `sum c_i X_i`.
    pub fn combine(fields: &[PointField], coeffs: &[Expr]) -> PointField {
        let pick = |g: &dyn Fn(&PointField) -> Expr| {
            normalize(&Expr::add(fields.iter().zip(coeffs).map(|(f, c)| c.clone() * g(f)).collect()))
        };
        PointField { xi_t: pick(&|f| f.xi_t.clone()), xi_x: pick(&|f| f.xi_x.clone()), eta: pick(&|f| f.eta.clone()) }
    }

    /// Characteristic `eta - xi_t u_t - xi_x u_x` of the evolutionary
    /// representative.
    pub fn characteristic(&self, field: &str) -> Expr {
        normalize(&(self.eta.clone() - self.xi_t.clone() * Expr::jet(field, 0, 1) - self.xi_x.clone() * Expr::jet(field, 1, 0)))
    }
}

/// Solution `u = f(x, t)` with the integration constants it depends on.
#[derive(Clone, Debug)]
pub struct SolutionWithConstants {
    pub field: String,
    pub f: Expr,
    pub constants: Vec<Symbol>,
    pub indep: Independents,
    /// Reduction functions of `t` left symbolic in `f`, if any.
    pub functions: BTreeSet<String>,
}

impl SolutionWithConstants {
    pub fn new(field: &str, f: Expr, constants: &[&str]) -> Self {
        SolutionWithConstants {
            field: field.into(),
            f,
            constants: constants.iter().map(|c| Symbol::new(c)).collect(),
            indep: Independents::default(),
            functions: BTreeSet::new(),
        }
    }

    pub fn basis(&self) -> Vec<Expr> {
        self.constants.iter().map(|c| normalize(&crate::expr::diff(&self.f, &Expr::symbol(c.clone())))).collect()
    }
}

/// `xi_t f_t + xi_x f_x - eta` at `u = f`.
pub fn defect(x: &PointField, s: &SolutionWithConstants) -> Expr {
    let ft = total_derivative_in(&s.f, Slot::T, &s.indep, &s.functions, None);
    let fx = total_derivative_in(&s.f, Slot::X, &s.indep, &s.functions, None);
    let mut at_f = Rules::new();
    at_f.insert(Expr::jet(&s.field, 0, 0), s.f.clone());
    let xi_t = substitute(&x.xi_t, &at_f);
    let xi_x = substitute(&x.xi_x, &at_f);
    let eta = substitute(&x.eta, &at_f);
    normalize(&(xi_t * ft + xi_x * fx - eta))
}

/// Sample points `(x, t)` of a case: a tensor grid plus random points.
pub fn sample_points(space: &Space, indep: &Independents, n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let rx = space.domain.range_for(&Expr::symbol(indep.x.clone()));
    let rt = space.domain.range_for(&Expr::symbol(indep.t.clone()));
    let grid = |r: &Range| -> Vec<f64> {
        match r {
            Range::Set(v) => v.clone(),
            Range::Interval { lo, hi, .. } => (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect(),
        }
    };
    let mut pts = Vec::new();
    for &x in &grid(&rx) {
        for &t in &grid(&rt) {
            pts.push((x, t));
        }
    }
    let uniform = |r: &Range, rng: &mut ChaCha8Rng| match r {
        Range::Set(v) => v[rng.gen_range(0..v.len())],
        Range::Interval { lo, hi, .. } => rng.gen_range(*lo..*hi),
    };
    for _ in 0..extra {
        let x = uniform(&rx, rng);
        let t = uniform(&rt, rng);
        pts.push((x, t));
    }
    pts
}

fn at_point(base: &Bindings, indep: &Independents, p: (f64, f64)) -> Bindings {
    let mut b = base.clone();
    b.set_symbol(indep.x.clone(), p.0);
    b.set_symbol(indep.t.clone(), p.1);
    b
}

fn sample_matrix(exprs: &[Expr], pts: &[(f64, f64)], base: &Bindings, indep: &Independents) -> Result<DMatrix<f64>, EvalError> {
    let mut m = DMatrix::zeros(pts.len(), exprs.len());
    for (r, &p) in pts.iter().enumerate() {
        let b = at_point(base, indep, p);
        for (c, e) in exprs.iter().enumerate() {
            m[(r, c)] = eval_num(e, &b)?;
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpanFit {
    pub coefficients: Vec<f64>,
    /// Largest fit residual over `1 + max |d|`.
    pub residual: f64,
}

/// Least-squares coefficients of `d` on the `df/dc_i` basis.
pub fn span_decompose(d: &Expr, s: &SolutionWithConstants, pts: &[(f64, f64)], base: &Bindings) -> Result<SpanFit, String> {
    let basis = s.basis();
    let m = sample_matrix(&basis, pts, base, &s.indep).map_err(|e| e.to_string())?;
    let rhs = sample_matrix(std::slice::from_ref(d), pts, base, &s.indep).map_err(|e| e.to_string())?;
    let rhs = DVector::from_iterator(pts.len(), rhs.iter().copied());
    let fit = linalg::lstsq(&m, &rhs).map_err(|e| e.to_string())?;
    let scale = 1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(SpanFit { coefficients: fit.x.iter().copied().collect(), residual: fit.max_residual / scale })
}

/// Outcome of the nullspace search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Combo {
    /// Unit-norm coefficients and the residual on a fresh grid.
    Found { alpha: Vec<f64>, residual: f64 },
    None { ratio: f64 },
    Inconclusive { ratio: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct ComboConfig {
    pub grid: usize,
    pub extra: usize,
    pub accept: f64,
    pub reject: f64,
    pub verify_tol: f64,
}

impl Default for ComboConfig {
    fn default() -> Self {
        ComboConfig { grid: 5, extra: 12, accept: 1e-8, reject: 1e-4, verify_tol: 1e-8 }
    }
}

/// Nonzero `alpha` with `sum alpha_i defect_i = 0`, decided at one parameter
/// draw `base`.
pub fn find_invariant_combo(
    xs: &[PointField],
    s: &SolutionWithConstants,
    base: &Bindings,
    cfg: &ComboConfig,
    rng: &mut ChaCha8Rng,
    space: &Space,
) -> Result<Combo, String> {
    let defects: Vec<Expr> = xs.iter().map(|x| defect(x, s)).collect();
    if let Some(i) = defects.iter().position(|d| d.is_zero_literal()) {
        let mut alpha = vec![0.0; xs.len()];
        alpha[i] = 1.0;
        return Ok(Combo::Found { alpha, residual: 0.0 });
    }
    let mut refine = 1;
    loop {
        let pts = sample_points(space, &s.indep, cfg.grid * refine, cfg.extra * refine * refine, rng);
        let m = sample_matrix(&defects, &pts, base, &s.indep).map_err(|e| e.to_string())?;
        let mut scaled = m.clone();
        let mut norms = vec![0.0; xs.len()];
        for j in 0..xs.len() {
            norms[j] = m.column(j).norm();
            if norms[j] == 0.0 {
                let mut alpha = vec![0.0; xs.len()];
                alpha[j] = 1.0;
                return Ok(Combo::Found { alpha, residual: 0.0 });
            }
            scaled.column_mut(j).scale_mut(1.0 / norms[j]);
        }
        let (ratio, v) = linalg::null_direction(&scaled).map_err(|e| e.to_string())?;
        if ratio < cfg.accept {
            let mut alpha: Vec<f64> = (0..xs.len()).map(|j| v[j] / norms[j]).collect();
            let n = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
            alpha.iter_mut().for_each(|a| *a /= n);
            let fresh = sample_points(space, &s.indep, cfg.grid + 1, cfg.extra, rng);
            let residual = combo_residual(&defects, &alpha, &fresh, base, &s.indep).map_err(|e| e.to_string())?;
            return Ok(if residual < cfg.verify_tol { Combo::Found { alpha, residual } } else { Combo::Inconclusive { ratio } });
        }
        if ratio > cfg.reject {
            return Ok(Combo::None { ratio });
        }
        if refine >= 2 {
            return Ok(Combo::Inconclusive { ratio });
        }
        refine = 2;
    }
}

/// `max |sum alpha_i d_i| / (1 + max |alpha_i d_i|)` over `pts`.
pub fn combo_residual(defects: &[Expr], alpha: &[f64], pts: &[(f64, f64)], base: &Bindings, indep: &Independents) -> Result<f64, EvalError> {
    let m = sample_matrix(defects, pts, base, indep)?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for r in 0..pts.len() {
        let mut sum = 0.0;
        for (j, a) in alpha.iter().enumerate() {
            let v = a * m[(r, j)];
            scale = scale.max(v.abs());
            sum += v;
        }
        worst = worst.max(sum.abs());
    }
    Ok(worst / (1.0 + scale))
}

/// Draw a parameter point for the free atoms of `exprs` other than `x, t`.
pub fn draw_parameters(exprs: &[&Expr], indep: &Independents, space: &Space, round: usize, rng: &mut ChaCha8Rng) -> Result<Bindings, String> {
    let xa = Expr::symbol(indep.x.clone());
    let ta = Expr::symbol(indep.t.clone());
    let mut seen = BTreeSet::new();
    for e in exprs {
        for a in free_atoms(e) {
            if a != xa && a != ta {
                seen.insert(a);
            }
        }
    }
    let atoms: Vec<Expr> = seen.into_iter().collect();
    space.draw(&atoms, &space.opaque_bindings(round), rng).map_err(|e| e.to_string())
}

/// Run `find_invariant_combo` over `draws` parameter draws. PASS when a
/// combination is found at every draw, FAIL when none exists at every draw.
pub fn invariance_verdict(
    xs: &[PointField],
    s: &SolutionWithConstants,
    space: &Space,
    draws: usize,
    cfg: &ComboConfig,
    rng: &mut ChaCha8Rng,
) -> Verdict {
    let mut exprs: Vec<&Expr> = vec![&s.f];
    for x in xs {
        exprs.extend([&x.xi_t, &x.xi_x, &x.eta]);
    }
    let defects: Vec<Expr> = xs.iter().map(|x| defect(x, s)).collect();
    if let Some(i) = defects.iter().position(|d| d.is_zero_literal()) {
        return Verdict::symbolic_pass(Expr::zero()).note(format!("defect of operator {} normalizes to zero", i + 1));
    }
    let mut found = 0;
    let mut none = 0;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    let mut used = 0;
    for k in 0..draws {
        let round = k % space.rounds();
        let mut outcome = None;
        for _ in 0..20 {
            let base = match draw_parameters(&exprs, &s.indep, space, round, rng) {
                Ok(b) => b,
                Err(e) => {
                    notes.push(e);
                    break;
                }
            };
            match find_invariant_combo(xs, s, &base, cfg, rng, space) {
                Ok(c) => {
                    outcome = Some(c);
                    break;
                }
                Err(_) => continue,
            }
        }
        used += 1;
        match outcome {
            Some(Combo::Found { alpha, residual }) => {
                found += 1;
                worst = worst.max(residual);
                if k == 0 {
                    let a: Vec<String> = alpha.iter().map(|v| format!("{:.6}", v)).collect();
                    notes.push(format!("alpha = ({})", a.join(", ")));
                }
            }
            Some(Combo::None { ratio }) => {
                none += 1;
                worst = worst.max(ratio);
            }
            Some(Combo::Inconclusive { ratio }) => {
                notes.push(format!("singular value ratio {:.2e} between thresholds", ratio));
            }
            None => notes.push("no admissible parameter draw".into()),
        }
    }
    let status = if found == draws {
        Status::PassNumeric
    } else if none == draws {
        notes.push("no nonzero combination annihilates the solution".into());
        Status::Fail
    } else {
        Status::Inconclusive
    };
    Verdict { status, stage: Stage::Numeric, residual: Expr::zero(), numeric_max_residual: worst, samples_used: used, notes }
}

/// Compare the span coefficients of a combination's defect with printed
/// expressions (in the reduction functions and their derivatives), sampled
/// over random states and points in `x`.
pub fn criterion_check(
    x: &PointField,
    s: &SolutionWithConstants,
    printed: &[Expr],
    space: &Space,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Verdict {
    let d = defect(x, s);
    let basis: Vec<Expr> = s.basis();
    let mut exprs: Vec<&Expr> = vec![&d];
    exprs.extend(basis.iter());
    exprs.extend(printed.iter());
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    let mut used = 0;
    let xr = space.domain.range_for(&Expr::symbol(s.indep.x.clone()));
    let xs = crate::reduce::sample_xs(&xr, 16);
    for k in 0..samples {
        let round = k % space.rounds();
        let base = match draw_parameters(&exprs, &s.indep, space, round, rng) {
            Ok(b) => b,
            Err(e) => {
                notes.push(e);
                break;
            }
        };
        let t = base.syms.get(&s.indep.t).copied().unwrap_or(0.0);
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, t)).collect();
        let fit = match span_decompose(&d, s, &pts, &base) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let expected: Result<Vec<f64>, _> = printed.iter().map(|e| eval_num(e, &at_point(&base, &s.indep, pts[0]))).collect();
        let Ok(expected) = expected else { continue };
        worst = worst.max(fit.residual);
        for (a, b) in fit.coefficients.iter().zip(&expected) {
            worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        }
        used += 1;
    }
    let status = if used < samples {
        Status::Inconclusive
    } else if worst < 1e-9 {
        Status::PassNumeric
    } else {
        Status::Fail
    };
    Verdict { status, stage: Stage::Numeric, residual: d, numeric_max_residual: worst, samples_used: used, notes }
}

/// Symbolic test that `defect(x, s)` vanishes, falling back to sampling.
pub fn defect_zero(x: &PointField, s: &SolutionWithConstants, space: &Space, tol: &Tolerances, rng: &mut ChaCha8Rng) -> Verdict {
    zero_test(&defect(x, s), space, tol, Mode::Both, rng)
}

/// First prolongation of a point field applied to `e(x, t, u, u_x)`.
pub fn prolong1(q: &PointField, e: &Expr, field: &str, indep: &Independents) -> Expr {
    use crate::expr::diff;
    let none = BTreeSet::new();
    let u = Expr::jet(field, 0, 0);
    let ux = Expr::jet(field, 1, 0);
    let ut = Expr::jet(field, 0, 1);
    let dx = |f: &Expr| total_derivative_in(f, Slot::X, indep, &none, None);
    let eta_x = dx(&q.eta) - ux.clone() * dx(&q.xi_x) - ut * dx(&q.xi_t);
    let xa = Expr::symbol(indep.x.clone());
    let ta = Expr::symbol(indep.t.clone());
    normalize(
        &(q.xi_t.clone() * diff(e, &ta) + q.xi_x.clone() * diff(e, &xa) + q.eta.clone() * diff(e, &u) + eta_x * diff(e, &ux)),
    )
}

/// Inherited symmetry conditions: each `I_j` is a first integral of `m`,
/// `Q^(1) I_j = f_j(I_1, I_2)` and `Q t = m(t)`. `expected_f` is written in
/// the symbols `names` standing for the integrals.
#[allow(clippy::too_many_arguments)]
pub fn check_inherited(
    q: &PointField,
    integrals: &[Expr],
    names: &[Symbol],
    m: &Manifold,
    field: &str,
    expected_f: &[Expr],
    expected_m: &Expr,
    space: &Space,
    tol: &Tolerances,
    rng: &mut ChaCha8Rng,
) -> Verdict {
    let indep = m.independents().clone();
    let none = BTreeSet::new();
    let mut notes = Vec::new();
    for (i, integral) in integrals.iter().enumerate() {
        let dx = total_derivative_in(integral, Slot::X, &indep, &none, Some(m));
        let v = zero_test(&reduce_to_manifold(&dx, m), space, tol, Mode::Both, rng);
        if !v.status.is_pass() {
            return v.note(format!("I{} is not a first integral", i + 1));
        }
    }
    let back: Rules = names.iter().cloned().map(Expr::symbol).zip(integrals.iter().cloned()).collect();
    let mut worst = Verdict::symbolic_pass(Expr::zero());
    for (j, (integral, f)) in integrals.iter().zip(expected_f).enumerate() {
        let lhs = prolong1(q, integral, field, &indep);
        let diff = lhs - substitute(f, &back);
        let v = zero_test(&diff, space, tol, Mode::Both, rng);
        notes.push(format!("Q I{} - f{}: {}", j + 1, j + 1, v.status));
        if rank(v.status) > rank(worst.status) {
            worst = v;
        }
    }
    let mt = zero_test(&(q.xi_t.clone() - expected_m.clone()), space, tol, Mode::Both, rng);
    notes.push(format!("Q t - m(t): {}", mt.status));
    if rank(mt.status) > rank(worst.status) {
        worst = mt;
    }
    worst.notes.extend(notes);
    worst
}

fn rank(s: Status) -> u8 {
    match s {
        Status::PassSymbolic => 0,
        Status::PassNumeric => 1,
        Status::Inconclusive => 2,
        Status::Fail => 3,
    }
}
