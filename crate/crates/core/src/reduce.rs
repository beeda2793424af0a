//! Ansatz substitution, extraction and verification of reduced systems, and
//! residual checks of closed-form solutions.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::detcheck::{zero_test, Mode, Stage, Status, Tolerances, Verdict};
use crate::expr::{
    diff, diff_with, eval_num, normalize, substitute, substitute_raw, Bindings, EvalError, Expr, JetVar, Node,
    PartialWrt, Rules, Slot, Symbol,
};
use crate::jet::{reduce_to_manifold, total_derivative_in, Independents, Manifold};
use crate::numeric::{linalg, ode, root};
use crate::sampling::{free_atoms, Range, Space};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReduceError {
    #[error("jet {0} cannot be expressed through the ansatz")]
    UnreducibleJet(String),
    #[error("residual is not affine in the derivatives of the reduction functions: {0}")]
    NotAffine(String),
    #[error("ansatz basis is degenerate: {0}")]
    Degenerate(String),
    #[error("reduced system cannot be solved for the derivatives: {0}")]
    Singular(String),
    #[error("implicit ansatz: {0}")]
    Implicit(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Solution template in the field `field`.
#[derive(Clone, Debug)]
pub enum Ansatz {
    /// `u = U(x, t; phi)`.
    Explicit { field: String, u: Expr, functions: Vec<String>, indep: Independents },
    /// `G(u, x, t; phi) = 0` with `u` spelled as the field itself, solved
    /// numerically inside `[lo, hi]`.
    Implicit {
        field: String,
        relation: Expr,
        functions: Vec<String>,
        indep: Independents,
        bracket: (Expr, Expr),
        manifold: Option<Manifold>,
    },
}

impl Ansatz {
    pub fn functions(&self) -> Vec<Symbol> {
        let names = match self {
            Ansatz::Explicit { functions, .. } | Ansatz::Implicit { functions, .. } => functions,
        };
        names.iter().map(|n| Symbol::new(n)).collect()
    }

    /// `phi_i'` symbols.
    pub fn unknowns(&self) -> Vec<Symbol> {
        self.functions().iter().map(|s| s.raised()).collect()
    }

    pub fn indep(&self) -> &Independents {
        match self {
            Ansatz::Explicit { indep, .. } | Ansatz::Implicit { indep, .. } => indep,
        }
    }

    fn field(&self) -> &str {
        match self {
            Ansatz::Explicit { field, .. } | Ansatz::Implicit { field, .. } => field,
        }
    }

    fn field_atom(&self) -> Expr {
        Expr::jet(self.field(), 0, 0)
    }

    /// `dU/dphi_i`, for the implicit kind through `-G_phi / G_u`.
    pub fn basis(&self) -> Vec<Expr> {
        match self {
            Ansatz::Explicit { u, .. } => self.functions().into_iter().map(|f| diff(u, &Expr::symbol(f))).collect(),
            Ansatz::Implicit { relation, .. } => {
                let gu = diff(relation, &self.field_atom());
                self.functions()
                    .into_iter()
                    .map(|f| normalize(&(-diff(relation, &Expr::symbol(f)) / gu.clone())))
                    .collect()
            }
        }
    }

    fn function_set(&self) -> BTreeSet<String> {
        self.functions().iter().map(|s| s.name.to_string()).collect()
    }
}

/// Replace the field's jets by derivatives of the ansatz. For an implicit
/// ansatz the result still contains the field value, to be solved for.
pub fn apply_ansatz(pde: &Expr, a: &Ansatz) -> Result<Expr, ReduceError> {
    let field = a.field();
    let jets: Vec<JetVar> = pde.jets().into_iter().filter(|j| *j.field == *field).collect();
    if let Some(j) = jets.iter().find(|j| j.ot >= 2) {
        return Err(ReduceError::UnreducibleJet(crate::jet::jet_name(j)));
    }
    let mut rules = Rules::new();
    match a {
        Ansatz::Explicit { u, indep, .. } => {
            let fns = a.function_set();
            for j in &jets {
                let mut e = u.clone();
                for _ in 0..j.ot {
                    e = total_derivative_in(&e, Slot::T, indep, &fns, None);
                }
                for _ in 0..j.ox {
                    e = total_derivative_in(&e, Slot::X, indep, &fns, None);
                }
                rules.insert(Expr::jetvar(j.clone()), e);
            }
            Ok(substitute(pde, &rules))
        }
        Ansatz::Implicit { relation, indep, manifold, .. } => {
            let pde = match manifold {
                Some(m) => reduce_to_manifold(pde, m),
                None => pde.clone(),
            };
            let jets: Vec<JetVar> = pde.jets().into_iter().filter(|j| *j.field == *field).collect();
            let ua = a.field_atom();
            let gu = diff(relation, &ua);
            let ux = normalize(&(-diff(relation, &Expr::symbol(indep.x.clone())) / gu.clone()));
            let mut gt = diff(relation, &Expr::symbol(indep.t.clone()));
            let phis = a.functions();
            let dphis = a.unknowns();
            for (f, df) in phis.iter().zip(&dphis) {
                gt = gt + diff(relation, &Expr::symbol(f.clone())) * Expr::symbol(df.clone());
            }
            let ut = normalize(&(-gt / gu));
            let dx = |e: &Expr| normalize(&(diff(e, &Expr::symbol(indep.x.clone())) + ux.clone() * diff(e, &ua)));
            let dt = |e: &Expr| {
                let mut r = diff(e, &Expr::symbol(indep.t.clone())) + ut.clone() * diff(e, &ua);
                for (f, df) in phis.iter().zip(&dphis) {
                    r = r + Expr::symbol(df.clone()) * diff(e, &Expr::symbol(f.clone()));
                }
                normalize(&r)
            };
            for j in &jets {
                if j.order() == 0 {
                    continue;
                }
                let mut e = ua.clone();
                for _ in 0..j.ot {
                    e = dt(&e);
                }
                for _ in 0..j.ox {
                    e = dx(&e);
                }
                rules.insert(Expr::jetvar(j.clone()), e);
            }
            Ok(substitute(&pde, &rules))
        }
    }
}

/// Differential (`phi' = G`) or algebraic system in the reduction functions.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub equations: Vec<Expr>,
    pub functions: Vec<Symbol>,
}

impl ReducedSystem {
    pub fn new(equations: Vec<Expr>, functions: &[&str]) -> Self {
        ReducedSystem { equations, functions: functions.iter().map(|f| Symbol::new(f)).collect() }
    }

    fn unknowns(&self) -> Vec<Symbol> {
        self.functions.iter().map(|f| f.raised()).collect()
    }

    pub fn is_algebraic(&self) -> bool {
        let u: BTreeSet<Symbol> = self.unknowns().into_iter().collect();
        self.equations.iter().all(|e| e.symbols().is_disjoint(&u))
    }

    /// Solve the (affine) equations for `phi'`.
    pub fn solved(&self) -> Result<Vec<Expr>, ReduceError> {
        let unknowns: Vec<Expr> = self.unknowns().into_iter().map(Expr::symbol).collect();
        let zero: Rules = unknowns.iter().map(|u| (u.clone(), Expr::zero())).collect();
        let n = unknowns.len();
        if self.equations.len() != n {
            return Err(ReduceError::Singular(format!("{} equations for {} unknowns", self.equations.len(), n)));
        }
        let mut a: Vec<Vec<Expr>> = Vec::with_capacity(n);
        let mut b: Vec<Expr> = Vec::with_capacity(n);
        for e in &self.equations {
            let row: Vec<Expr> = unknowns.iter().map(|u| diff(e, u)).collect();
            for c in &row {
                if unknowns.iter().any(|u| c.contains(u)) {
                    return Err(ReduceError::NotAffine(e.to_string()));
                }
            }
            a.push(row);
            b.push(normalize(&-substitute(e, &zero)));
        }
        solve_symbolic(a, b)
    }
}

/// Gaussian elimination over the normal form, pivoting on the first entry
/// that does not normalize to zero.
fn solve_symbolic(mut a: Vec<Vec<Expr>>, mut b: Vec<Expr>) -> Result<Vec<Expr>, ReduceError> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero_literal()).ok_or_else(|| ReduceError::Singular(format!("no pivot in column {}", col)))?;
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r == col || a[r][col].is_zero_literal() {
                continue;
            }
            let f = normalize(&(a[r][col].clone() / a[col][col].clone()));
            for c in col..n {
                a[r][c] = normalize(&(a[r][c].clone() - f.clone() * a[col][c].clone()));
            }
            b[r] = normalize(&(b[r].clone() - f * b[col].clone()));
        }
    }
    Ok((0..n).map(|i| normalize(&(b[i].clone() / a[i][i].clone()))).collect())
}

/// Per-point numeric context: binds the independent variable and, for an
/// implicit ansatz, solves for the field value.
fn bind_x(a: &Ansatz, base: &Bindings, x: f64) -> Result<Bindings, ReduceError> {
    let mut b = base.clone();
    b.set_symbol(a.indep().x.clone(), x);
    if let Ansatz::Implicit { relation, bracket, .. } = a {
        let ua = a.field_atom();
        let gu = diff(relation, &ua);
        let lo = eval_num(&bracket.0, &b)?;
        let hi = eval_num(&bracket.1, &b)?;
        let field = JetVar::new(a.field(), 0, 0);
        let u = root::solve(
            |v| {
                let mut bb = b.clone();
                bb.jets.insert(field.clone(), v);
                Ok::<_, EvalError>((eval_num(relation, &bb)?, eval_num(&gu, &bb)?))
            },
            lo,
            hi,
            1e-13,
        )
        .map_err(|e| ReduceError::Implicit(e.to_string()))?;
        b.jets.insert(field, u);
    }
    Ok(b)
}

/// Field value of an implicit ansatz at `x` under `base`.
pub fn eval_implicit(a: &Ansatz, base: &Bindings, x: f64) -> Result<f64, ReduceError> {
    let b = bind_x(a, base, x)?;
    Ok(b.jets.get(&JetVar::new(a.field(), 0, 0)).copied().unwrap_or(f64::NAN))
}

/// Largest basis condition allowed by `basis_rank`.
pub const BASIS_COND_MAX: f64 = 1e6;

/// Largest-to-smallest singular value ratio of `dU/dphi_i` sampled at `xs`;
/// a reduction needs it below `BASIS_COND_MAX`.
pub fn basis_condition(a: &Ansatz, base: &Bindings, xs: &[f64]) -> Result<f64, ReduceError> {
    let basis = a.basis();
    let mut m = DMatrix::zeros(xs.len(), basis.len());
    for (r, &x) in xs.iter().enumerate() {
        let b = bind_x(a, base, x)?;
        for (i, e) in basis.iter().enumerate() {
            m[(r, i)] = eval_num(e, &b)?;
        }
    }
    let (ratio, _) = linalg::null_direction(&m).map_err(|e| ReduceError::Degenerate(e.to_string()))?;
    Ok(if ratio > 0.0 { 1.0 / ratio } else { f64::INFINITY })
}

/// Least-squares estimate of `phi'` at one state point.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub phi_dot: Vec<f64>,
    /// Largest fit residual divided by `1 + max |rhs|`.
    pub defect: f64,
    pub pivot_ratio: f64,
}

/// Solve `sum_i phi_i' E_i(x_j) = -E_0(x_j)` from the affine dependence of
/// the residual on `phi'`.
pub fn extract_reduced_numeric(residual: &Expr, a: &Ansatz, base: &Bindings, xs: &[f64]) -> Result<Extraction, ReduceError> {
    let unknowns = a.unknowns();
    let k = unknowns.len();
    let mut m = DMatrix::zeros(xs.len(), k);
    let mut rhs = DVector::zeros(xs.len());
    for (r, &x) in xs.iter().enumerate() {
        let mut b = bind_x(a, base, x)?;
        let set = |b: &mut Bindings, hot: Option<usize>| {
            for (i, u) in unknowns.iter().enumerate() {
                b.set_symbol(u.clone(), if Some(i) == hot { 1.0 } else { 0.0 });
            }
        };
        set(&mut b, None);
        let e0 = eval_num(residual, &b)?;
        let mut cols = Vec::with_capacity(k);
        for i in 0..k {
            set(&mut b, Some(i));
            cols.push(eval_num(residual, &b)? - e0);
        }
        // affinity check: all unknowns at once must superpose
        for u in &unknowns {
            b.set_symbol(u.clone(), 1.0);
        }
        let all = eval_num(residual, &b)? - e0;
        let sum: f64 = cols.iter().sum();
        if (all - sum).abs() > 1e-7 * (1.0 + all.abs() + e0.abs()) {
            return Err(ReduceError::NotAffine(format!("superposition defect {:e} at x = {}", (all - sum).abs(), x)));
        }
        for (i, c) in cols.into_iter().enumerate() {
            m[(r, i)] = c;
        }
        rhs[r] = -e0;
    }
    fit(&m, &rhs)
}

fn fit(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<Extraction, ReduceError> {
    let f = linalg::lstsq(m, rhs).map_err(|e| ReduceError::Degenerate(e.to_string()))?;
    let scale = 1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(Extraction { phi_dot: f.x.iter().copied().collect(), defect: f.max_residual / scale, pivot_ratio: f.pivot_ratio })
}

/// Coefficients `g` with `residual(x) = sum_i g_i dU/dphi_i(x)` for a residual
/// free of `phi'` (time-independent reductions).
pub fn extract_algebraic_numeric(residual: &Expr, a: &Ansatz, base: &Bindings, xs: &[f64]) -> Result<Extraction, ReduceError> {
    let basis = a.basis();
    let mut m = DMatrix::zeros(xs.len(), basis.len());
    let mut rhs = DVector::zeros(xs.len());
    for (r, &x) in xs.iter().enumerate() {
        let b = bind_x(a, base, x)?;
        for (i, e) in basis.iter().enumerate() {
            m[(r, i)] = eval_num(e, &b)?;
        }
        rhs[r] = eval_num(residual, &b)?;
    }
    fit(&m, &rhs)
}

/// Sample points in an interval: log-spaced when it is positive.
pub fn sample_xs(range: &Range, n: usize) -> Vec<f64> {
    let (lo, hi) = match range {
        Range::Interval { lo, hi, .. } => (*lo, *hi),
        Range::Set(v) => {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            if lo > 0.0 {
                (lo.ln() + s * (hi.ln() - lo.ln())).exp()
            } else {
                lo + s * (hi - lo)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct ReduceConfig {
    /// State points of the numeric comparison.
    pub points: usize,
    /// x samples per extraction.
    pub xs: usize,
    pub rel_tol: f64,
    pub rel_fail: f64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        ReduceConfig { points: 20, xs: 16, rel_tol: 1e-6, rel_fail: 1e-4 }
    }
}

fn state_atoms(exprs: &[&Expr], a: &Ansatz) -> Vec<Expr> {
    let mut skip: BTreeSet<Expr> = a.unknowns().into_iter().map(Expr::symbol).collect();
    skip.insert(Expr::symbol(a.indep().x.clone()));
    skip.insert(a.field_atom());
    let mut seen = BTreeSet::new();
    for e in exprs {
        for at in free_atoms(e) {
            if !skip.contains(&at) {
                seen.insert(at);
            }
        }
    }
    seen.into_iter().collect()
}

/// Compare the reduced system with the residual of the ansatz, symbolically
/// when possible and always numerically by extraction.
#[allow(clippy::too_many_arguments)]
pub fn verify_reduced_system(
    pde: &Expr,
    a: &Ansatz,
    rs: &ReducedSystem,
    space: &Space,
    tol: &Tolerances,
    cfg: &ReduceConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Verdict, ReduceError> {
    let residual = apply_ansatz(pde, a)?;
    let algebraic = rs.is_algebraic();
    let basis = a.basis();
    let explicit = matches!(a, Ansatz::Explicit { .. });
    let mut notes = Vec::new();
    // symbolic stage
    let mut symbolic: Option<Verdict> = None;
    let g = if algebraic { None } else { Some(rs.solved()?) };
    if mode != Mode::Numeric && explicit {
        let target = match &g {
            Some(g) => {
                let rules: Rules = a.unknowns().into_iter().map(Expr::symbol).zip(g.iter().cloned()).collect();
                substitute(&residual, &rules)
            }
            None => {
                // the residual is +-sum dU/dphi_i R_i depending on how the equation is written
                let combo = normalize(&Expr::add(basis.iter().zip(&rs.equations).map(|(bi, r)| bi.clone() * r.clone()).collect()));
                let plus = normalize(&(residual.clone() + combo.clone()));
                if plus.is_zero_literal() {
                    plus
                } else {
                    normalize(&(residual.clone() - combo))
                }
            }
        };
        let v = zero_test(&target, space, tol, Mode::Symbolic, rng);
        if v.status == Status::PassSymbolic {
            symbolic = Some(v);
        } else {
            notes.push("symbolic substitution did not normalize to zero".to_string());
        }
    }
    if mode == Mode::Symbolic {
        return Ok(symbolic.unwrap_or(Verdict {
            status: Status::Inconclusive,
            stage: Stage::Symbolic,
            residual,
            numeric_max_residual: f64::NAN,
            samples_used: 0,
            notes,
        }));
    }
    // numeric extraction, run as a cross-check even after a symbolic pass
    let mut probe: Vec<&Expr> = vec![&residual];
    let gs: Vec<Expr> = g.clone().unwrap_or_else(|| rs.equations.clone());
    probe.extend(gs.iter());
    probe.extend(basis.iter());
    if let Ansatz::Implicit { relation, bracket, .. } = a {
        // the relation fixes u, so its parameters must be drawn as well
        probe.extend([relation, &bracket.0, &bracket.1]);
    }
    let atoms = state_atoms(&probe, a);
    let xs = sample_xs(&space.domain.range_for(&Expr::symbol(a.indep().x.clone())), cfg.xs);
    let mut max_rel: f64 = 0.0;
    let mut max_defect: f64 = 0.0;
    let mut used = 0;
    let mut failures = 0;
    let mut algebraic_rows: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut rank_checked = false;
    for round in 0..space.rounds() {
        let base = space.opaque_bindings(round);
        let mut got = 0;
        let mut attempts = 0;
        while got < cfg.points && attempts < cfg.points * (tol.resamples + 1) {
            attempts += 1;
            let b = match space.draw(&atoms, &base, rng) {
                Ok(b) => b,
                Err(e) => {
                    notes.push(e.to_string());
                    break;
                }
            };
            if !rank_checked {
                match basis_condition(a, &b, &xs) {
                    Ok(c) if c > BASIS_COND_MAX => {
                        return Err(ReduceError::Degenerate(format!("basis condition {:.2e} exceeds {:.0e}", c, BASIS_COND_MAX)))
                    }
                    Ok(c) => {
                        notes.push(format!("basis condition {:.2e}", c));
                        rank_checked = true;
                    }
                    Err(_) => continue,
                }
            }
            let ext = if algebraic {
                extract_algebraic_numeric(&residual, a, &b, &xs)
            } else {
                extract_reduced_numeric(&residual, a, &b, &xs)
            };
            let ext = match ext {
                Ok(e) => e,
                Err(ReduceError::Eval(EvalError::Domain(_))) | Err(ReduceError::Implicit(_)) => continue,
                Err(e) => return Err(e),
            };
            let expected: Result<Vec<f64>, EvalError> = gs.iter().map(|gi| eval_num(gi, &b)).collect();
            let expected = match expected {
                Ok(v) => v,
                Err(EvalError::Domain(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            max_defect = max_defect.max(ext.defect);
            if algebraic {
                algebraic_rows.push((ext.phi_dot.clone(), expected));
            } else {
                for (num, exp) in ext.phi_dot.iter().zip(&expected) {
                    max_rel = max_rel.max((num - exp).abs() / (1.0 + exp.abs()));
                }
            }
            got += 1;
            used += 1;
        }
        if got < cfg.points {
            failures += 1;
        }
    }
    if algebraic {
        let (rel, mnote) = match_algebraic(&algebraic_rows, rs.equations.len());
        max_rel = rel;
        notes.push(mnote);
    }
    let worst = max_rel.max(max_defect);
    let mut status = if worst > cfg.rel_fail {
        Status::Fail
    } else if failures > 0 {
        notes.push("too few admissible state points".into());
        Status::Inconclusive
    } else if worst < cfg.rel_tol {
        Status::PassNumeric
    } else {
        Status::Inconclusive
    };
    notes.push(format!("max extraction defect {:.2e}", max_defect));
    if let Some(mut v) = symbolic {
        if status.is_pass() {
            v.numeric_max_residual = worst;
            v.samples_used = used;
            v.notes.extend(notes);
            return Ok(v);
        }
        notes.push(format!("numeric cross-check disagrees with symbolic pass ({})", status));
        status = Status::Inconclusive;
    }
    Ok(Verdict { status, stage: Stage::Numeric, residual, numeric_max_residual: worst, samples_used: used, notes })
}

/// Fit a constant matrix `M` with `g = M R` over all samples; the two
/// algebraic systems agree when the fit is exact and `M` is invertible.
fn match_algebraic(rows: &[(Vec<f64>, Vec<f64>)], n: usize) -> (f64, String) {
    if rows.len() < n + 1 {
        return (f64::INFINITY, "not enough samples to match algebraic systems".into());
    }
    let mut r = DMatrix::zeros(rows.len(), n);
    for (i, (_, rv)) in rows.iter().enumerate() {
        for j in 0..n {
            r[(i, j)] = rv[j];
        }
    }
    let mut mat = DMatrix::zeros(n, n);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let g = DVector::from_iterator(rows.len(), rows.iter().map(|(gv, _)| gv[k]));
        match linalg::lstsq(&r, &g) {
            Ok(f) => {
                let scale = 1.0 + g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                worst = worst.max(f.max_residual / scale);
                for j in 0..n {
                    mat[(k, j)] = f.x[j];
                }
            }
            Err(e) => return (f64::INFINITY, format!("printed algebraic system is degenerate: {}", e)),
        }
    }
    let det = mat.determinant();
    if det.abs() < 1e-8 {
        return (f64::INFINITY, format!("extracted equations are not equivalent (det {:e})", det));
    }
    let entries: Vec<String> = mat.iter().map(|v| format!("{:.6}", v)).collect();
    (worst, format!("extracted = M * printed, M (column-major) = [{}]", entries.join(", ")))
}

/// Evaluate a solution's PDE residual on a tensor grid.
#[derive(Clone, Copy, Debug)]
pub struct SolutionConfig {
    pub grid: usize,
    pub draws: usize,
    pub tol: f64,
    pub max_attempts: usize,
}

impl Default for SolutionConfig {
    fn default() -> Self {
        SolutionConfig { grid: 20, draws: 10, tol: 1e-7, max_attempts: 200 }
    }
}

/// Jets of `u(x, t)` by plain partial differentiation.
pub fn solution_jets(pde: &Expr, field: &str, u: &Expr, indep: &Independents) -> Rules {
    let mut rules = Rules::new();
    let dx = PartialWrt(Expr::symbol(indep.x.clone()));
    let dt = PartialWrt(Expr::symbol(indep.t.clone()));
    for j in pde.jets().into_iter().filter(|j| *j.field == *field) {
        let mut e = u.clone();
        for _ in 0..j.ot {
            e = normalize(&diff_with(&e, &dt));
        }
        for _ in 0..j.ox {
            e = normalize(&diff_with(&e, &dx));
        }
        rules.insert(Expr::jetvar(j), e);
    }
    rules
}

fn grid_values(r: &Range, n: usize) -> Vec<f64> {
    match r {
        Range::Set(v) => v.clone(),
        Range::Interval { lo, hi, .. } => (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect(),
    }
}

/// PASS iff the largest `|E| / (1 + max |term|)` over the grid and all
/// admissible parameter draws is below `cfg.tol`.
pub fn verify_solution(
    pde: &Expr,
    field: &str,
    u: &Expr,
    indep: &Independents,
    space: &Space,
    cfg: &SolutionConfig,
    rng: &mut ChaCha8Rng,
) -> Verdict {
    let rules = solution_jets(pde, field, u, indep);
    let e = substitute_raw(pde, &rules);
    let terms = e.terms();
    let xa = Expr::symbol(indep.x.clone());
    let ta = Expr::symbol(indep.t.clone());
    let xs = grid_values(&space.domain.range_for(&xa), cfg.grid);
    let ts = grid_values(&space.domain.range_for(&ta), cfg.grid);
    let atoms: Vec<Expr> = free_atoms(&e).into_iter().filter(|a| *a != xa && *a != ta).collect();
    let mut notes = Vec::new();
    let mut max_scaled: f64 = 0.0;
    let mut used = 0;
    let mut rejected = 0;
    let mut short = false;
    for round in 0..space.rounds() {
        let base = space.opaque_bindings(round);
        let mut got = 0;
        let mut attempts = 0;
        while got < cfg.draws {
            attempts += 1;
            if attempts > cfg.max_attempts {
                short = true;
                break;
            }
            let b = match space.draw(&atoms, &base, rng) {
                Ok(b) => b,
                Err(err) => {
                    notes.push(err.to_string());
                    short = true;
                    break;
                }
            };
            match grid_residual(&e, &terms, &xa, &ta, &xs, &ts, &b) {
                Ok(v) => {
                    max_scaled = max_scaled.max(v);
                    used += xs.len() * ts.len();
                    got += 1;
                }
                Err(EvalError::Unbound(a)) => {
                    notes.push(format!("unbound atom {}", a));
                    return Verdict {
                        status: Status::Inconclusive,
                        stage: Stage::Numeric,
                        residual: e,
                        numeric_max_residual: f64::NAN,
                        samples_used: used,
                        notes,
                    };
                }
                Err(_) => rejected += 1,
            }
        }
    }
    if rejected > 0 {
        notes.push(format!("{} parameter draws rejected for leaving the real domain on the grid", rejected));
    }
    let status = if max_scaled >= cfg.tol {
        Status::Fail
    } else if short {
        notes.push("not enough admissible parameter draws".into());
        Status::Inconclusive
    } else {
        Status::PassNumeric
    };
    Verdict { status, stage: Stage::Numeric, residual: e, numeric_max_residual: max_scaled, samples_used: used, notes }
}

fn grid_residual(
    e: &Expr,
    terms: &[Expr],
    xa: &Expr,
    ta: &Expr,
    xs: &[f64],
    ts: &[f64],
    base: &Bindings,
) -> Result<f64, EvalError> {
    let mut b = base.clone();
    let mut worst: f64 = 0.0;
    for &x in xs {
        for &t in ts {
            b.set_atom(xa, x);
            b.set_atom(ta, t);
            let mut scale: f64 = 0.0;
            let mut total = 0.0;
            for term in terms {
                let v = eval_num(term, &b)?;
                scale = scale.max(v.abs());
                total += v;
            }
            if terms.len() == 1 {
                total = eval_num(e, &b)?;
            }
            worst = worst.max(total.abs() / (1.0 + scale));
        }
    }
    Ok(worst)
}

/// Largest relative change of `quantity(phi)` along an RK4 trajectory of
/// `phi' = G(phi)` started at the state bound in `base`.
pub fn first_integral_drift(
    g: &[Expr],
    functions: &[Symbol],
    quantity: &Expr,
    indep_t: &Symbol,
    base: &Bindings,
    t_end: f64,
) -> Result<f64, ReduceError> {
    let t0 = base.syms.get(indep_t).copied().unwrap_or(0.0);
    let y0: Vec<f64> = functions
        .iter()
        .map(|f| base.syms.get(f).copied().ok_or_else(|| EvalError::Unbound(f.name.to_string())))
        .collect::<Result<_, _>>()?;
    let eval_at = |t: f64, y: &[f64], e: &Expr| -> Result<f64, EvalError> {
        let mut b = base.clone();
        b.set_symbol(indep_t.clone(), t);
        for (f, v) in functions.iter().zip(y) {
            b.set_symbol(f.clone(), *v);
        }
        eval_num(e, &b)
    };
    let rhs = |t: f64, y: &[f64]| -> Vec<f64> { g.iter().map(|gi| eval_at(t, y, gi).unwrap_or(f64::NAN)).collect() };
    let path = ode::integrate_refined(&rhs, t0, &y0, t_end, 16, 1e-9).map_err(|e| ReduceError::Implicit(e.to_string()))?;
    let q0 = eval_at(t0, &y0, quantity)?;
    let mut worst: f64 = 0.0;
    for (t, y) in &path {
        let q = eval_at(*t, y, quantity)?;
        worst = worst.max((q - q0).abs() / q0.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Whether `e` mentions the node kind of an opaque application.
pub fn has_opaque(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |n| {
        if matches!(n.node(), Node::Opaque(_)) {
            found = true;
        }
    });
    found
}
