//! Case execution and report assembly.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{Case, Expect, Kind};
use crate::detcheck::{check_lbs, check_lbs_multifield, coefficient_mutations, zero_test, Mode, Stage, Status, Tolerances, Verdict};
use crate::expr::{normalize, substitute, Expr, JetVar, Rules, Slot, Symbol};
use crate::invariance::{
    check_inherited, criterion_check, defect, defect_zero, invariance_verdict, ComboConfig, PointField, SolutionWithConstants,
};
use crate::jet::{commutator, prolong_apply, prolong_apply_opt, reduce_to_manifold, total_derivative_in, GeneralizedField, Manifold};
use crate::reduce::{
    apply_ansatz, first_integral_drift, verify_reduced_system, verify_solution, Ansatz, ReduceConfig, ReducedSystem, SolutionConfig,
};
use crate::sampling::{case_rng, free_atoms};

/// Settings shared by every case of a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub tol: Tolerances,
    pub mode: Mode,
    /// Worker threads; `None` uses the rayon default.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 42, tol: Tolerances::default(), mode: Mode::Both, jobs: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Match,
    Mismatch,
    Reported,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct MutationTally {
    pub total: usize,
    pub failed: usize,
}

/// One line of the report.
#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub id: String,
    pub kind: Kind,
    pub status: String,
    pub stage: Option<Stage>,
    pub max_residual: Option<f64>,
    pub samples: usize,
    pub seconds: f64,
    pub notes: Vec<String>,
    pub expected: Expect,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutations: Option<MutationTally>,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.status == Status::PassSymbolic.as_str() || self.status == Status::PassNumeric.as_str()
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub total: usize,
    pub matched: usize,
    pub mismatched: usize,
    pub reported: usize,
    pub errors: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub timestamp: u64,
    pub seed: u64,
    pub mode: Mode,
    pub cases: Vec<CaseReport>,
    pub summary: Summary,
}

impl Report {
    /// 0 when every non-report-only case matched, 2 on engine errors, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.summary.errors > 0 {
            2
        } else if self.summary.mismatched > 0 {
            1
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = self.cases.iter().map(|c| c.id.len()).max().unwrap_or(2).max(2);
        for c in &self.cases {
            let res = c.max_residual.map(|r| format!("{:.2e}", r)).unwrap_or_else(|| "-".into());
            let stage = c.stage.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let tag = match c.outcome {
                Outcome::Match => "ok",
                Outcome::Mismatch => "MISMATCH",
                Outcome::Reported => "report",
                Outcome::Error => "ERROR",
            };
            let _ = write!(
                s,
                "{:<w$}  {:<16} {:<13} {:<8} {:>9}  {:>6.2}s  expect {:<11} {}",
                c.id,
                c.kind.as_str(),
                c.status,
                stage,
                res,
                c.seconds,
                c.expected.as_str(),
                tag,
                w = w
            );
            if let Some(m) = &c.mutations {
                let _ = write!(s, "  mutations {}/{} FAIL", m.failed, m.total);
            }
            s.push('\n');
            for n in &c.notes {
                let _ = writeln!(s, "{:<w$}    {}", "", n, w = w);
            }
        }
        let m = &self.summary;
        let _ = writeln!(
            s,
            "{} cases: {} matched, {} mismatched, {} report-only, {} errors",
            m.total, m.matched, m.mismatched, m.reported, m.errors
        );
        s
    }
}

/// Run cases in parallel; the report keeps the input order.
pub fn run(cases: &[&Case], cfg: &RunConfig) -> Report {
    let exec = || cases.par_iter().map(|c| run_case(c, cfg)).collect::<Vec<_>>();
    let reports = match cfg.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(exec),
            Err(_) => exec(),
        },
        None => exec(),
    };
    let mut summary = Summary { total: reports.len(), ..Default::default() };
    for r in &reports {
        match r.outcome {
            Outcome::Match => summary.matched += 1,
            Outcome::Mismatch => summary.mismatched += 1,
            Outcome::Reported => summary.reported += 1,
            Outcome::Error => summary.errors += 1,
        }
    }
    let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Report { timestamp, seed: cfg.seed, mode: cfg.mode, cases: reports, summary }
}

/// Verdict plus optional mutation tally.
pub struct Evaluation {
    pub verdict: Verdict,
    pub mutations: Option<MutationTally>,
}

impl From<Verdict> for Evaluation {
    fn from(verdict: Verdict) -> Self {
        Evaluation { verdict, mutations: None }
    }
}

pub fn run_case(case: &Case, cfg: &RunConfig) -> CaseReport {
    let start = Instant::now();
    let result = evaluate(case, cfg);
    let seconds = start.elapsed().as_secs_f64();
    let flags: Vec<String> = case.flags.iter().cloned().collect();
    match result {
        Ok(ev) => {
            let v = ev.verdict;
            let mutations_ok = ev.mutations.as_ref().map(|m| m.failed == m.total).unwrap_or(true);
            let matches = match case.expect {
                Expect::Pass => v.status.is_pass() && mutations_ok,
                Expect::Fail => v.status == Status::Fail,
                Expect::ReportOnly => true,
            };
            let outcome = match (case.expect, matches) {
                (Expect::ReportOnly, _) => Outcome::Reported,
                (_, true) => Outcome::Match,
                (_, false) => Outcome::Mismatch,
            };
            let max_residual = if v.stage == Stage::Symbolic && v.status == Status::PassSymbolic {
                Some(0.0)
            } else if v.numeric_max_residual.is_finite() {
                Some(v.numeric_max_residual)
            } else {
                None
            };
            CaseReport {
                id: case.id.clone(),
                kind: case.kind,
                status: v.status.as_str().to_string(),
                stage: Some(v.stage),
                max_residual,
                samples: v.samples_used,
                seconds,
                notes: v.notes,
                expected: case.expect,
                outcome,
                variant: case.variant.clone(),
                flags,
                mutations: ev.mutations,
            }
        }
        Err(msg) => CaseReport {
            id: case.id.clone(),
            kind: case.kind,
            status: "ERROR".into(),
            stage: None,
            max_residual: None,
            samples: 0,
            seconds,
            notes: vec![msg],
            expected: case.expect,
            outcome: Outcome::Error,
            variant: case.variant.clone(),
            flags,
            mutations: None,
        },
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rng(case: &Case, cfg: &RunConfig, stream: u64) -> ChaCha8Rng {
    case_rng(cfg.seed, &case.id, stream)
}

pub fn evaluate(case: &Case, cfg: &RunConfig) -> Result<Evaluation, String> {
    let mut tol = cfg.tol;
    if let Some(n) = case.number("case", "samples").map_err(err)? {
        tol.samples = n as usize;
    }
    match case.kind {
        Kind::SymmetryCheck => symmetry(case, cfg, &tol),
        Kind::CommutatorCheck => commutator_case(case, cfg, &tol).map(Into::into),
        Kind::ReductionCheck => reduction(case, cfg, &tol).map(Into::into),
        Kind::SolutionCheck => solution(case, cfg).map(Into::into),
        Kind::InvarianceCheck => invariance(case, cfg, &tol).map(Into::into),
        Kind::InheritedCheck => inherited(case, cfg, &tol).map(Into::into),
    }
}

fn function_set(case: &Case) -> BTreeSet<String> {
    case.functions.iter().cloned().collect()
}

pub fn manifold(case: &Case) -> Result<Manifold, String> {
    Manifold::new(case.rules.clone(), case.indep.clone()).map_err(err)
}

fn field_of(case: &Case, section: &str) -> String {
    case.raw(section, "field").unwrap_or_else(|| case.fields[0].clone())
}

fn point(case: &Case, section: &str, key: &str) -> Result<Option<PointField>, String> {
    match case.exprs(section, key).map_err(err)? {
        None => Ok(None),
        Some(v) if v.len() == 3 => Ok(Some(PointField::new(v[0].clone(), v[1].clone(), v[2].clone()))),
        Some(_) => Err(format!("{}: expected 'xi_t ; xi_x ; eta'", key)),
    }
}

/// Characteristic from `eta<suffix>` or `point<suffix>`, differentiated
/// `total_x` times.
fn characteristic(case: &Case, suffix: &str, field: &str) -> Result<Expr, String> {
    let mut eta = match point(case, "operator", &format!("point{}", suffix))? {
        Some(p) => p.characteristic(field),
        None => case
            .expr("operator", &format!("eta{}", suffix))
            .map_err(err)?
            .ok_or_else(|| format!("operator needs eta{} or point{}", suffix, suffix))?,
    };
    let n = case.number("operator", &format!("total_x{}", suffix)).map_err(err)?.unwrap_or(0.0) as usize;
    let fns = function_set(case);
    for _ in 0..n {
        eta = total_derivative_in(&eta, Slot::X, &case.indep, &fns, None);
    }
    Ok(eta)
}

fn rule_for<'a>(case: &'a Case, field: &str) -> Option<&'a (JetVar, Expr)> {
    case.rules.iter().find(|(j, _)| *j.field == *field)
}

/// The operator, its field, and `H` of a symmetry case.
pub fn symmetry_parts(case: &Case) -> Result<(GeneralizedField, Expr), String> {
    let field = field_of(case, "operator");
    let eta = characteristic(case, "", &field)?;
    let h = match case.expr("operator", "H").map_err(err)? {
        Some(h) => h,
        None => {
            let (j, rhs) = rule_for(case, &field).ok_or_else(|| format!("no manifold rule for field {}", field))?;
            Expr::jetvar(j.clone()) - rhs.clone()
        }
    };
    Ok((GeneralizedField::new(&field, eta), h))
}

fn symmetry(case: &Case, cfg: &RunConfig, tol: &Tolerances) -> Result<Evaluation, String> {
    let m = manifold(case)?;
    let (x, h) = symmetry_parts(case)?;
    let multi = case.rules.iter().any(|(j, _)| j.field != x.field);
    let mut r = rng(case, cfg, 0);
    let verdict = if multi {
        check_lbs_multifield(&m, &x, &h, cfg.mode, &case.space, tol, &mut r)
    } else {
        check_lbs(&m, &x, &h, cfg.mode, &case.space, tol, &mut r)
    };
    let mut mutations = None;
    if case.raw("operator", "mutate").as_deref() == Some("true") {
        let idx = case.rules.iter().position(|(j, _)| *j.field == *x.field).ok_or("mutate needs a rule for the operator field")?;
        let (lhs, v) = &case.rules[idx];
        let variants = coefficient_mutations(v);
        let mut failed = 0;
        for (k, mv) in variants.iter().enumerate() {
            let mut rules = case.rules.clone();
            rules[idx] = (lhs.clone(), mv.clone());
            let mm = Manifold::new(rules, case.indep.clone()).map_err(err)?;
            let hm = Expr::jetvar(lhs.clone()) - mv.clone();
            let mut r = rng(case, cfg, 1 + k as u64);
            let vm = check_lbs(&mm, &x, &hm, cfg.mode, &case.space, tol, &mut r);
            if vm.status == Status::Fail {
                failed += 1;
            }
        }
        mutations = Some(MutationTally { total: variants.len(), failed });
    }
    Ok(Evaluation { verdict, mutations })
}

fn commutator_case(case: &Case, cfg: &RunConfig, tol: &Tolerances) -> Result<Verdict, String> {
    let field = field_of(case, "operator");
    let x1 = GeneralizedField::new(&field, characteristic(case, "1", &field)?);
    let x2 = GeneralizedField::new(&field, characteristic(case, "2", &field)?);
    let expect = case.expr("operator", "expect").map_err(err)?.ok_or("commutator needs 'expect'")?;
    let m = if case.rules.is_empty() { None } else { Some(manifold(case)?) };
    let c = commutator(&x1, &x2, m.as_ref()).ok_or("operators act on different fields")?;
    let expect = match &m {
        Some(m) => reduce_to_manifold(&expect, m),
        None => expect,
    };
    let mut r = rng(case, cfg, 0);
    Ok(zero_test(&(c.eta - expect), &case.space, tol, cfg.mode, &mut r))
}

/// PDE residual `eq - D_x^2(minus_dxx)`.
pub fn pde(case: &Case) -> Result<Expr, String> {
    let eq = case.expr("pde", "eq").map_err(err)?.ok_or("missing [pde] eq")?;
    Ok(match case.expr("pde", "minus_dxx").map_err(err)? {
        Some(k) => {
            let fns = function_set(case);
            let d1 = total_derivative_in(&k, Slot::X, &case.indep, &fns, None);
            eq - total_derivative_in(&d1, Slot::X, &case.indep, &fns, None)
        }
        None => eq,
    })
}

pub fn ansatz(case: &Case) -> Result<Ansatz, String> {
    let field = field_of(case, "ansatz");
    if let Some(g) = case.expr("ansatz", "implicit").map_err(err)? {
        let br = case.exprs("ansatz", "bracket").map_err(err)?.ok_or("implicit ansatz needs 'bracket = lo ; hi'")?;
        if br.len() != 2 {
            return Err("bracket needs two bounds".into());
        }
        let manifold = if case.rules.is_empty() { None } else { Some(manifold(case)?) };
        return Ok(Ansatz::Implicit {
            field,
            relation: g,
            functions: case.functions.clone(),
            indep: case.indep.clone(),
            bracket: (br[0].clone(), br[1].clone()),
            manifold,
        });
    }
    let mut u = case.expr("ansatz", "u").map_err(err)?.ok_or("missing [ansatz] u")?;
    if case.has_flag("negate") {
        u = -u;
    }
    Ok(Ansatz::Explicit { field, u, functions: case.functions.clone(), indep: case.indep.clone() })
}

fn reduced(case: &Case) -> Result<ReducedSystem, String> {
    let eqs = case.all("reduced", "eq").map_err(err)?;
    let names: Vec<&str> = case.functions.iter().map(|s| s.as_str()).collect();
    Ok(ReducedSystem::new(eqs, &names))
}

fn reduction(case: &Case, cfg: &RunConfig, tol: &Tolerances) -> Result<Verdict, String> {
    match case.check.as_deref().unwrap_or("system") {
        "system" => {
            let p = pde(case)?;
            let a = ansatz(case)?;
            let rs = reduced(case)?;
            let mut r = rng(case, cfg, 0);
            verify_reduced_system(&p, &a, &rs, &case.space, tol, &ReduceConfig::default(), cfg.mode, &mut r).map_err(err)
        }
        "identity" => identity(case, cfg, tol),
        "drift" => drift(case, cfg),
        other => Err(format!("unknown reduction check '{}'", other)),
    }
}

/// Each `identity` expression vanishes after the ansatz (if any) is applied
/// and `phi'` is replaced by the solved reduced system (if any).
fn identity(case: &Case, cfg: &RunConfig, tol: &Tolerances) -> Result<Verdict, String> {
    let ids = case.all("reduced", "identity").map_err(err)?;
    if ids.is_empty() {
        return Err("identity check needs [reduced] identity lines".into());
    }
    let a = if case.record.section("ansatz").is_some() { Some(ansatz(case)?) } else { None };
    let g = if case.all("reduced", "eq").map_err(err)?.is_empty() {
        None
    } else {
        let rs = reduced(case)?;
        let names: Vec<Symbol> = rs.functions.iter().map(|f| f.raised()).collect();
        let g = rs.solved().map_err(err)?;
        Some(names.into_iter().map(Expr::symbol).zip(g).collect::<Rules>())
    };
    let mut worst: Option<Verdict> = None;
    let mut notes = Vec::new();
    for (i, e) in ids.iter().enumerate() {
        let mut e = e.clone();
        if let Some(a) = &a {
            e = apply_ansatz(&e, a).map_err(err)?;
        }
        if let Some(g) = &g {
            e = substitute(&e, g);
        }
        let mut r = rng(case, cfg, i as u64);
        let v = zero_test(&e, &case.space, tol, cfg.mode, &mut r);
        notes.push(format!("identity {}: {}", i + 1, v.status));
        if worst.as_ref().map(|w| severity(v.status) > severity(w.status)).unwrap_or(true) {
            worst = Some(v);
        }
    }
    let mut v = worst.expect("non-empty");
    v.notes.extend(notes);
    Ok(v)
}

pub(crate) fn severity(s: Status) -> u8 {
    match s {
        Status::PassSymbolic => 0,
        Status::PassNumeric => 1,
        Status::Inconclusive => 2,
        Status::Fail => 3,
    }
}

/// Relative drift of `quantity` along trajectories of the solved system.
fn drift(case: &Case, cfg: &RunConfig) -> Result<Verdict, String> {
    let rs = reduced(case)?;
    let g = rs.solved().map_err(err)?;
    let q = case.expr("reduced", "quantity").map_err(err)?.ok_or("drift needs 'quantity'")?;
    let t_end = case.number("reduced", "t_end").map_err(err)?.unwrap_or(1.0);
    let n = case.number("reduced", "trajectories").map_err(err)?.unwrap_or(5.0) as usize;
    let limit = 1e-6;
    let mut atoms: BTreeSet<Expr> = free_atoms(&q).into_iter().collect();
    for gi in &g {
        atoms.extend(free_atoms(gi));
    }
    for f in &rs.functions {
        atoms.insert(Expr::symbol(f.clone()));
    }
    let t = Expr::symbol(case.indep.t.clone());
    atoms.insert(t.clone());
    let atoms: Vec<Expr> = atoms.into_iter().collect();
    let mut r = rng(case, cfg, 0);
    let mut worst: f64 = 0.0;
    for round in 0..n {
        let base = case.space.opaque_bindings(round % case.space.rounds());
        let b = case.space.draw(&atoms, &base, &mut r).map_err(err)?;
        let t0 = b.syms.get(&case.indep.t).copied().unwrap_or(0.0);
        let d = first_integral_drift(&g, &rs.functions, &q, &case.indep.t, &b, t0 + t_end).map_err(err)?;
        worst = worst.max(d);
    }
    let status = if worst < limit { Status::PassNumeric } else { Status::Fail };
    Ok(Verdict {
        status,
        stage: Stage::Numeric,
        residual: q,
        numeric_max_residual: worst,
        samples_used: n,
        notes: vec![format!("max relative drift over {} trajectories (limit {:e})", n, limit)],
    })
}

/// Closed-form solution `u(x, t)`: `[solution] u`, or the ansatz with the
/// `[solution]` values of the reduction functions substituted.
pub fn solution_expr(case: &Case) -> Result<Expr, String> {
    if let Some(u) = case.expr("solution", "u").map_err(err)? {
        return Ok(u);
    }
    let a = ansatz(case)?;
    let Ansatz::Explicit { u, .. } = a else {
        return Err("closed-form solutions need an explicit ansatz".into());
    };
    // functions without a closed form stay symbolic
    let mut rules = Rules::new();
    for f in &case.functions {
        if let Some(v) = case.expr("solution", f).map_err(err)? {
            rules.insert(Expr::symbol(Symbol::new(f)), v);
        }
    }
    Ok(substitute(&u, &rules))
}

fn solution(case: &Case, cfg: &RunConfig) -> Result<Verdict, String> {
    let p = pde(case)?;
    let u = solution_expr(case)?;
    let mut sc = SolutionConfig::default();
    if let Some(d) = case.number("solution", "draws").map_err(err)? {
        sc.draws = d as usize;
    }
    let field = field_of(case, "solution");
    let mut r = rng(case, cfg, 0);
    Ok(verify_solution(&p, &field, &u, &case.indep, &case.space, &sc, &mut r))
}

/// Point fields `X1 = ...`, `Q2 = ...` of `[operator]` in order of appearance.
pub fn point_fields(case: &Case) -> Result<Vec<(String, PointField)>, String> {
    let mut out = Vec::new();
    for (k, _) in case.record.pairs("operator") {
        if k.chars().next().is_some_and(|c| c.is_ascii_uppercase()) && k != "H" {
            if let Some(p) = point(case, "operator", &k)? {
                out.push((k, p));
            }
        }
    }
    Ok(out)
}

fn solution_family(case: &Case) -> Result<SolutionWithConstants, String> {
    let f = solution_expr(case)?;
    let consts: Vec<String> = case
        .raw("solution", "constants")
        .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default();
    let names: Vec<&str> = consts.iter().map(|s| s.as_str()).collect();
    let mut s = SolutionWithConstants::new(&field_of(case, "solution"), f, &names);
    s.indep = case.indep.clone();
    s.functions = function_set(case);
    Ok(s)
}

fn combo(case: &Case, fields: &[PointField]) -> Result<PointField, String> {
    let c = case.exprs("operator", "combo").map_err(err)?.ok_or("missing 'combo'")?;
    if c.len() != fields.len() {
        return Err(format!("combo has {} coefficients for {} fields", c.len(), fields.len()));
    }
    Ok(PointField::combine(fields, &c))
}

fn invariance(case: &Case, cfg: &RunConfig, tol: &Tolerances) -> Result<Verdict, String> {
    let fields: Vec<PointField> = point_fields(case)?.into_iter().map(|(_, p)| p).collect();
    if fields.is_empty() {
        return Err("invariance check needs point fields".into());
    }
    let s = solution_family(case)?;
    let draws = case.number("operator", "draws").map_err(err)?.unwrap_or(10.0) as usize;
    let mut r = rng(case, cfg, 0);
    match case.check.as_deref().unwrap_or("find") {
        "find" => Ok(invariance_verdict(&fields, &s, &case.space, draws, &ComboConfig::default(), &mut r)),
        "span" => {
            let printed = case.exprs("operator", "span").map_err(err)?.ok_or("span check needs 'span'")?;
            let x = if case.raw("operator", "combo").is_some() { combo(case, &fields)? } else { fields[0].clone() };
            Ok(criterion_check(&x, &s, &printed, &case.space, draws, &mut r))
        }
        "criterion" => {
            let printed = case.exprs("operator", "criterion").map_err(err)?.ok_or("criterion check needs 'criterion'")?;
            let x = combo(case, &fields)?;
            Ok(criterion_check(&x, &s, &printed, &case.space, draws, &mut r))
        }
        "defect-zero" => {
            let x = combo(case, &fields)?;
            Ok(defect_zero(&x, &s, &case.space, tol, &mut r))
        }
        other => Err(format!("unknown invariance check '{}'", other)),
    }
}

fn inherited(case: &Case, cfg: &RunConfig, tol: &Tolerances) -> Result<Verdict, String> {
    let m = manifold(case)?;
    let field = field_of(case, "operator");
    let i1 = case.expr("operator", "I1").map_err(err)?.ok_or("missing I1")?;
    let i2 = case.expr("operator", "I2").map_err(err)?.ok_or("missing I2")?;
    let mut r = rng(case, cfg, 0);
    match case.check.as_deref().unwrap_or("conditions") {
        "conditions" => {
            let q = point(case, "operator", "Q")?.ok_or("missing Q")?;
            let f1 = case.expr("operator", "f1").map_err(err)?.ok_or("missing f1")?;
            let f2 = case.expr("operator", "f2").map_err(err)?.ok_or("missing f2")?;
            let mt = case.expr("operator", "m").map_err(err)?.ok_or("missing m")?;
            let names = [Symbol::new("I1"), Symbol::new("I2")];
            Ok(check_inherited(&q, &[i1, i2], &names, &m, &field, &[f1, f2], &mt, &case.space, tol, &mut r))
        }
        "first-integral" => {
            // D_x I_j vanishes on the ODE and I_j reproduces phi_j on the ansatz
            let a = ansatz(case)?;
            let none = BTreeSet::new();
            let mut worst = Verdict::symbolic_pass(Expr::zero());
            let mut notes = Vec::new();
            for (j, integral) in [i1, i2].iter().enumerate() {
                let dx = total_derivative_in(integral, Slot::X, &case.indep, &none, Some(&m));
                let v = zero_test(&reduce_to_manifold(&dx, &m), &case.space, tol, cfg.mode, &mut r);
                notes.push(format!("D_x I{} on the ODE: {}", j + 1, v.status));
                if severity(v.status) > severity(worst.status) {
                    worst = v;
                }
                let phi = Expr::symbol(Symbol::new(case.functions.get(j).ok_or("needs two reduction functions")?));
                let e = apply_ansatz(integral, &a).map_err(err)? - phi;
                let v = zero_test(&e, &case.space, tol, cfg.mode, &mut r);
                notes.push(format!("I{} - phi{} on the ansatz: {}", j + 1, j + 1, v.status));
                if severity(v.status) > severity(worst.status) {
                    worst = v;
                }
            }
            worst.notes.extend(notes);
            Ok(worst)
        }
        other => Err(format!("unknown inherited check '{}'", other)),
    }
}

/// Intermediate expressions of a case, for `show` and `explain`.
pub fn explain(case: &Case) -> Result<Vec<(String, String)>, String> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (j, rhs) in &case.rules {
        out.push((format!("rule {}", crate::jet::jet_name(j)), rhs.to_string()));
    }
    match case.kind {
        Kind::SymmetryCheck => {
            let (x, h) = symmetry_parts(case)?;
            let m = manifold(case)?;
            out.push(("eta".into(), x.eta.to_string()));
            out.push(("H".into(), h.to_string()));
            out.push(("X H (off the manifold)".into(), prolong_apply_opt(&x, &h, None).to_string()));
            out.push(("X H (on the manifold)".into(), normalize(&prolong_apply(&x, &h, &m)).to_string()));
        }
        Kind::CommutatorCheck => {
            let field = field_of(case, "operator");
            let x1 = GeneralizedField::new(&field, characteristic(case, "1", &field)?);
            let x2 = GeneralizedField::new(&field, characteristic(case, "2", &field)?);
            let m = if case.rules.is_empty() { None } else { Some(manifold(case)?) };
            let c = commutator(&x1, &x2, m.as_ref()).ok_or("operators act on different fields")?;
            out.push(("eta1".into(), x1.eta.to_string()));
            out.push(("eta2".into(), x2.eta.to_string()));
            out.push(("commutator".into(), c.eta.to_string()));
        }
        Kind::ReductionCheck => {
            if case.record.section("pde").is_some() {
                let p = pde(case)?;
                out.push(("pde".into(), p.to_string()));
                if let Ok(a) = ansatz(case) {
                    let raw = apply_ansatz(&p, &a).map_err(err)?;
                    out.push(("residual on the ansatz".into(), raw.to_string()));
                    out.push(("normal form".into(), normalize(&raw).to_string()));
                    for (i, b) in a.basis().iter().enumerate() {
                        out.push((format!("dU/dphi{}", i + 1), b.to_string()));
                    }
                }
            }
            if let Ok(rs) = reduced(case) {
                if let Ok(g) = rs.solved() {
                    for (f, gi) in rs.functions.iter().zip(g) {
                        out.push((format!("{}' =", f.name), gi.to_string()));
                    }
                }
            }
        }
        Kind::SolutionCheck => {
            let p = pde(case)?;
            let u = solution_expr(case)?;
            let field = field_of(case, "solution");
            let rules = crate::reduce::solution_jets(&p, &field, &u, &case.indep);
            out.push(("pde".into(), p.to_string()));
            out.push(("u".into(), u.to_string()));
            out.push(("residual".into(), crate::expr::substitute_raw(&p, &rules).to_string()));
        }
        Kind::InvarianceCheck => {
            let s = solution_family(case)?;
            out.push(("f".into(), s.f.to_string()));
            for (name, p) in point_fields(case)? {
                out.push((format!("defect {}", name), defect(&p, &s).to_string()));
            }
        }
        Kind::InheritedCheck => {
            for k in ["I1", "I2", "f1", "f2", "m"] {
                if let Some(e) = case.expr("operator", k).map_err(err)? {
                    out.push((k.into(), e.to_string()));
                }
            }
        }
    }
    Ok(out)
}
