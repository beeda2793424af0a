//! One pass/fail line per acceptance criterion. Claims are checked against
//! the records as printed; corrected variants are shown for information and
//! never count toward a criterion. Exits nonzero on a failing criterion only
//! when ACCEPTANCE_STRICT is set.

use std::collections::BTreeMap;
use std::time::Instant;

use lbs_core::catalog::{self, Case};
use lbs_core::expr::{diff, eval_num, Bindings};
use lbs_core::run::{run, CaseReport};
use lbs_core::{parse, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NUMERIC_PASS: f64 = 1e-9;
const MIN_POINTS: usize = 20;
const SUITE_SECONDS: f64 = 60.0;
const REDUCTION_REL: f64 = 1e-6;
const SOLUTION_RESIDUAL: f64 = 1e-7;
const SOLUTION_DRAWS: usize = 10;
const DRIFT_REL: f64 = 1e-6;
const COMBO_RESIDUAL: f64 = 1e-8;
const FD_REL: f64 = 1e-5;
const FD_EXPRESSIONS: usize = 1000;
const FULL_SUITE_SECONDS: f64 = 600.0;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Want {
    Pass,
    /// Pass decided by the normal form.
    Symbolic,
    Fail,
    /// Reported only; must run without an engine error.
    Report,
}

struct Ctx {
    cases: BTreeMap<String, Case>,
    reports: BTreeMap<String, CaseReport>,
}

impl Ctx {
    fn report(&self, id: &str) -> &CaseReport {
        self.reports.get(id).unwrap_or_else(|| panic!("no record {}", id))
    }

    /// `None` when the record meets `want`, else the reason it does not.
    fn check(&self, id: &str, want: Want, numeric_limit: f64) -> Option<String> {
        let r = self.report(id);
        let res = r.max_residual.unwrap_or(f64::NAN);
        let ok = match want {
            Want::Pass => {
                r.status == "PASS_SYMBOLIC" || (r.status == "PASS_NUMERIC" && res < numeric_limit)
            }
            Want::Symbolic => r.status == "PASS_SYMBOLIC",
            Want::Fail => r.status == "FAIL",
            Want::Report => r.status != "ERROR",
        };
        if ok {
            None
        } else {
            Some(format!("{} {} (residual {:.1e})", id, r.status, res))
        }
    }

    fn rounds(&self, id: &str) -> usize {
        self.cases[id].space.rounds()
    }

    fn draws(&self, id: &str) -> usize {
        self.cases[id].raw("solution", "draws").and_then(|d| d.parse().ok()).unwrap_or(10)
    }
}

struct Line {
    ok: bool,
    text: String,
}

fn line(ok: bool, text: String) -> Line {
    Line { ok, text }
}

fn claims(ctx: &Ctx, list: &[(&str, Want)], limit: f64) -> Vec<String> {
    list.iter().filter_map(|(id, w)| ctx.check(id, *w, limit)).collect()
}

fn summary(bad: &[String], total: usize) -> String {
    if bad.is_empty() {
        format!("{}/{} claims hold", total, total)
    } else {
        format!("{}/{} claims hold; failing: {}", total - bad.len(), total, bad.join(", "))
    }
}

fn info(ctx: &Ctx, ids: &[&str]) -> String {
    let parts: Vec<String> = ids.iter().map(|id| format!("{} {}", id, ctx.report(id).status)).collect();
    format!(" [variants, not scored: {}]", parts.join(", "))
}

fn lbs_pairs(ctx: &Ctx) -> Line {
    let t = Instant::now();
    let all: Vec<Case> = ctx.cases.values().cloned().collect();
    let sel = catalog::select(&all, Some("prop1-*"));
    let rep = run(&sel, &RunConfig::default());
    let secs = t.elapsed().as_secs_f64();
    let mut bad = Vec::new();
    let (mut muts, mut mut_failed) = (0, 0);
    for r in &rep.cases {
        if let Some(b) = ctx.check(&r.id, Want::Pass, NUMERIC_PASS) {
            bad.push(b);
        } else if r.status == "PASS_NUMERIC" && r.samples < MIN_POINTS {
            bad.push(format!("{} used {} points", r.id, r.samples));
        }
        match &r.mutations {
            Some(m) if m.total > 0 => {
                muts += m.total;
                mut_failed += m.failed;
                if m.failed < m.total {
                    bad.push(format!("{} mutations {}/{} FAIL", r.id, m.failed, m.total));
                }
            }
            _ => bad.push(format!("{} has no mutations", r.id)),
        }
    }
    if rep.cases.len() != 11 {
        bad.push(format!("{} records instead of 11", rep.cases.len()));
    }
    let ok = bad.is_empty() && secs < SUITE_SECONDS;
    line(
        ok,
        format!(
            "(K, V) pairs: {}/11 PASS, {}/{} mutations FAIL, {:.1} s (limit {} s){}",
            rep.cases.len() - bad.iter().filter(|b| !b.contains("mutations")).count().min(rep.cases.len()),
            mut_failed,
            muts,
            secs,
            SUITE_SECONDS,
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
        ),
    )
}

fn symmetry_controls(ctx: &Ctx) -> Line {
    use Want::*;
    let list = [
        ("airy-neg-q1", Fail),
        ("airy-neg-q2", Fail),
        ("airy-q3-printed", Pass),
        ("airy-q4", Pass),
        ("modified-airy-y0", Pass),
        ("modified-airy-y1", Pass),
        ("modified-airy-y2", Pass),
        ("modified-airy-y3-u", Report),
        ("modified-airy-y3-ux", Report),
        ("kdv-x", Pass),
        ("hyper1-q1", Pass),
        ("hyper1-q2", Pass),
        ("riccati-printed", Pass),
        ("riccati-corrupted-vt", Fail),
    ];
    let mut bad = claims(ctx, &list, NUMERIC_PASS);
    for id in ["modified-airy-y3-u", "modified-airy-y3-ux"] {
        if !ctx.cases[id].has_flag("typo-suspect") {
            bad.push(format!("{} lacks the typo flag", id));
        }
    }
    line(bad.is_empty(), format!("symmetry controls: {}{}", summary(&bad, list.len()), info(ctx, &["airy-q3-alt", "riccati-source"])))
}

fn reductions(ctx: &Ctx) -> Line {
    use Want::*;
    let list = [
        ("inverse-square-reduction", Pass),
        ("modified-airy-reduction", Pass),
        ("case-i", Pass),
        ("case-ii-printed", Pass),
        ("case-iii-printed", Pass),
        ("case-iv", Pass),
        ("case-v-printed", Pass),
        ("case-vi", Pass),
        ("a1a5-reduction", Pass),
        ("a6a8-reduction", Pass),
        ("pure-diffusion-reduction", Pass),
        ("kdv-reduction", Pass),
        ("case-i-algebraic", Pass),
    ];
    let mut bad = claims(ctx, &list, REDUCTION_REL);
    for id in ["case-i", "case-ii-printed", "case-iii-printed", "case-iv", "case-v-printed", "case-vi"] {
        if ctx.rounds(id) < 2 {
            bad.push(format!("{} has {} instantiation(s)", id, ctx.rounds(id)));
        }
    }
    if ctx.rounds("kdv-reduction") < 3 {
        bad.push("kdv-reduction has fewer than 3 (h1, h2) pairs".into());
    }
    line(
        bad.is_empty(),
        format!(
            "reductions: {}{}",
            summary(&bad, list.len()),
            info(ctx, &["case-ii-corrected", "case-iii-corrected", "case-v-corrected"])
        ),
    )
}

fn solutions(ctx: &Ctx) -> Line {
    use Want::*;
    let families = ["family1", "family2", "family3", "family4-printed", "family5-printed"];
    let mut list: Vec<(&str, Want)> = vec![("inverse-square-solution", Pass)];
    list.extend(families.iter().map(|f| (*f, Pass)));
    list.extend([
        ("a6a8-closed-form", Pass),
        ("pure-diffusion-solution", Pass),
        ("hyper1-solution-a", Pass),
        ("hyper1-solution-b", Pass),
        ("hyper1-solution-c", Pass),
        ("hyper2-solution-a", Pass),
        ("hyper2-solution-b", Pass),
        ("hyper2-solution-c", Pass),
    ]);
    let mut bad = claims(ctx, &list, SOLUTION_RESIDUAL);
    for f in families.iter().chain(["a6a8-closed-form"].iter()) {
        if ctx.draws(f) < SOLUTION_DRAWS {
            bad.push(format!("{} uses {} draws", f, ctx.draws(f)));
        }
    }
    line(bad.is_empty(), format!("solutions: {}{}", summary(&bad, list.len()), info(ctx, &["family4-corrected", "family5-corrected"])))
}

fn first_integrals(ctx: &Ctx) -> Line {
    use Want::*;
    let mut bad = claims(ctx, &[("first-integrals", Symbolic), ("a6a8-ratio-relation", Symbolic)], NUMERIC_PASS);
    bad.extend(ctx.check("a6a8-drift", Pass, DRIFT_REL));
    line(bad.is_empty(), format!("first integrals: {}", summary(&bad, 3)))
}

fn invariance(ctx: &Ctx) -> Line {
    use Want::*;
    let mut list = vec![
        ("invariant-x1x3", Fail),
        ("abelian-q1-minus-beta-q2", Pass),
        ("a6a8-inherited-q1", Symbolic),
        ("a6a8-inherited-q2", Symbolic),
    ];
    list.extend(["noninv-1", "noninv-2", "noninv-3", "noninv-4", "noninv-5"].iter().map(|n| (*n, Fail)));
    let mut bad = claims(ctx, &list, NUMERIC_PASS);
    bad.extend(ctx.check("invariant-combo", Pass, COMBO_RESIDUAL));
    let draws: usize = ctx.cases["invariant-combo"].raw("operator", "draws").and_then(|d| d.parse().ok()).unwrap_or(10);
    if draws < 10 {
        bad.push(format!("invariant-combo uses {} draws", draws));
    }
    line(bad.is_empty(), format!("invariance: {}", summary(&bad, list.len() + 1)))
}

fn commutators(ctx: &Ctx) -> Line {
    use Want::*;
    let bad = claims(ctx, &[("airy-commutator", Symbolic), ("abelian-commutator", Symbolic)], NUMERIC_PASS);
    line(bad.is_empty(), format!("commutators: {}{}", summary(&bad, 2), info(ctx, &["airy-commutator-zero"])))
}

/// Random smooth expression in x, y, u.
fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..5) {
            0 => "x".into(),
            1 => "y".into(),
            2 => "u".into(),
            3 => format!("{}", rng.gen_range(1..6)),
            _ => format!("({}/{})", rng.gen_range(1..5), rng.gen_range(2..7)),
        };
    }
    let a = random_expr(rng, depth - 1);
    match rng.gen_range(0..9) {
        0 => format!("({} + {})", a, random_expr(rng, depth - 1)),
        1 => format!("({} - {})", a, random_expr(rng, depth - 1)),
        2 => format!("({} * {})", a, random_expr(rng, depth - 1)),
        3 => format!("({} / (2 + sin({})))", a, random_expr(rng, depth - 1)),
        4 => format!("({})^{}", a, rng.gen_range(2..4)),
        5 => format!("exp(cos({}))", a),
        6 => format!("ln(1 + ({})^2)", a),
        7 => format!("sqrt(1 + ({})^2)", a),
        _ => format!("sin({})", a),
    }
}

fn engine(all: &[Case]) -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x = parse("x").unwrap();
    let (mut fd_bad, mut rt_bad) = (0, 0);
    for _ in 0..FD_EXPRESSIONS {
        let s = random_expr(&mut rng, 4);
        let e = parse(&s).unwrap();
        let (px, py, pu) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.2..2.0));
        let at = |xv: f64, e: &lbs_core::Expr| {
            let mut b = Bindings::new();
            b.set("x", xv).set("y", py).set_jet("u", 0, 0, pu);
            eval_num(e, &b).unwrap()
        };
        let h = 1e-3;
        let fd = (-at(px + 2.0 * h, &e) + 8.0 * at(px + h, &e) - 8.0 * at(px - h, &e) + at(px - 2.0 * h, &e)) / (12.0 * h);
        let d = at(px, &diff(&e, &x));
        // the stencil's own rounding error is about 18 eps |f| / (12 h)
        let rounding = 2.0 * f64::EPSILON * at(px, &e).abs() / h;
        if (d - fd).abs() > FD_REL * d.abs().max(fd.abs()).max(1.0) + rounding {
            fd_bad += 1;
        }
        let back = parse(&e.to_string()).unwrap();
        let again = parse(&back.to_string()).unwrap();
        if again != back || (at(px, &back) - at(px, &e)).abs() > 1e-12 * at(px, &e).abs().max(1.0) {
            rt_bad += 1;
        }
    }
    let strip = |r: &lbs_core::Report| -> Vec<(String, String, Option<u64>, Vec<String>)> {
        r.cases.iter().map(|c| (c.id.clone(), c.status.clone(), c.max_residual.map(f64::to_bits), c.notes.clone())).collect()
    };
    let sel = catalog::select(all, None);
    let t = Instant::now();
    let parallel = run(&sel, &RunConfig::default());
    let secs = t.elapsed().as_secs_f64();
    let serial = run(&sel, &RunConfig { jobs: Some(1), ..RunConfig::default() });
    let same = strip(&parallel) == strip(&serial);
    let ok = fd_bad == 0 && rt_bad == 0 && same && secs < FULL_SUITE_SECONDS;
    line(
        ok,
        format!(
            "engine: d/dx vs finite differences {}/{} within {:.0e}, parser round trip {}/{}, serial == parallel: {}, full suite {:.1} s (limit {} s)",
            FD_EXPRESSIONS - fd_bad,
            FD_EXPRESSIONS,
            FD_REL,
            FD_EXPRESSIONS - rt_bad,
            FD_EXPRESSIONS,
            same,
            secs,
            FULL_SUITE_SECONDS
        ),
    )
}

fn main() {
    let all = catalog::bundled().expect("bundled catalog loads");
    let sel = catalog::select(&all, None);
    let report = run(&sel, &RunConfig::default());
    let ctx = Ctx {
        cases: all.iter().map(|c| (c.id.clone(), c.clone())).collect(),
        reports: report.cases.iter().map(|r| (r.id.clone(), r.clone())).collect(),
    };
    let lines = [
        lbs_pairs(&ctx),
        symmetry_controls(&ctx),
        reductions(&ctx),
        solutions(&ctx),
        first_integrals(&ctx),
        invariance(&ctx),
        commutators(&ctx),
        engine(&all),
    ];
    for (i, l) in lines.iter().enumerate() {
        println!("criterion {}: {}  {}", i + 1, if l.ok { "PASS" } else { "FAIL" }, l.text);
    }
    let failed = lines.iter().filter(|l| !l.ok).count();
    println!("acceptance: {}/{} criteria pass", lines.len() - failed, lines.len());
    // a failing criterion would otherwise stop the remaining test binaries
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
