//! Lie-Backlund symmetry test `X^(k) H |_L = 0` with a two-stage zero test:
//! exact normal form first, seeded numeric sampling when that is inconclusive.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{eval_num, normalize, Bindings, EvalError, Expr, Node, Q};
use crate::jet::{prolong_apply, GeneralizedField, Manifold};
use crate::sampling::{free_atoms, Space};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    PassSymbolic,
    PassNumeric,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn is_pass(self) -> bool {
        matches!(self, Status::PassSymbolic | Status::PassNumeric)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::PassSymbolic => "PASS_SYMBOLIC",
            Status::PassNumeric => "PASS_NUMERIC",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Symbolic,
    Numeric,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Symbolic => "symbolic",
            Stage::Numeric => "numeric",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Symbolic,
    Numeric,
    #[default]
    Both,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "symbolic" => Ok(Mode::Symbolic),
            "numeric" => Ok(Mode::Numeric),
            "both" => Ok(Mode::Both),
            _ => Err(format!("unknown mode '{}'", s)),
        }
    }
}

/// Thresholds of the numeric stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub pass: f64,
    pub fail: f64,
    pub samples: usize,
    pub resamples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { pass: 1e-9, fail: 1e-6, samples: 20, resamples: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub status: Status,
    pub stage: Stage,
    pub residual: Expr,
    pub numeric_max_residual: f64,
    pub samples_used: usize,
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn symbolic_pass(residual: Expr) -> Self {
        Verdict {
            status: Status::PassSymbolic,
            stage: Stage::Symbolic,
            residual,
            numeric_max_residual: 0.0,
            samples_used: 0,
            notes: vec![],
        }
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

/// Sum of absolute values of the additive pieces reached from the top, used
/// as the scale of the relative residual. Denominators contribute their value.
pub fn magnitude(e: &Expr, b: &Bindings) -> Result<f64, EvalError> {
    match e.node() {
        Node::Add(ts) => {
            let mut s = 0.0;
            for t in ts {
                s += magnitude(t, b)?;
            }
            Ok(s)
        }
        Node::Mul(fs) => {
            let mut p = 1.0;
            for f in fs {
                p *= magnitude(f, b)?;
            }
            Ok(p)
        }
        Node::Pow(base, x) if *x > Q::from_integer(0.into()) => Ok(magnitude(base, b)?.powf(crate::expr::q_to_f64(x))),
        _ => Ok(eval_num(e, b)?.abs()),
    }
}

/// Relative size of `e` at one point.
pub fn relative_value(e: &Expr, b: &Bindings) -> Result<f64, EvalError> {
    let v = eval_num(e, b)?;
    if v == 0.0 {
        return Ok(0.0);
    }
    let m = magnitude(e, b)?;
    Ok(v.abs() / m.max(v.abs()).max(f64::MIN_POSITIVE))
}

/// Numeric stage alone: `samples` random points per opaque instantiation.
pub fn numeric_zero_test(residual: &Expr, space: &Space, tol: &Tolerances, rng: &mut ChaCha8Rng) -> Verdict {
    let atoms = free_atoms(residual);
    let mut max_rel: f64 = 0.0;
    let mut used = 0;
    let mut notes = Vec::new();
    let mut starved = false;
    for round in 0..space.rounds() {
        let base = space.opaque_bindings(round);
        for _ in 0..tol.samples {
            let mut done = false;
            for _ in 0..=tol.resamples {
                let b = match space.draw(&atoms, &base, rng) {
                    Ok(b) => b,
                    Err(e) => {
                        notes.push(e.to_string());
                        break;
                    }
                };
                match relative_value(residual, &b) {
                    Ok(r) => {
                        max_rel = max_rel.max(r);
                        used += 1;
                        done = true;
                        break;
                    }
                    Err(EvalError::Unbound(a)) => {
                        notes.push(format!("unbound atom {}", a));
                        return Verdict {
                            status: Status::Inconclusive,
                            stage: Stage::Numeric,
                            residual: residual.clone(),
                            numeric_max_residual: f64::NAN,
                            samples_used: used,
                            notes,
                        };
                    }
                    Err(_) => continue,
                }
            }
            if !done {
                starved = true;
            }
        }
    }
    let status = if max_rel > tol.fail {
        Status::Fail
    } else if starved {
        notes.push(format!("domain errors persisted after {} resamples", tol.resamples));
        Status::Inconclusive
    } else if max_rel < tol.pass {
        Status::PassNumeric
    } else {
        Status::Inconclusive
    };
    Verdict { status, stage: Stage::Numeric, residual: residual.clone(), numeric_max_residual: max_rel, samples_used: used, notes }
}

/// Two-stage zero test of an already reduced residual.
pub fn zero_test(residual: &Expr, space: &Space, tol: &Tolerances, mode: Mode, rng: &mut ChaCha8Rng) -> Verdict {
    let r = normalize(residual);
    if mode != Mode::Numeric && r.is_zero_literal() {
        return Verdict::symbolic_pass(r);
    }
    if mode == Mode::Symbolic {
        return Verdict {
            status: Status::Inconclusive,
            stage: Stage::Symbolic,
            residual: r,
            numeric_max_residual: f64::NAN,
            samples_used: 0,
            notes: vec!["normal form is not literally zero".into()],
        };
    }
    numeric_zero_test(&r, space, tol, rng)
}

/// `X^(k) H` restricted to the manifold, decided by `zero_test`.
pub fn check_lbs(
    m: &Manifold,
    x: &GeneralizedField,
    h: &Expr,
    mode: Mode,
    space: &Space,
    tol: &Tolerances,
    rng: &mut ChaCha8Rng,
) -> Verdict {
    let residual = prolong_apply(x, h, m);
    zero_test(&residual, space, tol, mode, rng)
}

/// Like `check_lbs` for a manifold over several fields: only jets of
/// `x.field` are prolonged; the other fields are reduced by their own rules.
pub fn check_lbs_multifield(
    m: &Manifold,
    x: &GeneralizedField,
    h: &Expr,
    mode: Mode,
    space: &Space,
    tol: &Tolerances,
    rng: &mut ChaCha8Rng,
) -> Verdict {
    let mut v = check_lbs(m, x, h, mode, space, tol, rng);
    let others: Vec<String> = m
        .rules()
        .iter()
        .filter(|(l, _)| l.field != x.field)
        .map(|(l, _)| crate::jet::jet_name(l))
        .collect();
    if !others.is_empty() {
        v.notes.push(format!("parametric rules: {}", others.join(", ")));
    }
    v
}

/// Single-coefficient mutations of a sum: for each additive term `c*w`
/// the sum with that term replaced by `(c+1)*w`. Terms carrying a free
/// multiplier found in no other term are skipped: rescaling them only moves
/// within the same parameter family.
pub fn coefficient_mutations(v: &Expr) -> Vec<Expr> {
    let terms = v.terms();
    (0..terms.len())
        .filter(|&i| !has_private_multiplier(&terms, i))
        .map(|i| {
            let mut ts = terms.clone();
            let (c, w) = split_coefficient(&terms[i]);
            ts[i] = Expr::mul(vec![Expr::num(c + Q::from_integer(1.into())), w]);
            Expr::add(ts)
        })
        .collect()
}

fn has_private_multiplier(terms: &[Expr], i: usize) -> bool {
    let factors: Vec<Expr> = match terms[i].node() {
        Node::Mul(fs) => fs.clone(),
        _ => vec![terms[i].clone()],
    };
    factors.iter().any(|f| {
        matches!(f.node(), Node::Sym(_))
            && terms.iter().enumerate().all(|(j, t)| j == i || !t.contains(f))
    })
}

fn split_coefficient(t: &Expr) -> (Q, Expr) {
    match t.node() {
        Node::Num(c) => (c.clone(), Expr::one()),
        Node::Mul(fs) => {
            let mut c = Q::from_integer(1.into());
            let mut rest = Vec::new();
            for f in fs {
                match f.as_num() {
                    Some(k) => c *= k,
                    None => rest.push(f.clone()),
                }
            }
            (c, Expr::mul(rest))
        }
        _ => (Q::from_integer(1.into()), t.clone()),
    }
}
