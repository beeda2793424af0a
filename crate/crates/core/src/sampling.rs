//! Sampling domains, parameter constraints, opaque-function instantiations
//! and per-case random streams.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{diff, eval_num, parse_in, Bindings, Context, EvalError, Expr, Node, OpaqueFn, Symbol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Range {
    Interval { lo: f64, hi: f64, exclude: Vec<f64> },
    Set(Vec<f64>),
}

impl Range {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Range::Interval { lo, hi, exclude: vec![] }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Range::Set(v) => v[rng.gen_range(0..v.len())],
            Range::Interval { lo, hi, exclude } => {
                let width = (hi - lo).abs().max(1e-12);
                for _ in 0..1000 {
                    let v = if hi > lo { rng.gen_range(*lo..*hi) } else { *lo };
                    if exclude.iter().all(|x| (v - x).abs() > 1e-3 * width) {
                        return v;
                    }
                }
                *lo
            }
        }
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Range::Interval { lo, hi, exclude } => {
                write!(f, "[{}, {}]", lo, hi)?;
                if !exclude.is_empty() {
                    let ex: Vec<String> = exclude.iter().map(|v| v.to_string()).collect();
                    write!(f, " exclude {{{}}}", ex.join(", "))?;
                }
                Ok(())
            }
            Range::Set(v) => {
                let s: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{{{}}}", s.join(", "))
            }
        }
    }
}

/// Per-atom sampling ranges with defaults by atom kind.
#[derive(Clone, Debug)]
pub struct Domain {
    pub ranges: BTreeMap<String, Range>,
    pub independents: [String; 2],
    pub functions: BTreeSet<String>,
}

impl Default for Domain {
    fn default() -> Self {
        Domain { ranges: BTreeMap::new(), independents: ["x".into(), "t".into()], functions: BTreeSet::new() }
    }
}

impl Domain {
    pub fn with(mut self, atom: &str, r: Range) -> Self {
        self.ranges.insert(atom.to_string(), r);
        self
    }

    pub fn range_for(&self, atom: &Expr) -> Range {
        if let Some(r) = self.ranges.get(&atom.to_string()) {
            return r.clone();
        }
        match atom.node() {
            Node::Jet(j) if j.order() == 0 => Range::interval(0.2, 2.0),
            Node::Jet(_) => Range::interval(-1.0, 1.0),
            Node::Sym(s) => {
                if *s.name == self.independents[0] {
                    Range::interval(0.5, 3.0)
                } else if *s.name == self.independents[1] {
                    Range::interval(0.0, 2.0)
                } else if self.functions.contains(&*s.name) {
                    if s.order == 0 {
                        Range::interval(0.5, 2.0)
                    } else {
                        Range::interval(-1.0, 1.0)
                    }
                } else {
                    Range::interval(-2.0, 2.0)
                }
            }
            _ => Range::interval(-1.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Ne,
    Gt,
    Ge,
    Lt,
    Le,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Ne => "!=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
        }
    }
}

/// Machine-checkable parameter predicate `lhs op rhs`.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub lhs: Expr,
    pub op: Cmp,
    pub rhs: Expr,
}

impl Constraint {
    pub fn holds(&self, b: &Bindings) -> Result<bool, EvalError> {
        let l = eval_num(&self.lhs, b)?;
        let r = eval_num(&self.rhs, b)?;
        let scale = 1e-6 * (1.0 + l.abs().max(r.abs()));
        Ok(match self.op {
            Cmp::Ne => (l - r).abs() > scale,
            Cmp::Gt => l > r + scale,
            Cmp::Ge => l >= r,
            Cmp::Lt => l < r - scale,
            Cmp::Le => l <= r,
        })
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

/// Concrete smooth function standing in for an opaque one; partials are
/// derived symbolically from the body.
pub struct Template {
    pub name: String,
    pub params: Vec<Symbol>,
    pub body: Expr,
    partials: Mutex<HashMap<Vec<u32>, Expr>>,
}

impl fmt::Debug for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) = {}", self.name, self.params.iter().map(|p| p.name.to_string()).collect::<Vec<_>>().join(","), self.body)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("bad instantiation for {name}: {msg}")]
pub struct TemplateError {
    pub name: String,
    pub msg: String,
}

impl Template {
    /// `body` is written in the placeholders `z1, ..., zn`.
    pub fn new(name: &str, arity: usize, body: &str) -> Result<Self, TemplateError> {
        let params: Vec<Symbol> = (1..=arity).map(|i| Symbol::new(&format!("z{}", i))).collect();
        let mut ctx = Context::default();
        ctx.fields.clear();
        ctx.params = params.iter().map(|p| p.name.to_string()).collect();
        let body = parse_in(body, &ctx).map_err(|e| TemplateError { name: name.into(), msg: e.to_string() })?;
        Ok(Template { name: name.into(), params, body, partials: Mutex::new(HashMap::new()) })
    }

    pub fn partial(&self, idx: &[u32]) -> Expr {
        if let Some(e) = self.partials.lock().ok().and_then(|m| m.get(idx).cloned()) {
            return e;
        }
        let mut e = self.body.clone();
        for &i in idx {
            e = diff(&e, &Expr::symbol(self.params[i as usize - 1].clone()));
        }
        if let Ok(mut m) = self.partials.lock() {
            m.insert(idx.to_vec(), e.clone());
        }
        e
    }

    /// Body with the placeholders replaced by `args`.
    pub fn apply(&self, partials: &[u32], args: &[Expr]) -> Expr {
        let body = self.partial(partials);
        let rules = self.params.iter().zip(args).map(|(p, a)| (Expr::symbol(p.clone()), a.clone())).collect();
        crate::expr::substitute_raw(&body, &rules)
    }
}

impl OpaqueFn for Template {
    fn eval(&self, partials: &[u32], args: &[f64]) -> Option<f64> {
        let e = self.partial(partials);
        let mut b = Bindings::new();
        for (p, v) in self.params.iter().zip(args) {
            b.set_symbol(p.clone(), *v);
        }
        eval_num(&e, &b).ok()
    }
}

/// Default instantiation library: a low-degree polynomial, an
/// exponentially scaled and a trigonometric function.
pub fn default_library(name: &str, arity: usize) -> Vec<Template> {
    let bodies: Vec<String> = match arity {
        0 => vec!["1".into(), "2".into()],
        1 => vec!["1 + z1/2 + z1^2/5".into(), "exp(z1/3)".into(), "2 + sin(z1)".into()],
        2 => vec!["1 + z1/2 - z2/3 + z1*z2/5".into(), "exp((z1 - z2)/4)".into(), "2 + sin(z1) + cos(z2)".into()],
        n => {
            let lin: Vec<String> = (1..=n).map(|i| format!("z{}/{}", i, i + 1)).collect();
            vec![format!("1 + {}", lin.join(" + ")), format!("exp(({})/4)", lin.join(" - ")), format!("2 + sin({})", lin.join(" + "))]
        }
    };
    bodies.iter().map(|b| Template::new(name, arity, b).expect("library template parses")).collect()
}

/// Parameter space of a case: domains, predicates and opaque instantiations.
#[derive(Clone, Debug, Default)]
pub struct Space {
    pub domain: Domain,
    pub requires: Vec<Constraint>,
    /// Alternative instantiations; each entry binds every opaque function.
    pub instantiations: Vec<Vec<(String, Arc<Template>)>>,
    pub anti_base: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DrawError {
    #[error("no admissible parameter draw after {0} attempts")]
    Exhausted(usize),
}

impl Space {
    /// Number of instantiation rounds (at least one).
    pub fn rounds(&self) -> usize {
        self.instantiations.len().max(1)
    }

    pub fn opaque_bindings(&self, round: usize) -> Bindings {
        let mut b = Bindings::new();
        b.anti_base = self.anti_base;
        if let Some(set) = self.instantiations.get(round) {
            for (name, t) in set {
                b.set_opaque(name, t.clone());
            }
        }
        b
    }

    /// Draw values for `atoms` satisfying every constraint whose atoms are
    /// all among the drawn (or pre-bound) values.
    pub fn draw(&self, atoms: &[Expr], base: &Bindings, rng: &mut ChaCha8Rng) -> Result<Bindings, DrawError> {
        const ATTEMPTS: usize = 1000;
        for _ in 0..ATTEMPTS {
            let mut b = base.clone();
            for a in atoms {
                let v = self.domain.range_for(a).draw(rng);
                b.set_atom(a, v);
            }
            let ok = self.requires.iter().all(|c| match c.holds(&b) {
                Ok(v) => v,
                Err(EvalError::Unbound(_)) => true,
                Err(_) => false,
            });
            if ok {
                return Ok(b);
            }
        }
        Err(DrawError::Exhausted(ATTEMPTS))
    }
}

/// Random stream derived from the global seed, a case id and a sub-stream.
pub fn case_rng(seed: u64, case_id: &str, stream: u64) -> ChaCha8Rng {
    // FNV-1a over the id, then mixed with the seed and stream
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in case_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut s = seed ^ h.rotate_left(17) ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    s ^= s >> 33;
    s = s.wrapping_mul(0xff51_afd7_ed55_8ccd);
    s ^= s >> 33;
    ChaCha8Rng::seed_from_u64(s)
}

/// Free atoms (symbols and jets) of an expression, in canonical order.
pub fn free_atoms(e: &Expr) -> Vec<Expr> {
    let mut out: Vec<Expr> = e.symbols().into_iter().map(Expr::symbol).collect();
    out.extend(e.jets().into_iter().map(Expr::jetvar));
    out
}
