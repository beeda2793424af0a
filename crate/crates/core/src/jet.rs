//! Total derivatives, manifolds of differential consequences, prolongation
//! of evolutionary fields and their commutators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::expr::{diff_with, is_zero, normalize, substitute, Derivation, Expr, JetVar, Node, PartialWrt, Rules, Slot, Symbol};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum JetError {
    #[error("rule for {0} is not in solved form: right-hand side contains reducible jet {1}")]
    NotSolved(String, String),
    #[error("rules for {0} and {1} disagree on their common consequence {2}")]
    Inconsistent(String, String, String),
    #[error("duplicate rule for {0}")]
    Duplicate(String),
}

/// Names of the two independent variables, space-like first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Independents {
    pub x: Symbol,
    pub t: Symbol,
}

impl Default for Independents {
    fn default() -> Self {
        Independents { x: Symbol::new("x"), t: Symbol::new("t") }
    }
}

impl Independents {
    pub fn new(x: &str, t: &str) -> Self {
        Independents { x: Symbol::new(x), t: Symbol::new(t) }
    }

    pub fn var(&self, slot: Slot) -> &Symbol {
        match slot {
            Slot::X => &self.x,
            Slot::T => &self.t,
        }
    }

    pub fn slot_of(&self, s: &Symbol) -> Option<Slot> {
        if *s == self.x {
            Some(Slot::X)
        } else if *s == self.t {
            Some(Slot::T)
        } else {
            None
        }
    }
}

/// Total derivative along one independent variable. Reduction functions
/// listed in `functions` depend on the time-like variable only.
pub struct TotalD<'a> {
    pub slot: Slot,
    pub indep: &'a Independents,
    pub functions: &'a BTreeSet<String>,
}

impl Derivation for TotalD<'_> {
    fn atom(&self, e: &Expr) -> Expr {
        match e.node() {
            Node::Jet(j) => Expr::jetvar(j.raised(self.slot)),
            Node::Sym(s) => {
                if s.order == 0 && s == self.indep.var(self.slot) {
                    Expr::one()
                } else if self.slot == Slot::T && self.functions.contains(&*s.name) {
                    Expr::symbol(s.raised())
                } else {
                    Expr::zero()
                }
            }
            _ => Expr::zero(),
        }
    }

    fn along(&self, v: &Symbol) -> bool {
        v == self.indep.var(self.slot)
    }
}

/// Solved-form rules `lhs = rhs` with lazily memoized consequences.
pub struct Manifold {
    rules: Vec<(JetVar, Expr)>,
    indep: Independents,
    cache: Mutex<HashMap<JetVar, Expr>>,
}

impl std::fmt::Debug for Manifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Manifold").field("rules", &self.rules).field("indep", &self.indep).finish()
    }
}

impl Clone for Manifold {
    fn clone(&self) -> Self {
        let cache = self.cache.lock().map(|c| c.clone()).unwrap_or_default();
        Manifold { rules: self.rules.clone(), indep: self.indep.clone(), cache: Mutex::new(cache) }
    }
}

static NO_FUNCTIONS: std::sync::OnceLock<BTreeSet<String>> = std::sync::OnceLock::new();

fn no_functions() -> &'static BTreeSet<String> {
    NO_FUNCTIONS.get_or_init(BTreeSet::new)
}

impl Manifold {
    pub fn empty(indep: Independents) -> Self {
        Manifold { rules: vec![], indep, cache: Mutex::new(HashMap::new()) }
    }

    /// Build and validate: solved form, and agreement of rules that share
    /// a field on their common consequence.
    pub fn new(rules: Vec<(JetVar, Expr)>, indep: Independents) -> Result<Self, JetError> {
        let rules: Vec<(JetVar, Expr)> = rules.into_iter().map(|(j, e)| (j, normalize(&e))).collect();
        for (i, (a, _)) in rules.iter().enumerate() {
            if rules[..i].iter().any(|(b, _)| b == a) {
                return Err(JetError::Duplicate(jet_name(a)));
            }
        }
        for (lhs, rhs) in &rules {
            for j in rhs.jets() {
                if rules.iter().any(|(l, _)| j.covers(l)) {
                    return Err(JetError::NotSolved(jet_name(lhs), jet_name(&j)));
                }
            }
        }
        let m = Manifold { rules, indep, cache: Mutex::new(HashMap::new()) };
        m.check_consistency()?;
        Ok(m)
    }

    pub fn rules(&self) -> &[(JetVar, Expr)] {
        &self.rules
    }

    pub fn independents(&self) -> &Independents {
        &self.indep
    }

    pub fn is_reducible(&self, j: &JetVar) -> bool {
        self.rules.iter().any(|(l, _)| j.covers(l))
    }

    fn check_consistency(&self) -> Result<(), JetError> {
        for (i, (a, ra)) in self.rules.iter().enumerate() {
            for (b, rb) in &self.rules[i + 1..] {
                if a.field != b.field {
                    continue;
                }
                let top = JetVar { field: a.field.clone(), ox: a.ox.max(b.ox), ot: a.ot.max(b.ot) };
                let pa = self.lift(ra, a, &top);
                let pb = self.lift(rb, b, &top);
                if !is_zero(&(pa - pb)) {
                    return Err(JetError::Inconsistent(jet_name(a), jet_name(b), jet_name(&top)));
                }
            }
        }
        Ok(())
    }

    /// Differentiate `rhs` of rule `lhs` up to jet `top`, reducing on the way.
    fn lift(&self, rhs: &Expr, lhs: &JetVar, top: &JetVar) -> Expr {
        let mut e = rhs.clone();
        for _ in lhs.ot..top.ot {
            e = total_derivative(&e, Slot::T, Some(self));
        }
        for _ in lhs.ox..top.ox {
            e = total_derivative(&e, Slot::X, Some(self));
        }
        e
    }

    /// Reduced expression of a reducible jet, or `None` for a free coordinate.
    pub fn jet_value(&self, j: &JetVar) -> Option<Expr> {
        if let Some(v) = self.cache.lock().ok().and_then(|c| c.get(j).cloned()) {
            return Some(v);
        }
        let (lhs, rhs) = self.rules.iter().find(|(l, _)| j.covers(l))?;
        let v = if j == lhs {
            rhs.clone()
        } else if j.ot > lhs.ot {
            let lower = JetVar { field: j.field.clone(), ox: j.ox, ot: j.ot - 1 };
            let base = self.jet_value(&lower).expect("covered");
            total_derivative(&base, Slot::T, Some(self))
        } else {
            let lower = JetVar { field: j.field.clone(), ox: j.ox - 1, ot: j.ot };
            let base = self.jet_value(&lower).expect("covered");
            total_derivative(&base, Slot::X, Some(self))
        };
        if let Ok(mut c) = self.cache.lock() {
            c.insert(j.clone(), v.clone());
        }
        Some(v)
    }
}

pub fn jet_name(j: &JetVar) -> String {
    Expr::jetvar(j.clone()).to_string()
}

/// `D_slot e`, reduced to `m` when given.
pub fn total_derivative(e: &Expr, slot: Slot, m: Option<&Manifold>) -> Expr {
    let default_indep = Independents::default();
    let indep = m.map(|m| &m.indep).unwrap_or(&default_indep);
    total_derivative_in(e, slot, indep, no_functions(), m)
}

/// Total derivative with explicit independents and reduction functions.
pub fn total_derivative_in(
    e: &Expr,
    slot: Slot,
    indep: &Independents,
    functions: &BTreeSet<String>,
    m: Option<&Manifold>,
) -> Expr {
    let d = TotalD { slot, indep, functions };
    let raw = diff_with(e, &d);
    match m {
        Some(m) => reduce_to_manifold(&raw, m),
        None => normalize(&raw),
    }
}

/// Replace every reducible jet by its value on the manifold; idempotent.
pub fn reduce_to_manifold(e: &Expr, m: &Manifold) -> Expr {
    let mut rules = Rules::new();
    let mut jets: Vec<JetVar> = e.jets().into_iter().filter(|j| m.is_reducible(j)).collect();
    // highest order first so lower consequences are memoized by the recursion
    jets.sort_by_key(|j| std::cmp::Reverse(j.order()));
    for j in jets {
        if let Some(v) = m.jet_value(&j) {
            rules.insert(Expr::jetvar(j), v);
        }
    }
    substitute(e, &rules)
}

/// Evolutionary vector field `eta * d/d(field)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedField {
    pub field: Arc<str>,
    pub eta: Expr,
}

impl GeneralizedField {
    pub fn new(field: &str, eta: Expr) -> Self {
        GeneralizedField { field: Arc::from(field), eta }
    }
}

/// `X^(k) e` with every `D_J eta` reduced to `m`.
pub fn prolong_apply(x: &GeneralizedField, e: &Expr, m: &Manifold) -> Expr {
    prolong_apply_opt(x, e, Some(m))
}

pub fn prolong_apply_opt(x: &GeneralizedField, e: &Expr, m: Option<&Manifold>) -> Expr {
    let jets: Vec<JetVar> = e.jets().into_iter().filter(|j| j.field == x.field).collect();
    let mut djeta: BTreeMap<(u32, u32), Expr> = BTreeMap::new();
    let base = match m {
        Some(m) => reduce_to_manifold(&x.eta, m),
        None => normalize(&x.eta),
    };
    djeta.insert((0, 0), base);
    let mut terms = Vec::with_capacity(jets.len());
    for j in &jets {
        let dj = lift(&mut djeta, j.ox, j.ot, m);
        let coeff = diff_with(e, &PartialWrt(Expr::jetvar(j.clone())));
        terms.push(Expr::mul(vec![coeff, dj]));
    }
    let sum = Expr::add(terms);
    match m {
        Some(m) => reduce_to_manifold(&sum, m),
        None => normalize(&sum),
    }
}

fn lift(memo: &mut BTreeMap<(u32, u32), Expr>, ox: u32, ot: u32, m: Option<&Manifold>) -> Expr {
    if let Some(v) = memo.get(&(ox, ot)) {
        return v.clone();
    }
    let v = if ot > 0 {
        let lower = lift(memo, ox, ot - 1, m);
        total_derivative(&lower, Slot::T, m)
    } else {
        let lower = lift(memo, ox - 1, ot, m);
        total_derivative(&lower, Slot::X, m)
    };
    memo.insert((ox, ot), v.clone());
    v
}

/// Characteristic `X1^(inf) eta2 - X2^(inf) eta1`.
pub fn commutator(x1: &GeneralizedField, x2: &GeneralizedField, m: Option<&Manifold>) -> Option<GeneralizedField> {
    if x1.field != x2.field {
        return None;
    }
    let a = prolong_apply_opt(x1, &x2.eta, m);
    let b = prolong_apply_opt(x2, &x1.eta, m);
    Some(GeneralizedField { field: x1.field.clone(), eta: normalize(&(a - b)) })
}
