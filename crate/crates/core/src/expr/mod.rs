//! Immutable symbolic expressions over jets, symbols, opaque functions and
//! integral atoms.

mod diff;
mod eval;
mod normal;
mod parse;
mod print;
mod subst;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub use diff::{diff, diff_with, Derivation, PartialWrt};
pub use eval::{eval_num, Bindings, EvalError, OpaqueFn};
pub use normal::{expand, is_zero, normalize, numer_denom};
pub use parse::{parse, parse_in, Context, ParseError};
pub use subst::{map_atoms, substitute, substitute_raw, Rules};

/// Exact rational constant.
pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qr(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn q_to_f64(v: &Q) -> f64 {
    match (v.numer().to_f64(), v.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // huge numerator/denominator: scale down via bit shifting
            let shift = v.numer().bits().max(v.denom().bits()) as i64 - 900;
            let shift = shift.max(0) as usize;
            let n = (v.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (v.denom() >> shift).to_f64().unwrap_or(1.0);
            n / d
        }
    }
}

/// Scalar symbol: a variable, parameter or reduction function derivative.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub name: Arc<str>,
    /// Derivative order; only nonzero for reduction functions.
    pub order: u32,
}

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol { name: Arc::from(name), order: 0 }
    }

    pub fn with_order(name: &str, order: u32) -> Self {
        Symbol { name: Arc::from(name), order }
    }

    pub fn raised(&self) -> Self {
        Symbol { name: self.name.clone(), order: self.order + 1 }
    }
}

/// Jet coordinate `u_{x^ox t^ot}`. The two slots are the first (space-like)
/// and second (time-like) independent variable of the case.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JetVar {
    pub field: Arc<str>,
    pub ox: u32,
    pub ot: u32,
}

impl JetVar {
    pub fn new(field: &str, ox: u32, ot: u32) -> Self {
        JetVar { field: Arc::from(field), ox, ot }
    }

    pub fn order(&self) -> u32 {
        self.ox + self.ot
    }

    pub fn raised(&self, slot: Slot) -> Self {
        match slot {
            Slot::X => JetVar { field: self.field.clone(), ox: self.ox + 1, ot: self.ot },
            Slot::T => JetVar { field: self.field.clone(), ox: self.ox, ot: self.ot + 1 },
        }
    }

    /// True when `self` is a differential consequence of `other`.
    pub fn covers(&self, other: &JetVar) -> bool {
        self.field == other.field && self.ox >= other.ox && self.ot >= other.ot
    }
}

/// Which independent variable a total derivative acts along.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    X,
    T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
        }
    }
}

/// Application of an opaque function, possibly differentiated formally.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpaqueApp {
    pub name: Arc<str>,
    /// 1-based argument indices of formal partial derivatives, sorted.
    pub partials: Vec<u32>,
    pub args: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Num(Q),
    Sym(Symbol),
    Jet(JetVar),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, Q),
    Fun(Func, Expr),
    Opaque(OpaqueApp),
    /// Definite integral with a scoped dummy variable.
    Integral { var: Symbol, lo: Expr, hi: Expr, body: Expr },
    /// Antiderivative of `body` in `var`, from a per-case base point.
    Anti { body: Expr, var: Symbol },
}

#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl Eq for Expr {}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            Ordering::Equal
        } else {
            self.0.cmp(&other.0)
        }
    }
}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl Expr {
    pub fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn num(v: Q) -> Self {
        Expr::new(Node::Num(v))
    }

    pub fn int(n: i64) -> Self {
        Expr::num(q(n))
    }

    pub fn rat(n: i64, d: i64) -> Self {
        Expr::num(qr(n, d))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn sym(name: &str) -> Self {
        Expr::new(Node::Sym(Symbol::new(name)))
    }

    pub fn symbol(s: Symbol) -> Self {
        Expr::new(Node::Sym(s))
    }

    pub fn jet(field: &str, ox: u32, ot: u32) -> Self {
        Expr::new(Node::Jet(JetVar::new(field, ox, ot)))
    }

    pub fn jetvar(j: JetVar) -> Self {
        Expr::new(Node::Jet(j))
    }

    pub fn add(terms: Vec<Expr>) -> Self {
        let mut out = Vec::with_capacity(terms.len());
        let mut c = Q::zero();
        for t in terms {
            match t.node() {
                Node::Num(v) => c += v,
                Node::Add(inner) => {
                    for s in inner {
                        if let Node::Num(v) = s.node() {
                            c += v;
                        } else {
                            out.push(s.clone());
                        }
                    }
                }
                _ => out.push(t),
            }
        }
        if !c.is_zero() {
            out.push(Expr::num(c));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => Expr::new(Node::Add(out)),
        }
    }

    pub fn mul(factors: Vec<Expr>) -> Self {
        let mut out = Vec::with_capacity(factors.len());
        let mut c = Q::one();
        for f in factors {
            match f.node() {
                Node::Num(v) => c *= v,
                Node::Mul(inner) => {
                    for s in inner {
                        if let Node::Num(v) = s.node() {
                            c *= v;
                        } else {
                            out.push(s.clone());
                        }
                    }
                }
                _ => out.push(f),
            }
        }
        if c.is_zero() {
            return Expr::zero();
        }
        if !c.is_one() {
            out.insert(0, Expr::num(c));
        }
        match out.len() {
            0 => Expr::one(),
            1 => out.pop().unwrap(),
            _ => Expr::new(Node::Mul(out)),
        }
    }

    pub fn pow(&self, e: Q) -> Self {
        if e.is_zero() {
            return Expr::one();
        }
        if e.is_one() {
            return self.clone();
        }
        match self.node() {
            Node::Num(v) if e.is_integer() => {
                if v.is_zero() && e.is_negative() {
                    return Expr::new(Node::Pow(self.clone(), e));
                }
                let n = e.to_integer().to_i32().unwrap_or(i32::MAX);
                if n.unsigned_abs() <= 64 {
                    return Expr::num(pow_q(v, n));
                }
                Expr::new(Node::Pow(self.clone(), e))
            }
            Node::Pow(b, inner) => b.pow(inner * e),
            _ => Expr::new(Node::Pow(self.clone(), e)),
        }
    }

    pub fn powi(&self, n: i64) -> Self {
        self.pow(q(n))
    }

    pub fn sqrt(&self) -> Self {
        self.pow(qr(1, 2))
    }

    pub fn recip(&self) -> Self {
        self.pow(q(-1))
    }

    pub fn fun(f: Func, arg: Expr) -> Self {
        Expr::new(Node::Fun(f, arg))
    }

    pub fn exp(&self) -> Self {
        Expr::fun(Func::Exp, self.clone())
    }

    pub fn ln(&self) -> Self {
        Expr::fun(Func::Ln, self.clone())
    }

    pub fn opaque(name: &str, args: Vec<Expr>) -> Self {
        Expr::new(Node::Opaque(OpaqueApp { name: Arc::from(name), partials: vec![], args }))
    }

    pub fn opaque_partial(name: &str, partials: Vec<u32>, args: Vec<Expr>) -> Self {
        let mut partials = partials;
        partials.sort_unstable();
        Expr::new(Node::Opaque(OpaqueApp { name: Arc::from(name), partials, args }))
    }

    pub fn integral(var: Symbol, lo: Expr, hi: Expr, body: Expr) -> Self {
        Expr::new(Node::Integral { var, lo, hi, body })
    }

    pub fn anti(body: Expr, var: Symbol) -> Self {
        Expr::new(Node::Anti { body, var })
    }

    pub fn as_num(&self) -> Option<&Q> {
        match self.node() {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self.node(), Node::Num(v) if v.is_zero())
    }

    pub fn as_sym(&self) -> Option<&Symbol> {
        match self.node() {
            Node::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_jet(&self) -> Option<&JetVar> {
        match self.node() {
            Node::Jet(j) => Some(j),
            _ => None,
        }
    }

    /// Direct children (integral bodies included).
    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Num(_) | Node::Sym(_) | Node::Jet(_) => vec![],
            Node::Add(v) | Node::Mul(v) => v.iter().collect(),
            Node::Pow(b, _) => vec![b],
            Node::Fun(_, a) => vec![a],
            Node::Opaque(o) => o.args.iter().collect(),
            Node::Integral { lo, hi, body, .. } => vec![lo, hi, body],
            Node::Anti { body, .. } => vec![body],
        }
    }

    /// Visit every node once per occurrence (pre-order).
    pub fn walk(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn jets(&self) -> BTreeSet<JetVar> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        collect(self, &mut seen, &mut |e| {
            if let Node::Jet(j) = e.node() {
                out.insert(j.clone());
            }
        });
        out
    }

    /// Free symbols; integral dummies are excluded inside their scope.
    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        free_symbols(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn opaque_names(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        collect(self, &mut seen, &mut |e| {
            if let Node::Opaque(o) = e.node() {
                out.insert(o.name.clone());
            }
        });
        out
    }

    pub fn contains(&self, target: &Expr) -> bool {
        if self == target {
            return true;
        }
        self.children().into_iter().any(|c| c.contains(target))
    }

    pub fn has_integral(&self) -> bool {
        match self.node() {
            Node::Integral { .. } | Node::Anti { .. } => true,
            _ => self.children().into_iter().any(|c| c.has_integral()),
        }
    }

    /// Top-level additive terms.
    pub fn terms(&self) -> Vec<Expr> {
        match self.node() {
            Node::Add(v) => v.clone(),
            _ => vec![self.clone()],
        }
    }
}

fn collect(e: &Expr, seen: &mut std::collections::HashSet<usize>, f: &mut dyn FnMut(&Expr)) {
    if !seen.insert(e.ptr()) {
        return;
    }
    f(e);
    for c in e.children() {
        collect(c, seen, f);
    }
}

fn free_symbols(e: &Expr, bound: &mut Vec<Symbol>, out: &mut BTreeSet<Symbol>) {
    match e.node() {
        Node::Sym(s) => {
            if !bound.contains(s) {
                out.insert(s.clone());
            }
        }
        Node::Integral { var, lo, hi, body } => {
            free_symbols(lo, bound, out);
            free_symbols(hi, bound, out);
            bound.push(var.clone());
            free_symbols(body, bound, out);
            bound.pop();
        }
        _ => {
            for c in e.children() {
                free_symbols(c, bound, out);
            }
        }
    }
}

pub(crate) fn pow_q(v: &Q, n: i32) -> Q {
    if n >= 0 {
        num_traits::pow(v.clone(), n as usize)
    } else {
        num_traits::pow(v.recip(), n.unsigned_abs() as usize)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl std::ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs.clone())
            }
        }
        impl std::ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs)
            }
        }
        impl std::ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs.clone())
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::add(vec![a, b]));
binop!(Sub, sub, |a, b| Expr::add(vec![a, Expr::mul(vec![Expr::int(-1), b])]));
binop!(Mul, mul, |a, b| Expr::mul(vec![a, b]));
binop!(Div, div, |a, b| Expr::mul(vec![a, b.recip()]));

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::mul(vec![Expr::int(-1), self])
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::mul(vec![Expr::int(-1), self.clone()])
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}
