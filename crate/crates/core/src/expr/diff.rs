use std::collections::HashMap;

use num_traits::One;

use super::{normalize, subst::substitute_raw, Expr, Func, Node, OpaqueApp, Symbol};

/// A derivation on expressions, determined by its action on atoms.
pub trait Derivation {
    /// Derivative of a `Sym` or `Jet` node.
    fn atom(&self, e: &Expr) -> Expr;
    /// Whether this derivation moves along independent variable `v`; used to
    /// differentiate antiderivatives in `v`.
    fn along(&self, v: &Symbol) -> bool;
}

/// Partial derivative with respect to a single atom.
pub struct PartialWrt(pub Expr);

impl Derivation for PartialWrt {
    fn atom(&self, e: &Expr) -> Expr {
        if *e == self.0 {
            Expr::one()
        } else {
            Expr::zero()
        }
    }

    fn along(&self, v: &Symbol) -> bool {
        self.0.as_sym() == Some(v)
    }
}

/// Holds a scoped variable fixed.
struct Masked<'a> {
    inner: &'a dyn Derivation,
    var: &'a Symbol,
}

impl Derivation for Masked<'_> {
    fn atom(&self, e: &Expr) -> Expr {
        if e.as_sym() == Some(self.var) {
            Expr::zero()
        } else {
            self.inner.atom(e)
        }
    }

    fn along(&self, v: &Symbol) -> bool {
        v != self.var && self.inner.along(v)
    }
}

/// Partial derivative, normalized.
pub fn diff(e: &Expr, atom: &Expr) -> Expr {
    normalize(&diff_with(e, &PartialWrt(atom.clone())))
}

/// Apply a derivation (unnormalized result).
pub fn diff_with(e: &Expr, d: &dyn Derivation) -> Expr {
    let mut memo = HashMap::new();
    go(e, d, &mut memo)
}

fn go(e: &Expr, d: &dyn Derivation, memo: &mut HashMap<usize, (Expr, Expr)>) -> Expr {
    if let Some((_, r)) = memo.get(&e.ptr()) {
        return r.clone();
    }
    let r = match e.node() {
        Node::Num(_) => Expr::zero(),
        Node::Sym(_) | Node::Jet(_) => d.atom(e),
        Node::Add(ts) => Expr::add(ts.iter().map(|t| go(t, d, memo)).collect()),
        Node::Mul(fs) => {
            let ds: Vec<Expr> = fs.iter().map(|f| go(f, d, memo)).collect();
            let mut terms = Vec::new();
            for (i, di) in ds.iter().enumerate() {
                if di.is_zero_literal() {
                    continue;
                }
                let mut prod = Vec::with_capacity(fs.len());
                for (j, f) in fs.iter().enumerate() {
                    prod.push(if i == j { di.clone() } else { f.clone() });
                }
                terms.push(Expr::mul(prod));
            }
            Expr::add(terms)
        }
        Node::Pow(b, x) => {
            let db = go(b, d, memo);
            if db.is_zero_literal() {
                Expr::zero()
            } else {
                let lower = Expr::new(Node::Pow(b.clone(), x - super::Q::one()));
                Expr::mul(vec![Expr::num(x.clone()), lower, db])
            }
        }
        Node::Fun(f, a) => {
            let da = go(a, d, memo);
            if da.is_zero_literal() {
                Expr::zero()
            } else {
                let outer = match f {
                    Func::Exp => e.clone(),
                    Func::Ln => a.recip(),
                    Func::Sin => Expr::fun(Func::Cos, a.clone()),
                    Func::Cos => -Expr::fun(Func::Sin, a.clone()),
                    Func::Sinh => Expr::fun(Func::Cosh, a.clone()),
                    Func::Cosh => Expr::fun(Func::Sinh, a.clone()),
                    Func::Tanh => Expr::one() - Expr::fun(Func::Tanh, a.clone()).powi(2),
                };
                Expr::mul(vec![outer, da])
            }
        }
        Node::Opaque(o) => {
            let mut terms = Vec::new();
            for (i, a) in o.args.iter().enumerate() {
                let da = go(a, d, memo);
                if da.is_zero_literal() {
                    continue;
                }
                let mut partials = o.partials.clone();
                partials.push(i as u32 + 1);
                partials.sort_unstable();
                let app = OpaqueApp { name: o.name.clone(), partials, args: o.args.clone() };
                terms.push(Expr::mul(vec![Expr::new(Node::Opaque(app)), da]));
            }
            Expr::add(terms)
        }
        Node::Integral { var, lo, hi, body } => {
            let mut terms = Vec::new();
            let dhi = go(hi, d, memo);
            if !dhi.is_zero_literal() {
                let at = substitute_raw(body, &[(Expr::symbol(var.clone()), hi.clone())].into_iter().collect());
                terms.push(Expr::mul(vec![dhi, at]));
            }
            let dlo = go(lo, d, memo);
            if !dlo.is_zero_literal() {
                let at = substitute_raw(body, &[(Expr::symbol(var.clone()), lo.clone())].into_iter().collect());
                terms.push(-Expr::mul(vec![dlo, at]));
            }
            let inner = Masked { inner: d, var };
            let db = diff_with(body, &inner);
            if !db.is_zero_literal() {
                terms.push(Expr::integral(var.clone(), lo.clone(), hi.clone(), db));
            }
            Expr::add(terms)
        }
        Node::Anti { body, var } => {
            if d.along(var) {
                body.clone()
            } else {
                let inner = Masked { inner: d, var };
                let db = diff_with(body, &inner);
                if db.is_zero_literal() {
                    Expr::zero()
                } else {
                    Expr::anti(db, var.clone())
                }
            }
        }
    };
    memo.insert(e.ptr(), (e.clone(), r.clone()));
    r
}
