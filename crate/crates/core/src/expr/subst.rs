use std::collections::HashMap;

use super::{normalize, Expr, Node, OpaqueApp, Symbol};

pub type Rules = HashMap<Expr, Expr>;

/// Simultaneous substitution of atoms (symbols, jets, opaque applications),
/// without normalizing. Scoped integration variables are never rewritten.
pub fn substitute_raw(e: &Expr, rules: &Rules) -> Expr {
    if rules.is_empty() {
        return e.clone();
    }
    map_atoms(e, &mut |a| rules.get(a).cloned())
}

/// Simultaneous substitution followed by `normalize`.
pub fn substitute(e: &Expr, rules: &Rules) -> Expr {
    normalize(&substitute_raw(e, rules))
}

/// Rebuild `e`, replacing each atom for which `f` returns a value. Opaque
/// applications are offered to `f` after their arguments were rewritten.
pub fn map_atoms(e: &Expr, f: &mut dyn FnMut(&Expr) -> Option<Expr>) -> Expr {
    let mut memo = HashMap::new();
    go(e, f, &mut Vec::new(), &mut memo)
}

fn go(
    e: &Expr,
    f: &mut dyn FnMut(&Expr) -> Option<Expr>,
    bound: &mut Vec<Symbol>,
    memo: &mut HashMap<usize, (Expr, Expr)>,
) -> Expr {
    let cacheable = bound.is_empty();
    if cacheable {
        if let Some((_, r)) = memo.get(&e.ptr()) {
            return r.clone();
        }
    }
    let r = match e.node() {
        Node::Num(_) => e.clone(),
        Node::Sym(s) => {
            if bound.contains(s) {
                e.clone()
            } else {
                f(e).unwrap_or_else(|| e.clone())
            }
        }
        Node::Jet(_) => f(e).unwrap_or_else(|| e.clone()),
        Node::Add(ts) => {
            let v: Vec<Expr> = ts.iter().map(|t| go(t, f, bound, memo)).collect();
            if v.iter().zip(ts).all(|(a, b)| a.ptr() == b.ptr()) {
                e.clone()
            } else {
                Expr::add(v)
            }
        }
        Node::Mul(fs) => {
            let v: Vec<Expr> = fs.iter().map(|t| go(t, f, bound, memo)).collect();
            if v.iter().zip(fs).all(|(a, b)| a.ptr() == b.ptr()) {
                e.clone()
            } else {
                Expr::mul(v)
            }
        }
        Node::Pow(b, x) => {
            let nb = go(b, f, bound, memo);
            if nb.ptr() == b.ptr() {
                e.clone()
            } else {
                nb.pow(x.clone())
            }
        }
        Node::Fun(func, a) => {
            let na = go(a, f, bound, memo);
            if na.ptr() == a.ptr() {
                e.clone()
            } else {
                Expr::fun(*func, na)
            }
        }
        Node::Opaque(o) => {
            let args: Vec<Expr> = o.args.iter().map(|a| go(a, f, bound, memo)).collect();
            let same = args.iter().zip(&o.args).all(|(a, b)| a.ptr() == b.ptr());
            let rebuilt = if same {
                e.clone()
            } else {
                Expr::new(Node::Opaque(OpaqueApp { name: o.name.clone(), partials: o.partials.clone(), args }))
            };
            f(&rebuilt).unwrap_or(rebuilt)
        }
        Node::Integral { var, lo, hi, body } => {
            let lo2 = go(lo, f, bound, memo);
            let hi2 = go(hi, f, bound, memo);
            bound.push(var.clone());
            let body2 = go(body, f, bound, memo);
            bound.pop();
            Expr::integral(var.clone(), lo2, hi2, body2)
        }
        Node::Anti { body, var } => {
            bound.push(var.clone());
            let body2 = go(body, f, bound, memo);
            bound.pop();
            Expr::anti(body2, var.clone())
        }
    };
    if cacheable {
        memo.insert(e.ptr(), (e.clone(), r.clone()));
    }
    r
}
