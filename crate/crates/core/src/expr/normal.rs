//! Product-of-bases normal form.
//!
//! A normalized expression is a single `Term`: a rational coefficient times a
//! product of kernels raised to rational exponents, times at most one `exp`.
//! Kernels are atoms (symbols, jets, transcendental subterms), numeric
//! radicals and canonical multi-term polynomials ("bases"). Sums only live
//! inside bases. Addition brings operands over their common kernel content,
//! expands what remains and re-factors the sum, which makes `a - a` vanish
//! structurally for everything built from rational operations, `exp` and
//! rational powers of polynomials.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{pow_q, q, Expr, Func, Node, OpaqueApp, Q};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Kernel {
    /// Integer greater than one (prime when factorable) or -1; always
    /// carries a non-integer exponent.
    Num(BigInt),
    Atom(Expr),
    Base(Arc<Poly>),
}

type Poly = BTreeMap<Mono, Q>;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Mono {
    f: Vec<(Kernel, Q)>,
    exp: Option<Box<Term>>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Term {
    c: Q,
    m: Mono,
}

impl Term {
    fn zero() -> Term {
        Term { c: Q::zero(), m: Mono::default() }
    }

    fn constant(c: Q) -> Term {
        Term { c, m: Mono::default() }
    }

    fn kernel(k: Kernel, e: Q) -> Term {
        Term { c: Q::one(), m: Mono { f: vec![(k, e)], exp: None } }
    }

    fn is_zero(&self) -> bool {
        self.c.is_zero()
    }

    fn neg(&self) -> Term {
        Term { c: -self.c.clone(), m: self.m.clone() }
    }
}

fn pivot_negative(p: &Poly) -> bool {
    p.values().next().map(|c| c.is_negative()).unwrap_or(false)
}

fn negate_poly(p: &Poly) -> Poly {
    p.iter().map(|(m, c)| (m.clone(), -c.clone())).collect()
}

/// Merge, fold numeric radicals and normalize signs of integer-power bases.
fn fix(c: &mut Q, mut f: Vec<(Kernel, Q)>) -> Vec<(Kernel, Q)> {
    loop {
        f.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Kernel, Q)> = Vec::with_capacity(f.len());
        for (k, e) in f.drain(..) {
            match merged.last_mut() {
                Some((lk, le)) if *lk == k => *le += e,
                _ => merged.push((k, e)),
            }
        }
        let mut changed = false;
        let mut out = Vec::with_capacity(merged.len());
        for (k, e) in merged {
            if e.is_zero() {
                continue;
            }
            match &k {
                Kernel::Num(n) => {
                    if *n == BigInt::from(-1) {
                        let two = q(2);
                        let r = &e - (&e / &two).floor() * &two;
                        if r.is_integer() {
                            if !r.is_zero() {
                                *c = -c.clone();
                            }
                        } else {
                            out.push((k, r));
                        }
                    } else {
                        let fl = e.floor();
                        let rest = &e - &fl;
                        if !fl.is_zero() {
                            let p = Q::from_integer(n.clone());
                            *c *= pow_q(&p, fl.to_integer().to_i32().unwrap_or(0));
                        }
                        if !rest.is_zero() {
                            out.push((k, rest));
                        }
                    }
                }
                Kernel::Base(p) if e.is_integer() && pivot_negative(p) => {
                    if e.to_integer().is_odd() {
                        *c = -c.clone();
                    }
                    out.push((Kernel::Base(Arc::new(negate_poly(p))), e));
                    changed = true;
                }
                _ => out.push((k, e)),
            }
        }
        f = out;
        if !changed {
            return f;
        }
    }
}

fn mul_mono(a: &Mono, b: &Mono) -> (Q, Mono) {
    let mut c = Q::one();
    let mut f = Vec::with_capacity(a.f.len() + b.f.len());
    f.extend(a.f.iter().cloned());
    f.extend(b.f.iter().cloned());
    let f = fix(&mut c, f);
    let exp = match (&a.exp, &b.exp) {
        (None, None) => None,
        (Some(x), None) | (None, Some(x)) => Some(x.clone()),
        (Some(x), Some(y)) => {
            let s = canon(add_terms(vec![(**x).clone(), (**y).clone()]));
            if s.is_zero() {
                None
            } else {
                Some(Box::new(s))
            }
        }
    };
    (c, Mono { f, exp })
}

fn mul_terms(a: &Term, b: &Term) -> Term {
    if a.is_zero() || b.is_zero() {
        return Term::zero();
    }
    let (c, m) = mul_mono(&a.m, &b.m);
    Term { c: c * &a.c * &b.c, m }
}

fn scale_term(t: &Term, e: &Q) -> Term {
    Term { c: &t.c * e, m: t.m.clone() }
}

fn factor_int(n: &BigInt) -> Vec<(BigInt, i64)> {
    let mut out = Vec::new();
    let mut n = n.clone();
    let mut p = BigInt::from(2);
    let limit = BigInt::from(100_000);
    while &p * &p <= n && p < limit {
        let mut k = 0;
        while (&n % &p).is_zero() {
            n /= &p;
            k += 1;
        }
        if k > 0 {
            out.push((p.clone(), k));
        }
        p += 1;
    }
    if n > BigInt::one() {
        out.push((n, 1));
    }
    out
}

fn pow_term(t: &Term, e: &Q) -> Term {
    if e.is_zero() {
        return Term::constant(Q::one());
    }
    if t.is_zero() {
        if e.is_positive() {
            return Term::zero();
        }
        let undefined = Expr::new(Node::Pow(Expr::zero(), e.clone()));
        return Term::kernel(Kernel::Atom(undefined), Q::one());
    }
    let mut f: Vec<(Kernel, Q)> = Vec::with_capacity(t.m.f.len() + 2);
    let mut c;
    if e.is_integer() {
        c = pow_q(&t.c, e.to_integer().to_i32().unwrap_or(0));
        f.extend(t.m.f.iter().map(|(k, x)| (k.clone(), x * e)));
    } else {
        let mut base_c = t.c.clone();
        let mut factors = t.m.f.clone();
        if base_c.is_negative() {
            // The sign goes back into one odd-power base. A base with mixed
            // coefficient signs is the likely origin of the flip; one with
            // all-positive coefficients (1 + e^t, say) almost never is.
            let odd = |k: &Kernel, x: &Q| matches!(k, Kernel::Base(_)) && x.is_integer() && x.to_integer().is_odd();
            let mixed = |k: &Kernel| match k {
                Kernel::Base(p) => p.values().any(|c| c.is_negative()),
                _ => false,
            };
            let odd_base = factors
                .iter()
                .position(|(k, x)| odd(k, x) && mixed(k))
                .or_else(|| factors.iter().position(|(k, x)| odd(k, x)));
            match odd_base {
                Some(i) => {
                    if let Kernel::Base(p) = &factors[i].0 {
                        factors[i].0 = Kernel::Base(Arc::new(negate_poly(p)));
                    }
                }
                None => factors.push((Kernel::Num(BigInt::from(-1)), Q::one())),
            }
            base_c = -base_c;
        }
        c = Q::one();
        for (p, k) in factor_int(base_c.numer()) {
            factors.push((Kernel::Num(p), q(k)));
        }
        for (p, k) in factor_int(base_c.denom()) {
            factors.push((Kernel::Num(p), q(-k)));
        }
        f.extend(factors.into_iter().map(|(k, x)| (k, x * e)));
    }
    let f = fix(&mut c, f);
    let exp = t.m.exp.as_ref().map(|x| Box::new(scale_term(x, e)));
    Term { c, m: Mono { f, exp } }
}

fn content_mono(monos: &[&Mono]) -> Vec<(Kernel, Q)> {
    let mut mins: BTreeMap<&Kernel, Q> = BTreeMap::new();
    let mut counts: BTreeMap<&Kernel, usize> = BTreeMap::new();
    for m in monos {
        for (k, e) in &m.f {
            *counts.entry(k).or_insert(0) += 1;
            let slot = mins.entry(k).or_insert_with(|| e.clone());
            if e < slot {
                *slot = e.clone();
            }
        }
    }
    let n = monos.len();
    let mut out = Vec::new();
    for (k, e) in mins {
        let e = if counts[k] < n && e.is_positive() { Q::zero() } else { e };
        if !e.is_zero() {
            out.push((k.clone(), e));
        }
    }
    out
}

fn inv_factors(f: &[(Kernel, Q)]) -> Mono {
    Mono { f: f.iter().map(|(k, e)| (k.clone(), -e.clone())).collect(), exp: None }
}

fn add_to_poly(p: &mut Poly, m: Mono, c: Q) {
    if c.is_zero() {
        return;
    }
    use std::collections::btree_map::Entry;
    match p.entry(m) {
        Entry::Vacant(v) => {
            v.insert(c);
        }
        Entry::Occupied(mut o) => {
            *o.get_mut() += c;
            if o.get().is_zero() {
                o.remove();
            }
        }
    }
}

fn needs_expansion(m: &Mono) -> bool {
    m.f.iter().any(|(k, e)| matches!(k, Kernel::Base(_)) && *e >= Q::one())
}

/// Expand bases carrying exponents >= 1 into an explicit polynomial.
fn expand_into(out: &mut Poly, c: Q, m: Mono) {
    if c.is_zero() {
        return;
    }
    if !needs_expansion(&m) {
        add_to_poly(out, m, c);
        return;
    }
    let mut rest = Mono { f: Vec::with_capacity(m.f.len()), exp: m.exp };
    let mut powers: Vec<(Arc<Poly>, u32)> = Vec::new();
    for (k, e) in m.f {
        match &k {
            Kernel::Base(p) if e >= Q::one() => {
                let n = e.floor();
                let frac = &e - &n;
                powers.push((p.clone(), n.to_integer().to_u32().unwrap_or(0)));
                if !frac.is_zero() {
                    rest.f.push((k, frac));
                }
            }
            _ => rest.f.push((k, e)),
        }
    }
    let mut acc: Poly = BTreeMap::new();
    acc.insert(rest, c);
    for (p, n) in powers {
        for _ in 0..n {
            acc = poly_mul(&acc, &p);
        }
    }
    for (m, c) in acc {
        add_to_poly(out, m, c);
    }
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = BTreeMap::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let (c, m) = mul_mono(ma, mb);
            expand_into(&mut out, c * ca * cb, m);
        }
    }
    out
}

/// Factor a polynomial with at least two terms as content * base, where the
/// base has no monomial content and a pivot term free of `exp` with
/// coefficient one. `Err` carries the finished term when dividing out the
/// content forced an expansion.
fn split_base(s: Poly) -> Result<(Term, Poly), Term> {
    let monos: Vec<&Mono> = s.keys().collect();
    let content = content_mono(&monos);
    let inv = inv_factors(&content);
    let mut p: Poly = BTreeMap::new();
    let mut grew = false;
    for (m, c) in s {
        let (k, m2) = mul_mono(&m, &inv);
        grew |= needs_expansion(&m2);
        expand_into(&mut p, c * k, m2);
    }
    if grew {
        // dividing out a negative power left a base to expand; the expanded
        // sum may carry new content, so factor again
        let mut cc = Q::one();
        let f = fix(&mut cc, content);
        return Err(mul_terms(&Term { c: cc, m: Mono { f, exp: None } }, &from_poly(p)));
    }
    let pivot_exp = p.keys().next().and_then(|m| m.exp.clone());
    if let Some(e) = &pivot_exp {
        let shift = Mono { f: vec![], exp: Some(Box::new(e.neg())) };
        let mut p2 = BTreeMap::new();
        for (m, c) in p {
            let (k, m2) = mul_mono(&m, &shift);
            add_to_poly(&mut p2, m2, c * k);
        }
        p = p2;
    }
    let cp = p.values().next().cloned().unwrap_or_else(Q::one);
    if !cp.is_one() {
        for c in p.values_mut() {
            *c /= &cp;
        }
    }
    let mut cc = cp;
    let f = fix(&mut cc, content);
    Ok((Term { c: cc, m: Mono { f, exp: pivot_exp } }, p))
}

fn from_poly(s: Poly) -> Term {
    match s.len() {
        0 => Term::zero(),
        1 => {
            let (m, c) = s.into_iter().next().unwrap();
            Term { c, m }
        }
        _ => {
            match split_base(s) {
                Ok((content, base)) => mul_terms(&content, &Term::kernel(Kernel::Base(Arc::new(base)), Q::one())),
                Err(t) => t,
            }
        }
    }
}

fn add_terms(ts: Vec<Term>) -> Term {
    let mut grouped: Poly = BTreeMap::new();
    for t in ts {
        add_to_poly(&mut grouped, t.m, t.c);
    }
    if grouped.len() <= 1 {
        return from_poly(grouped);
    }
    let monos: Vec<&Mono> = grouped.keys().collect();
    let g = content_mono(&monos);
    let inv = inv_factors(&g);
    let mut s: Poly = BTreeMap::new();
    for (m, c) in grouped {
        let (k, m2) = mul_mono(&m, &inv);
        expand_into(&mut s, c * k, m2);
    }
    let mut gc = Q::one();
    let gf = fix(&mut gc, g);
    let gt = Term { c: gc, m: Mono { f: gf, exp: None } };
    mul_terms(&gt, &from_poly(s))
}

/// Expand integer parts of base powers and re-factor.
fn canon(t: Term) -> Term {
    if !needs_expansion(&t.m) {
        return t;
    }
    let mut p = BTreeMap::new();
    expand_into(&mut p, t.c, t.m);
    from_poly(p)
}

fn as_sum(t: &Term) -> Poly {
    let mut p = BTreeMap::new();
    expand_into(&mut p, t.c.clone(), t.m.clone());
    p
}

fn make_exp(arg: Term) -> Term {
    if arg.is_zero() {
        return Term::constant(Q::one());
    }
    let mut out = Term::constant(Q::one());
    let mut rest = Vec::new();
    for (m, c) in as_sum(&arg) {
        if m.exp.is_none() && m.f.len() == 1 && m.f[0].1.is_one() {
            if let Kernel::Atom(a) = &m.f[0].0 {
                if let Node::Fun(Func::Ln, inner) = a.node() {
                    let k = to_term(inner, &mut HashMap::new());
                    out = mul_terms(&out, &pow_term(&k, &c));
                    continue;
                }
            }
        }
        rest.push(Term { c, m });
    }
    let rest = canon(add_terms(rest));
    if rest.is_zero() {
        return out;
    }
    let e = Term { c: Q::one(), m: Mono { f: vec![], exp: Some(Box::new(rest)) } };
    mul_terms(&out, &e)
}

fn kernel_tree(k: &Kernel) -> Expr {
    match k {
        Kernel::Num(n) => Expr::num(Q::from_integer(n.clone())),
        Kernel::Atom(e) => e.clone(),
        Kernel::Base(p) => poly_tree(p),
    }
}

fn make_ln(arg: Term) -> Term {
    if arg.is_zero() {
        let undefined = Expr::fun(Func::Ln, Expr::zero());
        return Term::kernel(Kernel::Atom(undefined), Q::one());
    }
    if arg.c.is_one() {
        if arg.m.f.is_empty() {
            match &arg.m.exp {
                None => return Term::zero(),
                Some(y) => return (**y).clone(),
            }
        }
        if arg.m.exp.is_none() && arg.m.f.len() == 1 {
            let (k, e) = &arg.m.f[0];
            let negative_base = matches!(k, Kernel::Base(p) if pivot_negative(p));
            let minus_one = matches!(k, Kernel::Num(n) if *n == BigInt::from(-1));
            if !negative_base && !minus_one {
                let l = Expr::fun(Func::Ln, kernel_tree(k));
                return scale_term(&Term::kernel(Kernel::Atom(l), Q::one()), e);
            }
        }
    }
    let l = Expr::fun(Func::Ln, term_tree(&canon(arg)));
    Term::kernel(Kernel::Atom(l), Q::one())
}

fn func_at_zero(f: Func) -> Option<Q> {
    match f {
        Func::Sin | Func::Sinh | Func::Tanh => Some(Q::zero()),
        Func::Cos | Func::Cosh | Func::Exp => Some(Q::one()),
        Func::Ln => None,
    }
}

fn canon_tree(e: &Expr, memo: &mut HashMap<usize, (Expr, Term)>) -> Expr {
    term_tree(&canon(to_term(e, memo)))
}

fn to_term(e: &Expr, memo: &mut HashMap<usize, (Expr, Term)>) -> Term {
    if let Some((_, t)) = memo.get(&e.ptr()) {
        return t.clone();
    }
    let t = match e.node() {
        Node::Num(v) => Term::constant(v.clone()),
        Node::Sym(_) | Node::Jet(_) => Term::kernel(Kernel::Atom(e.clone()), Q::one()),
        Node::Add(v) => {
            let ts = v.iter().map(|c| to_term(c, memo)).collect();
            add_terms(ts)
        }
        Node::Mul(v) => {
            let mut acc = Term::constant(Q::one());
            for c in v {
                let t = to_term(c, memo);
                acc = mul_terms(&acc, &t);
                if acc.is_zero() {
                    break;
                }
            }
            acc
        }
        Node::Pow(b, x) => pow_term(&to_term(b, memo), x),
        Node::Fun(Func::Exp, a) => make_exp(to_term(a, memo)),
        Node::Fun(Func::Ln, a) => make_ln(to_term(a, memo)),
        Node::Fun(f, a) => {
            let at = canon(to_term(a, memo));
            match (at.is_zero(), func_at_zero(*f)) {
                (true, Some(v)) => Term::constant(v),
                _ => Term::kernel(Kernel::Atom(Expr::fun(*f, term_tree(&at))), Q::one()),
            }
        }
        Node::Opaque(o) => {
            let args = o.args.iter().map(|a| canon_tree(a, memo)).collect();
            let app = OpaqueApp { name: o.name.clone(), partials: o.partials.clone(), args };
            Term::kernel(Kernel::Atom(Expr::new(Node::Opaque(app))), Q::one())
        }
        Node::Integral { var, lo, hi, body } => {
            let lo = canon_tree(lo, memo);
            let hi = canon_tree(hi, memo);
            let body = canon_tree(body, memo);
            if lo == hi || body.is_zero_literal() {
                Term::zero()
            } else {
                let k = Expr::new(Node::Integral { var: var.clone(), lo, hi, body });
                Term::kernel(Kernel::Atom(k), Q::one())
            }
        }
        Node::Anti { body, var } => {
            let body = canon_tree(body, memo);
            if body.is_zero_literal() {
                Term::zero()
            } else {
                let k = Expr::new(Node::Anti { body, var: var.clone() });
                Term::kernel(Kernel::Atom(k), Q::one())
            }
        }
    };
    memo.insert(e.ptr(), (e.clone(), t.clone()));
    t
}

fn poly_tree(p: &Poly) -> Expr {
    let kids: Vec<Expr> = p.iter().map(|(m, c)| mono_tree(c, m)).collect();
    Expr::new(Node::Add(kids))
}

fn mono_tree(c: &Q, m: &Mono) -> Expr {
    if c.is_zero() {
        return Expr::zero();
    }
    let mut parts = Vec::with_capacity(m.f.len() + 2);
    if !c.is_one() {
        parts.push(Expr::num(c.clone()));
    }
    for (k, e) in &m.f {
        let b = kernel_tree(k);
        parts.push(if e.is_one() { b } else { Expr::new(Node::Pow(b, e.clone())) });
    }
    if let Some(x) = &m.exp {
        parts.push(Expr::fun(Func::Exp, term_tree(x)));
    }
    match parts.len() {
        0 => Expr::num(c.clone()),
        1 => parts.pop().unwrap(),
        _ => Expr::new(Node::Mul(parts)),
    }
}

fn term_tree(t: &Term) -> Expr {
    mono_tree(&t.c, &t.m)
}

/// Canonical form; `normalize(e)` is the zero literal iff the normal form
/// decided `e == 0`.
pub fn normalize(e: &Expr) -> Expr {
    canon_tree(e, &mut HashMap::new())
}

pub fn is_zero(e: &Expr) -> bool {
    to_term(e, &mut HashMap::new()).is_zero()
}

/// Normalized numerator (expanded) and denominator (product of the kernels
/// with negative exponents, as positive powers).
pub fn numer_denom(e: &Expr) -> (Expr, Expr) {
    let t = to_term(e, &mut HashMap::new());
    let mut num_f = Vec::new();
    let mut den_f = Vec::new();
    for (k, x) in &t.m.f {
        if x.is_negative() {
            den_f.push((k.clone(), -x.clone()));
        } else {
            num_f.push((k.clone(), x.clone()));
        }
    }
    let num = canon(Term { c: t.c.clone(), m: Mono { f: num_f, exp: t.m.exp.clone() } });
    let den = Term { c: Q::one(), m: Mono { f: den_f, exp: None } };
    (term_tree(&num), term_tree(&den))
}

/// Fully expanded sum of monomials (a flat `Add` unless a single term).
pub fn expand(e: &Expr) -> Expr {
    let t = to_term(e, &mut HashMap::new());
    let p = as_sum(&t);
    match p.len() {
        0 => Expr::zero(),
        1 => {
            let (m, c) = p.iter().next().unwrap();
            mono_tree(c, m)
        }
        _ => poly_tree(&p),
    }
}
