use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_traits::Signed;
use thiserror::Error;

use super::{q_to_f64, Expr, JetVar, Node, Symbol};
use crate::numeric::quad::{self, QuadError};

/// Absolute and relative tolerance of integral atoms.
pub const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound atom {0}")]
    Unbound(String),
    #[error("domain error in {0}")]
    Domain(String),
    #[error("quadrature failed in {0}: {1}")]
    Quadrature(String, String),
}

/// Numeric implementation of an opaque function together with its formal
/// partial derivatives (1-based argument indices).
pub trait OpaqueFn: Send + Sync {
    fn eval(&self, partials: &[u32], args: &[f64]) -> Option<f64>;
}

impl<F> OpaqueFn for F
where
    F: Fn(&[u32], &[f64]) -> Option<f64> + Send + Sync,
{
    fn eval(&self, partials: &[u32], args: &[f64]) -> Option<f64> {
        self(partials, args)
    }
}

#[derive(Clone, Default)]
pub struct Bindings {
    pub syms: HashMap<Symbol, f64>,
    pub jets: HashMap<JetVar, f64>,
    pub opaque: HashMap<Arc<str>, Arc<dyn OpaqueFn>>,
    /// Lower limit of antiderivative atoms.
    pub anti_base: f64,
}

impl fmt::Debug for Bindings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut syms: Vec<_> = self.syms.iter().map(|(k, v)| (k.clone(), *v)).collect();
        syms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut jets: Vec<_> = self.jets.iter().map(|(k, v)| (k.clone(), *v)).collect();
        jets.sort_by(|a, b| a.0.cmp(&b.0));
        let mut ops: Vec<_> = self.opaque.keys().cloned().collect();
        ops.sort();
        f.debug_struct("Bindings").field("syms", &syms).field("jets", &jets).field("opaque", &ops).finish()
    }
}

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn set(&mut self, name: &str, v: f64) -> &mut Self {
        self.syms.insert(Symbol::new(name), v);
        self
    }

    pub fn set_symbol(&mut self, s: Symbol, v: f64) -> &mut Self {
        self.syms.insert(s, v);
        self
    }

    pub fn set_jet(&mut self, field: &str, ox: u32, ot: u32, v: f64) -> &mut Self {
        self.jets.insert(JetVar::new(field, ox, ot), v);
        self
    }

    pub fn set_opaque(&mut self, name: &str, f: Arc<dyn OpaqueFn>) -> &mut Self {
        self.opaque.insert(Arc::from(name), f);
        self
    }

    /// Bind an atom given as an expression (`Sym` or `Jet`).
    pub fn set_atom(&mut self, atom: &Expr, v: f64) -> &mut Self {
        match atom.node() {
            Node::Sym(s) => {
                self.syms.insert(s.clone(), v);
            }
            Node::Jet(j) => {
                self.jets.insert(j.clone(), v);
            }
            _ => {}
        }
        self
    }
}

/// Evaluate in double precision.
pub fn eval_num(e: &Expr, b: &Bindings) -> Result<f64, EvalError> {
    let mut scope = Vec::new();
    ev(e, b, &mut scope)
}

fn finite(v: f64, e: &Expr) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain(e.to_string()))
    }
}

fn lookup(s: &Symbol, b: &Bindings, scope: &[(Symbol, f64)]) -> Option<f64> {
    scope.iter().rev().find(|(k, _)| k == s).map(|(_, v)| *v).or_else(|| b.syms.get(s).copied())
}

fn ev(e: &Expr, b: &Bindings, scope: &mut Vec<(Symbol, f64)>) -> Result<f64, EvalError> {
    match e.node() {
        Node::Num(v) => Ok(q_to_f64(v)),
        Node::Sym(s) => lookup(s, b, scope).ok_or_else(|| EvalError::Unbound(e.to_string())),
        Node::Jet(j) => b.jets.get(j).copied().ok_or_else(|| EvalError::Unbound(e.to_string())),
        Node::Add(ts) => {
            let mut s = 0.0;
            for t in ts {
                s += ev(t, b, scope)?;
            }
            finite(s, e)
        }
        Node::Mul(fs) => {
            let mut p = 1.0;
            for f in fs {
                p *= ev(f, b, scope)?;
            }
            finite(p, e)
        }
        Node::Pow(base, x) => {
            let v = ev(base, b, scope)?;
            if x.is_integer() {
                let n = x.to_integer();
                let r = match i32::try_from(n) {
                    Ok(k) => v.powi(k),
                    Err(_) => v.powf(q_to_f64(x)),
                };
                return finite(r, e);
            }
            if v < 0.0 || (v == 0.0 && x.is_negative()) {
                return Err(EvalError::Domain(e.to_string()));
            }
            finite(v.powf(q_to_f64(x)), e)
        }
        Node::Fun(f, a) => {
            let v = ev(a, b, scope)?;
            if matches!(f, super::Func::Ln) && v <= 0.0 {
                return Err(EvalError::Domain(e.to_string()));
            }
            finite(f.apply(v), e)
        }
        Node::Opaque(o) => {
            let f = b.opaque.get(&o.name).ok_or_else(|| EvalError::Unbound(o.name.to_string()))?;
            let mut args = Vec::with_capacity(o.args.len());
            for a in &o.args {
                args.push(ev(a, b, scope)?);
            }
            let v = f.eval(&o.partials, &args).ok_or_else(|| EvalError::Domain(e.to_string()))?;
            finite(v, e)
        }
        Node::Integral { var, lo, hi, body } => {
            let lo_v = ev(lo, b, scope)?;
            let hi_v = ev(hi, b, scope)?;
            integrate(e, body, var, lo_v, hi_v, b, scope)
        }
        Node::Anti { body, var } => {
            let hi_v = lookup(var, b, scope).ok_or_else(|| EvalError::Unbound(var.name.to_string()))?;
            integrate(e, body, var, b.anti_base, hi_v, b, scope)
        }
    }
}

fn integrate(
    whole: &Expr,
    body: &Expr,
    var: &Symbol,
    lo: f64,
    hi: f64,
    b: &Bindings,
    scope: &mut Vec<(Symbol, f64)>,
) -> Result<f64, EvalError> {
    let r = quad::integrate(
        |s| {
            scope.push((var.clone(), s));
            let v = ev(body, b, scope);
            scope.pop();
            v
        },
        lo,
        hi,
        QUAD_TOL,
        QUAD_TOL,
    );
    match r {
        Ok(v) => finite(v, whole),
        Err(QuadError::Integrand(err)) => Err(err),
        Err(QuadError::NonConvergence(est)) => {
            Err(EvalError::Quadrature(whole.to_string(), format!("estimated error {:e}", est)))
        }
    }
}
