use std::fmt::{self, Display, Write};

use num_traits::{One, Signed};

use super::{Expr, Node, Q};

const P_ADD: u8 = 1;
const P_MUL: u8 = 2;
const P_POW: u8 = 3;

impl Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(self, 0, &mut s);
        f.write_str(&s)
    }
}

fn fmt_q(v: &Q) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

fn negated(e: &Expr) -> Option<Expr> {
    match e.node() {
        Node::Num(v) if v.is_negative() => Some(Expr::num(-v.clone())),
        Node::Mul(fs) => match fs.first().map(|x| x.node()) {
            Some(Node::Num(v)) if v.is_negative() => {
                let mut rest = fs.clone();
                let c = -v.clone();
                if c.is_one() {
                    rest.remove(0);
                } else {
                    rest[0] = Expr::num(c);
                }
                Some(if rest.len() == 1 { rest.pop().unwrap() } else { Expr::new(Node::Mul(rest)) })
            }
            _ => None,
        },
        _ => None,
    }
}

fn paren(out: &mut String, open: bool, body: impl FnOnce(&mut String)) {
    if open {
        out.push('(');
    }
    body(out);
    if open {
        out.push(')');
    }
}

fn write_args(out: &mut String, args: &[Expr]) {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(a, 0, out);
    }
}

fn write_expr(e: &Expr, prec: u8, out: &mut String) {
    match e.node() {
        Node::Num(v) => {
            let simple = v.is_integer() && !v.is_negative();
            paren(out, !simple && prec >= P_MUL, |o| o.push_str(&fmt_q(v)));
        }
        Node::Sym(s) => {
            out.push_str(&s.name);
            if s.order > 0 {
                out.push('_');
                for _ in 0..s.order {
                    out.push('t');
                }
            }
        }
        Node::Jet(j) => {
            out.push_str(&j.field);
            if j.ox + j.ot > 0 {
                out.push('_');
                for _ in 0..j.ox {
                    out.push('x');
                }
                for _ in 0..j.ot {
                    out.push('t');
                }
            }
        }
        Node::Add(ts) => paren(out, prec > P_ADD, |o| {
            for (i, t) in ts.iter().enumerate() {
                match negated(t) {
                    Some(n) => {
                        o.push_str(if i == 0 { "-" } else { " - " });
                        write_expr(&n, P_MUL, o);
                    }
                    None => {
                        if i > 0 {
                            o.push_str(" + ");
                        }
                        write_expr(t, P_ADD + 1, o);
                    }
                }
            }
        }),
        Node::Mul(fs) => write_mul(fs, prec, out),
        Node::Pow(b, x) => {
            if x.is_negative() {
                write_mul(std::slice::from_ref(e), prec, out);
                return;
            }
            paren(out, prec > P_POW, |o| {
                write_expr(b, P_POW + 1, o);
                o.push('^');
                if x.is_integer() {
                    o.push_str(&fmt_q(x));
                } else {
                    let _ = write!(o, "({})", fmt_q(x));
                }
            });
        }
        Node::Fun(func, a) => {
            out.push_str(func.name());
            out.push('(');
            write_expr(a, 0, out);
            out.push(')');
        }
        Node::Opaque(o) => {
            if o.partials.is_empty() {
                out.push_str(&o.name);
            } else {
                let _ = write!(out, "d({}", o.name);
                for p in &o.partials {
                    let _ = write!(out, ",{}", p);
                }
                out.push(')');
            }
            out.push('(');
            write_args(out, &o.args);
            out.push(')');
        }
        Node::Integral { var, lo, hi, body } => {
            let _ = write!(out, "Int({}, ", var.name);
            write_args(out, &[lo.clone(), hi.clone(), body.clone()]);
            out.push(')');
        }
        Node::Anti { body, var } => {
            out.push_str("Anti(");
            write_expr(body, 0, out);
            let _ = write!(out, ", {})", var.name);
        }
    }
}

/// Products print as `c*a*b/(d*e)`, gathering negative powers below the bar.
fn write_mul(fs: &[Expr], prec: u8, out: &mut String) {
    let mut coef = Q::one();
    let mut num: Vec<Expr> = Vec::new();
    let mut den: Vec<Expr> = Vec::new();
    for f in fs {
        match f.node() {
            Node::Num(v) => coef *= v,
            Node::Pow(b, x) if x.is_negative() => den.push(b.pow(-x.clone())),
            _ => num.push(f.clone()),
        }
    }
    let neg = coef.is_negative();
    let coef = coef.abs();
    let p = coef.numer().clone();
    let q = coef.denom().clone();
    paren(out, prec > P_MUL || (neg && prec > P_ADD), |o| {
        if neg {
            o.push('-');
        }
        let mut first = true;
        if !p.is_one() || num.is_empty() {
            o.push_str(&p.to_string());
            first = false;
        }
        for f in &num {
            if !first {
                o.push('*');
            }
            write_expr(f, P_MUL + 1, o);
            first = false;
        }
        let mut dparts: Vec<String> = Vec::new();
        if !q.is_one() {
            dparts.push(q.to_string());
        }
        for d in &den {
            let mut s = String::new();
            write_expr(d, P_MUL + 1, &mut s);
            dparts.push(s);
        }
        if !dparts.is_empty() {
            o.push('/');
            if dparts.len() > 1 {
                let _ = write!(o, "({})", dparts.join("*"));
            } else {
                o.push_str(&dparts[0]);
            }
        }
    });
}
