use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use thiserror::Error;

use super::{normalize, Expr, Func, JetVar, Node, Symbol, Q};

#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

/// Declared identifiers of a case.
#[derive(Clone, Debug)]
pub struct Context {
    /// Space-like then time-like independent variable, e.g. `x`, `t`.
    pub independents: [String; 2],
    pub fields: BTreeSet<String>,
    pub params: BTreeSet<String>,
    /// Reduction functions of the time-like variable.
    pub functions: BTreeSet<String>,
    pub opaques: BTreeMap<String, usize>,
    /// Accept undeclared identifiers as parameters.
    pub lenient: bool,
}

impl Default for Context {
    fn default() -> Self {
        Context {
            independents: ["x".into(), "t".into()],
            fields: ["u".to_string()].into_iter().collect(),
            params: BTreeSet::new(),
            functions: BTreeSet::new(),
            opaques: BTreeMap::new(),
            lenient: false,
        }
    }
}

impl Context {
    /// Default independents `x, t`, field `u`, unknown names become parameters.
    pub fn lenient() -> Self {
        Context { lenient: true, ..Default::default() }
    }

    pub fn with_params(mut self, names: &[&str]) -> Self {
        self.params.extend(names.iter().map(|s| s.to_string()));
        self
    }

    pub fn with_fields(mut self, names: &[&str]) -> Self {
        self.fields.extend(names.iter().map(|s| s.to_string()));
        self
    }

    pub fn with_functions(mut self, names: &[&str]) -> Self {
        self.functions.extend(names.iter().map(|s| s.to_string()));
        self
    }

    pub fn with_opaque(mut self, name: &str, arity: usize) -> Self {
        self.opaques.insert(name.to_string(), arity);
        self
    }

    pub fn with_independents(mut self, x: &str, t: &str) -> Self {
        self.independents = [x.to_string(), t.to_string()];
        self
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.independents.iter().any(|s| s == name)
            || self.fields.contains(name)
            || self.params.contains(name)
            || self.functions.contains(name)
            || self.opaques.contains_key(name)
    }
}

/// Parse with a lenient default context.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    parse_in(text, &Context::lenient())
}

pub fn parse_in(text: &str, ctx: &Context) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, i: 0, ctx, scope: Vec::new(), len: text.len() };
    let e = p.expr()?;
    if p.i < p.toks.len() {
        return Err(p.err_here("unexpected trailing input"));
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Q),
    Ident(String),
    Op(char),
}

fn lex(s: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && i + 1 < b.len() && b[i + 1].is_ascii_digit()) {
            let st = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let int_part = &s[st..i];
            let mut frac = "";
            if i < b.len() && b[i] == b'.' {
                i += 1;
                let fs = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                frac = &s[fs..i];
            }
            let digits = format!("{}{}", int_part, frac);
            let n: BigInt = digits.parse().map_err(|_| ParseError { pos: st, msg: "bad number".into() })?;
            let d = num_traits::pow(BigInt::from(10), frac.len());
            out.push((Tok::Num(Q::new(n, d)), st));
        } else if c.is_ascii_alphabetic() {
            let st = i;
            while i < b.len() && b[i].is_ascii_alphanumeric() {
                i += 1;
            }
            // jet or derivative suffix: name_xxt
            if i + 1 < b.len() && b[i] == b'_' && b[i + 1].is_ascii_alphabetic() {
                i += 1;
                while i < b.len() && b[i].is_ascii_alphanumeric() {
                    i += 1;
                }
            }
            out.push((Tok::Ident(s[st..i].to_string()), st));
        } else if "+-*/^(),;".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(ParseError { pos: i, msg: format!("unexpected character '{}'", c) });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    i: usize,
    ctx: &'a Context,
    scope: Vec<String>,
    len: usize,
}

impl<'a> Parser<'a> {
    fn err_here(&self, msg: &str) -> ParseError {
        let pos = self.toks.get(self.i).map(|t| t.1).unwrap_or(self.len);
        ParseError { pos, msg: msg.to_string() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.0)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.i + k).map(|t| &t.0)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err_here(&format!("expected '{}'", c)))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.i += 1;
                Ok(s)
            }
            _ => Err(self.err_here("expected identifier")),
        }
    }

    fn integer(&mut self) -> Result<u32, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) if v.is_integer() => {
                self.i += 1;
                v.to_integer().try_into().map_err(|_| self.err_here("integer too large"))
            }
            _ => Err(self.err_here("expected integer")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                terms.push(-self.term()?);
            } else {
                break;
            }
        }
        Ok(Expr::add(terms))
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                let r = self.unary()?;
                acc = Expr::mul(vec![acc, r]);
            } else if self.eat('/') {
                let r = self.unary()?;
                acc = Expr::mul(vec![acc, r.recip()]);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let pos = self.i;
            let ex = self.unary()?;
            let nx = normalize(&ex);
            return match nx.node() {
                Node::Num(v) => Ok(base.pow(v.clone())),
                _ => {
                    if ex.has_integral() {
                        self.i = pos;
                        return Err(self.err_here("integral in exponent"));
                    }
                    Ok(Expr::mul(vec![ex, base.ln()]).exp())
                }
            };
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect('(')?;
        let mut out = Vec::new();
        if self.eat(')') {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat(')') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.i;
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.i += 1;
                Ok(Expr::num(v))
            }
            Some(Tok::Op('(')) => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.i += 1;
                let call = self.peek() == Some(&Tok::Op('('));
                match name.as_str() {
                    "D" if call && self.is_decl_jet_form() => return self.jet_form(),
                    "d" if call && !self.ctx.is_declared("d") => return self.formal_partial(),
                    "Int" if call && !self.ctx.is_declared("Int") => return self.integral(),
                    "Anti" if call && !self.ctx.is_declared("Anti") => return self.anti(),
                    "sqrt" if call => {
                        let a = self.args()?;
                        return self.one_arg(a, start).map(|x| x.sqrt());
                    }
                    _ => {}
                }
                if call {
                    if let Some(f) = Func::from_name(&name) {
                        let a = self.args()?;
                        return self.one_arg(a, start).map(|x| Expr::fun(f, x));
                    }
                    if let Some(&arity) = self.ctx.opaques.get(&name) {
                        let a = self.args()?;
                        if a.len() != arity {
                            self.i = start;
                            return Err(self.err_here(&format!("{} expects {} argument(s)", name, arity)));
                        }
                        return Ok(Expr::opaque(&name, a));
                    }
                }
                self.i = start;
                let e = self.name(&name)?;
                self.i = start + 1;
                Ok(e)
            }
            _ => Err(self.err_here("expected expression")),
        }
    }

    fn one_arg(&mut self, mut a: Vec<Expr>, start: usize) -> Result<Expr, ParseError> {
        if a.len() != 1 {
            self.i = start;
            return Err(self.err_here("function expects one argument"));
        }
        Ok(a.pop().unwrap())
    }

    fn is_decl_jet_form(&self) -> bool {
        matches!(self.peek_at(2), Some(Tok::Op(';')))
    }

    fn name(&self, raw: &str) -> Result<Expr, ParseError> {
        let (base, suffix) = match raw.find('_') {
            Some(k) => (&raw[..k], &raw[k + 1..]),
            None => (raw, ""),
        };
        let (ox, ot) = if suffix.bytes().any(|c| c.is_ascii_digit()) {
            self.named_suffix(suffix)?
        } else {
            if !suffix.trim_start_matches('x').chars().all(|c| c == 't') {
                return Err(self.err_here("jet suffix must list x before t"));
            }
            (suffix.chars().filter(|&c| c == 'x').count() as u32, suffix.chars().filter(|&c| c == 't').count() as u32)
        };
        if self.ctx.fields.contains(base) {
            return Ok(Expr::jetvar(JetVar::new(base, ox, ot)));
        }
        if self.ctx.functions.contains(base) {
            if ox > 0 {
                return Err(self.err_here("reduction functions only take t-suffixes"));
            }
            return Ok(Expr::symbol(Symbol::with_order(base, ot)));
        }
        if !suffix.is_empty() {
            return Err(self.err_here(&format!("'{}' is not a field or reduction function", base)));
        }
        if self.scope.iter().any(|s| s == base)
            || self.ctx.independents.iter().any(|s| s == base)
            || self.ctx.params.contains(base)
            || self.ctx.lenient
        {
            if self.ctx.opaques.contains_key(base) {
                return Err(self.err_here(&format!("opaque function '{}' used without arguments", base)));
            }
            return Ok(Expr::sym(base));
        }
        Err(self.err_here(&format!("unknown identifier '{}'", base)))
    }

    /// Suffix spelled with independent names, e.g. `x1x1x2`.
    fn named_suffix(&self, mut s: &str) -> Result<(u32, u32), ParseError> {
        let [a, b] = &self.ctx.independents;
        let (mut ox, mut ot) = (0, 0);
        while !s.is_empty() {
            // longest name first so that `x1` never shadows `x12`
            let (first, second) = if a.len() >= b.len() { (a, b) } else { (b, a) };
            let hit = [first, second].into_iter().find(|n| !n.is_empty() && s.starts_with(n.as_str()));
            match hit {
                Some(n) => {
                    if n == a {
                        if ot > 0 {
                            return Err(self.err_here("jet suffix must list the space variable first"));
                        }
                        ox += 1;
                    } else {
                        ot += 1;
                    }
                    s = &s[n.len()..];
                }
                None => return Err(self.err_here(&format!("bad jet suffix '{}'", s))),
            }
        }
        Ok((ox, ot))
    }

    fn slot_of(&self, var: &str) -> Option<char> {
        if var == self.ctx.independents[0] || var == "x" {
            Some('x')
        } else if var == self.ctx.independents[1] || var == "t" {
            Some('t')
        } else {
            None
        }
    }

    /// `D(u;x,2;t,1)` or `D(phi1;t,1)`.
    fn jet_form(&mut self) -> Result<Expr, ParseError> {
        self.expect('(')?;
        let f = self.ident()?;
        let (mut ox, mut ot) = (0u32, 0u32);
        while self.eat(';') {
            let v = self.ident()?;
            self.expect(',')?;
            let k = self.integer()?;
            match self.slot_of(&v) {
                Some('x') => ox += k,
                Some(_) => ot += k,
                None => return Err(self.err_here(&format!("'{}' is not an independent variable", v))),
            }
        }
        self.expect(')')?;
        if self.ctx.fields.contains(&f) {
            Ok(Expr::jetvar(JetVar::new(&f, ox, ot)))
        } else if self.ctx.functions.contains(&f) && ox == 0 {
            Ok(Expr::symbol(Symbol::with_order(&f, ot)))
        } else {
            Err(self.err_here(&format!("'{}' cannot be differentiated here", f)))
        }
    }

    /// `d(A1,1)(e1,e2)`.
    fn formal_partial(&mut self) -> Result<Expr, ParseError> {
        self.expect('(')?;
        let name = self.ident()?;
        let arity = match self.ctx.opaques.get(&name) {
            Some(&a) => a,
            None => return Err(self.err_here(&format!("unknown opaque function '{}'", name))),
        };
        let mut idx = Vec::new();
        while self.eat(',') {
            let k = self.integer()?;
            if k == 0 || k as usize > arity {
                return Err(self.err_here("partial index out of range"));
            }
            idx.push(k);
        }
        self.expect(')')?;
        let a = self.args()?;
        if a.len() != arity {
            return Err(self.err_here(&format!("{} expects {} argument(s)", name, arity)));
        }
        Ok(Expr::opaque_partial(&name, idx, a))
    }

    fn integral(&mut self) -> Result<Expr, ParseError> {
        self.expect('(')?;
        let var = self.ident()?;
        if self.ctx.is_declared(&var) && !self.ctx.lenient {
            return Err(self.err_here("integration dummy shadows a declared name"));
        }
        self.expect(',')?;
        let lo = self.expr()?;
        self.expect(',')?;
        let hi = self.expr()?;
        self.expect(',')?;
        self.scope.push(var.clone());
        let body = self.expr();
        self.scope.pop();
        let body = body?;
        self.expect(')')?;
        Ok(Expr::integral(Symbol::new(&var), lo, hi, body))
    }

    fn anti(&mut self) -> Result<Expr, ParseError> {
        self.expect('(')?;
        let body = self.expr()?;
        self.expect(',')?;
        let var = self.ident()?;
        if self.slot_of(&var).is_none() {
            return Err(self.err_here("antiderivative variable must be independent"));
        }
        self.expect(')')?;
        Ok(Expr::anti(body, Symbol::new(&var)))
    }
}
