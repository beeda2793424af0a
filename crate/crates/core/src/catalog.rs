//! Case files: a line-oriented record format, its validation and the typed
//! view the runner works from.
//!
//! ```text
//! [case]
//! id = prop1-a
//! kind = symmetry-check
//! [params]
//! beta in [0.5, 2] exclude {0}
//! [manifold]
//! rule: u_xx = 3*u_x^2/u - 3*beta*u_x + beta^2*u
//! [operator]
//! eta = exp(beta*x)/u
//! total_x = 2
//! [expect]
//! verdict = PASS
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_in, substitute_raw, Context, Expr, JetVar, Node, Rules};
use crate::jet::Independents;
use crate::sampling::{default_library, Cmp, Constraint, Domain, Range, Space, Template};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SymmetryCheck,
    CommutatorCheck,
    ReductionCheck,
    SolutionCheck,
    InvarianceCheck,
    InheritedCheck,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::SymmetryCheck,
        Kind::CommutatorCheck,
        Kind::ReductionCheck,
        Kind::SolutionCheck,
        Kind::InvarianceCheck,
        Kind::InheritedCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::SymmetryCheck => "symmetry-check",
            Kind::CommutatorCheck => "commutator-check",
            Kind::ReductionCheck => "reduction-check",
            Kind::SolutionCheck => "solution-check",
            Kind::InvarianceCheck => "invariance-check",
            Kind::InheritedCheck => "inherited-check",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown kind '{}'", s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expect {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "REPORT-ONLY")]
    ReportOnly,
}

impl Expect {
    pub fn as_str(self) -> &'static str {
        match self {
            Expect::Pass => "PASS",
            Expect::Fail => "FAIL",
            Expect::ReportOnly => "REPORT-ONLY",
        }
    }
}

impl std::str::FromStr for Expect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "PASS" => Ok(Expect::Pass),
            "FAIL" => Ok(Expect::Fail),
            "REPORT-ONLY" => Ok(Expect::ReportOnly),
            _ => Err(format!("expected verdict must be PASS, FAIL or REPORT-ONLY, got '{}'", s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub lines: Vec<String>,
}

/// One case exactly as written, minus comments and blank lines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CatalogError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("case {id}: {field}: {msg}")]
    Invalid { id: String, field: String, msg: String },
    #[error("duplicate case id {0}")]
    Duplicate(String),
    #[error("variant group {0} is marked typo-suspect but has {1} member(s)")]
    LonelyVariant(String, usize),
    #[error("{0}: {1}")]
    Io(String, String),
}

fn invalid(id: &str, field: &str, msg: impl Into<String>) -> CatalogError {
    CatalogError::Invalid { id: id.into(), field: field.into(), msg: msg.into() }
}

const SECTIONS: [&str; 10] = ["case", "params", "domain", "manifold", "pde", "operator", "ansatz", "reduced", "solution", "expect"];

/// Split a case file into records without interpreting them.
pub fn parse_records(text: &str) -> Result<Vec<CaseRecord>, CatalogError> {
    let mut out: Vec<CaseRecord> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(CatalogError::Syntax { line: n + 1, msg: format!("unknown section [{}]", name) });
            }
            if name == "case" {
                out.push(CaseRecord { sections: vec![] });
            }
            let Some(rec) = out.last_mut() else {
                return Err(CatalogError::Syntax { line: n + 1, msg: "section before the first [case]".into() });
            };
            rec.sections.push(Section { name: name.into(), lines: vec![] });
            continue;
        }
        match out.last_mut().and_then(|r| r.sections.last_mut()) {
            Some(s) => s.lines.push(line.to_string()),
            None => return Err(CatalogError::Syntax { line: n + 1, msg: "content outside a section".into() }),
        }
    }
    Ok(out)
}

impl CaseRecord {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// `key = value` pairs of a section in order; other lines are skipped.
    pub fn pairs(&self, section: &str) -> Vec<(String, String)> {
        self.section(section)
            .map(|s| s.lines.iter().filter_map(|l| split_pair(l)).collect())
            .unwrap_or_default()
    }

    pub fn get(&self, section: &str, key: &str) -> Option<String> {
        self.pairs(section).into_iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn id(&self) -> String {
        self.get("case", "id").unwrap_or_default()
    }

    pub fn kind(&self) -> Result<Kind, CatalogError> {
        let v = self.get("case", "kind").ok_or_else(|| invalid(&self.id(), "kind", "missing"))?;
        v.parse().map_err(|e: String| invalid(&self.id(), "kind", e))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for sec in &self.sections {
            s.push_str(&format!("[{}]\n", sec.name));
            for l in &sec.lines {
                s.push_str(l);
                s.push('\n');
            }
        }
        s
    }
}

fn split_pair(l: &str) -> Option<(String, String)> {
    if l.starts_with("rule:") {
        return None;
    }
    let (k, v) = l.split_once('=')?;
    let k = k.trim();
    if k.is_empty() || k.contains(' ') || k.ends_with(['!', '<', '>']) {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

pub fn to_text(records: &[CaseRecord]) -> String {
    records.iter().map(|r| r.to_text()).collect::<Vec<_>>().join("\n")
}

/// Typed, validated view of a record.
#[derive(Clone, Debug)]
pub struct Case {
    pub record: CaseRecord,
    pub id: String,
    pub kind: Kind,
    pub title: String,
    pub topic: String,
    pub check: Option<String>,
    pub flags: BTreeSet<String>,
    pub variant: Option<String>,
    pub expect: Expect,
    pub ctx: Context,
    pub indep: Independents,
    pub fields: Vec<String>,
    pub functions: Vec<String>,
    pub space: Space,
    pub lets: Vec<(Expr, Expr)>,
    pub rules: Vec<(JetVar, Expr)>,
}

/// Keys whose values are not expressions.
const PLAIN_KEYS: [&str; 10] = ["on", "mutate", "total_x", "total_t", "constants", "draws", "t_end", "trajectories", "samples", "anti_base"];

impl Case {
    pub fn from_record(record: CaseRecord) -> Result<Case, CatalogError> {
        let id = record.id();
        if id.is_empty() {
            return Err(invalid("?", "id", "missing"));
        }
        let kind = record.kind()?;
        let list = |key: &str| -> Vec<String> {
            record
                .get("case", key)
                .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default()
        };
        let indep_names = list("independent");
        let indep = match indep_names.as_slice() {
            [] => Independents::default(),
            [x, t] => Independents::new(x, t),
            _ => return Err(invalid(&id, "independent", "expected two names")),
        };
        let mut fields = list("fields");
        if fields.is_empty() {
            fields.push("u".into());
        }
        let functions = list("functions");
        let flags: BTreeSet<String> = list("flags").into_iter().collect();
        let expect: Expect = record
            .get("expect", "verdict")
            .ok_or_else(|| invalid(&id, "expect", "missing verdict"))?
            .parse()
            .map_err(|e: String| invalid(&id, "expect", e))?;

        let mut ctx = Context::default();
        ctx.independents = [indep.x.name.to_string(), indep.t.name.to_string()];
        ctx.fields = fields.iter().cloned().collect();
        ctx.functions = functions.iter().cloned().collect();
        if kind == Kind::InheritedCheck {
            // f1, f2 are written in the first integrals themselves
            ctx.params.extend(["I1".to_string(), "I2".to_string()]);
        }

        // first pass over [params]: declarations
        let params = record.section("params").map(|s| s.lines.clone()).unwrap_or_default();
        let mut let_lines = Vec::new();
        let mut require_lines = Vec::new();
        let mut instance_lines = Vec::new();
        let mut ranges: BTreeMap<String, Range> = BTreeMap::new();
        for l in &params {
            if let Some(rest) = l.strip_prefix("opaque ") {
                let (name, arity) = parse_opaque_decl(rest).ok_or_else(|| invalid(&id, "params", format!("bad opaque declaration '{}'", l)))?;
                ctx.opaques.insert(name, arity);
            } else if let Some(rest) = l.strip_prefix("let ") {
                let (name, body) = rest.split_once('=').ok_or_else(|| invalid(&id, "params", format!("bad let '{}'", l)))?;
                ctx.params.insert(name.trim().to_string());
                let_lines.push((name.trim().to_string(), body.trim().to_string()));
            } else if let Some(rest) = l.strip_prefix("require ") {
                require_lines.push(rest.to_string());
            } else if let Some(rest) = l.strip_prefix("instances ") {
                instance_lines.push(rest.to_string());
            } else if let Some((name, r)) = l.split_once(" in ") {
                let r = parse_range(r).map_err(|m| invalid(&id, "params", format!("{} in '{}'", m, l)))?;
                ctx.params.insert(name.trim().to_string());
                ranges.insert(name.trim().to_string(), r);
            } else {
                return Err(invalid(&id, "params", format!("unrecognized line '{}'", l)));
            }
        }
        let parse = |s: &str, ctx: &Context| parse_in(s, ctx);
        let mut lets: Vec<(Expr, Expr)> = Vec::new();
        for (name, body) in &let_lines {
            let e = parse(body, &ctx).map_err(|e| invalid(&id, &format!("let {}", name), e.to_string()))?;
            let e = apply_lets(&e, &lets);
            lets.push((Expr::sym(name), e));
        }
        let mut space = Space::default();
        space.domain = Domain {
            ranges: BTreeMap::new(),
            independents: [indep.x.name.to_string(), indep.t.name.to_string()],
            functions: functions.iter().cloned().collect(),
        };
        for (k, r) in ranges {
            space.domain.ranges.insert(k, r);
        }
        if let Some(sec) = record.section("domain") {
            for l in &sec.lines {
                if let Some((k, v)) = split_pair(l) {
                    if k == "anti_base" {
                        space.anti_base = v.parse().map_err(|_| invalid(&id, "domain", "bad anti_base"))?;
                        continue;
                    }
                }
                let (name, r) = l.split_once(" in ").ok_or_else(|| invalid(&id, "domain", format!("unrecognized line '{}'", l)))?;
                let atom = parse(name.trim(), &ctx).map_err(|e| invalid(&id, "domain", e.to_string()))?;
                let r = parse_range(r).map_err(|m| invalid(&id, "domain", m))?;
                space.domain.ranges.insert(atom.to_string(), r);
            }
        }
        for r in &require_lines {
            let c = parse_constraint(r, &ctx).map_err(|m| invalid(&id, "require", m))?;
            space.requires.push(Constraint { lhs: apply_lets(&c.lhs, &lets), op: c.op, rhs: apply_lets(&c.rhs, &lets) });
        }
        space.instantiations = instantiations(&ctx, &instance_lines).map_err(|m| invalid(&id, "instances", m))?;

        let mut rules = Vec::new();
        if let Some(sec) = record.section("manifold") {
            for l in &sec.lines {
                let body = l.strip_prefix("rule:").ok_or_else(|| invalid(&id, "manifold", format!("expected 'rule:' in '{}'", l)))?;
                let (lhs, rhs) = body.split_once('=').ok_or_else(|| invalid(&id, "manifold", "rule needs '='"))?;
                let lhs = parse(lhs.trim(), &ctx).map_err(|e| invalid(&id, "manifold", e.to_string()))?;
                let Some(j) = lhs.as_jet().cloned() else {
                    return Err(invalid(&id, "manifold", "left-hand side must be a jet"));
                };
                let rhs = parse(rhs.trim(), &ctx).map_err(|e| invalid(&id, "manifold", e.to_string()))?;
                rules.push((j, apply_lets(&rhs, &lets)));
            }
        }
        let case = Case {
            title: record.get("case", "title").unwrap_or_default(),
            topic: record.get("case", "topic").unwrap_or_default(),
            check: record.get("case", "check"),
            variant: record.get("case", "variant"),
            record,
            id,
            kind,
            flags,
            expect,
            ctx,
            indep,
            fields,
            functions,
            space,
            lets,
            rules,
        };
        case.validate_expressions()?;
        Ok(case)
    }

    fn validate_expressions(&self) -> Result<(), CatalogError> {
        for sec in ["pde", "operator", "ansatz", "reduced", "solution"] {
            for (k, v) in self.record.pairs(sec) {
                if PLAIN_KEYS.contains(&k.as_str()) {
                    continue;
                }
                for part in v.split(';') {
                    parse_in(part.trim(), &self.ctx).map_err(|e| invalid(&self.id, &format!("{}.{}", sec, k), e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    pub fn has_flag(&self, f: &str) -> bool {
        self.flags.contains(f)
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<String> {
        self.record.get(section, key)
    }

    /// Parsed expression with `let` bindings applied.
    pub fn expr(&self, section: &str, key: &str) -> Result<Option<Expr>, CatalogError> {
        match self.record.get(section, key) {
            None => Ok(None),
            Some(v) => self.parse(&v, &format!("{}.{}", section, key)).map(Some),
        }
    }

    pub fn exprs(&self, section: &str, key: &str) -> Result<Option<Vec<Expr>>, CatalogError> {
        match self.record.get(section, key) {
            None => Ok(None),
            Some(v) => v.split(';').map(|p| self.parse(p.trim(), &format!("{}.{}", section, key))).collect::<Result<_, _>>().map(Some),
        }
    }

    /// All values of a repeated key.
    pub fn all(&self, section: &str, key: &str) -> Result<Vec<Expr>, CatalogError> {
        self.record
            .pairs(section)
            .into_iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| self.parse(&v, &format!("{}.{}", section, key)))
            .collect()
    }

    pub fn parse(&self, s: &str, field: &str) -> Result<Expr, CatalogError> {
        let e = parse_in(s, &self.ctx).map_err(|e| invalid(&self.id, field, e.to_string()))?;
        Ok(apply_lets(&e, &self.lets))
    }

    pub fn number(&self, section: &str, key: &str) -> Result<Option<f64>, CatalogError> {
        match self.record.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| invalid(&self.id, key, format!("not a number: '{}'", v))),
        }
    }
}

fn apply_lets(e: &Expr, lets: &[(Expr, Expr)]) -> Expr {
    if lets.is_empty() {
        return e.clone();
    }
    let rules: Rules = lets.iter().cloned().collect();
    // later lets may mention earlier ones, so substitute until stable
    let mut cur = e.clone();
    for _ in 0..=lets.len() {
        if !lets.iter().any(|(k, _)| cur.contains(k)) {
            break;
        }
        cur = substitute_raw(&cur, &rules);
    }
    cur
}

fn parse_opaque_decl(s: &str) -> Option<(String, usize)> {
    let (name, rest) = s.trim().split_once('(')?;
    let arity = rest.strip_suffix(')')?.trim().parse().ok()?;
    Some((name.trim().to_string(), arity))
}

fn parse_numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number '{}'", p.trim()))).collect()
}

/// `[lo, hi]`, `[lo, hi] exclude {a, b}` or `{a, b, c}`.
pub fn parse_range(s: &str) -> Result<Range, String> {
    let s = s.trim();
    if let Some(body) = s.strip_prefix('{') {
        let body = body.strip_suffix('}').ok_or("unterminated set")?;
        let v = parse_numbers(body)?;
        if v.is_empty() {
            return Err("empty set".into());
        }
        return Ok(Range::Set(v));
    }
    let body = s.strip_prefix('[').ok_or("expected '[' or '{'")?;
    let (interval, rest) = body.split_once(']').ok_or("unterminated interval")?;
    let v = parse_numbers(interval)?;
    let [lo, hi] = v.as_slice() else {
        return Err("interval needs two bounds".into());
    };
    if lo > hi {
        return Err("empty interval".into());
    }
    let rest = rest.trim();
    let exclude = if rest.is_empty() {
        vec![]
    } else {
        let e = rest.strip_prefix("exclude").ok_or("expected 'exclude'")?.trim();
        let e = e.strip_prefix('{').and_then(|e| e.strip_suffix('}')).ok_or("exclude needs a set")?;
        parse_numbers(e)?
    };
    Ok(Range::Interval { lo: *lo, hi: *hi, exclude })
}

fn parse_constraint(s: &str, ctx: &Context) -> Result<Constraint, String> {
    for (tok, op) in [("!=", Cmp::Ne), (">=", Cmp::Ge), ("<=", Cmp::Le), (">", Cmp::Gt), ("<", Cmp::Lt)] {
        if let Some((l, r)) = s.split_once(tok) {
            let lhs = parse_in(l.trim(), ctx).map_err(|e| e.to_string())?;
            let rhs = parse_in(r.trim(), ctx).map_err(|e| e.to_string())?;
            return Ok(Constraint { lhs, op, rhs });
        }
    }
    Err(format!("no comparison operator in '{}'", s))
}

/// Rounds of opaque bindings: explicit `instances` lists, else the default
/// library. Round `r` uses entry `r mod len` of every list.
fn instantiations(ctx: &Context, lines: &[String]) -> Result<Vec<Vec<(String, Arc<Template>)>>, String> {
    let mut lists: BTreeMap<String, Vec<Template>> = BTreeMap::new();
    for l in lines {
        let (name, bodies) = l.split_once('=').ok_or("instances needs '='")?;
        let name = name.trim();
        let arity = *ctx.opaques.get(name).ok_or_else(|| format!("'{}' is not a declared opaque function", name))?;
        let ts = bodies.split(';').map(|b| Template::new(name, arity, b.trim()).map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
        lists.insert(name.to_string(), ts);
    }
    for (name, &arity) in &ctx.opaques {
        if !lists.contains_key(name) {
            lists.insert(name.clone(), default_library(name, arity));
        }
    }
    let rounds = lists.values().map(|v| v.len()).max().unwrap_or(0);
    let lists: BTreeMap<String, Vec<Arc<Template>>> = lists.into_iter().map(|(k, v)| (k, v.into_iter().map(Arc::new).collect())).collect();
    Ok((0..rounds).map(|r| lists.iter().map(|(k, v)| (k.clone(), v[r % v.len()].clone())).collect()).collect())
}

/// Parse, validate and cross-check a set of records.
pub fn load_str(text: &str) -> Result<Vec<Case>, CatalogError> {
    let recs = parse_records(text)?;
    let cases = recs.into_iter().map(Case::from_record).collect::<Result<Vec<_>, _>>()?;
    validate_set(&cases)?;
    Ok(cases)
}

pub fn load(path: &std::path::Path) -> Result<Vec<Case>, CatalogError> {
    let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Io(path.display().to_string(), e.to_string()))?;
    load_str(&text)
}

fn validate_set(cases: &[Case]) -> Result<(), CatalogError> {
    let mut seen = BTreeSet::new();
    for c in cases {
        if !seen.insert(c.id.clone()) {
            return Err(CatalogError::Duplicate(c.id.clone()));
        }
    }
    let mut groups: BTreeMap<String, (usize, bool)> = BTreeMap::new();
    for c in cases {
        if let Some(v) = &c.variant {
            let g = groups.entry(v.clone()).or_default();
            g.0 += 1;
            g.1 |= c.has_flag("typo-suspect");
        }
        if c.has_flag("typo-suspect") && c.variant.is_none() {
            return Err(CatalogError::LonelyVariant(c.id.clone(), 1));
        }
    }
    for (g, (n, typo)) in groups {
        if typo && n < 2 {
            return Err(CatalogError::LonelyVariant(g, n));
        }
    }
    Ok(())
}

/// Case files compiled into the binary.
pub const BUNDLED: [(&str, &str); 3] = [
    ("controls.cases", include_str!("../catalog/controls.cases")),
    ("generalized-symmetries.cases", include_str!("../catalog/generalized-symmetries.cases")),
    ("diffusion-solutions.cases", include_str!("../catalog/diffusion-solutions.cases")),
];

pub fn bundled() -> Result<Vec<Case>, CatalogError> {
    let text: Vec<&str> = BUNDLED.iter().map(|(_, t)| *t).collect();
    load_str(&text.join("\n"))
}

/// Shell-style glob with `*` and `?`.
pub fn glob_match(pat: &str, s: &str) -> bool {
    let (p, t): (Vec<char>, Vec<char>) = (pat.chars().collect(), s.chars().collect());
    let (mut i, mut j, mut star, mut mark) = (0, 0, None, 0);
    while j < t.len() {
        if i < p.len() && (p[i] == '?' || p[i] == t[j]) {
            i += 1;
            j += 1;
        } else if i < p.len() && p[i] == '*' {
            star = Some(i);
            mark = j;
            i += 1;
        } else if let Some(si) = star {
            i = si + 1;
            mark += 1;
            j = mark;
        } else {
            return false;
        }
    }
    while i < p.len() && p[i] == '*' {
        i += 1;
    }
    i == p.len()
}

/// Filter by id glob or `kind=<kind>`; result sorted by id.
pub fn select<'a>(cases: &'a [Case], filter: Option<&str>) -> Vec<&'a Case> {
    let mut out: Vec<&Case> = cases
        .iter()
        .filter(|c| match filter {
            None => true,
            Some(f) => match f.strip_prefix("kind=") {
                Some(k) => c.kind.as_str() == k,
                None => glob_match(f, &c.id),
            },
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Whether an expression mentions an opaque function.
pub fn mentions_opaque(e: &Expr) -> bool {
    let mut hit = false;
    e.walk(&mut |n| hit |= matches!(n.node(), Node::Opaque(_)));
    hit
}
