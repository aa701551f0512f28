//! Benchmark files: effect signatures, method specifications, ML-like method
//! bodies, and their translation into core-language harnesses.
//!
//! ```text
//! file    ::= item*
//! item    ::= type T
//!           | val F (x: S)* : S                      effect declaration
//!           | pattern p[(x, ..)] = sre
//!           | spec f function (x: S)* [ghost (z: S)*] [require formula]
//!                [context sre] return (y: S) [ensures formula] [effect sre]
//!           | let [rec] f (x: S)* [: S] = expr
//!           | harness f
//! expr    ::= let x = expr in expr | let [rec] g x* = expr in expr
//!           | if expr then expr else expr | expr; expr
//!           | expr || expr | expr && expr | not expr
//!           | expr (= | == | != | <> | < | <= | > | >=) expr | expr (+|-) expr
//!           | f atom* | assert atom | assume atom | abort | atom
//! atom    ::= int | true | false | null | () | x | (expr)
//! ```
//!
//! `else` branches and `let` bodies extend as far as possible; parenthesize a
//! conditional that is followed by `;`.

pub mod core;
pub mod translate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::events::{EffectDecl, EffectSignature};
use crate::logic::{Formula, Sort};
use crate::sre::Sre;
use crate::syntax::{Parser, Pattern, Pos, SyntaxError, Tok};
pub use translate::{get_harness, translate_expr, Harness};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("{0}")]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: {msg}")]
    Check { pos: Pos, msg: String },
    #[error("no method named `{0}`")]
    NoMethod(String),
    #[error("no specification for `{0}`")]
    NoSpec(String),
    #[error("file has no harness directive and no method was given")]
    NoTarget,
}

fn check_err<T>(pos: Pos, msg: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError::Check { pos, msg: msg.into() })
}

/// Source position that never affects equality.
#[derive(Debug, Clone, Copy)]
pub struct Loc(pub Pos);

impl PartialEq for Loc {
    fn eq(&self, _: &Loc) -> bool {
        true
    }
}
impl Eq for Loc {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    And,
    Or,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Int(i64),
    Bool(bool),
    Null,
    Unit,
    Var(Arc<str>, Loc),
    App(Arc<str>, Vec<SExpr>, Loc),
    Let(Arc<str>, Box<SExpr>, Box<SExpr>),
    LetFun { rec: bool, name: Arc<str>, params: Vec<Arc<str>>, body: Box<SExpr>, rest: Box<SExpr> },
    If(Box<SExpr>, Box<SExpr>, Box<SExpr>),
    Seq(Box<SExpr>, Box<SExpr>),
    Bin(BinOp, Box<SExpr>, Box<SExpr>),
    Not(Box<SExpr>),
    Assert(Box<SExpr>),
    Assume(Box<SExpr>),
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSpec {
    pub name: Arc<str>,
    pub params: Vec<(Arc<str>, Sort)>,
    pub ghosts: Vec<(Arc<str>, Sort)>,
    pub require: Formula,
    pub context: Sre,
    pub ret: (Arc<str>, Sort),
    pub ensures: Formula,
    pub effect: Sre,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDef {
    pub name: Arc<str>,
    pub rec: bool,
    pub params: Vec<(Arc<str>, Sort)>,
    pub ret: Option<Sort>,
    pub body: SExpr,
}

#[derive(Debug, Clone, Default)]
pub struct ModuleFile {
    pub sorts: Vec<Arc<str>>,
    pub delta: EffectSignature,
    pub patterns: Vec<(String, Pattern)>,
    pub specs: Vec<MethodSpec>,
    pub methods: Vec<MethodDef>,
    pub harness: Option<Arc<str>>,
}

impl PartialEq for ModuleFile {
    fn eq(&self, o: &ModuleFile) -> bool {
        let pats = |m: &ModuleFile| -> Vec<(String, Vec<Arc<str>>, Sre)> {
            m.patterns.iter().map(|(n, p)| (n.clone(), p.params.clone(), p.body.clone())).collect()
        };
        self.sorts == o.sorts
            && self.delta == o.delta
            && pats(self) == pats(o)
            && self.specs == o.specs
            && self.methods == o.methods
            && self.harness == o.harness
    }
}

impl ModuleFile {
    pub fn spec(&self, name: &str) -> Option<&MethodSpec> {
        self.specs.iter().find(|s| &*s.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodDef> {
        self.methods.iter().find(|m| &*m.name == name)
    }

    /// The method named by `--method`, else the harness directive.
    pub fn target(&self, method: Option<&str>) -> Result<Arc<str>, SpecError> {
        match method {
            Some(m) => Ok(Arc::from(m)),
            None => self.harness.clone().ok_or(SpecError::NoTarget),
        }
    }
}

const RESERVED: &[&str] = &[
    "let", "rec", "in", "if", "then", "else", "assert", "assume", "abort", "not", "true", "false", "null",
    "type", "val", "pattern", "spec", "harness", "function", "ghost", "require", "context", "return",
    "ensures", "effect",
];

struct ModParser {
    p: Parser,
    m: ModuleFile,
    spec_pos: HashMap<Arc<str>, Pos>,
    method_pos: HashMap<Arc<str>, Pos>,
}

pub fn parse_module(text: &str) -> Result<ModuleFile, SpecError> {
    let mut mp = ModParser {
        p: Parser::new(text)?,
        m: ModuleFile::default(),
        spec_pos: HashMap::new(),
        method_pos: HashMap::new(),
    };
    while !mp.p.at_eof() {
        mp.item()?;
    }
    mp.check()?;
    Ok(mp.m)
}

impl ModParser {
    fn name(&mut self) -> Result<Arc<str>, SpecError> {
        let pos = self.p.pos();
        let n = self.p.ident()?;
        if RESERVED.contains(&n.as_str()) {
            return Err(SyntaxError::new(pos, format!("`{n}` is a keyword")).into());
        }
        Ok(Arc::from(n.as_str()))
    }

    fn sort(&mut self) -> Result<Sort, SpecError> {
        let pos = self.p.pos();
        let n = self.p.ident()?;
        Ok(match n.as_str() {
            "unit" => Sort::Unit,
            "bool" => Sort::Bool,
            "int" => Sort::Int,
            _ if self.m.sorts.iter().any(|s| **s == *n) => Sort::named(&n),
            _ => return check_err(pos, format!("unknown sort `{n}`")),
        })
    }

    /// `(x: S)*`
    fn typed_params(&mut self) -> Result<Vec<(Arc<str>, Sort)>, SpecError> {
        let mut out = Vec::new();
        while self.p.peek() == &Tok::LParen && matches!(self.p.peek_at(1), Tok::Ident(_)) && self.p.peek_at(2) == &Tok::Colon {
            self.p.bump();
            let x = self.name()?;
            self.p.expect(&Tok::Colon)?;
            let s = self.sort()?;
            self.p.expect(&Tok::RParen)?;
            out.push((x, s));
        }
        Ok(out)
    }

    fn item(&mut self) -> Result<(), SpecError> {
        let pos = self.p.pos();
        let kw = self.p.ident()?;
        match kw.as_str() {
            "type" => {
                let n = self.name()?;
                self.m.sorts.push(n);
            }
            "val" => {
                let n = self.p.ident()?;
                let args = self.typed_params()?;
                self.p.expect(&Tok::Colon)?;
                let ret = self.sort()?;
                if self.m.delta.get(&n).is_some() {
                    return check_err(pos, format!("effect `{n}` declared twice"));
                }
                self.m.delta.effects.push(EffectDecl::new(&n, args.into_iter().map(|a| a.1).collect(), ret));
                self.p.delta = Some(self.m.delta.clone());
            }
            "pattern" => {
                let n = self.name()?;
                let mut params = Vec::new();
                if self.p.eat(&Tok::LParen) {
                    params.push(self.name()?);
                    while self.p.eat(&Tok::Comma) {
                        params.push(self.name()?);
                    }
                    self.p.expect(&Tok::RParen)?;
                }
                self.p.expect(&Tok::Assign)?;
                let body = self.p.sre()?;
                let pat = Pattern { params, body };
                self.p.patterns.insert(n.to_string(), pat.clone());
                self.m.patterns.push((n.to_string(), pat));
            }
            "spec" => {
                let spec = self.spec()?;
                if self.spec_pos.insert(spec.name.clone(), pos).is_some() {
                    return check_err(pos, format!("`{}` has two specifications", spec.name));
                }
                self.m.specs.push(spec);
            }
            "let" => {
                let rec = self.p.eat_kw("rec");
                let name = self.name()?;
                let params = self.typed_params()?;
                let ret = if self.p.eat(&Tok::Colon) { Some(self.sort()?) } else { None };
                self.p.expect(&Tok::Assign)?;
                let body = self.expr()?;
                if self.method_pos.insert(name.clone(), pos).is_some() {
                    return check_err(pos, format!("method `{name}` defined twice"));
                }
                self.m.methods.push(MethodDef { name, rec, params, ret, body });
            }
            "harness" => {
                let n = self.name()?;
                self.m.harness = Some(n);
            }
            _ => return Err(SyntaxError::new(pos, format!("expected a declaration, found `{kw}`")).into()),
        }
        Ok(())
    }

    fn spec(&mut self) -> Result<MethodSpec, SpecError> {
        let name: Arc<str> = Arc::from(self.p.ident()?.as_str());
        self.p.expect_kw("function")?;
        let params = self.typed_params()?;
        let ghosts = if self.p.eat_kw("ghost") { self.typed_params()? } else { Vec::new() };
        let require = if self.p.eat_kw("require") { self.p.formula()? } else { Formula::True };
        let context = if self.p.eat_kw("context") { self.p.sre()? } else { Sre::universal() };
        self.p.expect_kw("return")?;
        let mut ret = self.typed_params()?;
        if ret.len() != 1 {
            return self.p.unexpected("`(name: sort)` after `return`").map_err(Into::into);
        }
        let ret = ret.remove(0);
        let ensures = if self.p.eat_kw("ensures") { self.p.formula()? } else { Formula::True };
        let effect = if self.p.eat_kw("effect") { self.p.sre()? } else { Sre::eps() };
        Ok(MethodSpec { name, params, ghosts, require, context, ret, ensures, effect })
    }

    // ---- expressions ----

    fn expr(&mut self) -> Result<SExpr, SpecError> {
        if self.p.at_kw("let") {
            self.p.bump();
            let rec = self.p.eat_kw("rec");
            let name = self.name()?;
            let mut params = Vec::new();
            loop {
                if matches!(self.p.peek(), Tok::Ident(_)) {
                    params.push(self.name()?);
                } else if let Some((x, _)) = self.typed_params()?.pop() {
                    params.push(x);
                } else {
                    break;
                }
            }
            self.p.expect(&Tok::Assign)?;
            let rhs = self.expr()?;
            self.p.expect_kw("in")?;
            let rest = Box::new(self.expr()?);
            return Ok(if params.is_empty() && !rec {
                SExpr::Let(name, Box::new(rhs), rest)
            } else {
                SExpr::LetFun { rec, name, params, body: Box::new(rhs), rest }
            });
        }
        if self.p.eat_kw("if") {
            let c = self.expr()?;
            self.p.expect_kw("then")?;
            let t = self.expr()?;
            self.p.expect_kw("else")?;
            let e = self.expr()?;
            return Ok(SExpr::If(Box::new(c), Box::new(t), Box::new(e)));
        }
        let first = self.or_expr()?;
        if self.p.eat(&Tok::Semi) {
            let rest = self.expr()?;
            return Ok(SExpr::Seq(Box::new(first), Box::new(rest)));
        }
        Ok(first)
    }

    fn or_expr(&mut self) -> Result<SExpr, SpecError> {
        let mut l = self.and_expr()?;
        while self.p.eat(&Tok::OrOr) {
            let r = self.and_expr()?;
            l = SExpr::Bin(BinOp::Or, Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn and_expr(&mut self) -> Result<SExpr, SpecError> {
        let mut l = self.not_expr()?;
        while self.p.eat(&Tok::AndAnd) {
            let r = self.not_expr()?;
            l = SExpr::Bin(BinOp::And, Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn not_expr(&mut self) -> Result<SExpr, SpecError> {
        if self.p.eat_kw("not") {
            return Ok(SExpr::Not(Box::new(self.not_expr()?)));
        }
        let l = self.arith()?;
        let op = match self.p.peek() {
            Tok::Assign | Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt if self.p.peek_at(1) == &Tok::Gt => {
                self.p.bump();
                BinOp::Ne
            }
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(l),
        };
        self.p.bump();
        let r = self.arith()?;
        Ok(SExpr::Bin(op, Box::new(l), Box::new(r)))
    }

    fn arith(&mut self) -> Result<SExpr, SpecError> {
        let mut l = self.app()?;
        loop {
            let op = match self.p.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(l),
            };
            self.p.bump();
            let r = self.app()?;
            l = SExpr::Bin(op, Box::new(l), Box::new(r));
        }
    }

    fn at_atom(&self) -> bool {
        match self.p.peek() {
            Tok::Int(_) | Tok::LParen => true,
            Tok::Ident(s) => !RESERVED.contains(&s.as_str()) || matches!(s.as_str(), "true" | "false" | "null"),
            _ => false,
        }
    }

    fn app(&mut self) -> Result<SExpr, SpecError> {
        let pos = self.p.pos();
        if self.p.eat_kw("assert") {
            return Ok(SExpr::Assert(Box::new(self.atom()?)));
        }
        if self.p.eat_kw("assume") {
            return Ok(SExpr::Assume(Box::new(self.atom()?)));
        }
        if self.p.eat_kw("abort") {
            return Ok(SExpr::Abort);
        }
        let head = self.atom()?;
        if let SExpr::Var(f, _) = &head {
            let mut args = Vec::new();
            while self.at_atom() {
                args.push(self.atom()?);
            }
            if !args.is_empty() {
                return Ok(SExpr::App(f.clone(), args, Loc(pos)));
            }
        }
        Ok(head)
    }

    fn atom(&mut self) -> Result<SExpr, SpecError> {
        let pos = self.p.pos();
        match self.p.peek().clone() {
            Tok::Int(i) => {
                self.p.bump();
                Ok(SExpr::Int(i))
            }
            Tok::Minus if matches!(self.p.peek_at(1), Tok::Int(_)) => {
                self.p.bump();
                let Tok::Int(i) = self.p.bump() else { unreachable!() };
                Ok(SExpr::Int(-i))
            }
            Tok::LParen => {
                self.p.bump();
                if self.p.eat(&Tok::RParen) {
                    return Ok(SExpr::Unit);
                }
                let e = self.expr()?;
                self.p.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" => {
                    self.p.bump();
                    Ok(SExpr::Bool(s == "true"))
                }
                "null" => {
                    self.p.bump();
                    Ok(SExpr::Null)
                }
                _ => Ok(SExpr::Var(self.name()?, Loc(pos))),
            },
            _ => self.p.unexpected("an expression").map_err(Into::into),
        }
    }

    // ---- resolution and sort checking ----

    fn check(&self) -> Result<(), SpecError> {
        let m = &self.m;
        for spec in &m.specs {
            let pos = self.spec_pos[&spec.name];
            let mut scope: BTreeSet<Arc<str>> = spec.params.iter().chain(&spec.ghosts).map(|p| p.0.clone()).collect();
            let pre = [("require", formula_vars(&spec.require)), ("context", sre_vars(&spec.context))];
            for (what, vars) in pre {
                if let Some(v) = vars.difference(&scope).next() {
                    return check_err(pos, format!("undeclared variable `{v}` in {what} of `{}`", spec.name));
                }
            }
            scope.insert(spec.ret.0.clone());
            let post = [("ensures", formula_vars(&spec.ensures)), ("effect", sre_vars(&spec.effect))];
            for (what, vars) in post {
                if let Some(v) = vars.difference(&scope).next() {
                    return check_err(pos, format!("undeclared variable `{v}` in {what} of `{}`", spec.name));
                }
            }
            if let Some(def) = m.method(&spec.name) {
                let a: Vec<&Sort> = spec.params.iter().map(|p| &p.1).collect();
                let b: Vec<&Sort> = def.params.iter().map(|p| &p.1).collect();
                if a != b {
                    return check_err(pos, format!("parameters of `{}` disagree with its specification", spec.name));
                }
            }
        }
        let mut known: BTreeMap<Arc<str>, Callee> = BTreeMap::new();
        for spec in &m.specs {
            if m.delta.get(&spec.name).is_some() || m.method(&spec.name).is_none() {
                known.insert(spec.name.clone(), Callee::Api(spec.params.iter().map(|p| p.1.clone()).collect(), spec.ret.1.clone()));
            }
        }
        for def in &m.methods {
            let mut env: Vec<(Arc<str>, Ty)> = def.params.iter().map(|(x, s)| (x.clone(), Ty::Sort(s.clone()))).collect();
            let mut scope = known.clone();
            if def.rec {
                scope.insert(def.name.clone(), Callee::Method(def.params.len(), def.ret.clone()));
            }
            let mut ck = Checker { m, callees: scope, last: self.method_pos[&def.name] };
            let got = ck.expr(&def.body, &mut env)?;
            if let (Some(want), Ty::Sort(g)) = (&def.ret, &got) {
                if !compatible(want, g) {
                    return check_err(self.method_pos[&def.name], format!("`{}` returns {g}, declared {want}", def.name));
                }
            }
            known.insert(def.name.clone(), Callee::Method(def.params.len(), def.ret.clone()));
        }
        if let Some(h) = &m.harness {
            if m.method(h).is_none() {
                return Err(SpecError::NoMethod(h.to_string()));
            }
            if m.spec(h).is_none() {
                return Err(SpecError::NoSpec(h.to_string()));
            }
        }
        Ok(())
    }
}

fn formula_vars(f: &Formula) -> BTreeSet<Arc<str>> {
    f.vars()
}

pub fn sre_vars(r: &Sre) -> BTreeSet<Arc<str>> {
    let mut out = BTreeSet::new();
    r.visit_lits(&mut |l| l.visit_qualifiers(&mut |q| out.extend(q.vars())));
    out
}

#[derive(Debug, Clone)]
enum Callee {
    Api(Vec<Sort>, Sort),
    Method(usize, Option<Sort>),
    Local(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Ty {
    Sort(Sort),
    Unknown,
    Fun,
}

fn compatible(a: &Sort, b: &Sort) -> bool {
    a == b || (a.int_encoded() && b.int_encoded() && (a == &Sort::Int || b == &Sort::Int))
}

struct Checker<'a> {
    m: &'a ModuleFile,
    callees: BTreeMap<Arc<str>, Callee>,
    /// Last position seen, used for nodes without one.
    last: Pos,
}

impl Checker<'_> {
    fn expect(&self, t: &Ty, want: &Sort, pos: Pos, what: &str) -> Result<(), SpecError> {
        match t {
            Ty::Sort(s) if !compatible(s, want) => check_err(pos, format!("{what}: expected {want}, found {s}")),
            Ty::Fun => check_err(pos, format!("{what}: expected {want}, found a function")),
            _ => Ok(()),
        }
    }

    fn expr(&mut self, e: &SExpr, env: &mut Vec<(Arc<str>, Ty)>) -> Result<Ty, SpecError> {
        if let SExpr::Var(_, Loc(p)) | SExpr::App(_, _, Loc(p)) = e {
            self.last = *p;
        }
        let last = self.last;
        let here = || last;
        Ok(match e {
            SExpr::Int(_) => Ty::Sort(Sort::Int),
            SExpr::Bool(_) => Ty::Sort(Sort::Bool),
            SExpr::Null | SExpr::Abort => Ty::Unknown,
            SExpr::Unit => Ty::Sort(Sort::Unit),
            SExpr::Var(x, Loc(pos)) => match env.iter().rev().find(|(y, _)| y == x) {
                Some((_, t)) => t.clone(),
                None if self.callees.contains_key(x) => return check_err(*pos, format!("`{x}` used as a value")),
                None => return check_err(*pos, format!("unbound variable `{x}`")),
            },
            SExpr::App(f, args, Loc(pos)) => {
                let mut tys = Vec::new();
                for a in args {
                    tys.push(self.expr(a, env)?);
                }
                let callee = match env.iter().rev().find(|(y, _)| y == f) {
                    Some((_, Ty::Fun)) => self.callees.get(f).cloned().unwrap_or(Callee::Local(usize::MAX)),
                    Some(_) => return check_err(*pos, format!("`{f}` is not a function")),
                    None => match self.callees.get(f) {
                        Some(c) => c.clone(),
                        None if self.m.delta.get(f).is_some() => {
                            return check_err(*pos, format!("no specification for effectful API `{f}`"))
                        }
                        None => return check_err(*pos, format!("unknown function `{f}`")),
                    },
                };
                match callee {
                    Callee::Api(sorts, ret) => {
                        if sorts.len() != args.len() {
                            return check_err(*pos, format!("`{f}` expects {} arguments, got {}", sorts.len(), args.len()));
                        }
                        for (i, (t, s)) in tys.iter().zip(&sorts).enumerate() {
                            self.expect(t, s, *pos, &format!("argument {} of `{f}`", i + 1))?;
                        }
                        Ty::Sort(ret)
                    }
                    Callee::Method(n, _) | Callee::Local(n) if n != usize::MAX && n != args.len() => {
                        return check_err(*pos, format!("`{f}` expects {n} arguments, got {}", args.len()));
                    }
                    Callee::Method(_, Some(s)) => Ty::Sort(s),
                    _ => Ty::Unknown,
                }
            }
            SExpr::Let(x, a, b) => {
                let t = self.expr(a, env)?;
                env.push((x.clone(), t));
                let r = self.expr(b, env);
                env.pop();
                r?
            }
            SExpr::LetFun { rec, name, params, body, rest } => {
                let n = env.len();
                if *rec {
                    env.push((name.clone(), Ty::Fun));
                    self.callees.insert(name.clone(), Callee::Local(params.len()));
                }
                for p in params {
                    env.push((p.clone(), Ty::Unknown));
                }
                let r = self.expr(body, env);
                env.truncate(n);
                r?;
                env.push((name.clone(), Ty::Fun));
                self.callees.insert(name.clone(), Callee::Local(params.len()));
                let r = self.expr(rest, env);
                env.truncate(n);
                r?
            }
            SExpr::If(c, t, f) => {
                let ct = self.expr(c, env)?;
                self.expect(&ct, &Sort::Bool, here(), "condition")?;
                let a = self.expr(t, env)?;
                let b = self.expr(f, env)?;
                match (a, b) {
                    (Ty::Sort(x), Ty::Sort(y)) if !compatible(&x, &y) => {
                        return check_err(here(), format!("branches have sorts {x} and {y}"))
                    }
                    (Ty::Sort(x), _) | (_, Ty::Sort(x)) => Ty::Sort(x),
                    _ => Ty::Unknown,
                }
            }
            SExpr::Seq(a, b) => {
                self.expr(a, env)?;
                self.expr(b, env)?
            }
            SExpr::Bin(op, a, b) => {
                let ta = self.expr(a, env)?;
                let tb = self.expr(b, env)?;
                match op {
                    BinOp::And | BinOp::Or => {
                        self.expect(&ta, &Sort::Bool, here(), op.symbol())?;
                        self.expect(&tb, &Sort::Bool, here(), op.symbol())?;
                        Ty::Sort(Sort::Bool)
                    }
                    BinOp::Add | BinOp::Sub | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        self.expect(&ta, &Sort::Int, here(), op.symbol())?;
                        self.expect(&tb, &Sort::Int, here(), op.symbol())?;
                        Ty::Sort(if matches!(op, BinOp::Add | BinOp::Sub) { Sort::Int } else { Sort::Bool })
                    }
                    BinOp::Eq | BinOp::Ne => {
                        if let (Ty::Sort(x), Ty::Sort(y)) = (&ta, &tb) {
                            if !compatible(x, y) {
                                return check_err(here(), format!("comparing {x} with {y}"));
                            }
                        }
                        Ty::Sort(Sort::Bool)
                    }
                }
            }
            SExpr::Not(a) | SExpr::Assert(a) | SExpr::Assume(a) => {
                let t = self.expr(a, env)?;
                self.expect(&t, &Sort::Bool, here(), "condition")?;
                Ty::Sort(if matches!(e, SExpr::Not(_)) { Sort::Bool } else { Sort::Unit })
            }
        })
    }
}

// ---- printing ----

fn params_str(ps: &[(Arc<str>, Sort)]) -> String {
    ps.iter().map(|(x, s)| format!(" ({x}: {s})")).collect()
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Int(i) if *i < 0 => write!(f, "({i})"),
            SExpr::Int(i) => write!(f, "{i}"),
            SExpr::Bool(b) => write!(f, "{b}"),
            SExpr::Null => write!(f, "null"),
            SExpr::Unit => write!(f, "()"),
            SExpr::Var(x, _) => write!(f, "{x}"),
            SExpr::App(g, args, _) => {
                write!(f, "({g}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
            SExpr::Let(x, a, b) => write!(f, "(let {x} = {a} in {b})"),
            SExpr::LetFun { rec, name, params, body, rest } => {
                write!(f, "(let {}{name} {} = {body} in {rest})", if *rec { "rec " } else { "" }, params.join(" "))
            }
            SExpr::If(c, t, e) => write!(f, "(if {c} then {t} else {e})"),
            SExpr::Seq(a, b) => write!(f, "({a}; {b})"),
            SExpr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            SExpr::Not(a) => write!(f, "(not {a})"),
            SExpr::Assert(a) => write!(f, "(assert {a})"),
            SExpr::Assume(a) => write!(f, "(assume {a})"),
            SExpr::Abort => write!(f, "abort"),
        }
    }
}

impl fmt::Display for ModuleFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sorts {
            writeln!(f, "type {s}")?;
        }
        for e in &self.delta.effects {
            write!(f, "val {}", e.name)?;
            for (i, s) in e.args.iter().enumerate() {
                write!(f, " (x{i}: {s})")?;
            }
            writeln!(f, " : {}", e.ret)?;
        }
        for (n, p) in &self.patterns {
            write!(f, "pattern {n}")?;
            if !p.params.is_empty() {
                write!(f, "({})", p.params.join(", "))?;
            }
            writeln!(f, " = {}", p.body)?;
        }
        for s in &self.specs {
            writeln!(f, "spec {} function{}", s.name, params_str(&s.params))?;
            if !s.ghosts.is_empty() {
                writeln!(f, "  ghost{}", params_str(&s.ghosts))?;
            }
            writeln!(f, "  require {}", s.require)?;
            writeln!(f, "  context {}", s.context)?;
            writeln!(f, "  return ({}: {})", s.ret.0, s.ret.1)?;
            writeln!(f, "  ensures {}", s.ensures)?;
            writeln!(f, "  effect {}", s.effect)?;
        }
        for m in &self.methods {
            write!(f, "let {}{}{}", if m.rec { "rec " } else { "" }, m.name, params_str(&m.params))?;
            if let Some(r) = &m.ret {
                write!(f, " : {r}")?;
            }
            writeln!(f, " =\n  {}", m.body)?;
        }
        if let Some(h) = &self.harness {
            writeln!(f, "harness {h}")?;
        }
        Ok(())
    }
}
