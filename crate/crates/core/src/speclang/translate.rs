//! Source expressions to core expressions, and harness construction.

use std::collections::HashSet;
use std::sync::Arc;

use super::core::{check_well_formed, subst_sre, Expr, Value};
use super::{sre_vars, BinOp, MethodSpec, ModuleFile, SExpr, SpecError};
use crate::logic::{Constant, Formula, Op, Sort, Term};
use crate::sre::Sre;

/// A harness split into the parts the engines treat specially.
#[derive(Debug, Clone)]
pub struct Harness {
    pub method: Arc<str>,
    /// Symbolic inputs: parameters, ghosts, then the pre-generated return value if any.
    pub inputs: Vec<(Arc<str>, Sort)>,
    pub require: Formula,
    pub context: Sre,
    /// Method definitions, the call, and the trailing assertion.
    pub body: Expr,
    /// `R_ctx · R_eff`, checked against the produced trace instead of an `affirm`.
    pub post: Sre,
}

impl Harness {
    /// `let x̄=??; assume φ; append R_ctx; body`
    pub fn to_expr(&self) -> Expr {
        let mut e = Expr::seq(Expr::Assume(self.require.clone()), Expr::seq(Expr::Append(self.context.clone()), self.body.clone()));
        for (x, s) in self.inputs.iter().rev() {
            e = Expr::let_(x, Expr::GenSym(s.clone()), e);
        }
        e
    }
}

struct Tr<'a> {
    m: &'a ModuleFile,
    /// Bound names, flagged when bound to a function.
    scope: Vec<(Arc<str>, bool)>,
    fresh: usize,
}

fn cmp_term(op: BinOp, a: Term, b: Term) -> Term {
    let (op, a, b) = match op {
        BinOp::Eq => (Op::Eq, a, b),
        BinOp::Ne => (Op::Ne, a, b),
        BinOp::Lt => (Op::Lt, a, b),
        BinOp::Le => (Op::Le, a, b),
        BinOp::Gt => (Op::Lt, b, a),
        BinOp::Ge => (Op::Le, b, a),
        BinOp::Add => (Op::Add, a, b),
        BinOp::Sub => (Op::Sub, a, b),
        BinOp::And | BinOp::Or => unreachable!("connectives are not terms"),
    };
    Term::App(op, vec![a, b])
}

fn false_term() -> Term {
    Term::Const(Constant::Bool(false))
}

impl Tr<'_> {
    fn tmp(&mut self) -> Arc<str> {
        self.fresh += 1;
        Arc::from(format!("_t{}", self.fresh).as_str())
    }

    fn is_fun(&self, x: &str) -> bool {
        self.scope.iter().rev().find(|(n, _)| &**n == x).is_some_and(|b| b.1)
    }

    fn pure_term(&self, e: &SExpr) -> Option<Term> {
        Some(match e {
            SExpr::Int(i) => Term::int(*i),
            SExpr::Bool(b) => Term::Const(Constant::Bool(*b)),
            SExpr::Null => Term::int(0),
            SExpr::Unit => Term::Const(Constant::Unit),
            SExpr::Var(x, _) if !self.is_fun(x) => Term::Var(x.clone()),
            SExpr::Bin(op, a, b) if !matches!(op, BinOp::And | BinOp::Or) => {
                cmp_term(*op, self.pure_term(a)?, self.pure_term(b)?)
            }
            SExpr::Not(a) => Term::App(Op::Eq, vec![self.pure_term(a)?, false_term()]),
            _ => return None,
        })
    }

    fn pure_formula(&self, e: &SExpr) -> Option<Formula> {
        Some(match e {
            SExpr::Bin(BinOp::And, a, b) => Formula::and2(self.pure_formula(a)?, self.pure_formula(b)?),
            SExpr::Bin(BinOp::Or, a, b) => Formula::or2(self.pure_formula(a)?, self.pure_formula(b)?),
            SExpr::Not(a) => Formula::not(self.pure_formula(a)?),
            _ => Formula::atom(self.pure_term(e)?),
        })
    }

    /// Translates `e` and passes its value as a term to `k`.
    fn atomize(&mut self, e: &SExpr, k: impl FnOnce(&mut Self, Term) -> Result<Expr, SpecError>) -> Result<Expr, SpecError> {
        if let Some(t) = self.pure_term(e) {
            return k(self, t);
        }
        let x = self.tmp();
        let rhs = self.expr(e)?;
        let body = k(self, Term::Var(x.clone()))?;
        Ok(Expr::Let(x, Arc::new(rhs), Arc::new(body)))
    }

    fn atomize_all(&mut self, es: &[SExpr], k: impl FnOnce(&mut Self, Vec<Term>) -> Result<Expr, SpecError>) -> Result<Expr, SpecError> {
        let mut binds = Vec::new();
        let mut terms = Vec::new();
        for e in es {
            if let Some(t) = self.pure_term(e) {
                terms.push(t);
            } else {
                let x = self.tmp();
                binds.push((x.clone(), self.expr(e)?));
                terms.push(Term::Var(x));
            }
        }
        let mut out = k(self, terms)?;
        for (x, rhs) in binds.into_iter().rev() {
            out = Expr::Let(x, Arc::new(rhs), Arc::new(out));
        }
        Ok(out)
    }

    fn condition(&mut self, c: &SExpr, k: impl FnOnce(&mut Self, Formula) -> Result<Expr, SpecError>) -> Result<Expr, SpecError> {
        if let Some(f) = self.pure_formula(c) {
            return k(self, f);
        }
        match c {
            SExpr::Bin(BinOp::And, a, b) => {
                let e = SExpr::If(a.clone(), b.clone(), Box::new(SExpr::Bool(false)));
                self.atomize(&e, |s, t| k(s, Formula::atom(t)))
            }
            SExpr::Bin(BinOp::Or, a, b) => {
                let e = SExpr::If(a.clone(), Box::new(SExpr::Bool(true)), b.clone());
                self.atomize(&e, |s, t| k(s, Formula::atom(t)))
            }
            _ => self.atomize(c, |s, t| k(s, Formula::atom(t))),
        }
    }

    /// `λx̄. let z̄=??; assume φ; admit R_ctx; let y=??; assume ψ; append R_eff; y`
    fn library(spec: &MethodSpec) -> Value {
        let (y, ys) = &spec.ret;
        let mut body = Expr::val(Term::Var(y.clone()));
        if !spec.effect.is_eps() {
            body = Expr::seq(Expr::Append(spec.effect.clone()), body);
        }
        if !spec.ensures.is_true() {
            body = Expr::seq(Expr::Assume(spec.ensures.clone()), body);
        }
        body = Expr::let_(y, Expr::GenSym(ys.clone()), body);
        if !spec.context.is_universal() {
            body = Expr::seq(Expr::Admit(spec.context.clone()), body);
        }
        // the library's precondition is assumed: a violated one makes the path infeasible
        if !spec.require.is_true() {
            body = Expr::seq(Expr::Assume(spec.require.clone()), body);
        }
        for (z, s) in spec.ghosts.iter().rev() {
            body = Expr::let_(z, Expr::GenSym(s.clone()), body);
        }
        Value::Fun { params: spec.params.iter().map(|p| p.0.clone()).collect(), body: Arc::new(body) }
    }

    fn call(&mut self, x: Arc<str>, f: &Arc<str>, args: &[SExpr], body: impl FnOnce(&mut Self) -> Result<Expr, SpecError>) -> Result<Expr, SpecError> {
        let callee = if self.is_fun(f) {
            Value::Term(Term::Var(f.clone()))
        } else {
            match self.m.spec(f) {
                Some(spec) => Tr::library(spec),
                None => return Err(SpecError::NoSpec(f.to_string())),
            }
        };
        self.atomize_all(args, |s, terms| {
            s.scope.push((x.clone(), false));
            let b = body(s);
            s.scope.pop();
            Ok(Expr::LetApp { x, f: callee, args: terms, body: Arc::new(b?) })
        })
    }

    fn expr(&mut self, e: &SExpr) -> Result<Expr, SpecError> {
        if let Some(t) = self.pure_term(e) {
            return Ok(Expr::val(t));
        }
        match e {
            SExpr::Var(x, _) => Ok(Expr::val(Term::Var(x.clone()))),
            SExpr::App(f, args, _) => {
                let x = self.tmp();
                let xv = x.clone();
                self.call(x, f, args, move |_| Ok(Expr::val(Term::Var(xv))))
            }
            SExpr::Let(x, a, b) => {
                if let SExpr::App(f, args, _) = &**a {
                    return self.call(x.clone(), f, args, |s| s.expr(b));
                }
                let rhs = self.expr(a)?;
                self.scope.push((x.clone(), false));
                let body = self.expr(b);
                self.scope.pop();
                Ok(Expr::Let(x.clone(), Arc::new(rhs), Arc::new(body?)))
            }
            SExpr::LetFun { rec, name, params, body, rest } => {
                let n = self.scope.len();
                if *rec {
                    self.scope.push((name.clone(), true));
                }
                self.scope.extend(params.iter().map(|p| (p.clone(), false)));
                let fb = self.expr(body);
                self.scope.truncate(n);
                let fb = Arc::new(fb?);
                let v = if *rec {
                    Value::Fix { name: name.clone(), params: params.clone(), body: fb }
                } else {
                    Value::Fun { params: params.clone(), body: fb }
                };
                self.scope.push((name.clone(), true));
                let r = self.expr(rest);
                self.scope.truncate(n);
                Ok(Expr::Let(name.clone(), Arc::new(Expr::Val(v)), Arc::new(r?)))
            }
            SExpr::If(c, t, f) => self.condition(c, |s, phi| {
                let not_phi = Formula::not(phi.clone());
                let a = if phi.is_false() { None } else { Some(Expr::seq(Expr::Assume(phi), s.expr(t)?)) };
                let b = if not_phi.is_false() { None } else { Some(Expr::seq(Expr::Assume(not_phi), s.expr(f)?)) };
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Expr::choice(a, b),
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => unreachable!("a formula and its negation cannot both be false"),
                })
            }),
            SExpr::Seq(a, b) => Ok(Expr::seq(self.expr(a)?, self.expr(b)?)),
            SExpr::Bin(BinOp::And, a, b) => self.expr(&SExpr::If(a.clone(), b.clone(), Box::new(SExpr::Bool(false)))),
            SExpr::Bin(BinOp::Or, a, b) => self.expr(&SExpr::If(a.clone(), Box::new(SExpr::Bool(true)), b.clone())),
            SExpr::Bin(op, a, b) => {
                let op = *op;
                self.atomize_all(&[(**a).clone(), (**b).clone()], |_, ts| {
                    Ok(Expr::val(cmp_term(op, ts[0].clone(), ts[1].clone())))
                })
            }
            SExpr::Not(a) => self.atomize(a, |_, t| Ok(Expr::val(Term::App(Op::Eq, vec![t, false_term()])))),
            SExpr::Assert(c) => self.condition(c, |_, phi| Ok(Expr::assert(phi))),
            SExpr::Assume(c) => self.condition(c, |_, phi| Ok(Expr::Assume(phi))),
            SExpr::Abort => Ok(Expr::Abort),
            SExpr::Int(_) | SExpr::Bool(_) | SExpr::Null | SExpr::Unit => unreachable!("pure"),
        }
    }
}

/// Translates a method body; `funs` are the function names in scope.
pub fn translate_expr(e: &SExpr, m: &ModuleFile, funs: &[Arc<str>]) -> Result<Expr, SpecError> {
    let mut t = Tr { m, scope: funs.iter().map(|f| (f.clone(), true)).collect(), fresh: 0 };
    t.expr(e)
}

fn mentions(r: &Sre, x: &str) -> bool {
    sre_vars(r).iter().any(|v| &**v == x)
}

pub fn get_harness(m: &ModuleFile, method: &str) -> Result<Harness, SpecError> {
    let spec = m.spec(method).ok_or_else(|| SpecError::NoSpec(method.to_string()))?;
    let idx = m
        .methods
        .iter()
        .position(|d| &*d.name == method)
        .ok_or_else(|| SpecError::NoMethod(method.to_string()))?;
    let (y, ysort) = spec.ret.clone();
    let mut inputs: Vec<(Arc<str>, Sort)> = spec.params.iter().chain(&spec.ghosts).cloned().collect();
    let mut post_eff = spec.effect.clone();
    let mut tail = Expr::assert(spec.ensures.clone());
    if mentions(&spec.effect, &y) {
        let yhat: Arc<str> = Arc::from(format!("{y}'").as_str());
        post_eff = subst_sre(&post_eff, &y, &Term::Var(yhat.clone()));
        tail = Expr::seq(Expr::Assume(Formula::eq(Term::Var(y.clone()), Term::Var(yhat.clone()))), tail);
        inputs.push((yhat, ysort));
    }
    let args: Vec<Term> = spec.params.iter().map(|p| Term::Var(p.0.clone())).collect();
    let mut body = Expr::LetApp { x: y, f: Value::Term(Term::Var(Arc::from(method))), args, body: Arc::new(tail) };
    let defs = &m.methods[..=idx];
    let mut values = Vec::new();
    let mut seen: HashSet<Arc<str>> = HashSet::new();
    for d in defs {
        let mut scope: Vec<(Arc<str>, bool)> = seen.iter().map(|f| (f.clone(), true)).collect();
        if d.rec {
            scope.push((d.name.clone(), true));
        }
        scope.extend(d.params.iter().map(|p| (p.0.clone(), false)));
        let mut t = Tr { m, scope, fresh: 0 };
        let fb = Arc::new(t.expr(&d.body)?);
        let params: Vec<Arc<str>> = d.params.iter().map(|p| p.0.clone()).collect();
        let v = if d.rec {
            Value::Fix { name: d.name.clone(), params, body: fb }
        } else {
            Value::Fun { params, body: fb }
        };
        values.push((d.name.clone(), v));
        seen.insert(d.name.clone());
    }
    for (name, v) in values.into_iter().rev() {
        body = Expr::Let(name, Arc::new(Expr::Val(v)), Arc::new(body));
    }
    let h = Harness {
        method: Arc::from(method),
        inputs,
        require: spec.require.clone(),
        context: spec.context.clone(),
        body,
        post: Sre::concat(spec.context.clone(), post_eff),
    };
    if let Err(e) = check_well_formed(&h.to_expr()) {
        return Err(SpecError::Check { pos: Default::default(), msg: format!("harness for `{method}` is ill-formed: {e}") });
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speclang::parse_module;

    const REMOVE: &str = include_str!("../../bench/linkedlist_remove_bug.hat");

    fn gensyms_before_call(e: &Expr) -> (usize, usize) {
        let (mut syms, mut appends) = (0, 0);
        let mut cur = e;
        loop {
            match cur {
                Expr::Let(_, a, b) => {
                    match &**a {
                        Expr::GenSym(_) => syms += 1,
                        Expr::Append(_) => appends += 1,
                        _ => {}
                    }
                    cur = b;
                }
                _ => return (syms, appends),
            }
        }
    }

    #[test]
    fn remove_harness_shape() {
        let m = parse_module(REMOVE).unwrap();
        let h = get_harness(&m, "remove").unwrap();
        let e = h.to_expr();
        assert_eq!(gensyms_before_call(&e), (4, 1));
        assert_eq!(h.post, Sre::concat(m.spec("remove").unwrap().context.clone(), m.spec("remove").unwrap().effect.clone()));
    }

    #[test]
    fn trivial_spec_harness() {
        let src = "let f (x: int) = x\nspec f function (x: int) return (r: int)\n";
        let m = parse_module(src).unwrap();
        let h = get_harness(&m, "f").unwrap();
        assert_eq!(h.require, Formula::True);
        assert!(h.context.is_universal());
        assert_eq!(h.post, Sre::universal());
        let Expr::Let(_, _, call) = &h.body else { panic!("{}", h.body) };
        let Expr::LetApp { body, .. } = &**call else { panic!() };
        assert_eq!(**body, Expr::Assume(Formula::True));
    }

    #[test]
    fn if_becomes_guarded_choice() {
        let src = "type node\nlet f (hd: node) (e: node) : node = if hd = null then hd else e\n";
        let m = parse_module(src).unwrap();
        let e = translate_expr(&m.methods[0].body, &m, &[]).unwrap();
        let null_eq = Formula::eq(Term::var("hd"), Term::int(0));
        let expect = Expr::choice(
            Expr::seq(Expr::Assume(null_eq.clone()), Expr::val(Term::var("hd"))),
            Expr::seq(Expr::Assume(Formula::not(null_eq)), Expr::val(Term::var("e"))),
        );
        assert_eq!(e, expect);
    }

    #[test]
    fn api_call_becomes_library_function() {
        let m = parse_module(REMOVE).unwrap();
        let body = SExpr::App(Arc::from("Nxt.get"), vec![SExpr::Var(Arc::from("s"), crate::speclang::Loc(Default::default()))], crate::speclang::Loc(Default::default()));
        let e = translate_expr(&body, &m, &[]).unwrap();
        let Expr::LetApp { f: Value::Fun { params, body }, args, .. } = &e else { panic!("{e}") };
        assert_eq!(params.len(), 1);
        assert_eq!(args, &vec![Term::var("s")]);
        let text = body.to_string();
        assert!(text.contains("admit") && text.contains("append"), "{text}");
        assert!(text.find("admit").unwrap() < text.find("append").unwrap());
    }

    #[test]
    fn pure_value_is_itself() {
        let m = ModuleFile::default();
        let e = translate_expr(&SExpr::Int(3), &m, &[]).unwrap();
        assert_eq!(e, Expr::val(Term::int(3)));
    }
}
