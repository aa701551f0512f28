//! Core language in monadic normal form: values, expressions, substitution and
//! the small-step relation shared by both engines.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::logic::{fresh_sym, Constant, Formula, Sort, Term};
use crate::sre::Sre;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Term(Term),
    Fun { params: Vec<Arc<str>>, body: Arc<Expr> },
    Fix { name: Arc<str>, params: Vec<Arc<str>>, body: Arc<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Val(Value),
    GenSym(Sort),
    Abort,
    Assume(Formula),
    Admit(Sre),
    Append(Sre),
    Let(Arc<str>, Arc<Expr>, Arc<Expr>),
    LetApp { x: Arc<str>, f: Value, args: Vec<Term>, body: Arc<Expr> },
    Choice(Arc<Expr>, Arc<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("stuck expression: {0}")]
    Stuck(String),
}

/// The trace-relevant part of a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Pure,
    Assume(Formula),
    Admit(Sre),
    Append(Sre),
}

pub const WILDCARD: &str = "_";

impl Value {
    pub fn unit() -> Value {
        Value::Term(Term::Const(Constant::Unit))
    }
}

impl Expr {
    pub fn val(t: Term) -> Expr {
        Expr::Val(Value::Term(t))
    }

    pub fn unit() -> Expr {
        Expr::Val(Value::unit())
    }

    pub fn let_(x: &str, e1: Expr, e2: Expr) -> Expr {
        Expr::Let(Arc::from(x), Arc::new(e1), Arc::new(e2))
    }

    /// `e1; e2`
    pub fn seq(e1: Expr, e2: Expr) -> Expr {
        Expr::let_(WILDCARD, e1, e2)
    }

    pub fn choice(a: Expr, b: Expr) -> Expr {
        Expr::Choice(Arc::new(a), Arc::new(b))
    }

    /// `(assume ¬φ; abort) ⊗ assume φ`, dropping a branch that is trivially dead.
    pub fn assert(phi: Formula) -> Expr {
        let bad = Formula::not(phi.clone());
        if bad.is_false() {
            return Expr::Assume(phi);
        }
        Expr::choice(Expr::seq(Expr::Assume(bad), Expr::Abort), Expr::Assume(phi))
    }

    /// `(admit ¬R; abort) ⊗ admit R`
    pub fn affirm(r: Sre) -> Expr {
        Expr::choice(Expr::seq(Expr::Admit(Sre::not(r.clone())), Expr::Abort), Expr::Admit(r))
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Expr::Val(_) | Expr::Abort)
    }

    pub fn size(&self) -> usize {
        match self {
            Expr::Val(v) => v.size(),
            Expr::Let(_, a, b) | Expr::Choice(a, b) => 1 + a.size() + b.size(),
            Expr::LetApp { f, body, .. } => 1 + f.size() + body.size(),
            _ => 1,
        }
    }
}

impl Value {
    fn size(&self) -> usize {
        match self {
            Value::Term(_) => 1,
            Value::Fun { body, .. } | Value::Fix { body, .. } => 1 + body.size(),
        }
    }
}

fn subst_term(t: &Term, x: &str, by: &Term) -> Term {
    t.map(&mut |s| match s {
        Term::Var(v) if &**v == x => Some(by.clone()),
        _ => None,
    })
}

fn subst_formula(f: &Formula, x: &str, by: &Term) -> Formula {
    f.map_terms(&mut |s| match s {
        Term::Var(v) if &**v == x => Some(by.clone()),
        _ => None,
    })
}

pub fn subst_sre(r: &Sre, x: &str, by: &Term) -> Sre {
    r.map_terms(&mut |s| match s {
        Term::Var(v) if &**v == x => Some(by.clone()),
        _ => None,
    })
}

fn binds(params: &[Arc<str>], x: &str) -> bool {
    params.iter().any(|p| &**p == x)
}

/// Capture-avoiding substitution `e[x ↦ v]`. Values substituted by the
/// engines are closed, so renaming is never required.
pub fn subst(e: &Expr, x: &str, v: &Value) -> Expr {
    match e {
        Expr::Val(w) => Expr::Val(subst_value(w, x, v)),
        Expr::GenSym(_) | Expr::Abort => e.clone(),
        Expr::Assume(f) => match v {
            Value::Term(t) => Expr::Assume(subst_formula(f, x, t)),
            _ => e.clone(),
        },
        Expr::Admit(r) | Expr::Append(r) => match v {
            Value::Term(t) => {
                let r2 = subst_sre(r, x, t);
                if matches!(e, Expr::Admit(_)) {
                    Expr::Admit(r2)
                } else {
                    Expr::Append(r2)
                }
            }
            _ => e.clone(),
        },
        Expr::Let(y, a, b) => {
            let a2 = subst(a, x, v);
            let b2 = if &**y == x { (**b).clone() } else { subst(b, x, v) };
            Expr::Let(y.clone(), Arc::new(a2), Arc::new(b2))
        }
        Expr::LetApp { x: y, f, args, body } => {
            let args = match v {
                Value::Term(t) => args.iter().map(|a| subst_term(a, x, t)).collect(),
                _ => args.clone(),
            };
            let body = if &**y == x { body.clone() } else { Arc::new(subst(body, x, v)) };
            Expr::LetApp { x: y.clone(), f: subst_value(f, x, v), args, body }
        }
        Expr::Choice(a, b) => Expr::choice(subst(a, x, v), subst(b, x, v)),
    }
}

fn subst_value(w: &Value, x: &str, v: &Value) -> Value {
    match w {
        Value::Term(Term::Var(y)) if &**y == x => v.clone(),
        Value::Term(t) => match v {
            Value::Term(by) => Value::Term(subst_term(t, x, by)),
            _ => w.clone(),
        },
        Value::Fun { params, body } => {
            if binds(params, x) {
                w.clone()
            } else {
                Value::Fun { params: params.clone(), body: Arc::new(subst(body, x, v)) }
            }
        }
        Value::Fix { name, params, body } => {
            if &**name == x || binds(params, x) {
                w.clone()
            } else {
                Value::Fix { name: name.clone(), params: params.clone(), body: Arc::new(subst(body, x, v)) }
            }
        }
    }
}

fn apply(f: &Value, args: &[Term]) -> Result<Expr, ExecError> {
    let (params, body) = match f {
        Value::Fun { params, body } | Value::Fix { params, body, .. } => (params, body),
        Value::Term(t) => return Err(ExecError::Stuck(format!("application of non-function {t}"))),
    };
    if params.len() != args.len() {
        return Err(ExecError::Stuck(format!("arity mismatch: {} parameters, {} arguments", params.len(), args.len())));
    }
    let mut e = (**body).clone();
    if let Value::Fix { name, .. } = f {
        e = subst(&e, name, f);
    }
    for (p, a) in params.iter().zip(args) {
        e = subst(&e, p, &Value::Term(a.clone()));
    }
    Ok(e)
}

/// One small step. Values and `abort` have no successors.
pub fn step(e: &Expr) -> Result<Vec<(Action, Expr)>, ExecError> {
    Ok(match e {
        Expr::Val(_) | Expr::Abort => Vec::new(),
        Expr::GenSym(s) => vec![(Action::Pure, Expr::val(Term::sym(&fresh_sym(s.clone(), "v"))))],
        Expr::Assume(f) => vec![(Action::Assume(f.clone()), Expr::unit())],
        Expr::Admit(r) => vec![(Action::Admit(r.clone()), Expr::unit())],
        Expr::Append(r) => vec![(Action::Append(r.clone()), Expr::unit())],
        Expr::Choice(a, b) => vec![(Action::Pure, (**a).clone()), (Action::Pure, (**b).clone())],
        Expr::LetApp { x, f, args, body } => {
            let call = apply(f, args)?;
            vec![(Action::Pure, Expr::Let(x.clone(), Arc::new(call), body.clone()))]
        }
        Expr::Let(x, a, b) => match &**a {
            Expr::Val(v) => vec![(Action::Pure, subst(b, x, v))],
            Expr::GenSym(s) => {
                let v = Value::Term(Term::sym(&fresh_sym(s.clone(), x)));
                vec![(Action::Pure, subst(b, x, &v))]
            }
            Expr::Abort => vec![(Action::Pure, Expr::Abort)],
            Expr::Assume(f) => vec![(Action::Assume(f.clone()), subst(b, x, &Value::unit()))],
            Expr::Admit(r) => vec![(Action::Admit(r.clone()), subst(b, x, &Value::unit()))],
            Expr::Append(r) => vec![(Action::Append(r.clone()), subst(b, x, &Value::unit()))],
            Expr::Choice(l, r) => vec![
                (Action::Pure, Expr::Let(x.clone(), l.clone(), b.clone())),
                (Action::Pure, Expr::Let(x.clone(), r.clone(), b.clone())),
            ],
            // reassociation is safe because the stepped expression is closed
            Expr::Let(y, a1, a2) => {
                let inner = Expr::Let(x.clone(), a2.clone(), b.clone());
                vec![(Action::Pure, Expr::Let(y.clone(), a1.clone(), Arc::new(inner)))]
            }
            Expr::LetApp { x: y, f, args, body } => {
                let inner = Expr::Let(x.clone(), body.clone(), b.clone());
                vec![(Action::Pure, Expr::LetApp { x: y.clone(), f: f.clone(), args: args.clone(), body: Arc::new(inner) })]
            }
        },
    })
}

/// Free program variables of an expression.
pub fn free_vars(e: &Expr) -> BTreeSet<Arc<str>> {
    let mut out = BTreeSet::new();
    fv_expr(e, &mut Vec::new(), &mut out);
    out
}

fn note(name: &Arc<str>, bound: &[Arc<str>], out: &mut BTreeSet<Arc<str>>) {
    if !bound.contains(name) {
        out.insert(name.clone());
    }
}

fn fv_term(t: &Term, bound: &[Arc<str>], out: &mut BTreeSet<Arc<str>>) {
    t.map(&mut |s| {
        if let Term::Var(v) = s {
            note(v, bound, out);
        }
        None
    });
}

fn fv_value(v: &Value, bound: &mut Vec<Arc<str>>, out: &mut BTreeSet<Arc<str>>) {
    match v {
        Value::Term(t) => fv_term(t, bound, out),
        Value::Fun { params, body } | Value::Fix { params, body, .. } => {
            let n = bound.len();
            if let Value::Fix { name, .. } = v {
                bound.push(name.clone());
            }
            bound.extend(params.iter().cloned());
            fv_expr(body, bound, out);
            bound.truncate(n);
        }
    }
}

fn fv_expr(e: &Expr, bound: &mut Vec<Arc<str>>, out: &mut BTreeSet<Arc<str>>) {
    match e {
        Expr::Val(v) => fv_value(v, bound, out),
        Expr::GenSym(_) | Expr::Abort => {}
        Expr::Assume(f) => f.vars().iter().for_each(|v| note(v, bound, out)),
        Expr::Admit(r) | Expr::Append(r) => {
            r.visit_lits(&mut |l| l.visit_qualifiers(&mut |q| q.vars().iter().for_each(|v| note(v, bound, out))))
        }
        Expr::Let(x, a, b) => {
            fv_expr(a, bound, out);
            bound.push(x.clone());
            fv_expr(b, bound, out);
            bound.pop();
        }
        Expr::LetApp { x, f, args, body } => {
            fv_value(f, bound, out);
            args.iter().for_each(|a| fv_term(a, bound, out));
            bound.push(x.clone());
            fv_expr(body, bound, out);
            bound.pop();
        }
        Expr::Choice(a, b) => {
            fv_expr(a, bound, out);
            fv_expr(b, bound, out);
        }
    }
}

/// Checks monadic normal form: `??` only as a let right-hand side and
/// functions only in value positions of lets or applications.
pub fn check_mnf(e: &Expr) -> Result<(), String> {
    fn go(e: &Expr, let_rhs: bool) -> Result<(), String> {
        match e {
            Expr::GenSym(_) if !let_rhs => Err("`??` outside a let binding".into()),
            Expr::Val(Value::Fun { body, .. } | Value::Fix { body, .. }) => {
                if let_rhs {
                    go(body, false)
                } else {
                    Err("function value outside a let binding".into())
                }
            }
            Expr::Let(_, a, b) => {
                go(a, true)?;
                go(b, false)
            }
            Expr::LetApp { f, body, .. } => {
                if let Value::Fun { body: fb, .. } | Value::Fix { body: fb, .. } = f {
                    go(fb, false)?;
                }
                go(body, false)
            }
            Expr::Choice(a, b) => {
                go(a, let_rhs)?;
                go(b, let_rhs)
            }
            _ => Ok(()),
        }
    }
    go(e, false)
}

/// Closed and in monadic normal form.
pub fn check_well_formed(e: &Expr) -> Result<(), String> {
    let fv = free_vars(e);
    if let Some(v) = fv.iter().next() {
        return Err(format!("free variable `{v}`"));
    }
    check_mnf(e)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Term(t) => write!(f, "{t}"),
            Value::Fun { params, body } => write!(f, "(fun {} -> {body})", params.join(" ")),
            Value::Fix { name, params, body } => write!(f, "(fix {name} {} -> {body})", params.join(" ")),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Val(v) => write!(f, "{v}"),
            Expr::GenSym(s) => write!(f, "??:{s}"),
            Expr::Abort => write!(f, "abort"),
            Expr::Assume(p) => write!(f, "assume {p}"),
            Expr::Admit(r) => write!(f, "admit ({r})"),
            Expr::Append(r) => write!(f, "append ({r})"),
            Expr::Let(x, a, b) if &**x == WILDCARD => write!(f, "{a};\n{b}"),
            Expr::Let(x, a, b) => write!(f, "let {x} = {a} in\n{b}"),
            Expr::LetApp { x, f: g, args, body } => {
                write!(f, "let {x} = {g}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, " in\n{body}")
            }
            Expr::Choice(a, b) => write!(f, "(({a}) <+> ({b}))"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt0(x: &str) -> Formula {
        Formula::lt(Term::int(0), Term::var(x))
    }

    #[test]
    fn substitution_reaches_formulas_and_respects_shadowing() {
        let n0 = fresh_sym(Sort::Int, "n");
        let e = Expr::Assume(gt0("x"));
        let v = Value::Term(Term::sym(&n0));
        assert_eq!(subst(&e, "x", &v), Expr::Assume(Formula::lt(Term::int(0), Term::sym(&n0))));
        let lam = Expr::Val(Value::Fun { params: vec![Arc::from("x")], body: Arc::new(e.clone()) });
        assert_eq!(subst(&lam, "x", &v), lam);
        let shadow = Expr::let_("x", Expr::unit(), e.clone());
        assert_eq!(subst(&shadow, "x", &v), shadow);
    }

    #[test]
    fn assert_sugar() {
        let phi = Formula::eq(Term::var("y"), Term::int(1));
        let a = Expr::assert(phi.clone());
        let expect = Expr::choice(
            Expr::seq(Expr::Assume(Formula::ne(Term::var("y"), Term::int(1))), Expr::Abort),
            Expr::Assume(phi),
        );
        assert_eq!(a, expect);
        assert_eq!(Expr::assert(Formula::True), Expr::Assume(Formula::True));
    }

    #[test]
    fn step_rules() {
        let phi = Formula::lt(Term::int(0), Term::int(1));
        let e = Expr::seq(Expr::Assume(phi.clone()), Expr::val(Term::int(3)));
        assert_eq!(step(&e).unwrap(), vec![(Action::Assume(phi), Expr::val(Term::int(3)))]);
        let c = Expr::choice(Expr::Abort, Expr::unit());
        assert_eq!(step(&c).unwrap().len(), 2);
        // fix unrolls one step
        let body = Expr::LetApp {
            x: Arc::from("r"),
            f: Value::Term(Term::var("loop")),
            args: vec![Term::var("n")],
            body: Arc::new(Expr::val(Term::var("r"))),
        };
        let fix = Value::Fix { name: Arc::from("loop"), params: vec![Arc::from("n")], body: Arc::new(body) };
        let call = Expr::LetApp { x: Arc::from("z"), f: fix.clone(), args: vec![Term::int(4)], body: Arc::new(Expr::unit()) };
        let next = step(&call).unwrap();
        let Expr::Let(_, inner, _) = &next[0].1 else { panic!() };
        let Expr::LetApp { f, args, .. } = &**inner else { panic!() };
        assert_eq!(f, &fix);
        assert_eq!(args, &vec![Term::int(4)]);
        assert!(step(&Expr::LetApp { x: Arc::from("z"), f: Value::unit(), args: vec![], body: Arc::new(Expr::unit()) }).is_err());
    }

    #[test]
    fn well_formedness() {
        let ok = Expr::let_("x", Expr::GenSym(Sort::Int), Expr::Assume(gt0("x")));
        assert!(check_well_formed(&ok).is_ok());
        assert!(check_well_formed(&Expr::Assume(gt0("x"))).is_err());
        assert!(check_mnf(&Expr::seq(Expr::unit(), Expr::GenSym(Sort::Int))).is_err());
    }
}
