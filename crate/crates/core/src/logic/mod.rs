//! Formulas over symbolic first-order values, fresh symbols, and solver access.

mod bounded;
pub mod simplify;
mod smtlib;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use bounded::BoundedSolver;
pub use smtlib::SmtLibSolver;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("sort mismatch: {0}")]
    SortMismatch(String),
    #[error("formula is not closed: free variable `{0}`")]
    NotClosed(String),
    #[error("interpretation has no value for {0}")]
    MissingValue(String),
    #[error("unbound event-local #{0}")]
    UnboundLocal(usize),
    #[error("uninterpreted function `{0}` cannot be evaluated")]
    Uninterpreted(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Unit,
    Bool,
    Int,
    Uninterpreted(Arc<str>),
}

impl Sort {
    pub fn named(name: &str) -> Sort {
        Sort::Uninterpreted(Arc::from(name))
    }

    /// Sorts that share the integer encoding accept integer constants (`null` is 0).
    pub fn int_encoded(&self) -> bool {
        matches!(self, Sort::Int | Sort::Uninterpreted(_))
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Unit => write!(f, "unit"),
            Sort::Bool => write!(f, "bool"),
            Sort::Int => write!(f, "int"),
            Sort::Uninterpreted(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(untagged)]
pub enum Constant {
    Unit,
    Bool(bool),
    Int(i64),
}

impl Constant {
    /// Integer encoding shared with the solvers.
    pub fn as_int(self) -> i64 {
        match self {
            Constant::Unit => 0,
            Constant::Bool(b) => b as i64,
            Constant::Int(i) => i,
        }
    }

    pub fn of_sort(sort: &Sort, v: i64) -> Constant {
        match sort {
            Sort::Unit => Constant::Unit,
            Sort::Bool => Constant::Bool(v != 0),
            _ => Constant::Int(v),
        }
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Unit => write!(f, "()"),
            Constant::Bool(b) => write!(f, "{b}"),
            Constant::Int(i) => write!(f, "{i}"),
        }
    }
}

static NEXT_SYM: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct SymVar {
    pub id: u64,
    pub hint: Arc<str>,
    pub sort: Sort,
}

impl PartialEq for SymVar {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for SymVar {}
impl std::hash::Hash for SymVar {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state)
    }
}
impl PartialOrd for SymVar {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SymVar {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.id.cmp(&other.id)
    }
}

impl fmt::Display for SymVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.hint, self.id)
    }
}

pub fn fresh_sym(sort: Sort, hint: &str) -> SymVar {
    let id = NEXT_SYM.fetch_add(1, Ordering::Relaxed);
    SymVar { id, hint: Arc::from(hint), sort }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Add,
    Sub,
    Uf(Arc<str>),
}

impl Op {
    pub fn is_predicate(&self) -> bool {
        matches!(self, Op::Eq | Op::Ne | Op::Lt | Op::Le)
    }

    fn symbol(&self) -> &str {
        match self {
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Add => "+",
            Op::Sub => "-",
            Op::Uf(n) => n,
        }
    }
}

/// A symbolic first-order value.
///
/// `Local(i)` names the i-th argument of the event a qualifier is attached to;
/// `Local(arity)` names its return value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(Constant),
    Var(Arc<str>),
    Sym(SymVar),
    Local(usize),
    App(Op, Vec<Term>),
}

pub type SymValue = Term;

impl Term {
    pub fn int(i: i64) -> Term {
        Term::Const(Constant::Int(i))
    }
    pub fn var(name: &str) -> Term {
        Term::Var(Arc::from(name))
    }
    pub fn sym(s: &SymVar) -> Term {
        Term::Sym(s.clone())
    }
    pub fn add(a: Term, b: Term) -> Term {
        Term::App(Op::Add, vec![a, b])
    }
    pub fn sub(a: Term, b: Term) -> Term {
        Term::App(Op::Sub, vec![a, b])
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::App(_, args) => args.iter().all(Term::is_closed),
            _ => true,
        }
    }

    /// Statically known sort, when determinable without an environment.
    pub fn sort_hint(&self) -> Option<Sort> {
        match self {
            Term::Const(Constant::Unit) => Some(Sort::Unit),
            Term::Const(Constant::Bool(_)) => Some(Sort::Bool),
            Term::Const(Constant::Int(_)) => Some(Sort::Int),
            Term::Sym(s) => Some(s.sort.clone()),
            Term::App(op, _) if op.is_predicate() => Some(Sort::Bool),
            Term::App(Op::Add | Op::Sub, _) => Some(Sort::Int),
            _ => None,
        }
    }

    fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        if let Term::App(_, args) = self {
            for a in args {
                a.visit(f);
            }
        }
    }

    pub fn map(&self, f: &mut impl FnMut(&Term) -> Option<Term>) -> Term {
        if let Some(t) = f(self) {
            return t;
        }
        match self {
            Term::App(op, args) => Term::App(op.clone(), args.iter().map(|a| a.map(f)).collect()),
            t => t.clone(),
        }
    }

    pub fn eval(&self, sigma: &Interpretation, locals: &[Constant]) -> Result<Constant, LogicError> {
        Ok(match self {
            Term::Const(c) => *c,
            Term::Var(v) => return Err(LogicError::NotClosed(v.to_string())),
            Term::Sym(s) => *sigma.get(s).ok_or_else(|| LogicError::MissingValue(s.to_string()))?,
            Term::Local(i) => *locals.get(*i).ok_or(LogicError::UnboundLocal(*i))?,
            Term::App(op, args) => {
                let vs = args
                    .iter()
                    .map(|a| a.eval(sigma, locals))
                    .collect::<Result<Vec<_>, _>>()?;
                let i = |k: usize| vs[k].as_int();
                match op {
                    Op::Eq => Constant::Bool(i(0) == i(1)),
                    Op::Ne => Constant::Bool(i(0) != i(1)),
                    Op::Lt => Constant::Bool(i(0) < i(1)),
                    Op::Le => Constant::Bool(i(0) <= i(1)),
                    Op::Add => Constant::Int(i(0).wrapping_add(i(1))),
                    Op::Sub => Constant::Int(i(0).wrapping_sub(i(1))),
                    Op::Uf(n) => return Err(LogicError::Uninterpreted(n.to_string())),
                }
            }
        })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(v) => write!(f, "{v}"),
            Term::Sym(s) => write!(f, "{s}"),
            Term::Local(i) => write!(f, "${i}"),
            Term::App(op, args) if op.is_predicate() || matches!(op, Op::Add | Op::Sub) => {
                write!(f, "({} {} {})", args[0], op.symbol(), args[1])
            }
            Term::App(op, args) => {
                write!(f, "{}(", op.symbol())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(Term),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

pub type Interpretation = BTreeMap<SymVar, Constant>;

fn cmp_atom(op: Op, a: Term, b: Term) -> Formula {
    if let (Term::Const(x), Term::Const(y)) = (&a, &b) {
        let (x, y) = (x.as_int(), y.as_int());
        let v = match op {
            Op::Eq => x == y,
            Op::Ne => x != y,
            Op::Lt => x < y,
            Op::Le => x <= y,
            _ => unreachable!(),
        };
        return Formula::constant(v);
    }
    if a == b {
        return Formula::constant(matches!(op, Op::Eq | Op::Le));
    }
    // equality is symmetric; keep a canonical argument order
    let (a, b) = if matches!(op, Op::Eq | Op::Ne) && b < a { (b, a) } else { (a, b) };
    Formula::Atom(Term::App(op, vec![a, b]))
}

impl Formula {
    pub fn constant(b: bool) -> Formula {
        if b {
            Formula::True
        } else {
            Formula::False
        }
    }

    pub fn eq(a: Term, b: Term) -> Formula {
        cmp_atom(Op::Eq, a, b)
    }
    pub fn ne(a: Term, b: Term) -> Formula {
        cmp_atom(Op::Ne, a, b)
    }
    pub fn lt(a: Term, b: Term) -> Formula {
        cmp_atom(Op::Lt, a, b)
    }
    pub fn le(a: Term, b: Term) -> Formula {
        cmp_atom(Op::Le, a, b)
    }

    /// An atom over an arbitrary boolean term, normalizing comparisons.
    pub fn atom(t: Term) -> Formula {
        match t {
            Term::Const(c) => Formula::constant(c.as_int() != 0),
            Term::App(op, mut args) if op.is_predicate() && args.len() == 2 => {
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                cmp_atom(op, a, b)
            }
            t => Formula::Atom(t),
        }
    }

    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(g) => *g,
            Formula::Atom(Term::App(op, args)) if op.is_predicate() => {
                let mut it = args.into_iter();
                let (a, b) = (it.next().unwrap(), it.next().unwrap());
                match op {
                    Op::Eq => cmp_atom(Op::Ne, a, b),
                    Op::Ne => cmp_atom(Op::Eq, a, b),
                    Op::Lt => cmp_atom(Op::Le, b, a),
                    Op::Le => cmp_atom(Op::Lt, b, a),
                    _ => unreachable!(),
                }
            }
            f => Formula::Not(Box::new(f)),
        }
    }

    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        Self::junction(parts, true)
    }

    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        Self::junction(parts, false)
    }

    pub fn and2(a: Formula, b: Formula) -> Formula {
        Self::and([a, b])
    }

    pub fn or2(a: Formula, b: Formula) -> Formula {
        Self::or([a, b])
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Self::or([Self::not(a), b])
    }

    fn junction(parts: impl IntoIterator<Item = Formula>, conj: bool) -> Formula {
        let (unit, zero) = if conj {
            (Formula::True, Formula::False)
        } else {
            (Formula::False, Formula::True)
        };
        let mut out: BTreeSet<Formula> = BTreeSet::new();
        let mut stack: Vec<Formula> = parts.into_iter().collect();
        while let Some(p) = stack.pop() {
            match p {
                Formula::And(xs) if conj => stack.extend(xs),
                Formula::Or(xs) if !conj => stack.extend(xs),
                p if p == unit => {}
                p if p == zero => return zero,
                p => {
                    out.insert(p);
                }
            }
        }
        if out.iter().any(|p| out.contains(&Formula::not(p.clone()))) {
            return zero;
        }
        match out.len() {
            0 => unit,
            1 => out.into_iter().next().unwrap(),
            _ if conj => Formula::And(out.into_iter().collect()),
            _ => Formula::Or(out.into_iter().collect()),
        }
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Formula::False)
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Formula::True)
    }

    pub fn visit_terms(&self, f: &mut impl FnMut(&Term)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(t) => t.visit(f),
            Formula::Not(g) => g.visit_terms(f),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.visit_terms(f)),
        }
    }

    /// Rebuilds the formula with `f` applied to every term, re-simplifying.
    pub fn map_terms(&self, f: &mut impl FnMut(&Term) -> Option<Term>) -> Formula {
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Atom(t) => Formula::atom(t.map(f)),
            Formula::Not(g) => Formula::not(g.map_terms(f)),
            Formula::And(xs) => Formula::and(xs.iter().map(|x| x.map_terms(f))),
            Formula::Or(xs) => Formula::or(xs.iter().map(|x| x.map_terms(f))),
        }
    }

    pub fn syms(&self) -> BTreeSet<SymVar> {
        let mut out = BTreeSet::new();
        self.visit_terms(&mut |t| {
            if let Term::Sym(s) = t {
                out.insert(s.clone());
            }
        });
        out
    }

    pub fn vars(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        self.visit_terms(&mut |t| {
            if let Term::Var(v) = t {
                out.insert(v.clone());
            }
        });
        out
    }

    pub fn max_local(&self) -> Option<usize> {
        let mut m = None;
        self.visit_terms(&mut |t| {
            if let Term::Local(i) = t {
                m = Some(m.map_or(*i, |x: usize| x.max(*i)));
            }
        });
        m
    }

    pub fn is_closed(&self) -> bool {
        let mut closed = true;
        self.visit_terms(&mut |t| closed &= !matches!(t, Term::Var(_)));
        closed
    }

    pub fn eval(&self, sigma: &Interpretation, locals: &[Constant]) -> Result<bool, LogicError> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(t) => t.eval(sigma, locals)?.as_int() != 0,
            Formula::Not(g) => !g.eval(sigma, locals)?,
            Formula::And(xs) => {
                for x in xs {
                    if !x.eval(sigma, locals)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(xs) => {
                for x in xs {
                    if x.eval(sigma, locals)? {
                        return Ok(true);
                    }
                }
                false
            }
        })
    }

    /// Replaces event-locals by the given terms.
    pub fn instantiate_locals(&self, locals: &[Term]) -> Formula {
        self.map_terms(&mut |t| match t {
            Term::Local(i) => locals.get(*i).cloned(),
            _ => None,
        })
    }

    pub fn apply_interpretation(&self, sigma: &Interpretation) -> Formula {
        self.map_terms(&mut |t| match t {
            Term::Sym(s) => sigma.get(s).map(|c| Term::Const(*c)),
            _ => None,
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(t) => write!(f, "{t}"),
            Formula::Not(g) => write!(f, "not ({g})"),
            Formula::And(xs) | Formula::Or(xs) => {
                let sep = if matches!(self, Formula::And(_)) { " && " } else { " || " };
                write!(f, "(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn compatible(a: &Sort, b: &Sort) -> bool {
    a == b || (a.int_encoded() && b == &Sort::Int) || (b.int_encoded() && a == &Sort::Int)
}

fn check_atom_sorts(t: &Term) -> Result<(), LogicError> {
    let mut res = Ok(());
    t.visit(&mut |t| {
        if let Term::App(op, args) = t {
            if res.is_err() {
                return;
            }
            let hints: Vec<Option<Sort>> = args.iter().map(Term::sort_hint).collect();
            match op {
                Op::Eq | Op::Ne => {
                    if let (Some(a), Some(b)) = (&hints[0], &hints[1]) {
                        if !compatible(a, b) {
                            res = Err(LogicError::SortMismatch(format!("{t}: {a} vs {b}")));
                        }
                    }
                }
                Op::Lt | Op::Le | Op::Add | Op::Sub => {
                    for h in hints.iter().flatten() {
                        if !matches!(h, Sort::Int) {
                            res = Err(LogicError::SortMismatch(format!("{t}: expected int, found {h}")));
                        }
                    }
                }
                Op::Uf(_) => {}
            }
        }
    });
    res
}

/// Replaces program variables by symbolic values.
pub fn substitute(f: &Formula, binding: &HashMap<Arc<str>, Term>) -> Result<Formula, LogicError> {
    let mut sub = |t: &Term| match t {
        Term::Var(v) => binding.get(v).cloned(),
        _ => None,
    };
    Ok(match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Atom(t) => {
            let t = t.map(&mut sub);
            check_atom_sorts(&t)?;
            Formula::atom(t)
        }
        Formula::Not(g) => Formula::not(substitute(g, binding)?),
        Formula::And(xs) => Formula::and(xs.iter().map(|x| substitute(x, binding)).collect::<Result<Vec<_>, _>>()?),
        Formula::Or(xs) => Formula::or(xs.iter().map(|x| substitute(x, binding)).collect::<Result<Vec<_>, _>>()?),
    })
}

pub fn eval_ground(f: &Formula, sigma: &Interpretation) -> Result<bool, LogicError> {
    f.eval(sigma, &[])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Interpretation),
    Unsat,
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid,
    Unknown(String),
}

pub trait SolverBackend: Send {
    fn check_sat(&mut self, f: &Formula, budget: Duration) -> SatResult;
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct SolverStats {
    pub calls: u64,
    pub sat: u64,
    pub unsat: u64,
    pub unknown: u64,
    pub time: Duration,
}

/// A solver session: a backend plus a per-query budget and statistics.
pub struct Solver {
    backend: Box<dyn SolverBackend>,
    pub budget: Duration,
    pub stats: SolverStats,
}

impl Solver {
    pub fn new(backend: Box<dyn SolverBackend>, budget: Duration) -> Solver {
        Solver { backend, budget, stats: SolverStats::default() }
    }

    pub fn bounded() -> Solver {
        Solver::new(Box::new(BoundedSolver::default()), Duration::from_secs(2))
    }

    pub fn check_sat(&mut self, f: &Formula) -> SatResult {
        match f {
            Formula::False => return SatResult::Unsat,
            Formula::True => return SatResult::Sat(Interpretation::new()),
            _ => {}
        }
        if !f.is_closed() || f.max_local().is_some() {
            return SatResult::Unknown(format!("formula not closed: {f}"));
        }
        let start = Instant::now();
        let r = self.backend.check_sat(f, self.budget);
        let r = match r {
            SatResult::Sat(mut m) => {
                for s in f.syms() {
                    m.entry(s.clone()).or_insert_with(|| Constant::of_sort(&s.sort, 0));
                }
                match eval_ground(f, &m) {
                    Ok(true) => SatResult::Sat(m),
                    _ => SatResult::Unknown("model does not satisfy formula".into()),
                }
            }
            r => r,
        };
        self.stats.calls += 1;
        self.stats.time += start.elapsed();
        match &r {
            SatResult::Sat(_) => self.stats.sat += 1,
            SatResult::Unsat => self.stats.unsat += 1,
            SatResult::Unknown(why) => {
                log::debug!("solver unknown: {why}");
                self.stats.unknown += 1
            }
        }
        r
    }

    pub fn check_valid(&mut self, f: &Formula) -> Validity {
        match self.check_sat(&Formula::not(f.clone())) {
            SatResult::Unsat => Validity::Valid,
            SatResult::Sat(_) => Validity::Invalid,
            SatResult::Unknown(w) => Validity::Unknown(w),
        }
    }
}

pub fn check_sat(f: &Formula, budget: Duration) -> SatResult {
    let mut s = Solver::bounded();
    s.budget = budget;
    s.check_sat(f)
}

pub fn check_valid(f: &Formula, budget: Duration) -> Validity {
    let mut s = Solver::bounded();
    s.budget = budget;
    s.check_valid(f)
}
