//! Symbolic events in stratified form: one qualifier per effect name plus a
//! flag admitting every other name.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::logic::{fresh_sym, Constant, Formula, Interpretation, Solver, SymVar, Sort, Term, Validity};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EffectDecl {
    pub name: Arc<str>,
    pub args: Vec<Sort>,
    pub ret: Sort,
}

impl EffectDecl {
    pub fn new(name: &str, args: Vec<Sort>, ret: Sort) -> EffectDecl {
        EffectDecl { name: Arc::from(name), args, ret }
    }

    /// Sorts of the event-locals, arguments first and the return value last.
    pub fn local_sorts(&self) -> impl Iterator<Item = &Sort> {
        self.args.iter().chain(std::iter::once(&self.ret))
    }
}

/// The effect signature of the representation type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EffectSignature {
    pub effects: Vec<EffectDecl>,
}

impl EffectSignature {
    pub fn new(effects: Vec<EffectDecl>) -> EffectSignature {
        EffectSignature { effects }
    }

    pub fn get(&self, name: &str) -> Option<&EffectDecl> {
        self.effects.iter().find(|e| &*e.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &Arc<str>> {
        self.effects.iter().map(|e| &e.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct GroundEvent {
    pub fname: Arc<str>,
    pub args: Vec<Constant>,
    pub ret: Constant,
}

impl GroundEvent {
    pub fn new(fname: &str, args: Vec<Constant>, ret: Constant) -> GroundEvent {
        GroundEvent { fname: Arc::from(fname), args, ret }
    }

    fn locals(&self) -> Vec<Constant> {
        let mut v = self.args.clone();
        v.push(self.ret);
        v
    }
}

impl fmt::Display for GroundEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <- {}", self.ret, self.fname)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

pub type GroundTrace = Vec<GroundEvent>;

/// An event pattern with named arguments, as written in specifications.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomicEvent {
    pub fname: Arc<str>,
    pub args: Vec<Arc<str>>,
    pub ret: Arc<str>,
    pub qualifier: Formula,
}

impl AtomicEvent {
    /// Replaces the argument and return names by positional locals.
    pub fn to_event(&self) -> SymEvent {
        let q = self.qualifier.map_terms(&mut |t| match t {
            Term::Var(v) => {
                if *v == self.ret {
                    return Some(Term::Local(self.args.len()));
                }
                self.args.iter().position(|a| a == v).map(Term::Local)
            }
            _ => None,
        });
        SymEvent::atom(&self.fname, q)
    }
}

/// A stratified symbolic event.
///
/// Names absent from `atoms` carry the qualifier `others` (true or false).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymEvent {
    atoms: BTreeMap<Arc<str>, Formula>,
    others: bool,
}

impl SymEvent {
    pub fn bottom() -> SymEvent {
        SymEvent { atoms: BTreeMap::new(), others: false }
    }

    pub fn top() -> SymEvent {
        SymEvent { atoms: BTreeMap::new(), others: true }
    }

    pub fn atom(fname: &str, q: Formula) -> SymEvent {
        let mut atoms = BTreeMap::new();
        atoms.insert(Arc::from(fname), q);
        SymEvent::normalized(atoms, false)
    }

    pub fn from_parts(atoms: BTreeMap<Arc<str>, Formula>, others: bool) -> SymEvent {
        SymEvent::normalized(atoms, others)
    }

    fn normalized(mut atoms: BTreeMap<Arc<str>, Formula>, others: bool) -> SymEvent {
        let default = Formula::constant(others);
        atoms.retain(|_, q| *q != default);
        SymEvent { atoms, others }
    }

    pub fn atoms(&self) -> &BTreeMap<Arc<str>, Formula> {
        &self.atoms
    }

    pub fn others_included(&self) -> bool {
        self.others
    }

    /// Qualifier attached to `fname`.
    pub fn qualifier(&self, fname: &str) -> Formula {
        self.atoms.get(fname).cloned().unwrap_or_else(|| Formula::constant(self.others))
    }

    pub fn is_bottom(&self) -> bool {
        self.atoms.is_empty() && !self.others
    }

    pub fn is_top(&self) -> bool {
        self.atoms.is_empty() && self.others
    }

    /// Syntactic emptiness relative to a signature.
    pub fn is_empty_in(&self, delta: &EffectSignature) -> bool {
        if self.is_bottom() {
            return true;
        }
        delta.names().all(|n| self.qualifier(n).is_false())
    }

    pub fn complement(&self) -> SymEvent {
        let atoms = self.atoms.iter().map(|(k, q)| (k.clone(), Formula::not(q.clone()))).collect();
        SymEvent::normalized(atoms, !self.others)
    }

    fn combine(&self, other: &SymEvent, conj: bool) -> SymEvent {
        let mut atoms = BTreeMap::new();
        for k in self.atoms.keys().chain(other.atoms.keys()) {
            if atoms.contains_key(k) {
                continue;
            }
            let (a, b) = (self.qualifier(k), other.qualifier(k));
            let q = if conj { Formula::and2(a, b) } else { Formula::or2(a, b) };
            atoms.insert(k.clone(), q);
        }
        let others = if conj { self.others && other.others } else { self.others || other.others };
        SymEvent::normalized(atoms, others)
    }

    pub fn meet(&self, other: &SymEvent) -> SymEvent {
        if self.is_top() || other.is_bottom() {
            return other.clone();
        }
        if other.is_top() || self.is_bottom() {
            return self.clone();
        }
        self.combine(other, true)
    }

    pub fn join(&self, other: &SymEvent) -> SymEvent {
        if self.is_bottom() || other.is_top() {
            return other.clone();
        }
        if other.is_bottom() || self.is_top() {
            return self.clone();
        }
        self.combine(other, false)
    }

    pub fn map_qualifiers(&self, f: &mut impl FnMut(&Formula) -> Formula) -> SymEvent {
        let atoms = self.atoms.iter().map(|(k, q)| (k.clone(), f(q))).collect();
        SymEvent::normalized(atoms, self.others)
    }

    pub fn visit_qualifiers(&self, f: &mut impl FnMut(&Formula)) {
        self.atoms.values().for_each(f)
    }

    pub fn apply_interpretation(&self, sigma: &Interpretation) -> SymEvent {
        self.map_qualifiers(&mut |q| q.apply_interpretation(sigma))
    }

    pub fn syms(&self) -> std::collections::BTreeSet<SymVar> {
        let mut out = std::collections::BTreeSet::new();
        for q in self.atoms.values() {
            out.extend(q.syms());
        }
        out
    }
}

impl fmt::Display for SymEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_top() {
            return write!(f, ".");
        }
        if self.is_bottom() {
            return write!(f, "~.");
        }
        let shown = if self.others { self.complement() } else { self.clone() };
        if self.others {
            write!(f, "~(")?;
        }
        for (i, (k, q)) in shown.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            if q.is_true() {
                write!(f, "<{k}>")?;
            } else {
                write!(f, "<{k} | {q}>")?;
            }
        }
        if self.others {
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Three-valued answer of an inclusion query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tri {
    True,
    False,
    Unknown,
}

pub fn fresh_locals(decl: &EffectDecl) -> Vec<SymVar> {
    let n = decl.args.len();
    decl.local_sorts()
        .enumerate()
        .map(|(i, s)| {
            let hint = if i == n { format!("{}.ret", decl.name) } else { format!("{}.{i}", decl.name) };
            fresh_sym(s.clone(), &hint)
        })
        .collect()
}

fn syntactically_implies(a: &Formula, b: &Formula) -> bool {
    if a == b || a.is_false() || b.is_true() {
        return true;
    }
    let conjuncts = |f: &Formula| match f {
        Formula::And(xs) => xs.clone(),
        f => vec![f.clone()],
    };
    let ca = conjuncts(a);
    conjuncts(b).iter().all(|x| ca.contains(x))
}

/// Whether every event admitted by `sub` is admitted by `sup`.
///
/// Checked per effect name: the qualifier of `sub` must imply the qualifier of
/// `sup` for all argument values.
pub fn includes(sub: &SymEvent, sup: &SymEvent, delta: &EffectSignature, solver: &mut Solver) -> Tri {
    if sub.is_bottom() || sup.is_top() || sub == sup {
        return Tri::True;
    }
    let mut unknown = false;
    for decl in &delta.effects {
        let (a, b) = (sub.qualifier(&decl.name), sup.qualifier(&decl.name));
        if syntactically_implies(&a, &b) {
            continue;
        }
        if b.is_false() && !a.is_false() && a.syms().is_empty() && a.max_local().is_none() {
            return Tri::False;
        }
        let locals: Vec<Term> = fresh_locals(decl).iter().map(Term::sym).collect();
        let goal = Formula::implies(a.instantiate_locals(&locals), b.instantiate_locals(&locals));
        match solver.check_valid(&goal) {
            Validity::Valid => {}
            Validity::Invalid => return Tri::False,
            Validity::Unknown(_) => unknown = true,
        }
    }
    if unknown {
        Tri::Unknown
    } else {
        Tri::True
    }
}

/// Locals introduced for one atom of an event constraint.
#[derive(Debug, Clone)]
pub struct EventWitness {
    pub fname: Arc<str>,
    pub locals: Vec<SymVar>,
}

/// Constraint of an event: some atom's qualifier holds for fresh locals.
pub fn constr_event(ev: &SymEvent, delta: &EffectSignature) -> Formula {
    constr_event_with_locals(ev, delta).0
}

pub fn constr_event_with_locals(ev: &SymEvent, delta: &EffectSignature) -> (Formula, Vec<EventWitness>) {
    let mut parts = Vec::new();
    let mut wits = Vec::new();
    for (k, q) in &ev.atoms {
        let Some(decl) = delta.get(k) else { continue };
        if q.is_false() {
            continue;
        }
        let locals = fresh_locals(decl);
        let terms: Vec<Term> = locals.iter().map(Term::sym).collect();
        parts.push(q.instantiate_locals(&terms));
        wits.push(EventWitness { fname: k.clone(), locals });
    }
    if ev.others && delta.names().any(|n| !ev.atoms.contains_key(n)) {
        parts.push(Formula::True);
    }
    (Formula::or(parts), wits)
}

pub fn try_match_ground(ev: &SymEvent, alpha: &GroundEvent, sigma: &Interpretation) -> Result<bool, crate::logic::LogicError> {
    ev.qualifier(&alpha.fname).eval(sigma, &alpha.locals())
}

pub fn match_ground(ev: &SymEvent, alpha: &GroundEvent, sigma: &Interpretation) -> bool {
    match try_match_ground(ev, alpha, sigma) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("ground match of {ev} against {alpha} failed: {e}");
            false
        }
    }
}

/// Ground events of a signature whose int-encoded locals range over `values`.
pub fn ground_alphabet(delta: &EffectSignature, values: &[i64]) -> Vec<GroundEvent> {
    let mut out = Vec::new();
    for d in &delta.effects {
        let sorts: Vec<&Sort> = d.local_sorts().collect();
        let choices: Vec<Vec<Constant>> = sorts
            .iter()
            .map(|s| match s {
                Sort::Unit => vec![Constant::Unit],
                Sort::Bool => vec![Constant::Bool(false), Constant::Bool(true)],
                _ => values.iter().map(|v| Constant::Int(*v)).collect(),
            })
            .collect();
        let mut idx = vec![0usize; choices.len()];
        loop {
            let locals: Vec<Constant> = idx.iter().zip(&choices).map(|(i, c)| c[*i]).collect();
            let (args, ret) = locals.split_at(locals.len() - 1);
            out.push(GroundEvent { fname: d.name.clone(), args: args.to_vec(), ret: ret[0] });
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < choices[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::fresh_sym;

    fn delta() -> EffectSignature {
        EffectSignature::new(vec![
            EffectDecl::new("put", vec![Sort::Int, Sort::Int], Sort::Unit),
            EffectDecl::new("get", vec![Sort::Int], Sort::Int),
        ])
    }

    fn eq(a: Term, b: Term) -> Formula {
        Formula::eq(a, b)
    }

    #[test]
    fn complement_flips_others() {
        let a = fresh_sym(Sort::Int, "a");
        let phi = eq(Term::Local(0), Term::sym(&a));
        let l = SymEvent::atom("put", phi.clone());
        let c = l.complement();
        assert!(c.others_included());
        assert_eq!(c.qualifier("put"), Formula::not(phi));
        assert_eq!(c.qualifier("get"), Formula::True);
        assert!(SymEvent::bottom().complement().is_top());
        assert_eq!(l.complement().complement(), l);
    }

    #[test]
    fn meet_and_join() {
        let (a, b) = (fresh_sym(Sort::Int, "a"), fresh_sym(Sort::Int, "b"));
        let ka = SymEvent::atom("put", eq(Term::Local(0), Term::sym(&a)));
        let vb = SymEvent::atom("put", eq(Term::Local(1), Term::sym(&b)));
        let m = ka.meet(&vb);
        assert_eq!(
            m.qualifier("put"),
            Formula::and2(eq(Term::Local(0), Term::sym(&a)), eq(Term::Local(1), Term::sym(&b)))
        );
        let put = SymEvent::atom("put", Formula::True);
        let get = SymEvent::atom("get", Formula::True);
        assert!(put.meet(&get).is_bottom());
        let j = put.join(&get);
        assert_eq!(j.atoms().len(), 2);
        assert_eq!(ka.join(&SymEvent::bottom()), ka);
        let kb = SymEvent::atom("put", eq(Term::Local(0), Term::sym(&b)));
        assert_eq!(
            ka.join(&kb).qualifier("put"),
            Formula::or2(eq(Term::Local(0), Term::sym(&a)), eq(Term::Local(0), Term::sym(&b)))
        );
    }

    #[test]
    fn inclusion() {
        let d = delta();
        let mut s = Solver::bounded();
        let (a, b) = (fresh_sym(Sort::Int, "a"), fresh_sym(Sort::Int, "b"));
        let ka = eq(Term::Local(0), Term::sym(&a));
        let vb = eq(Term::Local(1), Term::sym(&b));
        let both = SymEvent::atom("put", Formula::and2(ka.clone(), vb));
        let just = SymEvent::atom("put", ka.clone());
        assert_eq!(includes(&both, &just, &d, &mut s), Tri::True);
        let not_a = SymEvent::atom("put", Formula::not(ka));
        assert_eq!(includes(&just, &not_a, &d, &mut s), Tri::False);
        let get = SymEvent::atom("get", Formula::True);
        let not_put = SymEvent::atom("put", Formula::True).complement();
        assert_eq!(includes(&get, &not_put, &d, &mut s), Tri::True);
        assert_eq!(includes(&not_put, &get, &d, &mut s), Tri::True);
        assert_eq!(includes(&SymEvent::top(), &get, &d, &mut s), Tri::False);
    }

    #[test]
    fn constraints() {
        let d = delta();
        let (a, b) = (fresh_sym(Sort::Int, "a"), fresh_sym(Sort::Int, "b"));
        let q = Formula::and2(eq(Term::Local(0), Term::sym(&a)), eq(Term::Local(1), Term::sym(&b)));
        let (c, w) = constr_event_with_locals(&SymEvent::atom("put", q), &d);
        assert_eq!(w.len(), 1);
        let (k, v) = (&w[0].locals[0], &w[0].locals[1]);
        assert_eq!(c, Formula::and2(eq(Term::sym(k), Term::sym(&a)), eq(Term::sym(v), Term::sym(&b))));
        assert_eq!(constr_event(&SymEvent::bottom(), &d), Formula::False);
        assert_eq!(constr_event(&SymEvent::top(), &d), Formula::True);
    }

    #[test]
    fn ground_matching() {
        let a = fresh_sym(Sort::Int, "a");
        let l = SymEvent::atom("put", eq(Term::Local(0), Term::sym(&a)));
        let alpha = GroundEvent::new("put", vec![Constant::Int(3), Constant::Int(0)], Constant::Unit);
        let mut s = Interpretation::new();
        s.insert(a.clone(), Constant::Int(3));
        assert!(match_ground(&l, &alpha, &s));
        s.insert(a, Constant::Int(4));
        assert!(!match_ground(&l, &alpha, &s));
        assert!(match_ground(&SymEvent::top(), &alpha, &s));
    }

    #[test]
    fn alphabet_enumeration() {
        let sigma = ground_alphabet(&delta(), &[0, 1, 2]);
        assert_eq!(sigma.len(), 9 + 9);
    }
}
