//! Symbolic regular expressions over symbolic events.
//!
//! Nodes are hash-consed: structurally equal expressions share one node, so
//! identity comparison doubles as structural equality.

pub mod symbolic;

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

use crate::events::{match_ground, GroundEvent, SymEvent};
use crate::logic::{Formula, Interpretation, Term};

pub use symbolic::{DistToDead, SreCtx, SreError};

#[derive(Debug)]
pub struct Node {
    id: u64,
    kind: Kind,
    nullable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Kind {
    Empty,
    Eps,
    Lit(SymEvent),
    Star(Sre),
    /// Binary concatenation; the left operand is never itself a concatenation.
    Concat(Sre, Sre),
    Not(Sre),
    And(Vec<Sre>),
    Or(Vec<Sre>),
}

#[derive(Clone)]
pub struct Sre(Arc<Node>);

impl PartialEq for Sre {
    fn eq(&self, other: &Self) -> bool {
        self.0.id == other.0.id
    }
}
impl Eq for Sre {}
impl Hash for Sre {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.id.hash(state)
    }
}
impl PartialOrd for Sre {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Sre {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.id.cmp(&other.0.id)
    }
}

impl fmt::Debug for Sre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

pub type SymTrace = Vec<SymEvent>;

struct Table {
    nodes: HashMap<Kind, Sre>,
    next_id: u64,
}

fn table() -> &'static Mutex<Table> {
    static TABLE: OnceLock<Mutex<Table>> = OnceLock::new();
    TABLE.get_or_init(|| Mutex::new(Table { nodes: HashMap::new(), next_id: 0 }))
}

fn intern(kind: Kind) -> Sre {
    let mut t = table().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(s) = t.nodes.get(&kind) {
        return s.clone();
    }
    let nullable = match &kind {
        Kind::Empty | Kind::Lit(_) => false,
        Kind::Eps | Kind::Star(_) => true,
        Kind::Concat(a, b) => a.nullable() && b.nullable(),
        Kind::Not(a) => !a.nullable(),
        Kind::And(xs) => xs.iter().all(Sre::nullable),
        Kind::Or(xs) => xs.iter().any(Sre::nullable),
    };
    let id = t.next_id;
    t.next_id += 1;
    let s = Sre(Arc::new(Node { id, kind: kind.clone(), nullable }));
    t.nodes.insert(kind, s.clone());
    s
}

impl Sre {
    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn nullable(&self) -> bool {
        self.0.nullable
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.kind(), Kind::Empty)
    }

    pub fn is_eps(&self) -> bool {
        matches!(self.kind(), Kind::Eps)
    }

    /// The universal language `.*`.
    pub fn is_universal(&self) -> bool {
        matches!(self.kind(), Kind::Star(r) if matches!(r.kind(), Kind::Lit(l) if l.is_top()))
    }

    pub fn empty() -> Sre {
        intern(Kind::Empty)
    }

    pub fn eps() -> Sre {
        intern(Kind::Eps)
    }

    pub fn lit(ev: SymEvent) -> Sre {
        if ev.is_bottom() {
            return Sre::empty();
        }
        intern(Kind::Lit(ev))
    }

    /// The single-event wildcard `.`.
    pub fn any() -> Sre {
        Sre::lit(SymEvent::top())
    }

    /// `.*`
    pub fn universal() -> Sre {
        intern(Kind::Star(Sre::any()))
    }

    pub fn star(r: Sre) -> Sre {
        match r.kind() {
            Kind::Empty | Kind::Eps => Sre::eps(),
            Kind::Star(_) => r,
            _ if r.is_universal() => r,
            _ => intern(Kind::Star(r)),
        }
    }

    pub fn concat(a: Sre, b: Sre) -> Sre {
        if a.is_empty() || b.is_empty() {
            return Sre::empty();
        }
        if a.is_eps() {
            return b;
        }
        if b.is_eps() {
            return a;
        }
        if let Kind::Concat(a1, a2) = a.kind() {
            return Sre::concat(a1.clone(), Sre::concat(a2.clone(), b));
        }
        if a.is_universal() && b.is_universal() {
            return a;
        }
        intern(Kind::Concat(a, b))
    }

    pub fn concat_all(parts: impl IntoIterator<Item = Sre>) -> Sre {
        let parts: Vec<Sre> = parts.into_iter().collect();
        parts.into_iter().rev().fold(Sre::eps(), |acc, p| Sre::concat(p, acc))
    }

    pub fn not(r: Sre) -> Sre {
        match r.kind() {
            Kind::Not(inner) => inner.clone(),
            Kind::Empty => Sre::universal(),
            _ if r.is_universal() => Sre::empty(),
            _ => intern(Kind::Not(r)),
        }
    }

    pub fn and(parts: impl IntoIterator<Item = Sre>) -> Sre {
        let mut flat: Vec<Sre> = Vec::new();
        let mut stack: Vec<Sre> = parts.into_iter().collect();
        let mut lit: Option<SymEvent> = None;
        while let Some(p) = stack.pop() {
            match p.kind() {
                Kind::Empty => return Sre::empty(),
                Kind::And(xs) => stack.extend(xs.iter().cloned()),
                Kind::Lit(l) => lit = Some(lit.map_or_else(|| l.clone(), |m| m.meet(l))),
                _ if p.is_universal() => {}
                _ => flat.push(p),
            }
        }
        if let Some(l) = lit {
            if l.is_bottom() {
                return Sre::empty();
            }
            flat.push(Sre::lit(l));
        }
        flat.sort();
        flat.dedup();
        if flat.iter().any(|p| flat.binary_search(&Sre::not(p.clone())).is_ok()) {
            return Sre::empty();
        }
        if flat.iter().any(Sre::is_eps) {
            return if flat.iter().all(Sre::nullable) { Sre::eps() } else { Sre::empty() };
        }
        match flat.len() {
            0 => Sre::universal(),
            1 => flat.pop().unwrap(),
            _ => intern(Kind::And(flat)),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Sre>) -> Sre {
        let mut flat: Vec<Sre> = Vec::new();
        let mut stack: Vec<Sre> = parts.into_iter().collect();
        let mut lit: Option<SymEvent> = None;
        while let Some(p) = stack.pop() {
            match p.kind() {
                Kind::Empty => {}
                Kind::Or(xs) => stack.extend(xs.iter().cloned()),
                Kind::Lit(l) => lit = Some(lit.map_or_else(|| l.clone(), |m| m.join(l))),
                _ if p.is_universal() => return p,
                _ => flat.push(p),
            }
        }
        if let Some(l) = lit {
            flat.push(Sre::lit(l));
        }
        flat.sort();
        flat.dedup();
        if flat.iter().any(|p| flat.binary_search(&Sre::not(p.clone())).is_ok()) {
            return Sre::universal();
        }
        match flat.len() {
            0 => Sre::empty(),
            1 => flat.pop().unwrap(),
            _ => intern(Kind::Or(flat)),
        }
    }

    pub fn and2(a: Sre, b: Sre) -> Sre {
        Sre::and([a, b])
    }

    pub fn or2(a: Sre, b: Sre) -> Sre {
        Sre::or([a, b])
    }

    /// Rebuilds the expression with every literal replaced by `f(literal)`.
    pub fn map_lits(&self, f: &mut impl FnMut(&SymEvent) -> SymEvent) -> Sre {
        let mut memo = HashMap::new();
        self.map_lits_memo(f, &mut memo)
    }

    fn map_lits_memo(&self, f: &mut impl FnMut(&SymEvent) -> SymEvent, memo: &mut HashMap<u64, Sre>) -> Sre {
        if let Some(r) = memo.get(&self.id()) {
            return r.clone();
        }
        let out = match self.kind() {
            Kind::Empty | Kind::Eps => self.clone(),
            Kind::Lit(l) => Sre::lit(f(l)),
            Kind::Star(r) => Sre::star(r.map_lits_memo(f, memo)),
            Kind::Concat(a, b) => Sre::concat(a.map_lits_memo(f, memo), b.map_lits_memo(f, memo)),
            Kind::Not(r) => Sre::not(r.map_lits_memo(f, memo)),
            Kind::And(xs) => Sre::and(xs.iter().map(|x| x.map_lits_memo(f, memo)).collect::<Vec<_>>()),
            Kind::Or(xs) => Sre::or(xs.iter().map(|x| x.map_lits_memo(f, memo)).collect::<Vec<_>>()),
        };
        memo.insert(self.id(), out.clone());
        out
    }

    pub fn map_terms(&self, f: &mut impl FnMut(&Term) -> Option<Term>) -> Sre {
        self.map_lits(&mut |l| l.map_qualifiers(&mut |q| q.map_terms(f)))
    }

    pub fn apply_interpretation(&self, sigma: &Interpretation) -> Sre {
        self.map_lits(&mut |l| l.apply_interpretation(sigma))
    }

    pub fn visit_lits(&self, f: &mut impl FnMut(&SymEvent)) {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(r) = stack.pop() {
            if !seen.insert(r.id()) {
                continue;
            }
            match r.kind() {
                Kind::Empty | Kind::Eps => {}
                Kind::Lit(l) => f(l),
                Kind::Star(a) | Kind::Not(a) => stack.push(a.clone()),
                Kind::Concat(a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                Kind::And(xs) | Kind::Or(xs) => stack.extend(xs.iter().cloned()),
            }
        }
    }

    pub fn syms(&self) -> std::collections::BTreeSet<crate::logic::SymVar> {
        let mut out = std::collections::BTreeSet::new();
        self.visit_lits(&mut |l| out.extend(l.syms()));
        out
    }

    pub fn is_closed(&self) -> bool {
        let mut closed = true;
        self.visit_lits(&mut |l| l.visit_qualifiers(&mut |q| closed &= q.is_closed()));
        closed
    }

    pub fn size(&self) -> usize {
        match self.kind() {
            Kind::Empty | Kind::Eps | Kind::Lit(_) => 1,
            Kind::Star(a) | Kind::Not(a) => 1 + a.size(),
            Kind::Concat(a, b) => 1 + a.size() + b.size(),
            Kind::And(xs) | Kind::Or(xs) => 1 + xs.iter().map(Sre::size).sum::<usize>(),
        }
    }

    /// Classic derivative with respect to a ground event.
    pub fn deriv_ground(&self, alpha: &GroundEvent, sigma: &Interpretation) -> Sre {
        self.deriv_by(&mut |l| match_ground(l, alpha, sigma))
    }

    /// Derivative by a letter given as its membership test on literals.
    pub fn deriv_by(&self, mem: &mut impl FnMut(&SymEvent) -> bool) -> Sre {
        match self.kind() {
            Kind::Empty | Kind::Eps => Sre::empty(),
            Kind::Lit(l) => {
                if mem(l) {
                    Sre::eps()
                } else {
                    Sre::empty()
                }
            }
            Kind::Star(r) => Sre::concat(r.deriv_by(mem), self.clone()),
            Kind::Concat(a, b) => {
                let left = Sre::concat(a.deriv_by(mem), b.clone());
                if a.nullable() {
                    Sre::or2(left, b.deriv_by(mem))
                } else {
                    left
                }
            }
            Kind::Not(r) => Sre::not(r.deriv_by(mem)),
            Kind::And(xs) => Sre::and(xs.iter().map(|x| x.deriv_by(mem)).collect::<Vec<_>>()),
            Kind::Or(xs) => Sre::or(xs.iter().map(|x| x.deriv_by(mem)).collect::<Vec<_>>()),
        }
    }
}

/// Membership of a ground trace: fold the classic derivative and test nullability.
pub fn ground_match(r: &Sre, trace: &[GroundEvent], sigma: &Interpretation) -> bool {
    let mut cur = r.clone();
    for a in trace {
        if cur.is_empty() {
            return false;
        }
        if cur.is_universal() {
            return true;
        }
        cur = cur.deriv_ground(a, sigma);
    }
    cur.nullable()
}

/// Ground matching against a fixed finite alphabet with memoized derivatives.
pub struct GroundMatcher<'a> {
    alphabet: &'a [GroundEvent],
    sigma: &'a Interpretation,
    memo: HashMap<(u64, usize), Sre>,
}

impl<'a> GroundMatcher<'a> {
    pub fn new(alphabet: &'a [GroundEvent], sigma: &'a Interpretation) -> Self {
        GroundMatcher { alphabet, sigma, memo: HashMap::new() }
    }

    /// Derivative by the alphabet letter at index `i`.
    pub fn step(&mut self, r: &Sre, i: usize) -> Sre {
        if let Some(d) = self.memo.get(&(r.id(), i)) {
            return d.clone();
        }
        let d = r.deriv_ground(&self.alphabet[i], self.sigma);
        self.memo.insert((r.id(), i), d.clone());
        d
    }

    pub fn matches(&mut self, r: &Sre, word: &[usize]) -> bool {
        let mut cur = r.clone();
        for &i in word {
            cur = self.step(&cur, i);
        }
        cur.nullable()
    }

    /// All accepted words (as letter indices) up to `max_len`, in length-lexicographic order.
    pub fn words(&mut self, r: &Sre, max_len: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut level: Vec<(Vec<usize>, Sre)> = vec![(Vec::new(), r.clone())];
        for len in 0..=max_len {
            let mut next = Vec::new();
            for (w, s) in level {
                if s.nullable() {
                    out.push(w.clone());
                }
                if len == max_len || s.is_empty() {
                    continue;
                }
                for i in 0..self.alphabet.len() {
                    let mut w2 = w.clone();
                    w2.push(i);
                    let d = self.step(&s, i);
                    next.push((w2, d));
                }
            }
            level = next;
        }
        out
    }
}

/// Every accepted word over `alphabet` up to `max_len`.
pub fn ground_words(r: &Sre, alphabet: &[GroundEvent], max_len: usize, sigma: &Interpretation) -> Vec<Vec<GroundEvent>> {
    let mut m = GroundMatcher::new(alphabet, sigma);
    m.words(r, max_len)
        .into_iter()
        .map(|w| w.into_iter().map(|i| alphabet[i].clone()).collect())
        .collect()
}

fn prec(r: &Sre) -> u8 {
    match r.kind() {
        Kind::Or(_) => 0,
        Kind::And(_) => 1,
        Kind::Concat(..) => 2,
        Kind::Not(_) => 3,
        _ => 4,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, r: &Sre, min: u8) -> fmt::Result {
    if prec(r) < min {
        write!(f, "(")?;
        write!(f, "{r}")?;
        return write!(f, ")");
    }
    write!(f, "{r}")
}

impl fmt::Display for Sre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Kind::Empty => write!(f, "empty"),
            Kind::Eps => write!(f, "eps"),
            Kind::Lit(l) => {
                if l.is_top() || !l.others_included() && l.atoms().len() == 1 {
                    write!(f, "{l}")
                } else {
                    write!(f, "({l})")
                }
            }
            Kind::Star(r) => {
                write_at(f, r, 4)?;
                write!(f, "*")
            }
            Kind::Concat(a, b) => {
                write_at(f, a, 3)?;
                write!(f, " ; ")?;
                write_at(f, b, 2)
            }
            Kind::Not(r) => {
                write!(f, "!")?;
                write_at(f, r, 4)
            }
            Kind::And(xs) | Kind::Or(xs) => {
                let (sep, p) = if matches!(self.kind(), Kind::And(_)) { (" /\\ ", 2) } else { (" \\/ ", 1) };
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    write_at(f, x, p)?;
                }
                Ok(())
            }
        }
    }
}

/// Conjunction of a formula with the constraint of every event of a trace.
pub fn trace_constraint(
    trace: &[SymEvent],
    delta: &crate::events::EffectSignature,
) -> (Formula, Vec<Vec<crate::events::EventWitness>>) {
    let mut parts = Vec::new();
    let mut wits = Vec::new();
    for ev in trace {
        let (c, w) = crate::events::constr_event_with_locals(ev, delta);
        parts.push(c);
        wits.push(w);
    }
    (Formula::and(parts), wits)
}

/// Pointwise meet of two traces of equal length; None when incompatible.
pub fn trace_conj(a: &[SymEvent], b: &[SymEvent]) -> Option<SymTrace> {
    if a.len() != b.len() {
        return None;
    }
    let mut out = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let m = x.meet(y);
        if m.is_bottom() {
            return None;
        }
        out.push(m);
    }
    Some(out)
}
