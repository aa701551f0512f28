//! Finite-trace LTL: AST, translation to SREs and a direct evaluator.

use std::fmt;

use crate::events::{match_ground, EffectSignature, GroundEvent, SymEvent};
use crate::logic::Interpretation;
use crate::sre::Sre;
use crate::syntax::{PResult, Parser};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ltl {
    Lit(SymEvent),
    Not(Box<Ltl>),
    And(Box<Ltl>, Box<Ltl>),
    Or(Box<Ltl>, Box<Ltl>),
    X(Box<Ltl>),
    F(Box<Ltl>),
    G(Box<Ltl>),
    U(SymEvent, Box<Ltl>),
    W(SymEvent, Box<Ltl>),
}

/// `•*·R`
fn eventually(r: Sre) -> Sre {
    Sre::concat(Sre::universal(), r)
}

pub fn to_sre(f: &Ltl) -> Sre {
    match f {
        Ltl::Lit(l) => Sre::concat(Sre::lit(l.clone()), Sre::universal()),
        Ltl::Not(a) => Sre::not(to_sre(a)),
        Ltl::And(a, b) => Sre::and2(to_sre(a), to_sre(b)),
        Ltl::Or(a, b) => Sre::or2(to_sre(a), to_sre(b)),
        Ltl::X(a) => Sre::concat(Sre::any(), to_sre(a)),
        Ltl::F(a) => eventually(to_sre(a)),
        // only non-empty suffixes are constrained
        Ltl::G(a) => {
            let nonempty = Sre::concat(Sre::any(), Sre::universal());
            Sre::not(eventually(Sre::and2(Sre::not(to_sre(a)), nonempty)))
        }
        Ltl::U(l, a) => Sre::concat(Sre::star(Sre::lit(l.clone())), to_sre(a)),
        Ltl::W(l, a) => {
            let r = to_sre(a);
            Sre::or2(
                Sre::not(eventually(r.clone())),
                Sre::concat(Sre::star(Sre::lit(l.clone())), r),
            )
        }
    }
}

/// Direct semantics on a ground trace.
pub fn eval_ltlf(f: &Ltl, trace: &[GroundEvent], sigma: &Interpretation) -> bool {
    holds(f, trace, 0, sigma)
}

fn holds(f: &Ltl, t: &[GroundEvent], i: usize, s: &Interpretation) -> bool {
    let n = t.len();
    let lit = |l: &SymEvent, k: usize| k < n && match_ground(l, &t[k], s);
    match f {
        Ltl::Lit(l) => lit(l, i),
        Ltl::Not(a) => !holds(a, t, i, s),
        Ltl::And(a, b) => holds(a, t, i, s) && holds(b, t, i, s),
        Ltl::Or(a, b) => holds(a, t, i, s) || holds(b, t, i, s),
        Ltl::X(a) => i < n && holds(a, t, i + 1, s),
        Ltl::F(a) => (i..=n).any(|j| holds(a, t, j, s)),
        Ltl::G(a) => (i..n).all(|j| holds(a, t, j, s)),
        Ltl::U(l, a) => until(l, a, t, i, s),
        Ltl::W(l, a) => until(l, a, t, i, s) || (i..=n).all(|j| !holds(a, t, j, s)),
    }
}

fn until(l: &SymEvent, a: &Ltl, t: &[GroundEvent], i: usize, s: &Interpretation) -> bool {
    for j in i..=t.len() {
        if holds(a, t, j, s) {
            return true;
        }
        if j == t.len() || !match_ground(l, &t[j], s) {
            return false;
        }
    }
    false
}

pub fn parse_ltlf(text: &str, delta: Option<&EffectSignature>) -> PResult<Ltl> {
    let mut p = Parser::new(text)?;
    p.delta = delta.cloned();
    let f = p.ltl()?;
    p.expect_eof()?;
    Ok(f)
}

// `~(..)` would read back as formula negation, so complements are spelled out
fn lit_str(l: &SymEvent) -> String {
    if l.is_top() || l.is_bottom() || !l.others_included() && l.atoms().len() == 1 {
        return l.to_string();
    }
    if !l.others_included() {
        return format!("({l})");
    }
    let parts: Vec<String> = l
        .complement()
        .atoms()
        .iter()
        .map(|(k, q)| if q.is_true() { format!("~<{k}>") } else { format!("~<{k} | {q}>") })
        .collect();
    if parts.len() == 1 {
        parts[0].clone()
    } else {
        format!("({})", parts.join(" & "))
    }
}

impl fmt::Display for Ltl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ltl::Lit(l) => write!(f, "{}", lit_str(l)),
            Ltl::Not(a) => write!(f, "~({a})"),
            Ltl::And(a, b) => write!(f, "({a} /\\ {b})"),
            Ltl::Or(a, b) => write!(f, "({a} \\/ {b})"),
            Ltl::X(a) => write!(f, "(X {a})"),
            Ltl::F(a) => write!(f, "(F {a})"),
            Ltl::G(a) => write!(f, "(G {a})"),
            Ltl::U(l, a) => write!(f, "({} U {a})", lit_str(l)),
            Ltl::W(l, a) => write!(f, "({} W {a})", lit_str(l)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EffectDecl;
    use crate::logic::{Constant, Formula, Sort, Term};
    use crate::sre::ground_match;

    fn delta() -> EffectSignature {
        EffectSignature::new(vec![
            EffectDecl::new("a", vec![Sort::Int], Sort::Unit),
            EffectDecl::new("b", vec![Sort::Int], Sort::Unit),
        ])
    }

    fn ev(f: &str, v: i64) -> GroundEvent {
        GroundEvent::new(f, vec![Constant::Int(v)], Constant::Unit)
    }

    fn parse(s: &str) -> Ltl {
        parse_ltlf(s, Some(&delta())).unwrap()
    }

    #[test]
    fn basic_semantics() {
        let s = Interpretation::new();
        let g = parse("G <a>");
        assert!(eval_ltlf(&g, &[ev("a", 0), ev("a", 1)], &s));
        assert!(eval_ltlf(&g, &[], &s));
        assert!(!eval_ltlf(&parse("F <b>"), &[ev("a", 0)], &s));
        assert!(!eval_ltlf(&parse("X <a>"), &[], &s));
        for f in ["G <a>", "F <b>", "X <a>", "<a> W <b>", "<a> U <b>"] {
            let f = parse(f);
            let r = to_sre(&f);
            for t in [vec![], vec![ev("a", 0)], vec![ev("a", 0), ev("b", 0)], vec![ev("b", 1), ev("a", 1)]] {
                assert_eq!(eval_ltlf(&f, &t, &s), ground_match(&r, &t, &s), "{f} on {t:?}");
            }
        }
    }

    #[test]
    fn until_needs_literal_left() {
        assert!(parse_ltlf("(F <a>) U <b>", Some(&delta())).is_err());
        assert!(parse_ltlf("G", None).is_err());
        assert!(matches!(parse("<a> W <b>"), Ltl::W(..)));
    }

    #[test]
    fn stored_pattern() {
        let f = parse("F (<a x | x == k> /\\ X G ~<a k>)");
        assert!(matches!(f, Ltl::F(_)));
        let s = Interpretation::new();
        let f = ground(&f, 1);
        assert!(eval_ltlf(&f, &[ev("a", 1), ev("b", 1)], &s));
        assert!(eval_ltlf(&f, &[ev("a", 1), ev("a", 1)], &s));
        assert!(!eval_ltlf(&f, &[ev("b", 1)], &s));
    }

    fn ground(f: &Ltl, k: i64) -> Ltl {
        let sub = |l: &SymEvent| {
            l.map_qualifiers(&mut |q: &Formula| {
                q.map_terms(&mut |t| match t {
                    Term::Var(v) if &**v == "k" => Some(Term::int(k)),
                    _ => None,
                })
            })
        };
        match f {
            Ltl::Lit(l) => Ltl::Lit(sub(l)),
            Ltl::Not(a) => Ltl::Not(Box::new(ground(a, k))),
            Ltl::And(a, b) => Ltl::And(Box::new(ground(a, k)), Box::new(ground(b, k))),
            Ltl::Or(a, b) => Ltl::Or(Box::new(ground(a, k)), Box::new(ground(b, k))),
            Ltl::X(a) => Ltl::X(Box::new(ground(a, k))),
            Ltl::F(a) => Ltl::F(Box::new(ground(a, k))),
            Ltl::G(a) => Ltl::G(Box::new(ground(a, k))),
            Ltl::U(l, a) => Ltl::U(sub(l), Box::new(ground(a, k))),
            Ltl::W(l, a) => Ltl::W(sub(l), Box::new(ground(a, k))),
        }
    }

    #[test]
    fn display_round_trip() {
        for s in ["F (<a> /\\ X G ~<b>)", "<a> W (<b> \\/ ~(F <a>))", "~<a> U X <b>"] {
            let f = parse(s);
            assert_eq!(parse(&f.to_string()), f);
        }
    }
}
