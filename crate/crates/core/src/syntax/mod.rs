//! Shared surface syntax: formulas, event literals, SREs and LTLf formulas.
//!
//! ```text
//! formula ::= formula || formula | formula && formula | not formula
//!           | term (== | != | < | <= | > | >=) term | term
//! term    ::= int | true | false | null | () | x | $i | f(term, ..) | term (+|-) term | -term
//! literal ::= <f pos .. pos [= pos] [| formula]>       pos ::= _ | !term | term
//! event   ::= event | event | event & event | ~event | . | literal | (event)
//! sre     ::= sre \/ sre | sre /\ sre | sre ; sre | sre sre | !sre | sre*
//!           | empty | eps | event | (sre) | ltl{ ltl } | pattern(term, ..)
//! ltl     ::= event U ltl | event W ltl | ltl \/ ltl | ltl /\ ltl
//!           | F ltl | G ltl | X ltl | ~ltl | (ltl) | event      prefix operators bind tightest
//! ```
//!
//! In a literal with a `|` qualifier, bare identifiers in argument positions
//! bind the corresponding argument; without one they denote equality with a
//! program variable. Inside a qualifier `>` closes the literal, so `>` and
//! `>=` comparisons must be parenthesized there.

pub mod lexer;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::events::{EffectSignature, SymEvent};
use crate::logic::{Constant, Formula, Op, Term};
use crate::ltlf::Ltl;
use crate::sre::Sre;
pub use lexer::{Pos, Tok};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{pos}: {msg}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub msg: String,
}

impl SyntaxError {
    pub fn new(pos: Pos, msg: impl Into<String>) -> SyntaxError {
        SyntaxError { pos, msg: msg.into() }
    }
}

pub type PResult<T> = Result<T, SyntaxError>;

/// A named, parameterized trace pattern.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub params: Vec<Arc<str>>,
    pub body: Sre,
}

/// Pre-formula: terms and formulas share one grammar.
#[derive(Debug, Clone)]
enum PExpr {
    Term(Term),
    Cmp(Op, Box<PExpr>, Box<PExpr>),
    Arith(Op, Box<PExpr>, Box<PExpr>),
    Not(Box<PExpr>),
    And(Box<PExpr>, Box<PExpr>),
    Or(Box<PExpr>, Box<PExpr>),
}

pub struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    pub patterns: HashMap<String, Pattern>,
    pub delta: Option<EffectSignature>,
    /// Binders of the literal being parsed.
    scope: Vec<Arc<str>>,
    lit_depth: usize,
    paren_depth: usize,
}

impl Parser {
    pub fn new(src: &str) -> PResult<Parser> {
        Ok(Parser {
            toks: lexer::lex(src)?,
            i: 0,
            patterns: HashMap::new(),
            delta: None,
            scope: Vec::new(),
            lit_depth: 0,
            paren_depth: 0,
        })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].0
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    pub fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(SyntaxError::new(self.pos(), msg))
    }

    pub fn unexpected<T>(&self, what: &str) -> PResult<T> {
        self.error(format!("expected {what}, found {}", self.peek()))
    }

    pub fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            self.unexpected(&t.to_string())
        }
    }

    pub fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    pub fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.unexpected("an identifier"),
        }
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn expect_eof(&mut self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.unexpected("end of input")
        }
    }

    // ---- formulas and terms ----

    pub fn formula(&mut self) -> PResult<Formula> {
        let pos = self.pos();
        let p = self.p_or()?;
        to_formula(p).map_err(|m| SyntaxError::new(pos, m))
    }

    pub fn term(&mut self) -> PResult<Term> {
        let pos = self.pos();
        let p = self.p_arith()?;
        to_term(p).map_err(|m| SyntaxError::new(pos, m))
    }

    fn p_or(&mut self) -> PResult<PExpr> {
        let mut l = self.p_and()?;
        while self.eat(&Tok::OrOr) {
            let r = self.p_and()?;
            l = PExpr::Or(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn p_and(&mut self) -> PResult<PExpr> {
        let mut l = self.p_not()?;
        while self.eat(&Tok::AndAnd) {
            let r = self.p_not()?;
            l = PExpr::And(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn p_not(&mut self) -> PResult<PExpr> {
        if self.eat_kw("not") {
            return Ok(PExpr::Not(Box::new(self.p_not()?)));
        }
        self.p_cmp()
    }

    fn p_cmp(&mut self) -> PResult<PExpr> {
        let l = self.p_arith()?;
        let gt_ok = self.lit_depth == 0 || self.paren_depth > 0;
        let (op, swap) = match self.peek() {
            Tok::EqEq => (Op::Eq, false),
            Tok::Ne => (Op::Ne, false),
            Tok::Lt => (Op::Lt, false),
            Tok::Le => (Op::Le, false),
            Tok::Gt if gt_ok => (Op::Lt, true),
            Tok::Ge if gt_ok => (Op::Le, true),
            _ => return Ok(l),
        };
        self.bump();
        let r = self.p_arith()?;
        let (a, b) = if swap { (r, l) } else { (l, r) };
        Ok(PExpr::Cmp(op, Box::new(a), Box::new(b)))
    }

    fn p_arith(&mut self) -> PResult<PExpr> {
        let mut l = self.p_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Op::Add,
                Tok::Minus => Op::Sub,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.p_unary()?;
            l = PExpr::Arith(op, Box::new(l), Box::new(r));
        }
    }

    fn p_unary(&mut self) -> PResult<PExpr> {
        if self.eat(&Tok::Minus) {
            let e = self.p_unary()?;
            if let PExpr::Term(Term::Const(Constant::Int(i))) = e {
                return Ok(PExpr::Term(Term::int(-i)));
            }
            return Ok(PExpr::Arith(Op::Sub, Box::new(PExpr::Term(Term::int(0))), Box::new(e)));
        }
        self.p_primary()
    }

    fn p_primary(&mut self) -> PResult<PExpr> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(PExpr::Term(Term::int(i)))
            }
            Tok::Local(i) => {
                self.bump();
                Ok(PExpr::Term(Term::Local(i)))
            }
            Tok::LParen => {
                self.bump();
                if self.eat(&Tok::RParen) {
                    return Ok(PExpr::Term(Term::Const(Constant::Unit)));
                }
                self.paren_depth += 1;
                let e = self.p_or();
                self.paren_depth -= 1;
                let e = e?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) => {
                self.bump();
                match s.as_str() {
                    "true" => return Ok(PExpr::Term(Term::Const(Constant::Bool(true)))),
                    "false" => return Ok(PExpr::Term(Term::Const(Constant::Bool(false)))),
                    "null" => return Ok(PExpr::Term(Term::int(0))),
                    _ => {}
                }
                if self.peek() == &Tok::LParen && !matches!(self.peek_at(1), Tok::RParen) {
                    self.bump();
                    let mut args = vec![self.term()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.term()?);
                    }
                    self.expect(&Tok::RParen)?;
                    return Ok(PExpr::Term(Term::App(Op::Uf(Arc::from(s.as_str())), args)));
                }
                Ok(PExpr::Term(self.resolve(&s)))
            }
            _ => self.unexpected("a term"),
        }
    }

    fn resolve(&self, name: &str) -> Term {
        match self.scope.iter().rposition(|b| &**b == name) {
            Some(i) => Term::Local(i),
            None => Term::var(name),
        }
    }

    /// An argument term inside a literal or pattern call.
    fn atom_term(&mut self) -> PResult<Term> {
        let pos = self.pos();
        let p = match self.peek() {
            Tok::Minus => self.p_unary()?,
            _ => self.p_primary()?,
        };
        to_term(p).map_err(|m| SyntaxError::new(pos, m))
    }

    // ---- events ----

    pub fn at_event_start(&self) -> bool {
        matches!(self.peek(), Tok::Lt | Tok::Tilde | Tok::Dot)
    }

    pub fn event(&mut self) -> PResult<SymEvent> {
        let mut l = self.event_and()?;
        while self.eat(&Tok::Bar) {
            let r = self.event_and()?;
            l = l.join(&r);
        }
        Ok(l)
    }

    fn event_and(&mut self) -> PResult<SymEvent> {
        let mut l = self.event_unary()?;
        while self.eat(&Tok::Amp) {
            let r = self.event_unary()?;
            l = l.meet(&r);
        }
        Ok(l)
    }

    fn event_unary(&mut self) -> PResult<SymEvent> {
        match self.peek() {
            Tok::Tilde => {
                self.bump();
                Ok(self.event_unary()?.complement())
            }
            Tok::Dot => {
                self.bump();
                Ok(SymEvent::top())
            }
            Tok::LParen => {
                self.bump();
                let e = self.event()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Lt => self.literal(),
            _ => self.unexpected("an event literal"),
        }
    }

    fn literal(&mut self) -> PResult<SymEvent> {
        let start = self.pos();
        self.expect(&Tok::Lt)?;
        let fname = self.ident()?;
        let arity = match &self.delta {
            Some(d) => match d.get(&fname) {
                Some(decl) => Some(decl.args.len()),
                None => return Err(SyntaxError::new(start, format!("unknown effect `{fname}`"))),
            },
            None => None,
        };
        enum P {
            Any,
            Ne(Term),
            Eq(Term),
            Bind(String),
        }
        let mut positions: Vec<P> = Vec::new();
        let mut ret: Option<P> = None;
        let has_qualifier = {
            // scan ahead for a top-level `|` before the closing `>`
            let mut k = self.i;
            let mut depth = 0usize;
            loop {
                match &self.toks[k].0 {
                    Tok::LParen => depth += 1,
                    Tok::RParen => depth = depth.saturating_sub(1),
                    Tok::Bar if depth == 0 => break true,
                    Tok::Gt if depth == 0 => break false,
                    Tok::Eof => break false,
                    _ => {}
                }
                k += 1;
            }
        };
        let position = |p: &mut Parser| -> PResult<P> {
            Ok(match p.peek().clone() {
                Tok::Underscore => {
                    p.bump();
                    P::Any
                }
                Tok::Bang => {
                    p.bump();
                    P::Ne(p.atom_term()?)
                }
                Tok::Ident(s) if has_qualifier && !matches!(s.as_str(), "true" | "false" | "null") => {
                    p.bump();
                    P::Bind(s)
                }
                _ => P::Eq(p.atom_term()?),
            })
        };
        while !matches!(self.peek(), Tok::Assign | Tok::Bar | Tok::Gt | Tok::Eof) {
            positions.push(position(self)?);
        }
        if self.eat(&Tok::Assign) {
            ret = Some(position(self)?);
        }
        let n = match arity {
            Some(a) => {
                if !positions.is_empty() && positions.len() != a {
                    return Err(SyntaxError::new(
                        start,
                        format!("`{fname}` takes {a} arguments, literal has {}", positions.len()),
                    ));
                }
                a
            }
            None => positions.len(),
        };
        let mut scope: Vec<Arc<str>> = vec![Arc::from("$unbound"); n + 1];
        let mut parts = Vec::new();
        let slots = positions.into_iter().enumerate().chain(ret.map(|r| (n, r)));
        for (i, p) in slots {
            match p {
                P::Any => {}
                P::Ne(t) => parts.push(Formula::ne(Term::Local(i), t)),
                P::Eq(t) => parts.push(Formula::eq(Term::Local(i), t)),
                P::Bind(s) => scope[i] = Arc::from(s.as_str()),
            }
        }
        if self.eat(&Tok::Bar) {
            let saved = std::mem::replace(&mut self.scope, scope);
            let saved_paren = std::mem::replace(&mut self.paren_depth, 0);
            self.lit_depth += 1;
            let q = self.formula();
            self.lit_depth -= 1;
            self.paren_depth = saved_paren;
            self.scope = saved;
            parts.push(q?);
        }
        self.expect(&Tok::Gt)?;
        Ok(SymEvent::atom(&fname, Formula::and(parts)))
    }

    // ---- SREs ----

    pub fn sre(&mut self) -> PResult<Sre> {
        let mut parts = vec![self.sre_and()?];
        while self.eat(&Tok::Vee) {
            parts.push(self.sre_and()?);
        }
        Ok(Sre::or(parts))
    }

    fn sre_and(&mut self) -> PResult<Sre> {
        let mut parts = vec![self.sre_cat()?];
        while self.eat(&Tok::Wedge) {
            parts.push(self.sre_cat()?);
        }
        Ok(Sre::and(parts))
    }

    fn at_sre_atom(&self) -> bool {
        match self.peek() {
            Tok::Lt | Tok::Tilde | Tok::Dot | Tok::LParen | Tok::Bang => true,
            Tok::Ident(s) => matches!(s.as_str(), "empty" | "eps" | "ltl") || self.patterns.contains_key(s),
            _ => false,
        }
    }

    fn sre_cat(&mut self) -> PResult<Sre> {
        let mut parts = vec![self.sre_unary()?];
        loop {
            if self.eat(&Tok::Semi) || self.at_sre_atom() {
                parts.push(self.sre_unary()?);
            } else {
                break;
            }
        }
        Ok(Sre::concat_all(parts))
    }

    fn sre_unary(&mut self) -> PResult<Sre> {
        if self.eat(&Tok::Bang) {
            return Ok(Sre::not(self.sre_unary()?));
        }
        let mut r = self.sre_atom()?;
        while self.eat(&Tok::Star) {
            r = Sre::star(r);
        }
        Ok(r)
    }

    fn sre_atom(&mut self) -> PResult<Sre> {
        match self.peek().clone() {
            Tok::Lt | Tok::Tilde | Tok::Dot => Ok(Sre::lit(self.event()?)),
            Tok::LParen => {
                self.bump();
                let r = self.sre()?;
                self.expect(&Tok::RParen)?;
                Ok(r)
            }
            Tok::Ident(s) => {
                let pos = self.pos();
                self.bump();
                match s.as_str() {
                    "empty" => Ok(Sre::empty()),
                    "eps" => Ok(Sre::eps()),
                    "ltl" => {
                        self.expect(&Tok::LBrace)?;
                        let f = self.ltl()?;
                        self.expect(&Tok::RBrace)?;
                        Ok(crate::ltlf::to_sre(&f))
                    }
                    _ => self.pattern_call(&s, pos),
                }
            }
            _ => self.unexpected("a trace expression"),
        }
    }

    fn pattern_call(&mut self, name: &str, pos: Pos) -> PResult<Sre> {
        let Some(pat) = self.patterns.get(name).cloned() else {
            return Err(SyntaxError::new(pos, format!("unknown pattern `{name}`")));
        };
        let mut args = Vec::new();
        if !pat.params.is_empty() || self.peek() == &Tok::LParen {
            self.expect(&Tok::LParen)?;
            if !self.eat(&Tok::RParen) {
                args.push(self.term()?);
                while self.eat(&Tok::Comma) {
                    args.push(self.term()?);
                }
                self.expect(&Tok::RParen)?;
            }
        }
        if args.len() != pat.params.len() {
            return Err(SyntaxError::new(
                pos,
                format!("pattern `{name}` takes {} arguments, got {}", pat.params.len(), args.len()),
            ));
        }
        let binding: HashMap<Arc<str>, Term> = pat.params.iter().cloned().zip(args).collect();
        Ok(pat.body.map_terms(&mut |t| match t {
            Term::Var(v) => binding.get(v).cloned(),
            _ => None,
        }))
    }

    // ---- LTLf ----

    pub fn ltl(&mut self) -> PResult<Ltl> {
        let pos = self.pos();
        let l = self.ltl_or()?;
        let until = if self.at_kw("U") {
            Some(true)
        } else if self.at_kw("W") {
            Some(false)
        } else {
            None
        };
        if let Some(strong) = until {
            self.bump();
            let Ltl::Lit(ev) = l else {
                return Err(SyntaxError::new(pos, "left operand of U/W must be an event literal"));
            };
            let r = Box::new(self.ltl()?);
            return Ok(if strong { Ltl::U(ev, r) } else { Ltl::W(ev, r) });
        }
        Ok(l)
    }

    fn ltl_or(&mut self) -> PResult<Ltl> {
        let mut l = self.ltl_and()?;
        while self.eat(&Tok::Vee) {
            let r = self.ltl_and()?;
            l = Ltl::Or(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn ltl_and(&mut self) -> PResult<Ltl> {
        let mut l = self.ltl_unary()?;
        while self.eat(&Tok::Wedge) {
            let r = self.ltl_unary()?;
            l = Ltl::And(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn ltl_unary(&mut self) -> PResult<Ltl> {
        match self.peek().clone() {
            Tok::Tilde if matches!(self.peek_at(1), Tok::Lt | Tok::Dot | Tok::Tilde) => Ok(Ltl::Lit(self.event()?)),
            Tok::Tilde => {
                self.bump();
                Ok(Ltl::Not(Box::new(self.ltl_unary()?)))
            }
            Tok::LParen => {
                self.bump();
                let f = self.ltl()?;
                self.expect(&Tok::RParen)?;
                Ok(f)
            }
            Tok::Lt | Tok::Dot => Ok(Ltl::Lit(self.event()?)),
            Tok::Ident(s) if matches!(s.as_str(), "F" | "G" | "X") => {
                self.bump();
                let a = Box::new(self.ltl_unary()?);
                Ok(match s.as_str() {
                    "F" => Ltl::F(a),
                    "G" => Ltl::G(a),
                    _ => Ltl::X(a),
                })
            }
            _ => self.unexpected("an LTLf formula"),
        }
    }
}

fn to_term(p: PExpr) -> Result<Term, String> {
    Ok(match p {
        PExpr::Term(t) => t,
        PExpr::Arith(op, a, b) | PExpr::Cmp(op, a, b) => Term::App(op, vec![to_term(*a)?, to_term(*b)?]),
        PExpr::Not(_) | PExpr::And(..) | PExpr::Or(..) => {
            return Err("boolean connective where a term is expected".into())
        }
    })
}

fn to_formula(p: PExpr) -> Result<Formula, String> {
    Ok(match p {
        PExpr::Term(t) => Formula::atom(t),
        PExpr::Cmp(op, a, b) => Formula::atom(Term::App(op, vec![to_term(*a)?, to_term(*b)?])),
        PExpr::Arith(..) => return Err("arithmetic expression where a formula is expected".into()),
        PExpr::Not(a) => Formula::not(to_formula(*a)?),
        PExpr::And(a, b) => Formula::and2(to_formula(*a)?, to_formula(*b)?),
        PExpr::Or(a, b) => Formula::or2(to_formula(*a)?, to_formula(*b)?),
    })
}

pub fn parse_formula(src: &str) -> PResult<Formula> {
    let mut p = Parser::new(src)?;
    let f = p.formula()?;
    p.expect_eof()?;
    Ok(f)
}

pub fn parse_event(src: &str, delta: Option<&EffectSignature>) -> PResult<SymEvent> {
    let mut p = Parser::new(src)?;
    p.delta = delta.cloned();
    let e = p.event()?;
    p.expect_eof()?;
    Ok(e)
}

pub fn parse_sre(src: &str, delta: Option<&EffectSignature>) -> PResult<Sre> {
    let mut p = Parser::new(src)?;
    p.delta = delta.cloned();
    let r = p.sre()?;
    p.expect_eof()?;
    Ok(r)
}
