//! SMT-LIB2 backend talking to an external solver process.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::{Constant, Formula, Interpretation, Op, SatResult, SolverBackend, Sort, SymVar, Term};

#[derive(Debug, Clone)]
pub struct SmtLibSolver {
    /// Program followed by its arguments, e.g. `["z3", "-in"]`.
    pub command: Vec<String>,
}

impl SmtLibSolver {
    pub fn new(cmd: &str) -> SmtLibSolver {
        let mut command: Vec<String> = cmd.split_whitespace().map(String::from).collect();
        if command.len() == 1 && command[0].ends_with("z3") {
            command.push("-in".into());
        }
        SmtLibSolver { command }
    }
}

fn name(s: &SymVar) -> String {
    format!("s{}", s.id)
}

fn sort_name(s: &Sort) -> &'static str {
    match s {
        Sort::Bool => "Bool",
        _ => "Int",
    }
}

fn term(t: &Term, out: &mut String) {
    match t {
        Term::Const(Constant::Bool(b)) => out.push_str(if *b { "true" } else { "false" }),
        Term::Const(c) => {
            let i = c.as_int();
            if i < 0 {
                out.push_str(&format!("(- {})", i.unsigned_abs()));
            } else {
                out.push_str(&i.to_string());
            }
        }
        Term::Sym(s) => out.push_str(&name(s)),
        Term::Var(v) => out.push_str(v),
        Term::Local(i) => out.push_str(&format!("local{i}")),
        Term::App(op, args) => {
            let head = match op {
                Op::Eq => "=".to_string(),
                Op::Ne => "distinct".to_string(),
                Op::Lt => "<".to_string(),
                Op::Le => "<=".to_string(),
                Op::Add => "+".to_string(),
                Op::Sub => "-".to_string(),
                Op::Uf(n) => format!("uf_{n}"),
            };
            out.push('(');
            out.push_str(&head);
            for a in args {
                out.push(' ');
                term(a, out);
            }
            out.push(')');
        }
    }
}

fn formula(f: &Formula, out: &mut String) {
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Atom(t) => term(t, out),
        Formula::Not(g) => {
            out.push_str("(not ");
            formula(g, out);
            out.push(')');
        }
        Formula::And(xs) | Formula::Or(xs) => {
            out.push_str(if matches!(f, Formula::And(_)) { "(and" } else { "(or" });
            for x in xs {
                out.push(' ');
                formula(x, out);
            }
            out.push(')');
        }
    }
}

/// Renders the full query script for `f`.
pub fn script(f: &Formula) -> String {
    let mut out = String::from("(set-logic ALL)\n(set-option :produce-models true)\n");
    let syms = f.syms();
    for s in &syms {
        out.push_str(&format!("(declare-const {} {})\n", name(s), sort_name(&s.sort)));
        if s.sort == Sort::Unit {
            out.push_str(&format!("(assert (= {} 0))\n", name(s)));
        }
    }
    let mut ufs: BTreeMap<String, usize> = BTreeMap::new();
    f.visit_terms(&mut |t| {
        if let Term::App(Op::Uf(n), args) = t {
            ufs.insert(n.to_string(), args.len());
        }
    });
    for (n, arity) in ufs {
        out.push_str(&format!("(declare-fun uf_{n} ({}) Int)\n", vec!["Int"; arity].join(" ")));
    }
    out.push_str("(assert ");
    formula(f, &mut out);
    out.push_str(")\n(check-sat)\n(get-model)\n(exit)\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexps(text: &str) -> Vec<Sexp> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut tok = String::new();
    let flush = |tok: &mut String, stack: &mut Vec<Vec<Sexp>>| {
        if !tok.is_empty() {
            stack.last_mut().unwrap().push(Sexp::Atom(std::mem::take(tok)));
        }
    };
    for c in text.chars() {
        match c {
            '(' => {
                flush(&mut tok, &mut stack);
                stack.push(Vec::new());
            }
            ')' => {
                flush(&mut tok, &mut stack);
                if stack.len() > 1 {
                    let l = stack.pop().unwrap();
                    stack.last_mut().unwrap().push(Sexp::List(l));
                }
            }
            c if c.is_whitespace() => flush(&mut tok, &mut stack),
            c => tok.push(c),
        }
    }
    flush(&mut tok, &mut stack);
    stack.swap_remove(0)
}

fn value(e: &Sexp) -> Option<i64> {
    match e {
        Sexp::Atom(a) if a == "true" => Some(1),
        Sexp::Atom(a) if a == "false" => Some(0),
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(xs) => match xs.as_slice() {
            [Sexp::Atom(m), x] if m == "-" => value(x).map(|v| -v),
            _ => None,
        },
    }
}

/// Parses solver output (`sat` followed by a model, `unsat`, or anything else).
pub fn parse_response(out: &str, syms: &BTreeSet<SymVar>) -> SatResult {
    let items = parse_sexps(out);
    match items.first() {
        Some(Sexp::Atom(a)) if a == "unsat" => SatResult::Unsat,
        Some(Sexp::Atom(a)) if a == "sat" => {
            let mut m = Interpretation::new();
            let by_name: BTreeMap<String, &SymVar> = syms.iter().map(|s| (name(s), s)).collect();
            let defs: Vec<&Sexp> = match items.get(1) {
                Some(Sexp::List(xs)) => xs
                    .iter()
                    .flat_map(|x| match x {
                        // some solvers wrap the model in (model ...)
                        Sexp::List(_) => vec![x],
                        _ => vec![],
                    })
                    .collect(),
                _ => vec![],
            };
            for d in defs {
                if let Sexp::List(xs) = d {
                    if let [Sexp::Atom(kw), Sexp::Atom(n), _, _, v] = xs.as_slice() {
                        if kw == "define-fun" {
                            if let (Some(s), Some(x)) = (by_name.get(n), value(v)) {
                                m.insert((*s).clone(), Constant::of_sort(&s.sort, x));
                            }
                        }
                    }
                }
            }
            SatResult::Sat(m)
        }
        Some(Sexp::Atom(a)) => SatResult::Unknown(format!("solver answered {a}")),
        _ => SatResult::Unknown(format!("unparseable solver output: {out}")),
    }
}

impl SolverBackend for SmtLibSolver {
    fn check_sat(&mut self, f: &Formula, budget: Duration) -> SatResult {
        let Some((prog, args)) = self.command.split_first() else {
            return SatResult::Unknown("empty solver command".into());
        };
        let mut child = match Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
        {
            Ok(c) => c,
            Err(e) => return SatResult::Unknown(format!("cannot start solver: {e}")),
        };
        let text = script(f);
        if let Some(mut stdin) = child.stdin.take() {
            if stdin.write_all(text.as_bytes()).is_err() {
                let _ = child.kill();
                return SatResult::Unknown("solver closed its input".into());
            }
        }
        let deadline = Instant::now() + budget;
        loop {
            match child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if Instant::now() > deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return SatResult::Unknown("solver timeout".into());
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(1)),
                Err(e) => return SatResult::Unknown(format!("solver wait failed: {e}")),
            }
        }
        let mut out = String::new();
        if let Some(mut so) = child.stdout.take() {
            let _ = so.read_to_string(&mut out);
        }
        parse_response(&out, &f.syms())
    }
}
