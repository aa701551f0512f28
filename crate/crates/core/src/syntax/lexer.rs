use std::fmt;

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Local(usize),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Ne,
    Assign,
    Bar,
    OrOr,
    Amp,
    AndAnd,
    Tilde,
    Bang,
    Star,
    Semi,
    Comma,
    Colon,
    Underscore,
    Dot,
    Wedge,
    Vee,
    Plus,
    Minus,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::Int(i) => return write!(f, "`{i}`"),
            Tok::Local(i) => return write!(f, "`${i}`"),
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::Assign => "=",
            Tok::Bar => "|",
            Tok::OrOr => "||",
            Tok::Amp => "&",
            Tok::AndAnd => "&&",
            Tok::Tilde => "~",
            Tok::Bang => "!",
            Tok::Star => "*",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Underscore => "_",
            Tok::Dot => ".",
            Tok::Wedge => "/\\",
            Tok::Vee => "\\/",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Eof => return write!(f, "end of input"),
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

pub fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let peek = chars.get(i + 1).copied();
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '/' && peek == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c == '(' && peek == Some('*') {
            let mut depth = 0;
            loop {
                if i + 1 >= chars.len() {
                    return Err(SyntaxError::new(pos, "unterminated comment"));
                }
                if chars[i] == '(' && chars[i + 1] == '*' {
                    depth += 1;
                    advance(&mut i, &mut line, &mut col, 2);
                } else if chars[i] == '*' && chars[i + 1] == ')' {
                    depth -= 1;
                    advance(&mut i, &mut line, &mut col, 2);
                    if depth == 0 {
                        break;
                    }
                } else {
                    advance(&mut i, &mut line, &mut col, 1);
                }
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&mut i, &mut line, &mut col, 1);
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse().map_err(|_| SyntaxError::new(pos, "integer literal out of range"))?;
            out.push((Tok::Int(v), pos));
            continue;
        }
        if c == '$' {
            let start = i + 1;
            advance(&mut i, &mut line, &mut col, 1);
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&mut i, &mut line, &mut col, 1);
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse().map_err(|_| SyntaxError::new(pos, "expected digits after `$`"))?;
            out.push((Tok::Local(v), pos));
            continue;
        }
        if c.is_alphabetic() || (c == '_' && peek.is_some_and(|p| p.is_alphanumeric() || p == '_')) {
            let start = i;
            loop {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    advance(&mut i, &mut line, &mut col, 1);
                }
                // dotted names such as `Nxt.put`
                if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_alphabetic() {
                    advance(&mut i, &mut line, &mut col, 1);
                    continue;
                }
                break;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        let two: Option<Tok> = match (c, peek) {
            ('<', Some('=')) => Some(Tok::Le),
            ('>', Some('=')) => Some(Tok::Ge),
            ('=', Some('=')) => Some(Tok::EqEq),
            ('!', Some('=')) => Some(Tok::Ne),
            ('|', Some('|')) => Some(Tok::OrOr),
            ('&', Some('&')) => Some(Tok::AndAnd),
            ('/', Some('\\')) => Some(Tok::Wedge),
            ('\\', Some('/')) => Some(Tok::Vee),
            _ => None,
        };
        if let Some(t) = two {
            out.push((t, pos));
            advance(&mut i, &mut line, &mut col, 2);
            continue;
        }
        let one = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '=' => Tok::Assign,
            '|' => Tok::Bar,
            '&' => Tok::Amp,
            '~' => Tok::Tilde,
            '!' => Tok::Bang,
            '*' => Tok::Star,
            ';' => Tok::Semi,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            '_' => Tok::Underscore,
            '.' => Tok::Dot,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            _ => return Err(SyntaxError::new(pos, format!("unexpected character `{c}`"))),
        };
        out.push((one, pos));
        advance(&mut i, &mut line, &mut col, 1);
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}
