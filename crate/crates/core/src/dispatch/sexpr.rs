//! Minimal s-expression reader for solver output and VNN-LIB files.

use std::fmt;

use crate::exact::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexpr {
    Atom(String),
    List(Vec<Sexpr>),
}

impl Sexpr {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexpr::Atom(a) => Some(a),
            Sexpr::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::List(items) => Some(items),
            Sexpr::Atom(_) => None,
        }
    }

    /// Head symbol of a list, if any.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|l| l.first()).and_then(Sexpr::atom)
    }
}

impl fmt::Display for Sexpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexpr::Atom(a) => f.write_str(a),
            Sexpr::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SexprError {
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for SexprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// Reads every top-level expression in `text`. `;` starts a line comment.
pub fn parse_all(text: &str) -> Result<Vec<Sexpr>, SexprError> {
    let mut stack: Vec<(usize, Vec<Sexpr>)> = Vec::new();
    let mut top = Vec::new();
    let mut line = 1;
    let mut chars = text.chars().peekable();
    let push = |e: Sexpr, stack: &mut Vec<(usize, Vec<Sexpr>)>, top: &mut Vec<Sexpr>| match stack.last_mut() {
        Some((_, items)) => items.push(e),
        None => top.push(e),
    };
    while let Some(c) = chars.next() {
        match c {
            '\n' => line += 1,
            c if c.is_whitespace() => {}
            ';' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    chars.next();
                }
            }
            '(' => stack.push((line, Vec::new())),
            ')' => {
                let (_, items) = stack.pop().ok_or(SexprError { line, reason: "unbalanced `)`".into() })?;
                push(Sexpr::List(items), &mut stack, &mut top);
            }
            '|' => {
                let mut sym = String::from("|");
                loop {
                    match chars.next() {
                        Some('|') => break,
                        Some(c) => {
                            line += (c == '\n') as usize;
                            sym.push(c);
                        }
                        None => return Err(SexprError { line, reason: "unterminated `|` symbol".into() }),
                    }
                }
                sym.push('|');
                push(Sexpr::Atom(sym), &mut stack, &mut top);
            }
            '"' => {
                let mut s = String::from("\"");
                loop {
                    match chars.next() {
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            s.push_str("\"\"");
                        }
                        Some('"') => break,
                        Some(c) => {
                            line += (c == '\n') as usize;
                            s.push(c);
                        }
                        None => return Err(SexprError { line, reason: "unterminated string".into() }),
                    }
                }
                s.push('"');
                push(Sexpr::Atom(s), &mut stack, &mut top);
            }
            c => {
                let mut sym = c.to_string();
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || matches!(n, '(' | ')' | ';' | '"' | '|') {
                        break;
                    }
                    sym.push(n);
                    chars.next();
                }
                push(Sexpr::Atom(sym), &mut stack, &mut top);
            }
        }
    }
    if let Some((open, _)) = stack.last() {
        return Err(SexprError { line: *open, reason: "unclosed `(`".into() });
    }
    Ok(top)
}

/// Value of a real constant term: decimals, integers, `(- t)`, `(/ a b)`.
pub fn real_value(e: &Sexpr) -> Option<Rational> {
    match e {
        Sexpr::Atom(a) => exact::parse_decimal(a),
        Sexpr::List(items) => match (items.first()?.atom()?, &items[1..]) {
            ("-", [t]) => real_value(t).map(|v| -v),
            ("/", [a, b]) => {
                let (a, b) = (real_value(a)?, real_value(b)?);
                (b != exact::from_i64(0)).then(|| a / b)
            }
            _ => None,
        },
    }
}
