//! Recursive-descent parser with local backtracking.
//!
//! Two places in the grammar are ambiguous on a single token of lookahead:
//! a `(` may open a parenthesised formula or a parenthesised term, and
//! `IDENT (` may be a predicate application or a model application inside a
//! comparison. Both are resolved by trying the comparison first and falling
//! back; when every alternative fails, the error at the furthest position wins.

use std::collections::HashSet;

use super::ast::*;
use super::error::SpecError;
use super::lexer::{tokenize, Tok, Token};

pub fn parse_spec(source: &str) -> Result<SpecModule, SpecError> {
    let tokens = tokenize(source)?;
    Parser { tokens, pos: 0 }.module()
}

/// Parses a single formula (no surrounding declarations).
pub fn parse_formula(source: &str) -> Result<Formula, SpecError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let f = p.formula()?;
    p.expect_eof()?;
    Ok(f)
}

/// Parses a single term.
pub fn parse_term(source: &str) -> Result<Term, SpecError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let t = p.term()?;
    p.expect_eof()?;
    Ok(t)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

fn furthest(a: SpecError, b: SpecError) -> SpecError {
    fn span(e: &SpecError) -> Span {
        match e {
            SpecError::Syntax { span, .. } => *span,
            _ => Span::default(),
        }
    }
    if span(&b) > span(&a) {
        b
    } else {
        a
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, SpecError> {
        let found = self.peek().describe();
        let message = if expected.is_empty() {
            format!("unexpected {found}")
        } else {
            format!("expected {}, found {found}", expected.join(" or "))
        };
        Err(SpecError::Syntax {
            span: self.span(),
            message,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Keyword(k) if *k == kw)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.is_sym(sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<Span, SpecError> {
        if self.is_sym(sym) {
            Ok(self.bump().span)
        } else {
            self.error(&[&format!("`{sym}`")])
        }
    }

    fn expect_kw(&mut self, kw: &'static str) -> Result<Span, SpecError> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            self.error(&[&format!("`{kw}`")])
        }
    }

    fn ident(&mut self) -> Result<(String, Span), SpecError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().span;
                Ok((name, span))
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn string(&mut self) -> Result<String, SpecError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(&["string"]),
        }
    }

    fn expect_eof(&self) -> Result<(), SpecError> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            self.error(&["end of input"])
        }
    }

    fn module(&mut self) -> Result<SpecModule, SpecError> {
        let mut module = SpecModule::default();
        let mut goal_names = HashSet::new();
        loop {
            let span = self.span();
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Keyword("model") => {
                    self.bump();
                    let (name, _) = self.ident()?;
                    self.expect_kw("from")?;
                    let path = self.string()?;
                    module.imports.push(Import { name, path, span });
                }
                Tok::Keyword("dataset") => {
                    self.bump();
                    let (name, _) = self.ident()?;
                    self.expect_kw("from")?;
                    let path = self.string()?;
                    let labeled = if self.is_kw("labeled") {
                        self.bump();
                        true
                    } else {
                        false
                    };
                    module.datasets.push(DatasetImport { name, path, labeled, span });
                }
                Tok::Keyword("predicate") => {
                    self.bump();
                    let (name, _) = self.ident()?;
                    self.expect_sym("(")?;
                    let mut params = Vec::new();
                    if !self.is_sym(")") {
                        loop {
                            let (pname, pspan) = self.ident()?;
                            self.expect_sym(":")?;
                            let sort = self.sort()?;
                            params.push(Param { name: pname, sort, span: pspan });
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym(")")?;
                    self.expect_sym("=")?;
                    let body = self.formula()?;
                    module.predicates.push(PredicateDef { name, params, body, span });
                }
                Tok::Keyword("goal") => {
                    self.bump();
                    let (name, name_span) = self.ident()?;
                    self.expect_sym(":")?;
                    let body = self.formula()?;
                    if !goal_names.insert(name.clone()) {
                        return Err(SpecError::DuplicateGoalName { name, span: name_span });
                    }
                    module.goals.push(Goal { name, body, span });
                }
                _ => return self.error(&["`model`", "`dataset`", "`predicate`", "`goal`"]),
            }
            self.eat_sym(";");
        }
        Ok(module)
    }

    fn sort(&mut self) -> Result<Sort, SpecError> {
        match self.peek().clone() {
            Tok::Keyword("real") => {
                self.bump();
                Ok(Sort::Real)
            }
            Tok::Keyword("int") => {
                self.bump();
                Ok(Sort::Int)
            }
            Tok::Keyword("label") => {
                self.bump();
                Ok(Sort::Label)
            }
            Tok::Keyword("vector") => {
                self.bump();
                match self.peek().clone() {
                    Tok::Nat(n) => {
                        let dim = n.parse::<usize>().or_else(|_| self.error(&["vector dimension"]))?;
                        self.bump();
                        Ok(Sort::Vector(dim))
                    }
                    _ => self.error(&["vector dimension"]),
                }
            }
            _ => self.error(&["`real`", "`int`", "`vector`", "`label`"]),
        }
    }

    fn formula(&mut self) -> Result<Formula, SpecError> {
        let lhs = self.disjunction()?;
        if self.is_sym("->") {
            self.bump();
            let rhs = self.formula()?;
            let span = lhs.span;
            return Ok(Formula::new(FormulaKind::Implies(Box::new(lhs), Box::new(rhs)), span));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, SpecError> {
        let mut lhs = self.conjunction()?;
        while self.eat_sym("\\/") {
            let rhs = self.conjunction()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, SpecError> {
        let mut lhs = self.unary()?;
        while self.eat_sym("/\\") {
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, SpecError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Keyword("not") => {
                self.bump();
                let body = self.unary()?;
                Ok(Formula::new(FormulaKind::Not(Box::new(body)), span))
            }
            Tok::Keyword(q @ ("forall" | "exists")) => {
                self.bump();
                let (var, _) = self.ident()?;
                let domain = if self.eat_sym(":") {
                    QuantDomain::Sort(self.sort()?)
                } else if self.is_kw("in") {
                    self.bump();
                    QuantDomain::Dataset(self.ident()?.0)
                } else {
                    return self.error(&["`:`", "`in`"]);
                };
                self.expect_sym(".")?;
                let body = Box::new(self.formula()?);
                let kind = if q == "forall" {
                    FormulaKind::Forall { var, domain, body }
                } else {
                    FormulaKind::Exists { var, domain, body }
                };
                Ok(Formula::new(kind, span))
            }
            Tok::Keyword(b @ ("true" | "false")) => {
                self.bump();
                Ok(Formula::new(FormulaKind::Bool(b == "true"), span))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula, SpecError> {
        let start = self.pos;
        let span = self.span();
        let first_err = match self.comparison() {
            Ok(f) => return Ok(f),
            Err(e) => e,
        };
        self.pos = start;
        if self.is_sym("(") {
            let attempt = (|| {
                self.bump();
                let f = self.formula()?;
                self.expect_sym(")")?;
                Ok(f)
            })();
            return attempt.map_err(|e| furthest(first_err, e));
        }
        if let (Tok::Ident(name), Tok::Sym("(")) = (self.peek().clone(), self.peek_at(1).clone()) {
            let attempt = (|| {
                self.bump();
                self.bump();
                let mut args = Vec::new();
                if !self.is_sym(")") {
                    loop {
                        args.push(self.term()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym(")")?;
                Ok(Formula::new(FormulaKind::PredApply { name, args }, span))
            })();
            return attempt.map_err(|e| furthest(first_err, e));
        }
        Err(first_err)
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        match self.peek() {
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym("<=") => Some(CmpOp::Le),
            Tok::Sym("=") => Some(CmpOp::Eq),
            Tok::Sym(">=") => Some(CmpOp::Ge),
            Tok::Sym(">") => Some(CmpOp::Gt),
            _ => None,
        }
    }

    /// `t0 op t1 op t2 ...` desugars to the conjunction of adjacent comparisons.
    fn comparison(&mut self) -> Result<Formula, SpecError> {
        let span = self.span();
        let mut lhs = self.term()?;
        let Some(mut op) = self.cmp_op() else {
            return self.error(&["comparison operator"]);
        };
        let mut parts = Vec::new();
        loop {
            self.bump();
            let rhs = self.term()?;
            parts.push(Formula::new(FormulaKind::Compare { op, lhs: lhs.clone(), rhs: rhs.clone() }, span));
            lhs = rhs;
            match self.cmp_op() {
                Some(next) => op = next,
                None => break,
            }
        }
        Ok(Formula::conjunction(parts, span))
    }

    fn term(&mut self) -> Result<Term, SpecError> {
        let mut lhs = self.product()?;
        loop {
            let span = lhs.span;
            if self.eat_sym("+") {
                let rhs = self.product()?;
                lhs = Term::new(TermKind::Add(Box::new(lhs), Box::new(rhs)), span);
            } else if self.eat_sym("-") {
                let rhs = self.product()?;
                lhs = Term::new(TermKind::Sub(Box::new(lhs), Box::new(rhs)), span);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Term, SpecError> {
        let mut lhs = self.unary_term()?;
        while self.eat_sym("*") {
            let rhs = self.unary_term()?;
            let span = lhs.span;
            lhs = Term::new(TermKind::Mul(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary_term(&mut self) -> Result<Term, SpecError> {
        let span = self.span();
        if self.eat_sym("-") {
            let inner = self.unary_term()?;
            return Ok(Term::new(TermKind::Neg(Box::new(inner)), span));
        }
        if self.is_kw("argmax") {
            self.bump();
            let inner = self.unary_term()?;
            return Ok(Term::new(TermKind::ArgMax(Box::new(inner)), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Term, SpecError> {
        let mut base = self.primary()?;
        while self.is_sym("[") {
            self.bump();
            let index = self.term()?;
            self.expect_sym("]")?;
            let span = base.span;
            base = Term::new(TermKind::Index(Box::new(base), Box::new(index)), span);
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Term, SpecError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Nat(text) => {
                let value = text.parse::<i64>().or_else(|_| self.error(&["integer literal that fits 64 bits"]))?;
                self.bump();
                Ok(Term::new(TermKind::Int(value), span))
            }
            Tok::Decimal(text) => {
                self.bump();
                Ok(Term::new(TermKind::Real(text), span))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.is_sym("(") {
                    self.bump();
                    let arg = self.term()?;
                    self.expect_sym(")")?;
                    Ok(Term::new(TermKind::Apply { model: name, arg: Box::new(arg) }, span))
                } else {
                    Ok(Term::var(name, span))
                }
            }
            Tok::Sym("(") => {
                self.bump();
                let inner = self.term()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            _ => self.error(&["term"]),
        }
    }
}
