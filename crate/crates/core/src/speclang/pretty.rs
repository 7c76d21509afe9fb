//! Printing back to concrete syntax. Output is fully parenthesised, so it
//! reparses to the same tree regardless of operator precedence.

use std::fmt::Write;

use super::ast::*;

pub fn print_module(module: &SpecModule) -> String {
    let mut out = String::new();
    for import in &module.imports {
        writeln!(out, "model {} from {};", import.name, quote(&import.path)).unwrap();
    }
    for dataset in &module.datasets {
        let labeled = if dataset.labeled { " labeled" } else { "" };
        writeln!(out, "dataset {} from {}{};", dataset.name, quote(&dataset.path), labeled).unwrap();
    }
    for pred in &module.predicates {
        let params: Vec<String> = pred.params.iter().map(|p| format!("{}: {}", p.name, p.sort)).collect();
        writeln!(out, "predicate {}({}) = {};", pred.name, params.join(", "), print_formula(&pred.body)).unwrap();
    }
    for goal in &module.goals {
        writeln!(out, "goal {}: {};", goal.name, print_formula(&goal.body)).unwrap();
    }
    out
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn print_formula(f: &Formula) -> String {
    match &f.kind {
        FormulaKind::Bool(b) => b.to_string(),
        FormulaKind::Forall { var, domain, body } => format!("(forall {}. {})", binder(var, domain), print_formula(body)),
        FormulaKind::Exists { var, domain, body } => format!("(exists {}. {})", binder(var, domain), print_formula(body)),
        FormulaKind::And(a, b) => format!("({} /\\ {})", print_formula(a), print_formula(b)),
        FormulaKind::Or(a, b) => format!("({} \\/ {})", print_formula(a), print_formula(b)),
        FormulaKind::Implies(a, b) => format!("({} -> {})", print_formula(a), print_formula(b)),
        FormulaKind::Not(a) => format!("(not {})", print_formula(a)),
        FormulaKind::Compare { op, lhs, rhs } => format!("{} {} {}", print_term(lhs), op.symbol(), print_term(rhs)),
        FormulaKind::PredApply { name, args } => {
            let args: Vec<String> = args.iter().map(print_term).collect();
            format!("{}({})", name, args.join(", "))
        }
    }
}

fn binder(var: &str, domain: &QuantDomain) -> String {
    match domain {
        QuantDomain::Sort(sort) => format!("{var}: {sort}"),
        QuantDomain::Dataset(d) => format!("{var} in {d}"),
    }
}

pub fn print_term(t: &Term) -> String {
    match &t.kind {
        TermKind::Var(name) => name.clone(),
        TermKind::Real(text) => text.clone(),
        TermKind::Int(n) if *n < 0 => format!("(- {})", n.unsigned_abs()),
        TermKind::Int(n) => n.to_string(),
        TermKind::Add(a, b) => format!("({} + {})", print_term(a), print_term(b)),
        TermKind::Sub(a, b) => format!("({} - {})", print_term(a), print_term(b)),
        TermKind::Mul(a, b) => format!("({} * {})", print_term(a), print_term(b)),
        TermKind::Neg(a) => format!("(- {})", print_term(a)),
        TermKind::Apply { model, arg } => format!("{}({})", model, print_term(arg)),
        TermKind::Index(v, i) => format!("{}[{}]", print_term(v), print_term(i)),
        TermKind::ArgMax(a) => format!("(argmax {})", print_term(a)),
    }
}
