//! Predicate inlining and bounded-quantifier unrolling.
//!
//! The result of [`expand_goal`] contains no predicate applications and no
//! integer quantifiers, and binds each variable name at most once on any
//! root-to-leaf path.

use std::collections::HashSet;

use super::ast::*;
use super::error::SpecError;
use super::typecheck::TypedSpec;

pub const EXPANSION_DEPTH_LIMIT: usize = 64;
const UNROLL_LIMIT: i64 = 1 << 20;

pub fn expand_goal(goal: &Formula, spec: &TypedSpec) -> Result<Formula, SpecError> {
    let mut fresh = Fresh::default();
    fresh.collect_formula(goal);
    for pred in &spec.module.predicates {
        fresh.collect_formula(&pred.body);
        for p in &pred.params {
            fresh.used.insert(p.name.clone());
        }
    }
    let inlined = inline(goal, spec, &mut fresh, 0)?;
    let unique = uniquify(&inlined, &mut Vec::new(), &mut fresh);
    unroll(&unique)
}

/// Expands every goal of a typed module, in order.
pub fn expand_all(spec: &TypedSpec) -> Result<Vec<(String, Formula)>, SpecError> {
    spec.module
        .goals
        .iter()
        .map(|g| Ok((g.name.clone(), expand_goal(&g.body, spec)?)))
        .collect()
}

#[derive(Default)]
struct Fresh {
    used: HashSet<String>,
}

impl Fresh {
    fn collect_formula(&mut self, f: &Formula) {
        match &f.kind {
            FormulaKind::Bool(_) => {}
            FormulaKind::Forall { var, body, .. } | FormulaKind::Exists { var, body, .. } => {
                self.used.insert(var.clone());
                self.collect_formula(body);
            }
            FormulaKind::Not(a) => self.collect_formula(a),
            FormulaKind::And(a, b) | FormulaKind::Or(a, b) | FormulaKind::Implies(a, b) => {
                self.collect_formula(a);
                self.collect_formula(b);
            }
            FormulaKind::Compare { lhs, rhs, .. } => {
                lhs.visit_vars(&mut |v| {
                    self.used.insert(v.to_string());
                });
                rhs.visit_vars(&mut |v| {
                    self.used.insert(v.to_string());
                });
            }
            FormulaKind::PredApply { args, .. } => {
                for a in args {
                    a.visit_vars(&mut |v| {
                        self.used.insert(v.to_string());
                    });
                }
            }
        }
    }

    fn make(&mut self, base: &str) -> String {
        let stem = base.rsplit_once('_').map_or(base, |(s, n)| {
            if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() {
                s
            } else {
                base
            }
        });
        let mut n = 1usize;
        loop {
            let candidate = format!("{stem}_{n}");
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
            n += 1;
        }
    }
}

fn subst_term(t: &Term, name: &str, value: &Term) -> Term {
    let kind = match &t.kind {
        TermKind::Var(v) if v == name => return value.clone(),
        TermKind::Var(_) | TermKind::Real(_) | TermKind::Int(_) => return t.clone(),
        TermKind::Add(a, b) => TermKind::Add(Box::new(subst_term(a, name, value)), Box::new(subst_term(b, name, value))),
        TermKind::Sub(a, b) => TermKind::Sub(Box::new(subst_term(a, name, value)), Box::new(subst_term(b, name, value))),
        TermKind::Mul(a, b) => TermKind::Mul(Box::new(subst_term(a, name, value)), Box::new(subst_term(b, name, value))),
        TermKind::Index(a, b) => {
            TermKind::Index(Box::new(subst_term(a, name, value)), Box::new(subst_term(b, name, value)))
        }
        TermKind::Neg(a) => TermKind::Neg(Box::new(subst_term(a, name, value))),
        TermKind::ArgMax(a) => TermKind::ArgMax(Box::new(subst_term(a, name, value))),
        TermKind::Apply { model, arg } => {
            TermKind::Apply { model: model.clone(), arg: Box::new(subst_term(arg, name, value)) }
        }
    };
    Term { kind, span: t.span, sort: t.sort }
}

/// Substitution that stops at binders of the same name.
pub fn subst_formula(f: &Formula, name: &str, value: &Term) -> Formula {
    let kind = match &f.kind {
        FormulaKind::Bool(b) => FormulaKind::Bool(*b),
        FormulaKind::Forall { var, domain, body } => FormulaKind::Forall {
            var: var.clone(),
            domain: domain.clone(),
            body: Box::new(if var == name { (**body).clone() } else { subst_formula(body, name, value) }),
        },
        FormulaKind::Exists { var, domain, body } => FormulaKind::Exists {
            var: var.clone(),
            domain: domain.clone(),
            body: Box::new(if var == name { (**body).clone() } else { subst_formula(body, name, value) }),
        },
        FormulaKind::And(a, b) => {
            FormulaKind::And(Box::new(subst_formula(a, name, value)), Box::new(subst_formula(b, name, value)))
        }
        FormulaKind::Or(a, b) => {
            FormulaKind::Or(Box::new(subst_formula(a, name, value)), Box::new(subst_formula(b, name, value)))
        }
        FormulaKind::Implies(a, b) => {
            FormulaKind::Implies(Box::new(subst_formula(a, name, value)), Box::new(subst_formula(b, name, value)))
        }
        FormulaKind::Not(a) => FormulaKind::Not(Box::new(subst_formula(a, name, value))),
        FormulaKind::Compare { op, lhs, rhs } => {
            FormulaKind::Compare { op: *op, lhs: subst_term(lhs, name, value), rhs: subst_term(rhs, name, value) }
        }
        FormulaKind::PredApply { name: p, args } => FormulaKind::PredApply {
            name: p.clone(),
            args: args.iter().map(|a| subst_term(a, name, value)).collect(),
        },
    };
    Formula::new(kind, f.span)
}

/// Renames every binder in `f` to a fresh name.
fn freshen(f: &Formula, fresh: &mut Fresh) -> Formula {
    match &f.kind {
        FormulaKind::Forall { var, domain, body } | FormulaKind::Exists { var, domain, body } => {
            let new = fresh.make(var);
            let sort = match domain {
                QuantDomain::Sort(s) => Some(*s),
                QuantDomain::Dataset(_) => None,
            };
            let renamed = subst_formula(body, var, &Term { kind: TermKind::Var(new.clone()), span: f.span, sort });
            let body = Box::new(freshen(&renamed, fresh));
            let kind = if matches!(f.kind, FormulaKind::Forall { .. }) {
                FormulaKind::Forall { var: new, domain: domain.clone(), body }
            } else {
                FormulaKind::Exists { var: new, domain: domain.clone(), body }
            };
            Formula::new(kind, f.span)
        }
        FormulaKind::And(a, b) => Formula::new(FormulaKind::And(Box::new(freshen(a, fresh)), Box::new(freshen(b, fresh))), f.span),
        FormulaKind::Or(a, b) => Formula::new(FormulaKind::Or(Box::new(freshen(a, fresh)), Box::new(freshen(b, fresh))), f.span),
        FormulaKind::Implies(a, b) => {
            Formula::new(FormulaKind::Implies(Box::new(freshen(a, fresh)), Box::new(freshen(b, fresh))), f.span)
        }
        FormulaKind::Not(a) => Formula::new(FormulaKind::Not(Box::new(freshen(a, fresh))), f.span),
        _ => f.clone(),
    }
}

fn vector_dim(t: &Term) -> Option<usize> {
    match t.sort {
        Some(Sort::Vector(n)) => Some(n),
        _ => None,
    }
}

fn index(v: &Term, i: usize, span: Span) -> Term {
    Term::with_sort(
        TermKind::Index(Box::new(v.clone()), Box::new(Term::with_sort(TermKind::Int(i as i64), span, Sort::Int))),
        span,
        Sort::Real,
    )
}

/// `-eps < a[i] - b[i] < eps` for every coordinate.
fn dist_linf(a: &Term, b: &Term, eps: &Term, span: Span) -> Formula {
    let n = vector_dim(a).unwrap_or(0);
    let mut parts = Vec::with_capacity(2 * n);
    for i in 0..n {
        let diff = Term::with_sort(
            TermKind::Sub(Box::new(index(a, i, span)), Box::new(index(b, i, span))),
            span,
            Sort::Real,
        );
        let neg_eps = Term::with_sort(TermKind::Neg(Box::new(eps.clone())), span, eps.sort.unwrap_or(Sort::Real));
        parts.push(Formula::new(FormulaKind::Compare { op: CmpOp::Lt, lhs: neg_eps, rhs: diff.clone() }, span));
        parts.push(Formula::new(FormulaKind::Compare { op: CmpOp::Lt, lhs: diff, rhs: eps.clone() }, span));
    }
    Formula::conjunction(parts, span)
}

fn inline(f: &Formula, spec: &TypedSpec, fresh: &mut Fresh, depth: usize) -> Result<Formula, SpecError> {
    let span = f.span;
    let rec = |g: &Formula, fresh: &mut Fresh| inline(g, spec, fresh, depth);
    let kind = match &f.kind {
        FormulaKind::PredApply { name, args } => {
            if depth >= EXPANSION_DEPTH_LIMIT {
                return Err(SpecError::ExpansionDepthExceeded { limit: EXPANSION_DEPTH_LIMIT, span });
            }
            return match name.as_str() {
                "dist_linf" => Ok(dist_linf(&args[0], &args[1], &args[2], span)),
                "robust_to" => {
                    let TermKind::Var(model) = &args[0].kind else {
                        return Err(SpecError::UnknownModel { name: "?".into(), span });
                    };
                    let sig = spec
                        .signatures
                        .get(model)
                        .ok_or_else(|| SpecError::UnknownModel { name: model.clone(), span })?;
                    let n = sig.num_input;
                    let var = fresh.make("b");
                    let b = Term::with_sort(TermKind::Var(var.clone()), span, Sort::Vector(n));
                    let apply = |arg: &Term| {
                        Term::with_sort(
                            TermKind::ArgMax(Box::new(Term::with_sort(
                                TermKind::Apply { model: model.clone(), arg: Box::new(arg.clone()) },
                                span,
                                Sort::Vector(sig.num_classes),
                            ))),
                            span,
                            Sort::Label,
                        )
                    };
                    let same_class =
                        Formula::new(FormulaKind::Compare { op: CmpOp::Eq, lhs: apply(&args[1]), rhs: apply(&b) }, span);
                    let body = Formula::new(
                        FormulaKind::Implies(Box::new(dist_linf(&args[1], &b, &args[2], span)), Box::new(same_class)),
                        span,
                    );
                    Ok(Formula::new(
                        FormulaKind::Forall { var, domain: QuantDomain::Sort(Sort::Vector(n)), body: Box::new(body) },
                        span,
                    ))
                }
                _ => {
                    let def = spec
                        .predicate(name)
                        .ok_or_else(|| SpecError::UnboundIdentifier { name: name.clone(), span })?;
                    let mut body = freshen(&def.body, fresh);
                    // Params first go to fresh placeholders so that an argument
                    // mentioning another param's name is not substituted twice.
                    let placeholders: Vec<String> = def.params.iter().map(|p| fresh.make(&p.name)).collect();
                    for (param, ph) in def.params.iter().zip(&placeholders) {
                        body = subst_formula(&body, &param.name, &Term::with_sort(TermKind::Var(ph.clone()), span, param.sort));
                    }
                    for (ph, arg) in placeholders.iter().zip(args) {
                        body = subst_formula(&body, ph, arg);
                    }
                    inline(&body, spec, fresh, depth + 1)
                }
            };
        }
        FormulaKind::Bool(_) | FormulaKind::Compare { .. } => return Ok(f.clone()),
        FormulaKind::Forall { var, domain, body } => {
            FormulaKind::Forall { var: var.clone(), domain: domain.clone(), body: Box::new(rec(body, fresh)?) }
        }
        FormulaKind::Exists { var, domain, body } => {
            FormulaKind::Exists { var: var.clone(), domain: domain.clone(), body: Box::new(rec(body, fresh)?) }
        }
        FormulaKind::And(a, b) => FormulaKind::And(Box::new(rec(a, fresh)?), Box::new(rec(b, fresh)?)),
        FormulaKind::Or(a, b) => FormulaKind::Or(Box::new(rec(a, fresh)?), Box::new(rec(b, fresh)?)),
        FormulaKind::Implies(a, b) => FormulaKind::Implies(Box::new(rec(a, fresh)?), Box::new(rec(b, fresh)?)),
        FormulaKind::Not(a) => FormulaKind::Not(Box::new(rec(a, fresh)?)),
    };
    Ok(Formula::new(kind, span))
}

/// Renames binders that shadow an enclosing binder.
fn uniquify(f: &Formula, bound: &mut Vec<String>, fresh: &mut Fresh) -> Formula {
    match &f.kind {
        FormulaKind::Forall { var, domain, body } | FormulaKind::Exists { var, domain, body } => {
            let (name, body) = if bound.contains(var) {
                let new = fresh.make(var);
                let sort = match domain {
                    QuantDomain::Sort(s) => Some(*s),
                    QuantDomain::Dataset(_) => None,
                };
                let renamed = subst_formula(body, var, &Term { kind: TermKind::Var(new.clone()), span: f.span, sort });
                (new, renamed)
            } else {
                (var.clone(), (**body).clone())
            };
            bound.push(name.clone());
            let body = Box::new(uniquify(&body, bound, fresh));
            bound.pop();
            let kind = if matches!(f.kind, FormulaKind::Forall { .. }) {
                FormulaKind::Forall { var: name, domain: domain.clone(), body }
            } else {
                FormulaKind::Exists { var: name, domain: domain.clone(), body }
            };
            Formula::new(kind, f.span)
        }
        FormulaKind::And(a, b) => Formula::new(
            FormulaKind::And(Box::new(uniquify(a, bound, fresh)), Box::new(uniquify(b, bound, fresh))),
            f.span,
        ),
        FormulaKind::Or(a, b) => Formula::new(
            FormulaKind::Or(Box::new(uniquify(a, bound, fresh)), Box::new(uniquify(b, bound, fresh))),
            f.span,
        ),
        FormulaKind::Implies(a, b) => Formula::new(
            FormulaKind::Implies(Box::new(uniquify(a, bound, fresh)), Box::new(uniquify(b, bound, fresh))),
            f.span,
        ),
        FormulaKind::Not(a) => Formula::new(FormulaKind::Not(Box::new(uniquify(a, bound, fresh))), f.span),
        _ => f.clone(),
    }
}

/// Evaluates closed integer terms.
pub fn const_int(t: &Term) -> Option<i64> {
    match &t.kind {
        TermKind::Int(n) => Some(*n),
        TermKind::Neg(a) => const_int(a)?.checked_neg(),
        TermKind::Add(a, b) => const_int(a)?.checked_add(const_int(b)?),
        TermKind::Sub(a, b) => const_int(a)?.checked_sub(const_int(b)?),
        TermKind::Mul(a, b) => const_int(a)?.checked_mul(const_int(b)?),
        _ => None,
    }
}

fn flatten_and(f: &Formula, out: &mut Vec<Formula>) {
    match &f.kind {
        FormulaKind::And(a, b) => {
            flatten_and(a, out);
            flatten_and(b, out);
        }
        _ => out.push(f.clone()),
    }
}

/// Splits conjuncts into the integer range of `var` and everything else.
fn extract_range(var: &str, conjuncts: Vec<Formula>) -> (Option<i64>, Option<i64>, Vec<Formula>) {
    let (mut lo, mut hi): (Option<i64>, Option<i64>) = (None, None);
    let mut rest = Vec::new();
    let is_var = |t: &Term| matches!(&t.kind, TermKind::Var(v) if v == var);
    for c in conjuncts {
        if let FormulaKind::Compare { op, lhs, rhs } = &c.kind {
            // Normalise to `var op k`.
            let oriented = if is_var(lhs) {
                const_int(rhs).map(|k| (*op, k))
            } else if is_var(rhs) {
                let flipped = match op {
                    CmpOp::Lt => CmpOp::Gt,
                    CmpOp::Le => CmpOp::Ge,
                    CmpOp::Gt => CmpOp::Lt,
                    CmpOp::Ge => CmpOp::Le,
                    CmpOp::Eq => CmpOp::Eq,
                };
                const_int(lhs).map(|k| (flipped, k))
            } else {
                None
            };
            if let Some((op, k)) = oriented {
                let tighten_lo = |lo: &mut Option<i64>, v: i64| *lo = Some(lo.map_or(v, |l| l.max(v)));
                let tighten_hi = |hi: &mut Option<i64>, v: i64| *hi = Some(hi.map_or(v, |h| h.min(v)));
                match op {
                    CmpOp::Ge => tighten_lo(&mut lo, k),
                    CmpOp::Gt => tighten_lo(&mut lo, k.saturating_add(1)),
                    CmpOp::Le => tighten_hi(&mut hi, k),
                    CmpOp::Lt => tighten_hi(&mut hi, k.saturating_sub(1)),
                    CmpOp::Eq => {
                        tighten_lo(&mut lo, k);
                        tighten_hi(&mut hi, k);
                    }
                }
                continue;
            }
        }
        rest.push(c);
    }
    (lo, hi, rest)
}

fn unroll(f: &Formula) -> Result<Formula, SpecError> {
    let span = f.span;
    let kind = match &f.kind {
        FormulaKind::Forall { var, domain: QuantDomain::Sort(Sort::Int), body } => {
            let (guard, consequent) = match &body.kind {
                FormulaKind::Implies(g, c) => ((**g).clone(), (**c).clone()),
                _ => return Err(SpecError::UnboundedIntQuantifier { var: var.clone(), span }),
            };
            let mut conjuncts = Vec::new();
            flatten_and(&guard, &mut conjuncts);
            let (lo, hi, rest) = extract_range(var, conjuncts);
            let (lo, hi) = bounded(var, lo, hi, span)?;
            let mut parts = Vec::new();
            for k in lo..=hi {
                let value = Term::with_sort(TermKind::Int(k), span, Sort::Int);
                let c = subst_formula(&consequent, var, &value);
                let instance = if rest.is_empty() {
                    c
                } else {
                    let g = Formula::conjunction(rest.iter().map(|r| subst_formula(r, var, &value)).collect(), span);
                    Formula::new(FormulaKind::Implies(Box::new(g), Box::new(c)), span)
                };
                parts.push(unroll(&instance)?);
            }
            return Ok(Formula::conjunction(parts, span));
        }
        FormulaKind::Exists { var, domain: QuantDomain::Sort(Sort::Int), body } => {
            let mut conjuncts = Vec::new();
            flatten_and(body, &mut conjuncts);
            let (lo, hi, rest) = extract_range(var, conjuncts);
            let (lo, hi) = bounded(var, lo, hi, span)?;
            let mut parts = Vec::new();
            for k in lo..=hi {
                let value = Term::with_sort(TermKind::Int(k), span, Sort::Int);
                let instance = Formula::conjunction(rest.iter().map(|r| subst_formula(r, var, &value)).collect(), span);
                parts.push(unroll(&instance)?);
            }
            return Ok(Formula::disjunction(parts, span));
        }
        FormulaKind::Forall { var, domain, body } => {
            FormulaKind::Forall { var: var.clone(), domain: domain.clone(), body: Box::new(unroll(body)?) }
        }
        FormulaKind::Exists { var, domain, body } => {
            FormulaKind::Exists { var: var.clone(), domain: domain.clone(), body: Box::new(unroll(body)?) }
        }
        FormulaKind::And(a, b) => FormulaKind::And(Box::new(unroll(a)?), Box::new(unroll(b)?)),
        FormulaKind::Or(a, b) => FormulaKind::Or(Box::new(unroll(a)?), Box::new(unroll(b)?)),
        FormulaKind::Implies(a, b) => FormulaKind::Implies(Box::new(unroll(a)?), Box::new(unroll(b)?)),
        FormulaKind::Not(a) => FormulaKind::Not(Box::new(unroll(a)?)),
        _ => return Ok(f.clone()),
    };
    Ok(Formula::new(kind, span))
}

fn bounded(var: &str, lo: Option<i64>, hi: Option<i64>, span: Span) -> Result<(i64, i64), SpecError> {
    match (lo, hi) {
        (Some(lo), Some(hi)) if hi.saturating_sub(lo) < UNROLL_LIMIT => Ok((lo, hi)),
        _ => Err(SpecError::UnboundedIntQuantifier { var: var.to_string(), span }),
    }
}
