//! SMT-LIB2 (QF_LRA) and VNN-LIB text emission.

use std::fmt::Write as _;

use num::{One, Signed};

use crate::analyzer::{LayerStack, Op};
use crate::exact::{self, Rational};
use crate::problem::{Atom, LinOp, LinearAtom, Polarity, Var, VerificationProblem};

use super::DispatchError;

/// Exact value of the shortest decimal that reads back as `v`.
fn weight(v: f64) -> Rational {
    exact::parse_decimal(&format!("{v}")).expect("finite weights print as plain decimals")
}

/// Box bound as a literal that does not shrink the box: the short decimal
/// when it lies on the outer side of `v`, the exact binary value otherwise.
fn bound(v: f64, lower: bool) -> String {
    let short = weight(v);
    let exact_v = exact::from_f64(v).expect("finite bounds");
    let outside = if lower { short <= exact_v } else { short >= exact_v };
    exact::smt_literal(if outside { &short } else { &exact_v })
}

fn var_name(v: Var) -> String {
    match v {
        Var::Input(i) => format!("X_{i}"),
        Var::Output(j) => format!("Y_{j}"),
    }
}

/// `c·v` with the usual shortcuts for ±1.
fn scaled(c: &Rational, v: &str) -> String {
    if c.is_one() {
        v.to_string()
    } else if (-c).is_one() {
        format!("(- {v})")
    } else {
        format!("(* {} {v})", exact::smt_literal(c))
    }
}

fn sum(mut terms: Vec<String>) -> String {
    match terms.len() {
        0 => "0.0".into(),
        1 => terms.pop().unwrap(),
        _ => format!("(+ {})", terms.join(" ")),
    }
}

/// Linear atom with a positive leading coefficient: `-y < -3` is written `(> Y 3)`.
fn atom_text(a: &LinearAtom) -> String {
    let flip = a.coeffs.values().next().is_some_and(|c| c.is_negative());
    let sign = |c: &Rational| if flip { -c } else { c.clone() };
    let lhs = sum(a.coeffs.iter().map(|(v, c)| scaled(&sign(c), &var_name(*v))).collect());
    let op = match (a.op, flip) {
        (LinOp::Lt, false) => "<",
        (LinOp::Le, false) => "<=",
        (LinOp::Lt, true) => ">",
        (LinOp::Le, true) => ">=",
    };
    format!("({op} {lhs} {})", exact::smt_literal(&sign(&a.bound)))
}

/// The counterexample condition as one formula over `X_i`/`Y_j`.
fn violation_text(p: &VerificationProblem, outputs: usize) -> Result<String, DispatchError> {
    let violation = p.output_constraint.linearize(outputs);
    if violation.is_false() {
        return Err(DispatchError::EmptyConstraint);
    }
    let mut disjuncts = Vec::new();
    for conj in violation.disjuncts() {
        let mut parts = Vec::new();
        for a in conj {
            let Atom::Linear(l) = a else { unreachable!("linearized") };
            for v in l.coeffs.keys() {
                let ok = match v {
                    Var::Input(i) => *i < p.input_region.dim(),
                    Var::Output(j) => *j < outputs,
                };
                if !ok {
                    return Err(DispatchError::UnsupportedAtom(format!("{l} refers to {v}, which does not exist")));
                }
            }
            parts.push(atom_text(l));
        }
        disjuncts.push(match parts.len() {
            0 => "true".to_string(),
            1 => parts.pop().unwrap(),
            _ => format!("(and {})", parts.join(" ")),
        });
    }
    Ok(if disjuncts.len() == 1 { disjuncts.pop().unwrap() } else { format!("(or {})", disjuncts.join(" ")) })
}

fn check_polarity(p: &VerificationProblem) -> Result<(), DispatchError> {
    match p.polarity {
        Polarity::Falsification => Ok(()),
        Polarity::Proof => Err(DispatchError::WrongPolarity),
    }
}

fn header(out: &mut String, p: &VerificationProblem) {
    writeln!(out, "; problem {}", p.id()).unwrap();
    writeln!(out, "; model {}", p.model_name).unwrap();
    writeln!(out, "; region {}", p.input_region).unwrap();
}

fn input_bounds(out: &mut String, p: &VerificationProblem) {
    for (i, (lo, hi)) in p.input_region.lo.iter().zip(&p.input_region.hi).enumerate() {
        writeln!(out, "(assert (>= X_{i} {}))", bound(*lo, true)).unwrap();
        writeln!(out, "(assert (<= X_{i} {}))", bound(*hi, false)).unwrap();
    }
    for a in &p.residual {
        writeln!(out, "(assert {})", atom_text(a)).unwrap();
    }
}

/// Satisfiable exactly when the problem has a counterexample. Expects the
/// falsification form (see [`crate::problem::negate_goal`]).
pub fn emit_smtlib(p: &VerificationProblem) -> Result<String, DispatchError> {
    check_polarity(p)?;
    let stack = LayerStack::from_model(&p.model).map_err(|e| DispatchError::UnsupportedModel(e.to_string()))?;
    let outputs = stack.output_dim();
    let violation = violation_text(p, outputs)?;

    let mut out = String::new();
    header(&mut out, p);
    out.push_str("(set-option :produce-models true)\n(set-logic QF_LRA)\n");
    let n = stack.input_dim;
    for i in 0..n {
        writeln!(out, "(declare-const X_{i} Real)").unwrap();
    }
    let last = stack.ops.len().saturating_sub(1);
    let mut current: Vec<String> = (0..n).map(|i| format!("X_{i}")).collect();
    let mut definitions = String::new();
    for (l, op) in stack.ops.iter().enumerate() {
        let width = match op {
            Op::Affine { bias, .. } => bias.len(),
            Op::Relu => current.len(),
        };
        let names: Vec<String> =
            (0..width).map(|j| if l == last { format!("Y_{j}") } else { format!("N_{l}_{j}") }).collect();
        for (j, name) in names.iter().enumerate() {
            writeln!(out, "(declare-const {name} Real)").unwrap();
            let value = match op {
                Op::Affine { weights, bias } => {
                    let mut terms: Vec<String> = weights[j]
                        .iter()
                        .zip(&current)
                        .filter(|(w, _)| **w != 0.0)
                        .map(|(w, v)| scaled(&weight(*w), v))
                        .collect();
                    if bias[j] != 0.0 || terms.is_empty() {
                        terms.push(exact::smt_literal(&weight(bias[j])));
                    }
                    sum(terms)
                }
                Op::Relu => {
                    let v = &current[j];
                    format!("(ite (>= {v} 0.0) {v} 0.0)")
                }
            };
            writeln!(definitions, "(assert (= {name} {value}))").unwrap();
        }
        current = names;
    }
    if stack.ops.is_empty() {
        for j in 0..n {
            writeln!(out, "(declare-const Y_{j} Real)").unwrap();
            writeln!(definitions, "(assert (= Y_{j} X_{j}))").unwrap();
        }
    }
    input_bounds(&mut out, p);
    out.push_str(&definitions);
    writeln!(out, "(assert {violation})").unwrap();
    out.push_str("(check-sat)\n(get-model)\n");
    Ok(out)
}

/// Script with no assertions, for adapters that never read the problem.
pub(crate) fn emit_placeholder(p: &VerificationProblem, reason: &str) -> String {
    let mut out = String::new();
    header(&mut out, p);
    writeln!(out, "; not encoded: {reason}").unwrap();
    out.push_str("(set-logic QF_LRA)\n(check-sat)\n");
    out
}

/// VNN-LIB property: variable declarations, the input box, and the
/// counterexample condition. The model is not encoded.
pub fn emit_vnnlib(p: &VerificationProblem) -> Result<String, DispatchError> {
    check_polarity(p)?;
    let outputs = p.model.output_dim();
    let violation = violation_text(p, outputs)?;
    let mut out = String::new();
    header(&mut out, p);
    for i in 0..p.input_region.dim() {
        writeln!(out, "(declare-const X_{i} Real)").unwrap();
    }
    for j in 0..outputs {
        writeln!(out, "(declare-const Y_{j} Real)").unwrap();
    }
    input_bounds(&mut out, p);
    writeln!(out, "(assert {violation})").unwrap();
    Ok(out)
}
