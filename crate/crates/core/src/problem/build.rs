use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num::{One, Zero};

use super::goal::{Atom, LinOp, LinearAtom, NormalizedGoal, Var};
use super::{IntervalBox, Polarity, ProblemError, ProblemMeta, VerificationProblem};
use crate::exact::{self, Rational};
use crate::model::{eval_model, Dataset, Model};
use crate::speclang::expand::{const_int, subst_formula};
use crate::speclang::{expand_all, CmpOp, Formula, FormulaKind, QuantDomain, Sort, Term, TermKind, TypedSpec};

/// Upper bound on conjuncts while building a normal form.
const MAX_CONJUNCTS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuildOptions {
    /// Intersect every input box with `[lo, hi]` in each dimension.
    pub clamp: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct LinExpr {
    coeffs: BTreeMap<Var, Rational>,
    constant: Rational,
}

impl LinExpr {
    fn constant(c: Rational) -> Self {
        LinExpr { coeffs: BTreeMap::new(), constant: c }
    }

    fn var(v: Var) -> Self {
        LinExpr { coeffs: BTreeMap::from([(v, Rational::one())]), constant: Rational::zero() }
    }

    fn as_constant(&self) -> Option<&Rational> {
        self.coeffs.values().all(Zero::is_zero).then_some(&self.constant)
    }

    fn add(mut self, other: LinExpr) -> Self {
        for (v, c) in other.coeffs {
            *self.coeffs.entry(v).or_insert_with(Rational::zero) += c;
        }
        self.constant += other.constant;
        self
    }

    fn scale(mut self, k: &Rational) -> Self {
        for c in self.coeffs.values_mut() {
            *c *= k;
        }
        self.constant *= k;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LabelValue {
    Const(usize),
    Output,
}

#[derive(Debug, Clone)]
enum Value {
    Scalar(LinExpr),
    ConstVec(Vec<Rational>),
    InputVec(usize),
    OutputVec(usize),
    Label(LabelValue),
}

/// What the variables of a quantifier-free goal stand for.
pub struct GoalEnv<'a> {
    pub goal: String,
    /// The quantified input vector and its dimension.
    pub input: Option<(String, usize)>,
    /// Variables bound to known vectors, e.g. a dataset row.
    pub constants: BTreeMap<String, Vec<Rational>>,
    pub models: &'a BTreeMap<String, Arc<Model>>,
    /// Set to the model applied to the input vector once one is seen.
    pub applied: Option<String>,
}

impl<'a> GoalEnv<'a> {
    pub fn new(goal: &str, input: Option<(String, usize)>, models: &'a BTreeMap<String, Arc<Model>>) -> Self {
        GoalEnv { goal: goal.to_string(), input, constants: BTreeMap::new(), models, applied: None }
    }

    fn unsupported(&self, reason: impl Into<String>) -> ProblemError {
        ProblemError::UnsupportedFormulaShape { goal: self.goal.clone(), reason: reason.into() }
    }

    fn scalar(&mut self, t: &Term) -> Result<LinExpr, ProblemError> {
        match self.term(t)? {
            Value::Scalar(e) => Ok(e),
            _ => Err(self.unsupported(format!("{}: expected a scalar term", t.span))),
        }
    }

    fn term(&mut self, t: &Term) -> Result<Value, ProblemError> {
        Ok(match &t.kind {
            TermKind::Var(name) => {
                if let Some(row) = self.constants.get(name) {
                    Value::ConstVec(row.clone())
                } else if let Some((_, n)) = self.input.as_ref().filter(|(v, _)| v == name) {
                    Value::InputVec(*n)
                } else {
                    return Err(self.unsupported(format!("{}: variable `{name}` is not the goal's input", t.span)));
                }
            }
            TermKind::Real(text) => Value::Scalar(LinExpr::constant(
                exact::parse_decimal(text).ok_or_else(|| self.unsupported(format!("bad number `{text}`")))?,
            )),
            TermKind::Int(n) if t.sort == Some(Sort::Label) => match usize::try_from(*n) {
                Ok(c) => Value::Label(LabelValue::Const(c)),
                Err(_) => return Err(self.unsupported(format!("{}: negative class index", t.span))),
            },
            TermKind::Int(n) => Value::Scalar(LinExpr::constant(exact::from_i64(*n))),
            TermKind::Add(a, b) => Value::Scalar(self.scalar(a)?.add(self.scalar(b)?)),
            TermKind::Sub(a, b) => {
                let rhs = self.scalar(b)?.scale(&-Rational::one());
                Value::Scalar(self.scalar(a)?.add(rhs))
            }
            TermKind::Neg(a) => Value::Scalar(self.scalar(a)?.scale(&-Rational::one())),
            TermKind::Mul(a, b) => {
                let (ea, eb) = (self.scalar(a)?, self.scalar(b)?);
                if let Some(k) = ea.as_constant() {
                    Value::Scalar(eb.scale(&k.clone()))
                } else if let Some(k) = eb.as_constant() {
                    Value::Scalar(ea.scale(&k.clone()))
                } else {
                    return Err(ProblemError::NonLinearAtom { span: t.span });
                }
            }
            TermKind::Apply { model, arg } => {
                let m = self.models.get(model).ok_or_else(|| ProblemError::UnknownModel(model.clone()))?.clone();
                match self.term(arg)? {
                    Value::ConstVec(v) => {
                        let x: Vec<f64> = v.iter().map(exact::to_f64).collect();
                        let y = eval_model(&m, &x)?;
                        let y = y
                            .iter()
                            .map(|v| exact::from_f64(*v).ok_or(ProblemError::Model(crate::model::ModelError::NonFiniteInput)))
                            .collect::<Result<_, _>>()?;
                        Value::ConstVec(y)
                    }
                    Value::InputVec(_) => {
                        match &self.applied {
                            Some(prev) if prev != model => {
                                return Err(self.unsupported(format!(
                                    "models `{prev}` and `{model}` are both applied to the input"
                                )))
                            }
                            _ => self.applied = Some(model.clone()),
                        }
                        Value::OutputVec(m.output_dim())
                    }
                    _ => {
                        return Err(self.unsupported(format!(
                            "{}: a model may only be applied to the input vector or to a constant",
                            t.span
                        )))
                    }
                }
            }
            TermKind::Index(v, i) => {
                let idx = const_int(i).ok_or_else(|| self.unsupported(format!("{}: index is not a constant", i.span)))?;
                let value = self.term(v)?;
                let len = match &value {
                    Value::ConstVec(r) => r.len(),
                    Value::InputVec(n) | Value::OutputVec(n) => *n,
                    _ => return Err(self.unsupported(format!("{}: indexing a non-vector", t.span))),
                };
                let k = usize::try_from(idx)
                    .ok()
                    .filter(|k| *k < len)
                    .ok_or_else(|| self.unsupported(format!("{}: index {idx} out of range for length {len}", i.span)))?;
                Value::Scalar(match value {
                    Value::ConstVec(r) => LinExpr::constant(r[k].clone()),
                    Value::InputVec(_) => LinExpr::var(Var::Input(k)),
                    _ => LinExpr::var(Var::Output(k)),
                })
            }
            TermKind::ArgMax(v) => match self.term(v)? {
                Value::ConstVec(r) => {
                    let mut best = 0;
                    for (i, x) in r.iter().enumerate() {
                        if *x > r[best] {
                            best = i;
                        }
                    }
                    Value::Label(LabelValue::Const(best))
                }
                Value::OutputVec(_) => Value::Label(LabelValue::Output),
                _ => return Err(self.unsupported(format!("{}: argmax of the input vector", t.span))),
            },
        })
    }

    fn check_size(&self, g: NormalizedGoal) -> Result<NormalizedGoal, ProblemError> {
        if g.disjuncts().len() > MAX_CONJUNCTS {
            return Err(ProblemError::GoalTooLarge { goal: self.goal.clone(), limit: MAX_CONJUNCTS });
        }
        Ok(g)
    }

    fn and(&self, a: NormalizedGoal, b: NormalizedGoal) -> Result<NormalizedGoal, ProblemError> {
        if a.disjuncts().len().saturating_mul(b.disjuncts().len()) > MAX_CONJUNCTS {
            return Err(ProblemError::GoalTooLarge { goal: self.goal.clone(), limit: MAX_CONJUNCTS });
        }
        Ok(a.and(&b))
    }

    fn not(&self, a: NormalizedGoal) -> Result<NormalizedGoal, ProblemError> {
        let product = a.disjuncts().iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len().max(1)));
        if product.map_or(true, |p| p > MAX_CONJUNCTS) {
            return Err(ProblemError::GoalTooLarge { goal: self.goal.clone(), limit: MAX_CONJUNCTS });
        }
        Ok(a.negate())
    }

    fn compare(&mut self, op: CmpOp, lhs: &Term, rhs: &Term) -> Result<NormalizedGoal, ProblemError> {
        let (l, r) = (self.term(lhs)?, self.term(rhs)?);
        match (l, r) {
            (Value::Scalar(a), Value::Scalar(b)) => {
                let lin = |e: LinExpr, op: LinOp| match LinearAtom::new(e.coeffs, op, -e.constant) {
                    Ok(atom) => NormalizedGoal::atom(Atom::Linear(atom)),
                    Err(truth) => NormalizedGoal::truth(truth),
                };
                let minus_one = -Rational::one();
                let a_minus_b = a.clone().add(b.clone().scale(&minus_one));
                let b_minus_a = b.add(a.scale(&minus_one));
                Ok(match op {
                    CmpOp::Lt => lin(a_minus_b, LinOp::Lt),
                    CmpOp::Le => lin(a_minus_b, LinOp::Le),
                    CmpOp::Gt => lin(b_minus_a, LinOp::Lt),
                    CmpOp::Ge => lin(b_minus_a, LinOp::Le),
                    CmpOp::Eq => lin(a_minus_b, LinOp::Le).and(&lin(b_minus_a, LinOp::Le)),
                })
            }
            (Value::Label(a), Value::Label(b)) if op == CmpOp::Eq => Ok(match (a, b) {
                (LabelValue::Const(x), LabelValue::Const(y)) => NormalizedGoal::truth(x == y),
                (LabelValue::Output, LabelValue::Const(c)) | (LabelValue::Const(c), LabelValue::Output) => {
                    NormalizedGoal::atom(Atom::ClassIs(c))
                }
                (LabelValue::Output, LabelValue::Output) => NormalizedGoal::truth(true),
            }),
            _ => Err(self.unsupported(format!("{}: comparison between incompatible values", lhs.span))),
        }
    }

    /// Quantifier-free formula to normal form.
    pub fn dnf(&mut self, f: &Formula) -> Result<NormalizedGoal, ProblemError> {
        self.dnf_signed(f, false)
    }

    /// Negations are pushed to the atoms so that `not` never has to negate a
    /// whole normal form.
    fn dnf_signed(&mut self, f: &Formula, neg: bool) -> Result<NormalizedGoal, ProblemError> {
        let conj = |this: &mut Self, a: &Formula, na: bool, b: &Formula, nb: bool| {
            let (a, b) = (this.dnf_signed(a, na)?, this.dnf_signed(b, nb)?);
            this.and(a, b)
        };
        let disj = |this: &mut Self, a: &Formula, na: bool, b: &Formula, nb: bool| {
            let g = this.dnf_signed(a, na)?.or(&this.dnf_signed(b, nb)?);
            this.check_size(g)
        };
        match &f.kind {
            FormulaKind::Bool(b) => Ok(NormalizedGoal::truth(*b != neg)),
            FormulaKind::And(a, b) if neg => disj(self, a, true, b, true),
            FormulaKind::And(a, b) => conj(self, a, false, b, false),
            FormulaKind::Or(a, b) if neg => conj(self, a, true, b, true),
            FormulaKind::Or(a, b) => disj(self, a, false, b, false),
            FormulaKind::Implies(a, b) if neg => conj(self, a, false, b, true),
            FormulaKind::Implies(a, b) => disj(self, a, true, b, false),
            FormulaKind::Not(a) => self.dnf_signed(a, !neg),
            FormulaKind::Compare { op, lhs, rhs } => {
                let g = self.compare(*op, lhs, rhs)?;
                if neg {
                    self.not(g)
                } else {
                    Ok(g)
                }
            }
            FormulaKind::Forall { .. } | FormulaKind::Exists { .. } => {
                Err(self.unsupported(format!("{}: nested quantifier", f.span)))
            }
            FormulaKind::PredApply { name, .. } => Err(self.unsupported(format!("{}: unexpanded predicate `{name}`", f.span))),
        }
    }
}

/// Normal form of a quantifier-free formula over the environment's input
/// vector, model outputs and constants.
pub fn normalize_goal(q: &Formula, env: &mut GoalEnv<'_>) -> Result<NormalizedGoal, ProblemError> {
    env.dnf(q)
}

struct Binder {
    var: String,
    domain: QuantDomain,
}

/// Pulls quantifiers to the front. Universals are hoisted from positive
/// positions and existentials from negative ones; anything else would need
/// quantifier alternation.
fn prenex(f: &Formula, positive: bool, out: &mut Vec<Binder>) -> Result<Formula, String> {
    let span = f.span;
    let kind = match &f.kind {
        FormulaKind::Forall { var, domain, body } | FormulaKind::Exists { var, domain, body } => {
            let universal = matches!(f.kind, FormulaKind::Forall { .. });
            if universal != positive {
                return Err(if universal {
                    format!("{span}: universal quantifier under a negation")
                } else {
                    format!("{span}: existential goal; state it universally and let the tool search for counterexamples")
                });
            }
            let mut body = (**body).clone();
            let mut name = var.clone();
            if out.iter().any(|b| b.var == name) {
                let mut k = 1;
                while out.iter().any(|b| b.var == format!("{var}'{k}")) {
                    k += 1;
                }
                name = format!("{var}'{k}");
                body = subst_formula(&body, var, &Term::new(TermKind::Var(name.clone()), span));
            }
            out.push(Binder { var: name, domain: domain.clone() });
            return prenex(&body, positive, out);
        }
        FormulaKind::And(a, b) => FormulaKind::And(Box::new(prenex(a, positive, out)?), Box::new(prenex(b, positive, out)?)),
        FormulaKind::Or(a, b) => FormulaKind::Or(Box::new(prenex(a, positive, out)?), Box::new(prenex(b, positive, out)?)),
        FormulaKind::Implies(a, b) => {
            FormulaKind::Implies(Box::new(prenex(a, !positive, out)?), Box::new(prenex(b, positive, out)?))
        }
        FormulaKind::Not(a) => FormulaKind::Not(Box::new(prenex(a, !positive, out)?)),
        other => other.clone(),
    };
    Ok(Formula::new(kind, span))
}

fn split_implication(f: &Formula) -> (Vec<&Formula>, &Formula) {
    let mut pre = Vec::new();
    let mut cur = f;
    while let FormulaKind::Implies(a, b) = &cur.kind {
        pre.push(a.as_ref());
        cur = b;
    }
    (pre, cur)
}

#[derive(Clone, Default)]
struct Bound {
    value: Option<Rational>,
    strict: bool,
}

/// One problem per goal, or per dataset row for goals quantified over a dataset.
pub fn build_problems(
    spec: &TypedSpec,
    models: &BTreeMap<String, Arc<Model>>,
    datasets: &BTreeMap<String, Dataset>,
    opts: &BuildOptions,
) -> Result<Vec<VerificationProblem>, ProblemError> {
    let mut problems = Vec::new();
    for (name, body) in expand_all(spec)? {
        problems.extend(build_goal(spec, &name, &body, models, datasets, opts)?);
    }
    Ok(problems)
}

fn build_goal(
    spec: &TypedSpec,
    goal: &str,
    body: &Formula,
    models: &BTreeMap<String, Arc<Model>>,
    datasets: &BTreeMap<String, Dataset>,
    opts: &BuildOptions,
) -> Result<Vec<VerificationProblem>, ProblemError> {
    let unsupported = |reason: String| ProblemError::UnsupportedFormulaShape { goal: goal.to_string(), reason };
    let mut binders = Vec::new();
    let matrix = prenex(body, true, &mut binders).map_err(unsupported)?;

    let mut dataset_binder = None;
    let mut input_binder = None;
    for b in &binders {
        match &b.domain {
            QuantDomain::Dataset(d) if dataset_binder.is_none() => dataset_binder = Some((b.var.clone(), d.clone())),
            QuantDomain::Dataset(_) => return Err(unsupported("more than one dataset quantifier".into())),
            QuantDomain::Sort(Sort::Vector(n)) if input_binder.is_none() => input_binder = Some((b.var.clone(), *n)),
            QuantDomain::Sort(Sort::Vector(_)) => {
                return Err(unsupported("goal quantifies over more than one input vector".into()))
            }
            QuantDomain::Sort(s) => {
                return Err(unsupported(format!("quantified `{}` of sort {s}; only vector inputs are supported", b.var)))
            }
        }
    }

    let rows: Vec<(Option<usize>, Option<&[f64]>)> = match &dataset_binder {
        Some((_, d)) => {
            let data = datasets.get(d).ok_or_else(|| ProblemError::UnknownDataset(d.clone()))?;
            data.rows.iter().enumerate().map(|(i, r)| (Some(i), Some(r.features.as_slice()))).collect()
        }
        None => vec![(None, None)],
    };

    let mut out = Vec::with_capacity(rows.len());
    for (sample, row) in rows {
        // Without a separate input vector the dataset variable itself is the
        // input, pinned to the row.
        let (input, point) = match (&input_binder, &dataset_binder, row) {
            (Some(inp), _, _) => (inp.clone(), None),
            (None, Some((var, _)), Some(r)) => ((var.clone(), r.len()), Some(r)),
            _ => return Err(unsupported("goal has no quantified input vector".into())),
        };
        let mut env = GoalEnv::new(goal, Some(input.clone()), models);
        if let (Some((var, _)), Some(r), None) = (&dataset_binder, row, point) {
            let exact_row = r
                .iter()
                .map(|v| exact::from_f64(*v).ok_or(ProblemError::Model(crate::model::ModelError::NonFiniteInput)))
                .collect::<Result<_, _>>()?;
            env.constants.insert(var.clone(), exact_row);
        }

        let (pre, post) = split_implication(&matrix);
        let mut precondition = NormalizedGoal::truth(true);
        for p in pre {
            let g = env.dnf(p)?;
            precondition = env.and(precondition, g)?;
        }
        let mut constraint = env.dnf(post)?;
        if precondition.is_false() {
            return Err(ProblemError::EmptyInputRegion { goal: goal.to_string() });
        }
        if precondition.disjuncts().len() > 1 {
            return Err(unsupported("disjunctive precondition; split it into separate goals".into()));
        }

        let n = input.1;
        let mut lower = vec![Bound::default(); n];
        let mut upper = vec![Bound::default(); n];
        let mut residual = Vec::new();
        for atom in &precondition.disjuncts()[0] {
            let linear = match atom {
                Atom::Linear(l) if !l.mentions_output() => l,
                _ => {
                    constraint = constraint.or(&NormalizedGoal::atom(atom.negate()));
                    continue;
                }
            };
            if linear.coeffs.len() > 1 {
                residual.push(linear.clone());
                continue;
            }
            let (var, coeff) = linear.coeffs.iter().next().expect("canonical atoms mention a variable");
            let Var::Input(i) = *var else { unreachable!() };
            let strict = linear.op == LinOp::Lt;
            // coefficient is ±1 after canonical scaling
            let (slot, value, tighter): (&mut Bound, Rational, fn(&Rational, &Rational) -> bool) = if coeff > &Rational::zero() {
                (&mut upper[i], linear.bound.clone(), |new, old| new < old)
            } else {
                (&mut lower[i], -&linear.bound, |new, old| new > old)
            };
            match &slot.value {
                Some(old) if tighter(&value, old) => *slot = Bound { value: Some(value), strict },
                Some(old) if *old == value => slot.strict |= strict,
                Some(_) => {}
                None => *slot = Bound { value: Some(value), strict },
            }
        }
        let constraint = env.check_size(constraint)?;

        let (mut lo, mut hi) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (l, h) = match point {
                Some(r) => {
                    let x = exact::from_f64(r[i]).expect("dataset values are finite");
                    let l = lower[i].value.clone().map_or(x.clone(), |b| b.max(x.clone()));
                    let h = upper[i].value.clone().map_or(x.clone(), |b| b.min(x));
                    (l, h)
                }
                None => match (&lower[i].value, &upper[i].value) {
                    (Some(l), Some(h)) => (l.clone(), h.clone()),
                    _ => return Err(ProblemError::UnboundedInputRegion { goal: goal.to_string(), dim: i }),
                },
            };
            if l > h || (l == h && (lower[i].strict || upper[i].strict)) {
                return Err(ProblemError::EmptyInputRegion { goal: goal.to_string() });
            }
            // the box is closed; strict faces also go to the residual so
            // that counterexamples stay strictly inside
            let face = |coeff: i64, bound: &Rational| {
                let coeffs = BTreeMap::from([(Var::Input(i), exact::from_i64(coeff))]);
                LinearAtom::new(coeffs, LinOp::Lt, bound * exact::from_i64(coeff)).expect("one variable")
            };
            if lower[i].strict && lower[i].value.as_ref() == Some(&l) {
                residual.push(face(-1, &l));
            }
            if upper[i].strict && upper[i].value.as_ref() == Some(&h) {
                residual.push(face(1, &h));
            }
            let (mut l, mut h) = (exact::to_f64_down(&l), exact::to_f64_up(&h));
            if let Some((cl, ch)) = opts.clamp {
                l = l.max(cl);
                h = h.min(ch);
            }
            if !(l <= h) || !l.is_finite() || !h.is_finite() {
                return Err(ProblemError::EmptyInputRegion { goal: goal.to_string() });
            }
            lo.push(l);
            hi.push(h);
        }

        let model_name = match env.applied.clone() {
            Some(m) => m,
            None => {
                let imported: BTreeSet<&String> = spec.module.imports.iter().map(|i| &i.name).collect();
                match imported.into_iter().collect::<Vec<_>>().as_slice() {
                    [only] => (*only).clone(),
                    _ => return Err(unsupported("no model is applied to the input".into())),
                }
            }
        };
        let model = models.get(&model_name).ok_or_else(|| ProblemError::UnknownModel(model_name.clone()))?.clone();
        if model.input_dim() != n {
            return Err(unsupported(format!(
                "model `{model_name}` takes {} inputs but the goal's input has {n}",
                model.input_dim()
            )));
        }
        out.push(VerificationProblem {
            input_region: IntervalBox { lo, hi },
            residual,
            model,
            model_name,
            output_constraint: constraint,
            polarity: Polarity::Proof,
            meta: ProblemMeta { goal: goal.to_string(), sample, part: None },
        });
    }
    Ok(out)
}
