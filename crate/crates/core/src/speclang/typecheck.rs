//! Sort checking for property modules.
//!
//! Sorts: `real`, `int` (numeric, `int` widens to `real`), `vector n`, and
//! `label`. Model applications take `vector num_input` to
//! `vector num_classes`; `argmax` turns a vector into a `label`. An integer
//! literal compared with `=` against a label is read as a class index.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::ast::*;
use super::error::SpecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Network,
    Svm,
    Pipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSignature {
    pub num_input: usize,
    /// Classes for classifiers, output dimension otherwise.
    pub num_classes: usize,
    pub kind: ModelKind,
}

/// Standard-library predicates available in every module.
pub const STDLIB_PREDICATES: &[&str] = &["dist_linf", "robust_to"];

/// A module whose terms all carry sort annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedSpec {
    pub module: SpecModule,
    pub signatures: BTreeMap<String, ModelSignature>,
    pub dataset_dims: BTreeMap<String, usize>,
}

impl TypedSpec {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDef> {
        self.module.predicates.iter().find(|p| p.name == name)
    }
}

#[derive(Clone)]
enum Binding {
    Var(Sort),
}

struct Checker<'a> {
    sigs: &'a BTreeMap<String, ModelSignature>,
    dataset_dims: &'a BTreeMap<String, usize>,
    imported_models: HashSet<String>,
    predicates: HashMap<String, Vec<Sort>>,
    scopes: Vec<(String, Binding)>,
}

pub fn typecheck_spec(
    module: &SpecModule,
    sigs: &BTreeMap<String, ModelSignature>,
) -> Result<TypedSpec, SpecError> {
    typecheck_spec_with_datasets(module, sigs, &BTreeMap::new())
}

/// Typechecks with feature dimensions for the module's dataset imports.
///
/// Datasets missing from `dataset_dims` are an error only when a goal
/// quantifies over them.
pub fn typecheck_spec_with_datasets(
    module: &SpecModule,
    sigs: &BTreeMap<String, ModelSignature>,
    dataset_dims: &BTreeMap<String, usize>,
) -> Result<TypedSpec, SpecError> {
    let mut imported_models = HashSet::new();
    let mut names: HashSet<String> = HashSet::new();
    for import in &module.imports {
        if !names.insert(import.name.clone()) {
            return Err(SpecError::DuplicateDefinition { name: import.name.clone(), span: import.span });
        }
        if !sigs.contains_key(&import.name) {
            return Err(SpecError::UnknownModel { name: import.name.clone(), span: import.span });
        }
        imported_models.insert(import.name.clone());
    }
    for dataset in &module.datasets {
        if !names.insert(dataset.name.clone()) {
            return Err(SpecError::DuplicateDefinition { name: dataset.name.clone(), span: dataset.span });
        }
    }
    let mut predicates = HashMap::new();
    for pred in &module.predicates {
        if STDLIB_PREDICATES.contains(&pred.name.as_str()) || !names.insert(pred.name.clone()) {
            return Err(SpecError::DuplicateDefinition { name: pred.name.clone(), span: pred.span });
        }
        predicates.insert(pred.name.clone(), pred.params.iter().map(|p| p.sort).collect::<Vec<_>>());
    }
    check_recursion(module)?;

    let mut checker = Checker { sigs, dataset_dims, imported_models, predicates, scopes: Vec::new() };
    let mut typed = module.clone();
    for pred in &mut typed.predicates {
        let mut seen = HashSet::new();
        for param in &pred.params {
            checker.check_sort_decl(param.sort, param.span)?;
            if !seen.insert(param.name.clone()) {
                return Err(SpecError::DuplicateDefinition { name: param.name.clone(), span: param.span });
            }
            checker.scopes.push((param.name.clone(), Binding::Var(param.sort)));
        }
        checker.formula(&mut pred.body)?;
        checker.scopes.clear();
    }
    for goal in &mut typed.goals {
        checker.formula(&mut goal.body)?;
    }
    let dataset_dims = module
        .datasets
        .iter()
        .filter_map(|d| dataset_dims.get(&d.name).map(|dim| (d.name.clone(), *dim)))
        .collect();
    Ok(TypedSpec { module: typed, signatures: sigs.clone(), dataset_dims })
}

fn check_recursion(module: &SpecModule) -> Result<(), SpecError> {
    fn calls(f: &Formula, out: &mut Vec<String>) {
        match &f.kind {
            FormulaKind::PredApply { name, .. } => out.push(name.clone()),
            FormulaKind::Bool(_) | FormulaKind::Compare { .. } => {}
            FormulaKind::Forall { body, .. } | FormulaKind::Exists { body, .. } | FormulaKind::Not(body) => {
                calls(body, out)
            }
            FormulaKind::And(a, b) | FormulaKind::Or(a, b) | FormulaKind::Implies(a, b) => {
                calls(a, out);
                calls(b, out);
            }
        }
    }
    let graph: HashMap<&str, Vec<String>> = module
        .predicates
        .iter()
        .map(|p| {
            let mut out = Vec::new();
            calls(&p.body, &mut out);
            (p.name.as_str(), out)
        })
        .collect();
    // Iterative DFS with colours.
    let mut state: HashMap<&str, u8> = HashMap::new();
    for pred in &module.predicates {
        let root = pred.name.as_str();
        if state.get(root).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
        state.insert(root, 1);
        while let Some((node, next)) = stack.pop() {
            let edges = &graph[node];
            if next < edges.len() {
                stack.push((node, next + 1));
                let child = edges[next].as_str();
                let Some((key, _)) = graph.get_key_value(child) else { continue };
                match state.get(child).copied().unwrap_or(0) {
                    0 => {
                        state.insert(key, 1);
                        stack.push((key, 0));
                    }
                    1 => return Err(SpecError::RecursivePredicate { name: child.to_string() }),
                    _ => {}
                }
            } else {
                state.insert(node, 2);
            }
        }
    }
    Ok(())
}

impl Checker<'_> {
    fn lookup(&self, name: &str) -> Option<&Binding> {
        self.scopes.iter().rev().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    fn check_sort_decl(&self, sort: Sort, span: Span) -> Result<(), SpecError> {
        if sort == Sort::Vector(0) {
            return Err(SpecError::SortMismatch {
                expected: "vector of positive dimension".into(),
                found: "vector 0".into(),
                span,
            });
        }
        Ok(())
    }

    fn formula(&mut self, f: &mut Formula) -> Result<(), SpecError> {
        let span = f.span;
        match &mut f.kind {
            FormulaKind::Bool(_) => Ok(()),
            FormulaKind::Forall { var, domain, body } | FormulaKind::Exists { var, domain, body } => {
                let sort = match domain {
                    QuantDomain::Sort(sort) => {
                        self.check_sort_decl(*sort, span)?;
                        *sort
                    }
                    QuantDomain::Dataset(name) => match self.dataset_dims.get(name) {
                        Some(dim) => Sort::Vector(*dim),
                        None => return Err(SpecError::UnknownDataset { name: name.clone(), span }),
                    },
                };
                self.scopes.push((var.clone(), Binding::Var(sort)));
                let result = self.formula(body);
                self.scopes.pop();
                result
            }
            FormulaKind::And(a, b) | FormulaKind::Or(a, b) | FormulaKind::Implies(a, b) => {
                self.formula(a)?;
                self.formula(b)
            }
            FormulaKind::Not(a) => self.formula(a),
            FormulaKind::Compare { op, lhs, rhs } => {
                let ls = self.term(lhs)?;
                let rs = self.term(rhs)?;
                match (ls, rs) {
                    (a, b) if a.is_numeric() && b.is_numeric() => Ok(()),
                    (Sort::Label, Sort::Label) if *op == CmpOp::Eq => Ok(()),
                    (Sort::Label, Sort::Int) | (Sort::Int, Sort::Label) if *op == CmpOp::Eq => {
                        // Integer literal read as a class index.
                        for t in [lhs, rhs] {
                            if t.sort == Some(Sort::Int) {
                                if !matches!(t.kind, TermKind::Int(_)) {
                                    return Err(SpecError::sort_mismatch("label", Sort::Int, t.span));
                                }
                                t.sort = Some(Sort::Label);
                            }
                        }
                        Ok(())
                    }
                    (Sort::Label, other) | (other, Sort::Label) => {
                        if *op != CmpOp::Eq {
                            Err(SpecError::SortMismatch {
                                expected: "numeric operands for ordering".into(),
                                found: "label".into(),
                                span,
                            })
                        } else {
                            Err(SpecError::sort_mismatch("label", other, span))
                        }
                    }
                    (a, b) => {
                        let found = if a.is_numeric() { b } else { a };
                        Err(SpecError::sort_mismatch("real", found, span))
                    }
                }
            }
            FormulaKind::PredApply { name, args } => self.pred_apply(name, args, span),
        }
    }

    fn pred_apply(&mut self, name: &str, args: &mut [Term], span: Span) -> Result<(), SpecError> {
        let arity = |expected: usize| -> Result<(), SpecError> {
            if args.len() != expected {
                Err(SpecError::ArityMismatch { name: name.to_string(), expected, found: args.len(), span })
            } else {
                Ok(())
            }
        };
        match name {
            "dist_linf" => {
                arity(3)?;
                let a = self.term(&mut args[0])?;
                let b = self.term(&mut args[1])?;
                let Sort::Vector(n) = a else {
                    return Err(SpecError::sort_mismatch("vector", a, args[0].span));
                };
                if b != Sort::Vector(n) {
                    return match b {
                        Sort::Vector(m) => Err(SpecError::DimensionMismatch { expected: n, found: m, span: args[1].span }),
                        other => Err(SpecError::sort_mismatch(Sort::Vector(n), other, args[1].span)),
                    };
                }
                self.expect_numeric(&mut args[2])
            }
            "robust_to" => {
                arity(3)?;
                let sig = self.model_arg(&mut args[0])?;
                let a = self.term(&mut args[1])?;
                if a != Sort::Vector(sig.num_input) {
                    return match a {
                        Sort::Vector(m) => Err(SpecError::DimensionMismatch {
                            expected: sig.num_input,
                            found: m,
                            span: args[1].span,
                        }),
                        other => Err(SpecError::sort_mismatch(Sort::Vector(sig.num_input), other, args[1].span)),
                    };
                }
                self.expect_numeric(&mut args[2])
            }
            _ => {
                let Some(params) = self.predicates.get(name).cloned() else {
                    return Err(SpecError::UnboundIdentifier { name: name.to_string(), span });
                };
                arity(params.len())?;
                for (arg, expected) in args.iter_mut().zip(params) {
                    let found = self.term(arg)?;
                    let ok = found == expected || (found == Sort::Int && expected == Sort::Real);
                    if !ok {
                        return match (expected, found) {
                            (Sort::Vector(n), Sort::Vector(m)) => {
                                Err(SpecError::DimensionMismatch { expected: n, found: m, span: arg.span })
                            }
                            _ => Err(SpecError::sort_mismatch(expected, found, arg.span)),
                        };
                    }
                }
                Ok(())
            }
        }
    }

    fn model_arg(&mut self, arg: &mut Term) -> Result<ModelSignature, SpecError> {
        match &arg.kind {
            TermKind::Var(name) if self.lookup(name).is_none() => {
                if !self.imported_models.contains(name) {
                    return Err(SpecError::UnknownModel { name: name.clone(), span: arg.span });
                }
                Ok(self.sigs[name])
            }
            _ => Err(SpecError::SortMismatch {
                expected: "model".into(),
                found: "term".into(),
                span: arg.span,
            }),
        }
    }

    fn expect_numeric(&mut self, t: &mut Term) -> Result<(), SpecError> {
        let sort = self.term(t)?;
        if sort.is_numeric() {
            Ok(())
        } else {
            Err(SpecError::sort_mismatch("real", sort, t.span))
        }
    }

    fn term(&mut self, t: &mut Term) -> Result<Sort, SpecError> {
        let span = t.span;
        let sort = match &mut t.kind {
            TermKind::Var(name) => match self.lookup(name) {
                Some(Binding::Var(sort)) => *sort,
                None if self.imported_models.contains(name.as_str()) => {
                    return Err(SpecError::SortMismatch {
                        expected: "term".into(),
                        found: format!("model `{name}`"),
                        span,
                    })
                }
                None => return Err(SpecError::UnboundIdentifier { name: name.clone(), span }),
            },
            TermKind::Real(_) => Sort::Real,
            TermKind::Int(_) => Sort::Int,
            TermKind::Add(a, b) | TermKind::Sub(a, b) | TermKind::Mul(a, b) => {
                let sa = self.term(a)?;
                let sb = self.term(b)?;
                for (s, sp) in [(sa, a.span), (sb, b.span)] {
                    if !s.is_numeric() {
                        return Err(SpecError::sort_mismatch("real", s, sp));
                    }
                }
                if sa == Sort::Int && sb == Sort::Int {
                    Sort::Int
                } else {
                    Sort::Real
                }
            }
            TermKind::Neg(a) => {
                let s = self.term(a)?;
                if !s.is_numeric() {
                    return Err(SpecError::sort_mismatch("real", s, a.span));
                }
                s
            }
            TermKind::Apply { model, arg } => {
                if self.lookup(model).is_some() || !self.imported_models.contains(model.as_str()) {
                    return Err(SpecError::UnknownModel { name: model.clone(), span });
                }
                let sig = self.sigs[model.as_str()];
                match self.term(arg)? {
                    Sort::Vector(n) if n == sig.num_input => Sort::Vector(sig.num_classes),
                    Sort::Vector(n) => {
                        return Err(SpecError::DimensionMismatch { expected: sig.num_input, found: n, span: arg.span })
                    }
                    other => return Err(SpecError::sort_mismatch(Sort::Vector(sig.num_input), other, arg.span)),
                }
            }
            TermKind::Index(v, i) => {
                let vs = self.term(v)?;
                let is = self.term(i)?;
                let Sort::Vector(n) = vs else {
                    return Err(SpecError::sort_mismatch("vector", vs, v.span));
                };
                if is != Sort::Int {
                    return Err(SpecError::sort_mismatch("int", is, i.span));
                }
                if let TermKind::Int(k) = i.kind {
                    if k < 0 || k as usize >= n {
                        return Err(SpecError::IndexOutOfRange { index: k, len: n, span: i.span });
                    }
                }
                Sort::Real
            }
            TermKind::ArgMax(v) => match self.term(v)? {
                Sort::Vector(_) => Sort::Label,
                other => return Err(SpecError::sort_mismatch("vector", other, v.span)),
            },
        };
        t.sort = Some(sort);
        Ok(sort)
    }
}
