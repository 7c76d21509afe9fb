//! Verification problems: an input box, a model and an output constraint.
//!
//! ```
//! use verimux::problem::{IntervalBox, split_box};
//!
//! let b = IntervalBox::new(vec![0.0], vec![1.0]).unwrap();
//! let parts = split_box(&b, 2);
//! assert_eq!(parts[0].hi, vec![0.5]);
//! assert_eq!(parts[1].lo, vec![0.5]);
//! ```

mod build;
mod goal;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use build::{build_problems, normalize_goal, BuildOptions, GoalEnv};
pub use goal::{class_is_atoms, Atom, CompiledAtom, CompiledGoal, LinOp, LinearAtom, NormalizedGoal, Var};

use crate::model::{Model, ModelError};
use crate::speclang::{Span, SpecError};

/// Default cap on the number of subboxes [`split_goals`] may produce.
pub const DEFAULT_PARTITION_LIMIT: usize = 4096;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("goal `{goal}`: input dimension {dim} has no finite lower and upper bound")]
    UnboundedInputRegion { goal: String, dim: usize },
    #[error("goal `{goal}`: the input region is empty")]
    EmptyInputRegion { goal: String },
    #[error("goal `{goal}`: {reason}")]
    UnsupportedFormulaShape { goal: String, reason: String },
    #[error("{span}: product of two non-constant terms")]
    NonLinearAtom { span: Span },
    #[error("goal `{goal}`: normal form exceeds {limit} conjuncts")]
    GoalTooLarge { goal: String, limit: usize },
    #[error("partition into {count} boxes exceeds the limit of {limit}")]
    PartitionTooLarge { count: String, limit: usize },
    #[error("model `{0}` is not loaded")]
    UnknownModel(String),
    #[error("dataset `{0}` is not loaded")]
    UnknownDataset(String),
}

/// Closed box `[lo, hi]` per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Option<IntervalBox> {
        let ok = lo.len() == hi.len() && lo.iter().zip(&hi).all(|(l, h)| l.is_finite() && h.is_finite() && l <= h);
        ok.then_some(IntervalBox { lo, hi })
    }

    pub fn point(x: &[f64]) -> IntervalBox {
        IntervalBox { lo: x.to_vec(), hi: x.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l + (h - l) / 2.0).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Halves along dimension `i`; both halves share the midpoint face.
    pub fn bisect(&self, i: usize) -> (IntervalBox, IntervalBox) {
        let mid = self.lo[i] + (self.hi[i] - self.lo[i]) / 2.0;
        let mid = mid.clamp(self.lo[i], self.hi[i]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[i] = mid;
        right.lo[i] = mid;
        (left, right)
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.lo.iter().zip(&self.hi).map(|(l, h)| format!("[{l}, {h}]")).collect();
        f.write_str(&parts.join(" x "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Prove `∀x ∈ X. P(x) → Q(f(x), x)`.
    Proof,
    /// Search for `x ∈ X` with `P(x) ∧ C(f(x), x)`, `C` being the stored constraint.
    Falsification,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub goal: String,
    /// Dataset row the problem was instantiated from.
    pub sample: Option<usize>,
    /// Subbox index after [`split_goals`].
    pub part: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationProblem {
    pub input_region: IntervalBox,
    /// Linear input constraints beyond the box, all of which must hold.
    pub residual: Vec<LinearAtom>,
    pub model: Arc<Model>,
    pub model_name: String,
    pub output_constraint: NormalizedGoal,
    pub polarity: Polarity,
    pub meta: ProblemMeta,
}

impl VerificationProblem {
    /// Stable identifier: goal name, then `#sample`, then `.part`.
    pub fn id(&self) -> String {
        let mut s = self.meta.goal.clone();
        if let Some(i) = self.meta.sample {
            s.push_str(&format!("#{i}"));
        }
        if let Some(p) = self.meta.part {
            s.push_str(&format!(".{p}"));
        }
        s
    }

    /// The constraint every input in the region has to satisfy for the goal
    /// to hold, whatever the polarity.
    pub fn property(&self) -> NormalizedGoal {
        match self.polarity {
            Polarity::Proof => self.output_constraint.clone(),
            Polarity::Falsification => self.output_constraint.negate(),
        }
    }

    /// The constraint a counterexample satisfies.
    pub fn violation(&self) -> NormalizedGoal {
        match self.polarity {
            Polarity::Proof => self.output_constraint.negate(),
            Polarity::Falsification => self.output_constraint.clone(),
        }
    }

    pub fn residual_holds(&self, x: &[f64]) -> bool {
        self.residual.iter().all(|a| NormalizedGoal::atom(Atom::Linear(a.clone())).compile().holds(x, &[]))
    }
}

/// Switches polarity and negates the stored constraint; the region is untouched.
pub fn negate_goal(p: &VerificationProblem) -> VerificationProblem {
    VerificationProblem {
        output_constraint: p.output_constraint.negate(),
        polarity: match p.polarity {
            Polarity::Proof => Polarity::Falsification,
            Polarity::Falsification => Polarity::Proof,
        },
        ..p.clone()
    }
}

/// Grid partition with `k` slices per dimension, first dimension slowest.
pub fn split_box(b: &IntervalBox, k: usize) -> Vec<IntervalBox> {
    let k = k.max(1);
    let cut = |i: usize, s: usize| -> f64 {
        match s {
            0 => b.lo[i],
            s if s == k => b.hi[i],
            s => (b.lo[i] + (b.hi[i] - b.lo[i]) * (s as f64 / k as f64)).clamp(b.lo[i], b.hi[i]),
        }
    };
    let mut boxes = vec![IntervalBox { lo: vec![], hi: vec![] }];
    for i in 0..b.dim() {
        let mut next = Vec::with_capacity(boxes.len() * k);
        for partial in &boxes {
            for s in 0..k {
                let mut p = partial.clone();
                p.lo.push(cut(i, s));
                p.hi.push(cut(i, s + 1));
                next.push(p);
            }
        }
        boxes = next;
    }
    boxes
}

pub fn split_goals(p: &VerificationProblem, k: usize, limit: usize) -> Result<Vec<VerificationProblem>, ProblemError> {
    let k = k.max(1);
    if k == 1 {
        return Ok(vec![p.clone()]);
    }
    let count = u32::try_from(p.input_region.dim()).ok().and_then(|n| k.checked_pow(n));
    match count {
        Some(c) if c <= limit => {}
        _ => {
            return Err(ProblemError::PartitionTooLarge {
                count: format!("{k}^{}", p.input_region.dim()),
                limit,
            })
        }
    }
    Ok(split_box(&p.input_region, k)
        .into_iter()
        .enumerate()
        .map(|(i, b)| VerificationProblem {
            input_region: b,
            meta: ProblemMeta { part: Some(i), ..p.meta.clone() },
            ..p.clone()
        })
        .collect())
}
