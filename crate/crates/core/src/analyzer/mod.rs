//! Built-in reachability engine: interval or affine-bound propagation, input
//! splitting guided by influence scores, and counterexample search.
//!
//! ```
//! use verimux::analyzer::{verify_goal, AnalyzerConfig, Outcome};
//! use verimux::problem::*;
//! use verimux::model::parse_native_model;
//! use std::sync::Arc;
//!
//! // y = x on [0, 1]; prove y <= 2
//! let m = parse_native_model(r#"{"kind":"network","layers":[{"dense":{"w":[[1]],"b":[0]}}]}"#).unwrap();
//! use verimux::exact::from_i64;
//! let atom = LinearAtom::new([(Var::Output(0), from_i64(1))].into(), LinOp::Le, from_i64(2)).unwrap();
//! let p = VerificationProblem {
//!     input_region: IntervalBox::new(vec![0.0], vec![1.0]).unwrap(),
//!     residual: vec![],
//!     model: Arc::new(m),
//!     model_name: "M".into(),
//!     output_constraint: NormalizedGoal::atom(Atom::Linear(atom)),
//!     polarity: Polarity::Proof,
//!     meta: ProblemMeta { goal: "g".into(), sample: None, part: None },
//! };
//! let v = verify_goal(&p, &AnalyzerConfig::default());
//! assert_eq!(v.outcome, Outcome::Valid);
//! assert_eq!(v.provenance.subproblems, 1);
//! ```

mod domains;
mod verdict;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use domains::{
    influence_scores, interval_upper, propagate_affine, propagate_box, propagate_stack_affine, propagate_stack_box,
    relu_relaxation, AffineAnalysis, AffineBounds, AffineForm, LayerStack, Op,
};
pub use verdict::{check_witness, Outcome, Provenance, Verdict};

use crate::model::eval_model;
use crate::problem::{Atom, IntervalBox, NormalizedGoal, Var, VerificationProblem};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AnalyzerError {
    #[error("unsupported for this domain: {0}")]
    UnsupportedForDomain(String),
    #[error("dimension mismatch: model takes {expected} inputs, box has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("invalid analyzer configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Box,
    Affine,
}

impl Domain {
    pub fn engine_id(self) -> &'static str {
        match self {
            Domain::Box => "builtin-box",
            Domain::Affine => "builtin-affine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    pub domain: Domain,
    /// Total number of boxes the refinement loop may analyse.
    pub split_budget: usize,
    pub max_depth: usize,
    /// Concrete samples per box in counterexample search.
    pub samples: usize,
    pub tolerance: f64,
    pub seed: u64,
    #[serde(skip)]
    pub time_limit: Option<Duration>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            domain: Domain::Affine,
            split_budget: 1024,
            max_depth: 32,
            samples: 64,
            tolerance: 1e-9,
            seed: 0,
            time_limit: None,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<(), AnalyzerError> {
        if self.split_budget == 0 {
            return Err(AnalyzerError::InvalidConfig("split_budget must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(AnalyzerError::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Linear atom as dense coefficient vectors over outputs and inputs.
struct DenseAtom {
    outputs: Vec<f64>,
    inputs: Vec<f64>,
    bound: f64,
}

fn dense_goal(g: &NormalizedGoal, n: usize, m: usize) -> Vec<Vec<DenseAtom>> {
    g.linearize(m)
        .disjuncts()
        .iter()
        .map(|conj| {
            conj.iter()
                .map(|a| {
                    let Atom::Linear(l) = a else { unreachable!("linearized") };
                    let mut outputs = vec![0.0; m];
                    let mut inputs = vec![0.0; n];
                    for (v, c) in &l.coeffs {
                        match v {
                            Var::Input(i) => inputs[*i] = crate::exact::to_f64(c),
                            Var::Output(j) => outputs[*j] = crate::exact::to_f64(c),
                        }
                    }
                    DenseAtom { outputs, inputs, bound: crate::exact::to_f64(&l.bound) }
                })
                .collect()
        })
        .collect()
}

fn box_seed(seed: u64, level: usize, index: usize) -> u64 {
    // splitmix64 over the triple
    let mut z = seed
        .wrapping_add((level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn violates(p: &VerificationProblem, property: &crate::problem::CompiledGoal, x: &[f64], tol: f64) -> bool {
    if !p.residual_holds(x) {
        return false;
    }
    match eval_model(&p.model, x) {
        Ok(y) => property.margin(x, &y) < -tol,
        Err(_) => false,
    }
}

fn search_box(
    p: &VerificationProblem,
    property: &crate::problem::CompiledGoal,
    b: &IntervalBox,
    budget: usize,
    seed: u64,
    tol: f64,
) -> Option<Vec<f64>> {
    let n = b.dim();
    let mut used = 0;
    if n <= 10 {
        for mask in 0u32..(1 << n) {
            if used >= budget {
                return None;
            }
            used += 1;
            let mut x: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { b.hi[i] } else { b.lo[i] }).collect();
            if !p.residual_holds(&x) {
                // open faces: step just inside
                for (xi, ci) in x.iter_mut().zip(b.center()) {
                    *xi += (ci - *xi) * 1e-6;
                }
            }
            if violates(p, property, &x, tol) {
                return Some(x);
            }
        }
    }
    if used < budget {
        used += 1;
        let c = b.center();
        if violates(p, property, &c, tol) {
            return Some(c);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while used < budget {
        used += 1;
        let x: Vec<f64> = (0..n)
            .map(|i| if b.width(i) > 0.0 { rng.gen_range(b.lo[i]..=b.hi[i]) } else { b.lo[i] })
            .collect();
        if violates(p, property, &x, tol) {
            return Some(x);
        }
    }
    None
}

/// Concrete search over the problem's region: box corners (up to ten
/// dimensions), the center, then uniform samples. A returned point violates
/// the property by more than `tolerance`.
pub fn search_counterexample(p: &VerificationProblem, budget: usize, seed: u64, tolerance: f64) -> Option<Vec<f64>> {
    let property = p.property().compile();
    search_box(p, &property, &p.input_region, budget.max(1), seed, tolerance)
}

enum BoxResult {
    Certified,
    Witness(Vec<f64>),
    Split(IntervalBox, IntervalBox),
    Stuck,
    Failed(String),
}

struct Context<'a> {
    p: &'a VerificationProblem,
    cfg: &'a AnalyzerConfig,
    stack: LayerStack,
    goal: Vec<Vec<DenseAtom>>,
    property: crate::problem::CompiledGoal,
}

impl Context<'_> {
    fn certified(&self, b: &IntervalBox) -> Result<bool, AnalyzerError> {
        if self.goal.iter().any(Vec::is_empty) {
            return Ok(true);
        }
        let tol = self.cfg.tolerance;
        match self.cfg.domain {
            Domain::Box => {
                let out = propagate_stack_box(&self.stack, b)?;
                Ok(self.goal.iter().any(|conj| {
                    conj.iter().all(|a| a.bound - interval_upper(&out, b, &a.outputs, &a.inputs, 0.0) > tol)
                }))
            }
            Domain::Affine => {
                let analysis = propagate_stack_affine(&self.stack, b)?;
                Ok(self
                    .goal
                    .iter()
                    .any(|conj| conj.iter().all(|a| a.bound - analysis.upper_bound(&a.outputs, &a.inputs, 0.0) > tol)))
            }
        }
    }

    fn split_dim(&self, b: &IntervalBox) -> Result<Option<usize>, AnalyzerError> {
        let analysis = propagate_stack_affine(&self.stack, b)?;
        let scores = influence_scores(&analysis.output_lower, &analysis.output_upper, b);
        let pick = |v: &[f64]| {
            let mut best = 0;
            for (i, s) in v.iter().enumerate() {
                if *s > v[best] {
                    best = i;
                }
            }
            best
        };
        let mut dim = pick(&scores);
        if !(scores[dim] > 0.0) {
            let widths: Vec<f64> = (0..b.dim()).map(|i| b.width(i)).collect();
            dim = pick(&widths);
        }
        Ok((b.width(dim) > 0.0).then_some(dim))
    }

    fn process(&self, b: &IntervalBox, seed: u64) -> BoxResult {
        let run = || -> Result<BoxResult, AnalyzerError> {
            if self.certified(b)? {
                return Ok(BoxResult::Certified);
            }
            if let Some(x) = search_box(self.p, &self.property, b, self.cfg.samples.max(1), seed, self.cfg.tolerance) {
                return Ok(BoxResult::Witness(x));
            }
            Ok(match self.split_dim(b)? {
                Some(d) => {
                    let (l, r) = b.bisect(d);
                    BoxResult::Split(l, r)
                }
                None => BoxResult::Stuck,
            })
        };
        run().unwrap_or_else(|e| BoxResult::Failed(e.to_string()))
    }
}

/// Branch-and-refine: certify boxes with the configured domain, look for
/// counterexamples in the rest, and bisect what remains along the dimension
/// of highest influence. Sibling boxes are processed in parallel; results are
/// combined in box order, so the verdict does not depend on scheduling.
pub fn verify_goal(p: &VerificationProblem, cfg: &AnalyzerConfig) -> Verdict {
    let start = Instant::now();
    let engine = cfg.domain.engine_id();
    let done = |outcome: Outcome, boxes: usize| Verdict::new(outcome, engine, start.elapsed().as_secs_f64() * 1e3, boxes);
    if let Err(e) = cfg.validate() {
        return done(Outcome::error(e.to_string()), 0);
    }
    let stack = match LayerStack::from_model(&p.model) {
        Ok(s) => s,
        Err(e) => return done(Outcome::error(e.to_string()), 0),
    };
    if stack.input_dim != p.input_region.dim() {
        let e = AnalyzerError::DimensionMismatch { expected: stack.input_dim, found: p.input_region.dim() };
        return done(Outcome::error(e.to_string()), 0);
    }
    let property = p.property();
    let ctx = Context {
        p,
        cfg,
        goal: dense_goal(&property, stack.input_dim, stack.output_dim()),
        property: property.compile(),
        stack,
    };

    let mut frontier = vec![p.input_region.clone()];
    let mut certified: Vec<IntervalBox> = Vec::new();
    let mut processed = 0;
    let mut stuck = false;
    for level in 0.. {
        if frontier.is_empty() {
            break;
        }
        if let Some(limit) = cfg.time_limit {
            if start.elapsed() >= limit {
                return done(Outcome::Timeout, processed);
            }
        }
        let results: Vec<BoxResult> = frontier
            .par_iter()
            .enumerate()
            .map(|(i, b)| ctx.process(b, box_seed(cfg.seed, level, i)))
            .collect();
        processed += frontier.len();

        if let Some(x) = results.iter().find_map(|r| match r {
            BoxResult::Witness(x) => Some(x.clone()),
            _ => None,
        }) {
            if let Some(b) = certified.iter().find(|b| b.contains(&x)) {
                return done(Outcome::error(format!("certified box {b} contains counterexample {x:?}")), processed);
            }
            return match check_witness(p, &x, cfg.tolerance) {
                Ok(()) => done(Outcome::Falsified { witness: x }, processed),
                Err(e) => done(Outcome::error(format!("witness failed re-verification: {e}")), processed),
            };
        }
        if let Some(msg) = results.iter().find_map(|r| match r {
            BoxResult::Failed(m) => Some(m.clone()),
            _ => None,
        }) {
            return done(Outcome::error(msg), processed);
        }
        let mut next = Vec::new();
        for (b, r) in frontier.into_iter().zip(results) {
            match r {
                BoxResult::Certified => certified.push(b),
                BoxResult::Split(l, r) => {
                    next.push(l);
                    next.push(r);
                }
                BoxResult::Stuck => stuck = true,
                BoxResult::Witness(_) | BoxResult::Failed(_) => unreachable!(),
            }
        }
        if !next.is_empty() {
            if level + 1 > cfg.max_depth {
                return done(Outcome::unknown(format!("max depth {} reached", cfg.max_depth)), processed);
            }
            if processed + next.len() > cfg.split_budget {
                return done(Outcome::unknown(format!("split budget of {} boxes exhausted", cfg.split_budget)), processed);
            }
        }
        frontier = next;
    }
    if stuck {
        return done(Outcome::unknown("undecided on a box that cannot be split further"), processed);
    }
    done(Outcome::Valid, processed)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::exact;
    use crate::model::parse_native_model;
    use crate::problem::{LinOp, LinearAtom, Polarity, ProblemMeta};

    fn problem(model: &str, lo: Vec<f64>, hi: Vec<f64>, goal: NormalizedGoal) -> VerificationProblem {
        VerificationProblem {
            input_region: IntervalBox::new(lo, hi).unwrap(),
            residual: vec![],
            model: Arc::new(parse_native_model(model).unwrap()),
            model_name: "M".into(),
            output_constraint: goal,
            polarity: Polarity::Proof,
            meta: ProblemMeta { goal: "g".into(), sample: None, part: None },
        }
    }

    fn y0_le(b: &str) -> NormalizedGoal {
        let atom = LinearAtom::new([(Var::Output(0), exact::from_i64(1))].into(), LinOp::Le, exact::parse_decimal(b).unwrap());
        NormalizedGoal::atom(Atom::Linear(atom.unwrap()))
    }

    const IDENTITY: &str = r#"{"kind":"network","layers":[{"dense":{"w":[[1]],"b":[0]}}]}"#;

    #[test]
    fn identity_valid_and_falsified() {
        let v = verify_goal(&problem(IDENTITY, vec![0.0], vec![1.0], y0_le("2")), &AnalyzerConfig::default());
        assert_eq!(v.outcome, Outcome::Valid);
        assert_eq!(v.provenance.subproblems, 1);
        let p = problem(IDENTITY, vec![0.0], vec![1.0], y0_le("0.5"));
        let v = verify_goal(&p, &AnalyzerConfig::default());
        let Outcome::Falsified { witness } = &v.outcome else { panic!("{v:?}") };
        assert!(witness[0] > 0.5);
        assert!(check_witness(&p, witness, 1e-9).is_ok());
    }

    #[test]
    fn center_found_after_corners() {
        // y = 1 - |x| on [-1, 1] violates y <= 0.5 at the center but not at the corners
        let m = r#"{"kind":"network","layers":[{"dense":{"w":[[1],[-1]],"b":[0,0]}},{"relu":{}},{"dense":{"w":[[-1,-1]],"b":[1]}}]}"#;
        let p = problem(m, vec![-1.0], vec![1.0], y0_le("0.5"));
        assert_eq!(search_counterexample(&p, 3, 0, 1e-9), Some(vec![0.0]));
        assert_eq!(search_counterexample(&p, 2, 0, 1e-9), None);
    }

    #[test]
    fn deterministic() {
        let m = r#"{"kind":"network","layers":[{"dense":{"w":[[1,-2],[0.5,1]],"b":[0,0.1]}},{"relu":{}},{"dense":{"w":[[1,-1]],"b":[0]}}]}"#;
        let p = problem(m, vec![-1.0, -1.0], vec![1.0, 1.0], y0_le("1.2"));
        let cfg = AnalyzerConfig { seed: 7, ..Default::default() };
        let a = verify_goal(&p, &cfg);
        let b = verify_goal(&p, &cfg);
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.provenance.subproblems, b.provenance.subproblems);
    }

    #[test]
    fn config_validation() {
        let p = problem(IDENTITY, vec![0.0], vec![1.0], y0_le("2"));
        let v = verify_goal(&p, &AnalyzerConfig { split_budget: 0, ..Default::default() });
        assert!(matches!(v.outcome, Outcome::Error { .. }));
    }

    #[test]
    fn budget_exhaustion_is_unknown() {
        // y = x on [0,1], y <= 1 + 1e-12: within tolerance at x = 1, neither certifiable nor falsifiable.
        let p = problem(IDENTITY, vec![0.0], vec![1.0], y0_le("1.000000000001"));
        let v = verify_goal(&p, &AnalyzerConfig { split_budget: 16, ..Default::default() });
        assert!(matches!(v.outcome, Outcome::Unknown { .. }), "{v:?}");
    }
}
