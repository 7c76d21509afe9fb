use serde::{Deserialize, Serialize};

use crate::model::eval_model;
use crate::problem::VerificationProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Valid,
    Falsified { witness: Vec<f64> },
    Unknown { reason: String },
    Timeout,
    Error { message: String },
}

impl Outcome {
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::Valid => "valid",
            Outcome::Falsified { .. } => "falsified",
            Outcome::Unknown { .. } => "unknown",
            Outcome::Timeout => "timeout",
            Outcome::Error { .. } => "error",
        }
    }

    pub fn unknown(reason: impl Into<String>) -> Outcome {
        Outcome::Unknown { reason: reason.into() }
    }

    pub fn error(message: impl Into<String>) -> Outcome {
        Outcome::Error { message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: String,
    pub elapsed_ms: f64,
    /// Boxes analysed, or solver calls made.
    pub subproblems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub outcome: Outcome,
    pub provenance: Provenance,
}

impl Verdict {
    pub fn new(outcome: Outcome, engine: &str, elapsed_ms: f64, subproblems: usize) -> Verdict {
        Verdict { outcome, provenance: Provenance { engine: engine.to_string(), elapsed_ms, subproblems } }
    }
}

/// Checks that `x` is a counterexample to `p`: inside the region, satisfying
/// the residual constraints, and violating the property by more than `tol`.
pub fn check_witness(p: &VerificationProblem, x: &[f64], tol: f64) -> Result<(), String> {
    if !p.input_region.contains(x) {
        return Err("witness lies outside the input region".into());
    }
    if !p.residual_holds(x) {
        return Err("witness violates the input constraints".into());
    }
    let y = eval_model(&p.model, x).map_err(|e| e.to_string())?;
    let margin = p.property().compile().margin(x, &y);
    if margin < -tol {
        Ok(())
    } else {
        Err(format!("property holds at the witness (margin {margin:e})"))
    }
}
