use crate::analyzer::{Outcome, Provenance, Verdict};

use super::OrchestratorError;

/// Message of the combined verdict when one engine proves a goal another
/// engine refutes. Such a verdict absorbs everything it is combined with.
pub const INCONSISTENT: &str = "inconsistent verdicts: valid and falsified on the same goal";

fn is_inconsistent(v: &Verdict) -> bool {
    matches!(&v.outcome, Outcome::Error { message } if message == INCONSISTENT)
}

fn class(o: &Outcome) -> u8 {
    match o {
        Outcome::Falsified { .. } => 0,
        Outcome::Valid => 1,
        Outcome::Unknown { .. } => 2,
        Outcome::Timeout => 3,
        Outcome::Error { .. } => 4,
    }
}

/// Portfolio combination: Falsified over Valid over Unknown over Timeout over
/// Error, with Valid together with Falsified giving an inconsistency error.
/// Within a class the verdict of the lowest engine id wins. Elapsed time is
/// the maximum and subproblem counts add up, so the operation is associative
/// and commutative.
pub fn combine_verdicts(vs: &[Verdict]) -> Result<Verdict, OrchestratorError> {
    if vs.is_empty() {
        return Err(OrchestratorError::EmptyInput);
    }
    let elapsed_ms = vs.iter().map(|v| v.provenance.elapsed_ms).fold(0.0, f64::max);
    let subproblems = vs.iter().map(|v| v.provenance.subproblems).sum();
    let has = |c: u8| vs.iter().any(|v| class(&v.outcome) == c);
    if vs.iter().any(is_inconsistent) || (has(0) && has(1)) {
        return Ok(Verdict {
            outcome: Outcome::error(INCONSISTENT),
            provenance: Provenance { engine: "combined".into(), elapsed_ms, subproblems },
        });
    }
    let best = vs.iter().map(|v| class(&v.outcome)).min().expect("non-empty");
    let key = |v: &Verdict| (v.provenance.engine.clone(), serde_json::to_string(&v.outcome).unwrap_or_default());
    let winner = vs.iter().filter(|v| class(&v.outcome) == best).min_by_key(|v| key(v)).expect("class present");
    Ok(Verdict {
        outcome: winner.outcome.clone(),
        provenance: Provenance { engine: winner.provenance.engine.clone(), elapsed_ms, subproblems },
    })
}
