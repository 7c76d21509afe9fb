use num::Zero;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::exact;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

/// One decision function in dual form: `Σ αᵢ K(sᵢ, x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFunction {
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefs: Vec<f64>,
    pub intercept: f64,
}

/// One-vs-all SVM: one decision function per class, scores compared by argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: Kernel,
    input_dim: usize,
    functions: Vec<DecisionFunction>,
}

impl SvmModel {
    pub fn new(kernel: Kernel, functions: Vec<DecisionFunction>) -> Result<Self, ModelError> {
        if let Kernel::Rbf { gamma } = kernel {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(ModelError::SchemaError { path: "kernel.gamma".into(), reason: "gamma must be positive".into() });
            }
        }
        if functions.is_empty() {
            return Err(ModelError::SchemaError { path: "functions".into(), reason: "at least one decision function".into() });
        }
        let mut input_dim = None;
        for (k, f) in functions.iter().enumerate() {
            if f.support_vectors.is_empty() {
                return Err(ModelError::SchemaError {
                    path: format!("functions[{k}].support_vectors"),
                    reason: "no support vectors".into(),
                });
            }
            if f.dual_coefs.len() != f.support_vectors.len() {
                return Err(ModelError::SchemaError {
                    path: format!("functions[{k}].dual_coefs"),
                    reason: format!("{} coefficients for {} support vectors", f.dual_coefs.len(), f.support_vectors.len()),
                });
            }
            for sv in &f.support_vectors {
                let dim = *input_dim.get_or_insert(sv.len());
                if sv.len() != dim || dim == 0 {
                    return Err(ModelError::DimensionMismatch { expected: dim, found: sv.len(), stage: None });
                }
            }
            let finite = f.support_vectors.iter().flatten().chain(&f.dual_coefs).all(|v| v.is_finite())
                && f.intercept.is_finite();
            if !finite {
                return Err(ModelError::NonFiniteWeight);
            }
        }
        Ok(SvmModel { kernel, input_dim: input_dim.unwrap_or(0), functions })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.functions.len()
    }

    pub fn functions(&self) -> &[DecisionFunction] {
        &self.functions
    }

    pub(crate) fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.functions
            .iter()
            .map(|f| {
                let sum = f.support_vectors.iter().zip(&f.dual_coefs).fold(0.0, |acc, (sv, a)| {
                    let k = match self.kernel {
                        Kernel::Linear => sv.iter().zip(x).fold(0.0, |s, (u, v)| s + u * v),
                        Kernel::Rbf { gamma } => {
                            let d2 = sv.iter().zip(x).fold(0.0, |s, (u, v)| s + (u - v) * (u - v));
                            (-gamma * d2).exp()
                        }
                    };
                    acc + a * k
                });
                sum + f.intercept
            })
            .collect()
    }

    /// Primal weights `w_c = Σ αᵢ sᵢ` for a linear kernel, summed exactly and
    /// rounded once. `None` for RBF.
    pub fn primal_weights(&self) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        if self.kernel != Kernel::Linear {
            return None;
        }
        let mut weights = Vec::with_capacity(self.functions.len());
        for f in &self.functions {
            let mut row = vec![exact::Rational::zero(); self.input_dim];
            for (sv, a) in f.support_vectors.iter().zip(&f.dual_coefs) {
                let a = exact::from_f64(*a)?;
                for (acc, s) in row.iter_mut().zip(sv) {
                    *acc += &a * exact::from_f64(*s)?;
                }
            }
            weights.push(row.iter().map(exact::to_f64).collect());
        }
        Some((weights, self.functions.iter().map(|f| f.intercept).collect()))
    }
}
