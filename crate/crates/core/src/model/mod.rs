//! Models and datasets: the concrete function under verification.
//!
//! ```
//! use verimux::model::{eval_model, parse_native_model};
//!
//! let m = parse_native_model(r#"{"kind":"network","layers":[{"dense":{"w":[[1,-1]],"b":[0]}},{"relu":{}}]}"#).unwrap();
//! assert_eq!(eval_model(&m, &[3.0, 1.0]).unwrap(), vec![2.0]);
//! assert_eq!(eval_model(&m, &[1.0, 3.0]).unwrap(), vec![0.0]);
//! ```

mod dataset;
mod native;
mod network;
mod nnet;
mod svm;

use std::path::Path;

pub use dataset::{parse_dataset, Dataset, Sample};
pub use native::{parse_native_model, to_native_json};
pub use network::{random_network, Dense, Layer, NetworkGraph, Normalization};
pub use nnet::{parse_nnet, serialize_nnet};
pub use svm::{DecisionFunction, Kernel, SvmModel};

use crate::speclang::{ModelKind, ModelSignature};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("line {line}: {reason}")]
    FormatError { line: usize, reason: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite weight")]
    NonFiniteWeight,
    #[error("schema error at {path}: {reason}")]
    SchemaError { path: String, reason: String },
    #[error("dimension mismatch{}: expected {expected}, found {found}", stage.map(|s| format!(" at stage {s}")).unwrap_or_default())]
    DimensionMismatch { expected: usize, found: usize, stage: Option<usize> },
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("line {0}: row width differs from the first row")]
    RaggedRows(usize),
    #[error("line {line}, column {col}: not a number")]
    NonNumericCell { line: usize, col: usize },
    #[error("empty file")]
    EmptyFile,
    #[error("row {row}: label {label} out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

/// Models compose left to right; nested pipelines are flattened on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    stages: Vec<Model>,
}

impl Pipeline {
    pub fn stages(&self) -> &[Model] {
        &self.stages
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Network(NetworkGraph),
    Svm(SvmModel),
    Pipeline(Pipeline),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Network(n) => n.input_dim(),
            Model::Svm(s) => s.input_dim(),
            Model::Pipeline(p) => p.stages[0].input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::Network(n) => n.output_dim(),
            Model::Svm(s) => s.output_dim(),
            Model::Pipeline(p) => p.stages.last().map(Model::output_dim).unwrap_or(0),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Network(_) => ModelKind::Network,
            Model::Svm(_) => ModelKind::Svm,
            Model::Pipeline(_) => ModelKind::Pipeline,
        }
    }

    pub fn signature(&self) -> ModelSignature {
        ModelSignature { num_input: self.input_dim(), num_classes: self.output_dim(), kind: self.kind() }
    }

    /// True when some stage is an RBF SVM.
    pub fn has_rbf(&self) -> bool {
        match self {
            Model::Network(_) => false,
            Model::Svm(s) => matches!(s.kernel(), Kernel::Rbf { .. }),
            Model::Pipeline(p) => p.stages.iter().any(Model::has_rbf),
        }
    }

    fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::Network(n) => n.forward(x),
            Model::Svm(s) => s.scores(x),
            Model::Pipeline(p) => {
                let mut v = x.to_vec();
                for stage in &p.stages {
                    v = stage.eval_unchecked(&v);
                }
                v
            }
        }
    }

    /// Class decision: argmax of the scores, lowest index on ties.
    pub fn classify(&self, x: &[f64]) -> Result<usize, ModelError> {
        Ok(argmax(&eval_model(self, x)?))
    }

    /// Loads a model file, choosing the parser by extension (`.nnet` or JSON).
    pub fn load(path: &Path, apply_normalization: bool) -> Result<Model, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        let is_nnet = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("nnet"));
        if is_nnet {
            let net = parse_nnet(&text)?;
            let net = if apply_normalization { net.with_normalization_applied()? } else { net };
            Ok(Model::Network(net))
        } else {
            parse_native_model(&text)
        }
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn eval_model(m: &Model, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    if x.len() != m.input_dim() {
        return Err(ModelError::DimensionMismatch { expected: m.input_dim(), found: x.len(), stage: None });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteInput);
    }
    Ok(m.eval_unchecked(x))
}

/// Chains models into a pipeline. Stage `k` is reported when its input does
/// not match the output of stage `k - 1`.
pub fn compose_sequential(stages: Vec<Model>) -> Result<Pipeline, ModelError> {
    let mut flat = Vec::new();
    for stage in stages {
        match stage {
            Model::Pipeline(p) => flat.extend(p.stages),
            other => flat.push(other),
        }
    }
    if flat.is_empty() {
        return Err(ModelError::SchemaError { path: "stages".into(), reason: "pipeline needs at least one stage".into() });
    }
    for k in 1..flat.len() {
        let (out, inp) = (flat[k - 1].output_dim(), flat[k].input_dim());
        if out != inp {
            return Err(ModelError::DimensionMismatch { expected: out, found: inp, stage: Some(k) });
        }
    }
    Ok(Pipeline { stages: flat })
}
