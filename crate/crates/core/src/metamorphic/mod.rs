//! Metamorphic testing: transform inputs, predict how the decision should
//! move, and count how often the model agrees.
//!
//! ```
//! use verimux::metamorphic::{apply_transform, Transformation};
//!
//! let t = Transformation::from_json(r#"{"kind":"permutation","sigma_in":[1,0]}"#).unwrap();
//! assert_eq!(apply_transform(&t, &[1.0, 2.0], 0).unwrap(), vec![2.0, 1.0]);
//! ```

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{eval_model, Dataset, Dense, Layer, Model, ModelError, NetworkGraph};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetamorphicError {
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("not a permutation: {0:?}")]
    InvalidPermutation(Vec<usize>),
    #[error("noise amplitude must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("transformation is not an involution")]
    NotInvolutive,
    #[error("transformation file: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformKind {
    /// `y[i] = x[sigma_in[i]]`
    InputPermutation(Vec<usize>),
    SignFlip(Vec<usize>),
    /// Uniform noise in `[-eps, eps]` per dimension, seeded per row.
    AdditiveNoise { eps: f64, seed: u64 },
}

/// How the decision is expected to change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRelation {
    /// Transformed decision is `sigma_out[base decision]`.
    LabelPermutation(Vec<usize>),
    IdentityExpected,
}

impl OutputRelation {
    pub fn expected(&self, base: usize) -> usize {
        match self {
            OutputRelation::LabelPermutation(s) => s.get(base).copied().unwrap_or(base),
            OutputRelation::IdentityExpected => base,
        }
    }
}

impl fmt::Display for OutputRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputRelation::IdentityExpected => f.write_str("decision(f(t(x))) = decision(f(x))"),
            OutputRelation::LabelPermutation(s) => {
                let pairs: Vec<String> =
                    s.iter().enumerate().filter(|(c, d)| c != *d).map(|(c, d)| format!("{c}->{d}")).collect();
                write!(f, "decision(f(t(x))) = sigma_out(decision(f(x))) with {}", pairs.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformation {
    pub kind: TransformKind,
    pub relation: OutputRelation,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum TransformFile {
    Permutation {
        sigma_in: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_out: Option<Vec<usize>>,
    },
    SignFlip {
        dims: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_out: Option<Vec<usize>>,
    },
    Noise {
        eps: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_out: Option<Vec<usize>>,
    },
}

fn check_permutation(s: &[usize]) -> Result<(), MetamorphicError> {
    let mut seen = vec![false; s.len()];
    for &i in s {
        if i >= s.len() || std::mem::replace(&mut seen[i], true) {
            return Err(MetamorphicError::InvalidPermutation(s.to_vec()));
        }
    }
    Ok(())
}

fn is_involution(s: &[usize]) -> bool {
    s.iter().enumerate().all(|(i, &j)| s[j] == i)
}

impl Transformation {
    pub fn new(kind: TransformKind, relation: OutputRelation) -> Result<Transformation, MetamorphicError> {
        match &kind {
            TransformKind::InputPermutation(s) => check_permutation(s)?,
            TransformKind::SignFlip(_) => {}
            TransformKind::AdditiveNoise { eps, .. } => {
                if !(eps.is_finite() && *eps >= 0.0) {
                    return Err(MetamorphicError::InvalidEpsilon(*eps));
                }
            }
        }
        if let OutputRelation::LabelPermutation(s) = &relation {
            check_permutation(s)?;
        }
        Ok(Transformation { kind, relation })
    }

    pub fn from_json(source: &str) -> Result<Transformation, MetamorphicError> {
        let file: TransformFile = serde_json::from_str(source).map_err(|e| MetamorphicError::Parse(e.to_string()))?;
        let relation = |s: Option<Vec<usize>>| s.map_or(OutputRelation::IdentityExpected, OutputRelation::LabelPermutation);
        match file {
            TransformFile::Permutation { sigma_in, sigma_out } => {
                Transformation::new(TransformKind::InputPermutation(sigma_in), relation(sigma_out))
            }
            TransformFile::SignFlip { dims, sigma_out } => Transformation::new(TransformKind::SignFlip(dims), relation(sigma_out)),
            TransformFile::Noise { eps, seed, sigma_out } => {
                Transformation::new(TransformKind::AdditiveNoise { eps, seed }, relation(sigma_out))
            }
        }
    }

    pub fn to_json(&self) -> String {
        let sigma_out = match &self.relation {
            OutputRelation::LabelPermutation(s) => Some(s.clone()),
            OutputRelation::IdentityExpected => None,
        };
        let file = match &self.kind {
            TransformKind::InputPermutation(s) => TransformFile::Permutation { sigma_in: s.clone(), sigma_out },
            TransformKind::SignFlip(d) => TransformFile::SignFlip { dims: d.clone(), sigma_out },
            TransformKind::AdditiveNoise { eps, seed } => TransformFile::Noise { eps: *eps, seed: *seed, sigma_out },
        };
        serde_json::to_string(&file).expect("plain data")
    }
}

/// Applies `t` to `x`; `row` selects the noise stream so that every dataset
/// row gets its own reproducible perturbation.
pub fn apply_transform(t: &Transformation, x: &[f64], row: u64) -> Result<Vec<f64>, MetamorphicError> {
    match &t.kind {
        TransformKind::InputPermutation(s) => {
            if s.len() != x.len() {
                return Err(MetamorphicError::DimensionMismatch { expected: x.len(), found: s.len() });
            }
            Ok(s.iter().map(|&i| x[i]).collect())
        }
        TransformKind::SignFlip(dims) => {
            let mut y = x.to_vec();
            for &d in dims {
                let v = y.get_mut(d).ok_or(MetamorphicError::IndexOutOfRange { index: d, len: x.len() })?;
                *v = -*v;
            }
            Ok(y)
        }
        TransformKind::AdditiveNoise { eps, seed } => {
            if *eps == 0.0 {
                return Ok(x.to_vec());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(row);
            Ok(x.iter().map(|v| v + rng.gen_range(-eps..=*eps)).collect())
        }
    }
}

/// The relation the transformed decision must satisfy. A permutation that
/// fixes every class reduces to plain equality.
pub fn derive_property(t: &Transformation) -> OutputRelation {
    match &t.relation {
        OutputRelation::LabelPermutation(s) if s.iter().enumerate().all(|(i, &j)| i == j) => OutputRelation::IdentityExpected,
        other => other.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub class: usize,
    /// Samples whose base decision is `class`.
    pub base: usize,
    /// Of those, samples whose transformed decision matches the expectation.
    pub agree: usize,
    /// `None` when no sample has this base decision.
    pub percentage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub rows: Vec<AgreementRow>,
    pub total: usize,
    pub total_agree: usize,
    pub percentage: Option<f64>,
}

fn percent(agree: usize, base: usize) -> Option<f64> {
    (base > 0).then(|| 100.0 * agree as f64 / base as f64)
}

impl fmt::Display for AgreementTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |p: Option<f64>| p.map_or("-".to_string(), |p| format!("{p:.1}"));
        writeln!(f, "{:>7}  {:>8}  {:>8}  {:>6}", "class", "samples", "agree", "%")?;
        for r in &self.rows {
            writeln!(f, "{:>7}  {:>8}  {:>8}  {:>6}", r.class, r.base, r.agree, pct(r.percentage))?;
        }
        writeln!(f, "{:>7}  {:>8}  {:>8}  {:>6}", "all", self.total, self.total_agree, pct(self.percentage))
    }
}

/// Per base class, how often `decision(f(t(x)))` equals the expected class.
/// Counts are pooled over the whole dataset.
pub fn agreement_table(m: &Model, d: &Dataset, t: &Transformation) -> Result<AgreementTable, MetamorphicError> {
    if d.feature_dim != m.input_dim() {
        return Err(MetamorphicError::DimensionMismatch { expected: m.input_dim(), found: d.feature_dim });
    }
    let classes = m.output_dim();
    let relation = derive_property(t);
    if let OutputRelation::LabelPermutation(s) = &relation {
        if s.len() != classes {
            return Err(MetamorphicError::DimensionMismatch { expected: classes, found: s.len() });
        }
    }
    let outcomes: Vec<(usize, bool)> = d
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let base = m.classify(&row.features)?;
            let moved = apply_transform(t, &row.features, i as u64)?;
            let y = eval_model(m, &moved)?;
            Ok((base, crate::model::argmax(&y) == relation.expected(base)))
        })
        .collect::<Result<_, MetamorphicError>>()?;
    let mut rows: Vec<AgreementRow> =
        (0..classes).map(|class| AgreementRow { class, base: 0, agree: 0, percentage: None }).collect();
    for (base, ok) in outcomes {
        rows[base].base += 1;
        rows[base].agree += ok as usize;
    }
    for r in &mut rows {
        r.percentage = percent(r.agree, r.base);
    }
    let total = rows.iter().map(|r| r.base).sum();
    let total_agree = rows.iter().map(|r| r.agree).sum();
    Ok(AgreementTable { rows, total, total_agree, percentage: percent(total_agree, total) })
}

/// Signed permutation matrix of an input transformation, as `(index, sign)` per row.
fn input_map(t: &Transformation, n: usize) -> Result<Vec<(usize, f64)>, MetamorphicError> {
    match &t.kind {
        TransformKind::InputPermutation(s) if s.len() == n => Ok(s.iter().map(|&i| (i, 1.0)).collect()),
        TransformKind::InputPermutation(s) => Err(MetamorphicError::DimensionMismatch { expected: n, found: s.len() }),
        TransformKind::SignFlip(dims) => {
            let mut m: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0)).collect();
            for &d in dims {
                let e = m.get_mut(d).ok_or(MetamorphicError::IndexOutOfRange { index: d, len: n })?;
                e.1 = -e.1;
            }
            Ok(m)
        }
        TransformKind::AdditiveNoise { .. } => Err(MetamorphicError::NotInvolutive),
    }
}

/// Builds a network that is equivariant under `t` by construction:
/// `g(x) = (f(x) + P·f(T·x)) / 2`, computed by running two copies of `f`
/// side by side. Needs `T` and `P` to be involutions, in which case
/// `g(T·x) = P·g(x)`.
pub fn symmetrize(net: &NetworkGraph, t: &Transformation) -> Result<NetworkGraph, MetamorphicError> {
    let n = net.input_dim();
    let m = net.output_dim();
    let tmap = input_map(t, n)?;
    if !tmap.iter().enumerate().all(|(i, &(j, _))| tmap[j].0 == i) {
        return Err(MetamorphicError::NotInvolutive);
    }
    let p: Vec<usize> = match &t.relation {
        OutputRelation::LabelPermutation(s) if s.len() == m => s.clone(),
        OutputRelation::LabelPermutation(s) => return Err(MetamorphicError::DimensionMismatch { expected: m, found: s.len() }),
        OutputRelation::IdentityExpected => (0..m).collect(),
    };
    if !is_involution(&p) {
        return Err(MetamorphicError::NotInvolutive);
    }
    let dense: Vec<&Dense> = net
        .layers()
        .iter()
        .filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            Layer::Relu => None,
        })
        .collect();
    let last = dense.len() - 1;
    let mut layers = Vec::new();
    let mut k = 0;
    for layer in net.layers() {
        match layer {
            Layer::Relu => layers.push(Layer::Relu),
            Layer::Dense(d) => {
                let (rows, cols) = (d.out_dim(), d.in_dim());
                let (weights, bias) = if k == 0 && k == last {
                    // single affine layer: W' = (W + P W T) / 2
                    let mut w = vec![vec![0.0; cols]; rows];
                    for r in 0..rows {
                        for (c, &(src, sign)) in tmap.iter().enumerate() {
                            w[r][c] += 0.5 * d.weights[r][c];
                            w[r][src] += 0.5 * sign * d.weights[p[r]][c];
                        }
                    }
                    let b = (0..rows).map(|r| 0.5 * (d.bias[r] + d.bias[p[r]])).collect();
                    (w, b)
                } else if k == 0 {
                    let mut w = d.weights.clone();
                    for row in &d.weights {
                        // (W·T)[r][src] = sign · W[r][c] where T maps x[src] into slot c
                        let mut t_row = vec![0.0; cols];
                        for (c, &(src, sign)) in tmap.iter().enumerate() {
                            t_row[src] += sign * row[c];
                        }
                        w.push(t_row);
                    }
                    let mut b = d.bias.clone();
                    b.extend_from_slice(&d.bias);
                    (w, b)
                } else if k == last {
                    let mut w = vec![vec![0.0; 2 * cols]; rows];
                    for r in 0..rows {
                        for c in 0..cols {
                            w[r][c] = 0.5 * d.weights[r][c];
                            w[r][cols + c] = 0.5 * d.weights[p[r]][c];
                        }
                    }
                    let b = (0..rows).map(|r| 0.5 * (d.bias[r] + d.bias[p[r]])).collect();
                    (w, b)
                } else {
                    let mut w = vec![vec![0.0; 2 * cols]; 2 * rows];
                    for r in 0..rows {
                        for c in 0..cols {
                            w[r][c] = d.weights[r][c];
                            w[rows + r][cols + c] = d.weights[r][c];
                        }
                    }
                    let mut b = d.bias.clone();
                    b.extend_from_slice(&d.bias);
                    (w, b)
                };
                layers.push(Layer::Dense(Dense::new(weights, bias)?));
                k += 1;
            }
        }
    }
    Ok(NetworkGraph::new(layers)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_dataset, random_network};

    #[test]
    fn transform_examples() {
        let swap = Transformation::new(TransformKind::InputPermutation(vec![1, 0]), OutputRelation::IdentityExpected).unwrap();
        assert_eq!(apply_transform(&swap, &[1.0, 2.0], 0).unwrap(), vec![2.0, 1.0]);
        let twice = apply_transform(&swap, &apply_transform(&swap, &[1.0, 2.0], 0).unwrap(), 0).unwrap();
        assert_eq!(twice, vec![1.0, 2.0]);
        let zero = Transformation::new(TransformKind::AdditiveNoise { eps: 0.0, seed: 3 }, OutputRelation::IdentityExpected).unwrap();
        assert_eq!(apply_transform(&zero, &[0.1, 0.2], 5).unwrap(), vec![0.1, 0.2]);
        let flip = Transformation::new(TransformKind::SignFlip(vec![3]), OutputRelation::IdentityExpected).unwrap();
        assert_eq!(apply_transform(&flip, &[1.0], 0), Err(MetamorphicError::IndexOutOfRange { index: 3, len: 1 }));
    }

    #[test]
    fn noise_is_seeded_per_row() {
        let t = Transformation::new(TransformKind::AdditiveNoise { eps: 0.1, seed: 9 }, OutputRelation::IdentityExpected).unwrap();
        let a = apply_transform(&t, &[0.0; 4], 1).unwrap();
        assert_eq!(a, apply_transform(&t, &[0.0; 4], 1).unwrap());
        assert_ne!(a, apply_transform(&t, &[0.0; 4], 2).unwrap());
        assert!(a.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn relations() {
        let t = Transformation::from_json(r#"{"kind":"sign_flip","dims":[1,2],"sigma_out":[0,2,1,4,3]}"#).unwrap();
        let r = derive_property(&t);
        assert_eq!(r.expected(3), 4);
        assert_eq!(r.expected(1), 2);
        assert_eq!(r.to_string(), "decision(f(t(x))) = sigma_out(decision(f(x))) with 1->2, 2->1, 3->4, 4->3");
        let id = Transformation::from_json(r#"{"kind":"permutation","sigma_in":[0,1],"sigma_out":[0,1,2]}"#).unwrap();
        assert_eq!(derive_property(&id), OutputRelation::IdentityExpected);
        let noise = Transformation::from_json(r#"{"kind":"noise","eps":0.5}"#).unwrap();
        assert_eq!(derive_property(&noise), OutputRelation::IdentityExpected);
        assert_eq!(Transformation::from_json(&t.to_json()).unwrap(), t);
        assert!(matches!(
            Transformation::from_json(r#"{"kind":"permutation","sigma_in":[0,0]}"#),
            Err(MetamorphicError::InvalidPermutation(_))
        ));
    }

    #[test]
    fn symmetrized_network_is_equivariant() {
        let t = Transformation::from_json(r#"{"kind":"sign_flip","dims":[1,2],"sigma_out":[0,2,1,4,3]}"#).unwrap();
        for depth in [vec![5, 5], vec![5, 6, 5], vec![5, 8, 7, 5]] {
            let net = random_network(&depth, 11);
            let sym = Model::Network(symmetrize(&net, &t).unwrap());
            let x = [0.3, -0.7, 0.2, 1.1, -0.4];
            let tx = apply_transform(&t, &x, 0).unwrap();
            let (y, ty) = (eval_model(&sym, &x).unwrap(), eval_model(&sym, &tx).unwrap());
            let sigma = [0, 2, 1, 4, 3];
            for j in 0..5 {
                assert!((ty[sigma[j]] - y[j]).abs() < 1e-12, "{depth:?}: {ty:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn zero_noise_agrees_everywhere() {
        let m = Model::Network(random_network(&[2, 4, 3], 1));
        let d = parse_dataset("0.1,0.2\n-1,0.5\n0.3,0.3\n2,-2\n", false).unwrap();
        let t = Transformation::from_json(r#"{"kind":"noise","eps":0}"#).unwrap();
        let table = agreement_table(&m, &d, &t).unwrap();
        assert_eq!(table.total, 4);
        assert_eq!(table.total_agree, 4);
        assert_eq!(table.percentage, Some(100.0));
        assert_eq!(table.rows.iter().map(|r| r.base).sum::<usize>(), 4);
    }
}
