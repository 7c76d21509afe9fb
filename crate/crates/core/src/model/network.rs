use serde::{Deserialize, Serialize};

use super::ModelError;

/// Fully connected layer: `out = weights · in + bias`, weights stored row-major (out × in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() || weights[0].is_empty() {
            return Err(ModelError::ShapeMismatch("dense layer needs at least one row and column".into()));
        }
        let cols = weights[0].len();
        if let Some(bad) = weights.iter().position(|r| r.len() != cols) {
            return Err(ModelError::ShapeMismatch(format!("weight row {bad} has {} entries, expected {cols}", weights[bad].len())));
        }
        if bias.len() != weights.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "bias has {} entries for {} output neurons",
                bias.len(),
                weights.len()
            )));
        }
        let finite = weights.iter().flatten().chain(bias.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::NonFiniteWeight);
        }
        Ok(Dense { weights, bias })
    }

    pub fn identity(n: usize) -> Self {
        let weights = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Dense { weights, bias: vec![0.0; n] }
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(0.0, |acc, (w, v)| acc + w * v) + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Relu,
}

/// Input and output scaling constants carried by NNet files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mins: Vec<f64>,
    pub input_maxes: Vec<f64>,
    pub input_means: Vec<f64>,
    pub input_ranges: Vec<f64>,
    pub output_mean: f64,
    pub output_range: f64,
}

impl Normalization {
    /// Constants that leave inputs and outputs unchanged.
    pub fn identity(input_dim: usize) -> Self {
        Normalization {
            input_mins: vec![-f64::MAX; input_dim],
            input_maxes: vec![f64::MAX; input_dim],
            input_means: vec![0.0; input_dim],
            input_ranges: vec![1.0; input_dim],
            output_mean: 0.0,
            output_range: 1.0,
        }
    }
}

/// Feed-forward ReLU network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    input_dim: usize,
    layers: Vec<Layer>,
    /// Parsed from NNet files; not part of the evaluated function until
    /// [`NetworkGraph::with_normalization_applied`] is called.
    pub normalization: Option<Normalization>,
}

impl NetworkGraph {
    pub fn new(layers: Vec<Layer>) -> Result<Self, ModelError> {
        let first = layers
            .iter()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d),
                Layer::Relu => None,
            })
            .ok_or_else(|| ModelError::ShapeMismatch("network needs at least one dense layer".into()))?;
        let input_dim = first.in_dim();
        let mut width = input_dim;
        for (k, layer) in layers.iter().enumerate() {
            if let Layer::Dense(d) = layer {
                if d.in_dim() != width {
                    return Err(ModelError::DimensionMismatch { expected: width, found: d.in_dim(), stage: Some(k) });
                }
                width = d.out_dim();
            }
        }
        Ok(NetworkGraph { input_dim, layers, normalization: None })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.out_dim()),
                Layer::Relu => None,
            })
            .unwrap_or(self.input_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => v = d.apply(&v),
                Layer::Relu => v.iter_mut().for_each(|e| *e = e.max(0.0)),
            }
        }
        v
    }

    /// The network in raw coordinates: inputs clamped to `[min, max]`, then
    /// shifted and scaled; outputs scaled back. Clamping is written with two
    /// ReLUs (`lo + relu(x - lo) - relu(x - hi)`), so the result stays a plain
    /// affine/ReLU network.
    pub fn with_normalization_applied(&self) -> Result<NetworkGraph, ModelError> {
        let Some(norm) = &self.normalization else {
            return Ok(self.clone());
        };
        let n = self.input_dim;
        let mut layers = Vec::new();
        let finite_clamp = norm.input_mins.iter().chain(&norm.input_maxes).all(|v| v.abs() < f64::MAX);
        if finite_clamp {
            let mut w = vec![vec![0.0; n]; 2 * n];
            let mut b = vec![0.0; 2 * n];
            for i in 0..n {
                w[2 * i][i] = 1.0;
                b[2 * i] = -norm.input_mins[i];
                w[2 * i + 1][i] = 1.0;
                b[2 * i + 1] = -norm.input_maxes[i];
            }
            layers.push(Layer::Dense(Dense::new(w, b)?));
            layers.push(Layer::Relu);
            // x' = (lo + r1 - r2 - mean) / range
            let mut w2 = vec![vec![0.0; 2 * n]; n];
            let mut b2 = vec![0.0; n];
            for i in 0..n {
                w2[i][2 * i] = 1.0 / norm.input_ranges[i];
                w2[i][2 * i + 1] = -1.0 / norm.input_ranges[i];
                b2[i] = (norm.input_mins[i] - norm.input_means[i]) / norm.input_ranges[i];
            }
            layers.push(Layer::Dense(Dense::new(w2, b2)?));
        } else {
            let mut w = vec![vec![0.0; n]; n];
            let mut b = vec![0.0; n];
            for i in 0..n {
                w[i][i] = 1.0 / norm.input_ranges[i];
                b[i] = -norm.input_means[i] / norm.input_ranges[i];
            }
            layers.push(Layer::Dense(Dense::new(w, b)?));
        }
        layers.extend(self.layers.iter().cloned());
        let m = self.output_dim();
        let mut w = vec![vec![0.0; m]; m];
        for (i, row) in w.iter_mut().enumerate() {
            row[i] = norm.output_range;
        }
        layers.push(Layer::Dense(Dense::new(w, vec![norm.output_mean; m])?));
        NetworkGraph::new(layers)
    }
}

/// Random fully connected ReLU network with layer widths `sizes`
/// (input first), weights drawn uniformly from `[-1, 1]`.
pub fn random_network(sizes: &[usize], seed: u64) -> NetworkGraph {
    use rand::{Rng, SeedableRng};
    assert!(sizes.len() >= 2, "need an input and an output width");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (k, pair) in sizes.windows(2).enumerate() {
        if k > 0 {
            layers.push(Layer::Relu);
        }
        let w = (0..pair[1]).map(|_| (0..pair[0]).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
        let b = (0..pair[1]).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        layers.push(Layer::Dense(Dense::new(w, b).expect("finite weights")));
    }
    NetworkGraph::new(layers).expect("chained widths")
}
