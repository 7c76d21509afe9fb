//! Interval and affine-bound (back-substitution) propagation over
//! affine/ReLU layer stacks.

use crate::model::{Kernel, Layer, Model};
use crate::problem::IntervalBox;

use super::AnalyzerError;

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Affine { weights: Vec<Vec<f64>>, bias: Vec<f64> },
    Relu,
}

/// A model flattened to affine maps and ReLUs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub input_dim: usize,
    pub ops: Vec<Op>,
}

impl LayerStack {
    /// Networks map layer by layer; a linear-kernel SVM becomes a single
    /// affine map with primal weights. RBF kernels have no such form.
    pub fn from_model(m: &Model) -> Result<LayerStack, AnalyzerError> {
        let mut ops = Vec::new();
        push_model(m, &mut ops)?;
        Ok(LayerStack { input_dim: m.input_dim(), ops })
    }

    pub fn output_dim(&self) -> usize {
        self.ops
            .iter()
            .rev()
            .find_map(|op| match op {
                Op::Affine { bias, .. } => Some(bias.len()),
                Op::Relu => None,
            })
            .unwrap_or(self.input_dim)
    }
}

fn push_model(m: &Model, ops: &mut Vec<Op>) -> Result<(), AnalyzerError> {
    match m {
        Model::Network(net) => {
            for layer in net.layers() {
                ops.push(match layer {
                    Layer::Dense(d) => Op::Affine { weights: d.weights.clone(), bias: d.bias.clone() },
                    Layer::Relu => Op::Relu,
                });
            }
        }
        Model::Svm(svm) => {
            let Some((weights, bias)) = svm.primal_weights() else {
                let what = match svm.kernel() {
                    Kernel::Rbf { .. } => "RBF-kernel SVM",
                    Kernel::Linear => "SVM with non-finite primal weights",
                };
                return Err(AnalyzerError::UnsupportedForDomain(what.into()));
            };
            ops.push(Op::Affine { weights, bias });
        }
        Model::Pipeline(p) => {
            for stage in p.stages() {
                push_model(stage, ops)?;
            }
        }
    }
    Ok(())
}

fn check_dim(stack: &LayerStack, b: &IntervalBox) -> Result<(), AnalyzerError> {
    if b.dim() != stack.input_dim {
        return Err(AnalyzerError::DimensionMismatch { expected: stack.input_dim, found: b.dim() });
    }
    Ok(())
}

fn interval_affine(weights: &[Vec<f64>], bias: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut out_lo = Vec::with_capacity(bias.len());
    let mut out_hi = Vec::with_capacity(bias.len());
    for (row, b) in weights.iter().zip(bias) {
        let (mut l, mut h) = (*b, *b);
        for (w, (xl, xh)) in row.iter().zip(lo.iter().zip(hi)) {
            if *w >= 0.0 {
                l += w * xl;
                h += w * xh;
            } else {
                l += w * xh;
                h += w * xl;
            }
        }
        out_lo.push(l);
        out_hi.push(h);
    }
    (out_lo, out_hi)
}

pub fn propagate_stack_box(stack: &LayerStack, b: &IntervalBox) -> Result<IntervalBox, AnalyzerError> {
    check_dim(stack, b)?;
    let (mut lo, mut hi) = (b.lo.clone(), b.hi.clone());
    for op in &stack.ops {
        match op {
            Op::Affine { weights, bias } => (lo, hi) = interval_affine(weights, bias, &lo, &hi),
            Op::Relu => {
                lo.iter_mut().for_each(|v| *v = v.max(0.0));
                hi.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
    }
    Ok(IntervalBox { lo, hi })
}

/// Interval propagation: interval matrix arithmetic through affine maps,
/// `[max(l, 0), max(u, 0)]` through ReLUs.
pub fn propagate_box(m: &Model, b: &IntervalBox) -> Result<IntervalBox, AnalyzerError> {
    propagate_stack_box(&LayerStack::from_model(m)?, b)
}

/// Linear bounds of ReLU on `[l, u]` as
/// `(lower_slope, lower_intercept, upper_slope, upper_intercept)`.
pub fn relu_relaxation(l: f64, u: f64) -> Result<(f64, f64, f64, f64), AnalyzerError> {
    if !(l <= u) {
        return Err(AnalyzerError::InvalidInterval { lo: l, hi: u });
    }
    if l >= 0.0 {
        return Ok((1.0, 0.0, 1.0, 0.0));
    }
    if u <= 0.0 {
        return Ok((0.0, 0.0, 0.0, 0.0));
    }
    let slope = u / (u - l);
    let lambda = if u >= -l { 1.0 } else { 0.0 };
    Ok((lambda, 0.0, slope, -slope * l))
}

/// Affine form `coeffs · v + constant` over some layer's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl AffineForm {
    fn min_over(&self, b: &IntervalBox) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .fold(self.constant, |acc, (i, c)| acc + if *c >= 0.0 { c * b.lo[i] } else { c * b.hi[i] })
    }

    fn max_over(&self, b: &IntervalBox) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .fold(self.constant, |acc, (i, c)| acc + if *c >= 0.0 { c * b.hi[i] } else { c * b.lo[i] })
    }
}

/// Bounds of one layer's neurons, symbolically over the preceding layer and
/// concretely over the input box.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBounds {
    pub lower: Vec<AffineForm>,
    pub upper: Vec<AffineForm>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Relation {
    Affine(usize),
    Diag { lower: Vec<(f64, f64)>, upper: Vec<(f64, f64)> },
}

/// Result of affine propagation. Keeps what is needed to back-substitute
/// further expressions over the outputs.
#[derive(Debug, Clone)]
pub struct AffineAnalysis {
    pub layers: Vec<AffineBounds>,
    pub output: IntervalBox,
    /// Output bounds back-substituted to the input variables.
    pub output_lower: Vec<AffineForm>,
    pub output_upper: Vec<AffineForm>,
    input: IntervalBox,
    relations: Vec<Relation>,
    stack: LayerStack,
}

impl AffineAnalysis {
    /// Back-substitutes `c · (layer k outputs) + d` to an affine form over the
    /// inputs, bounding from below when `lower` is set and from above otherwise.
    fn backsubstitute(&self, k: usize, mut c: Vec<f64>, mut d: f64, lower: bool) -> AffineForm {
        for j in (0..k).rev() {
            match &self.relations[j] {
                Relation::Affine(op) => {
                    let Op::Affine { weights, bias } = &self.stack.ops[*op] else { unreachable!() };
                    d += c.iter().zip(bias).map(|(a, b)| a * b).sum::<f64>();
                    let cols = weights.first().map_or(0, Vec::len);
                    let mut next = vec![0.0; cols];
                    for (ci, row) in c.iter().zip(weights) {
                        if *ci != 0.0 {
                            for (n, w) in next.iter_mut().zip(row) {
                                *n += ci * w;
                            }
                        }
                    }
                    c = next;
                }
                Relation::Diag { lower: lo_rel, upper: up_rel } => {
                    for (i, ci) in c.iter_mut().enumerate() {
                        let (slope, icpt) = if (*ci >= 0.0) == lower { lo_rel[i] } else { up_rel[i] };
                        d += *ci * icpt;
                        *ci *= slope;
                    }
                }
            }
        }
        AffineForm { coeffs: c, constant: d }
    }

    /// Upper bound of `c · y + d · x + e` over the box, `y` being the outputs.
    pub fn upper_bound(&self, c: &[f64], d: &[f64], e: f64) -> f64 {
        let mut form = self.backsubstitute(self.relations.len(), c.to_vec(), e, false);
        for (f, di) in form.coeffs.iter_mut().zip(d) {
            *f += di;
        }
        let symbolic = form.max_over(&self.input);
        let interval = interval_upper(&self.output, &self.input, c, d, e);
        symbolic.min(interval)
    }
}

/// Upper bound of `c · y + d · x + e` from output and input intervals alone.
pub fn interval_upper(output: &IntervalBox, input: &IntervalBox, c: &[f64], d: &[f64], e: f64) -> f64 {
    let ys = c.iter().enumerate().map(|(j, cj)| if *cj >= 0.0 { cj * output.hi[j] } else { cj * output.lo[j] });
    let xs = d.iter().enumerate().map(|(i, di)| if *di >= 0.0 { di * input.hi[i] } else { di * input.lo[i] });
    ys.chain(xs).fold(e, |acc, v| acc + v)
}

pub fn propagate_stack_affine(stack: &LayerStack, b: &IntervalBox) -> Result<AffineAnalysis, AnalyzerError> {
    check_dim(stack, b)?;
    let mut analysis = AffineAnalysis {
        layers: Vec::with_capacity(stack.ops.len()),
        output: b.clone(),
        output_lower: vec![],
        output_upper: vec![],
        input: b.clone(),
        relations: Vec::with_capacity(stack.ops.len()),
        stack: stack.clone(),
    };
    let (mut lo, mut hi) = (b.lo.clone(), b.hi.clone());
    for (k, op) in stack.ops.iter().enumerate() {
        match op {
            Op::Affine { weights, bias } => {
                let forms: Vec<AffineForm> = weights
                    .iter()
                    .zip(bias)
                    .map(|(row, b)| AffineForm { coeffs: row.clone(), constant: *b })
                    .collect();
                let (iv_lo, iv_hi) = interval_affine(weights, bias, &lo, &hi);
                let mut new_lo = Vec::with_capacity(forms.len());
                let mut new_hi = Vec::with_capacity(forms.len());
                for (i, f) in forms.iter().enumerate() {
                    let l = analysis.backsubstitute(k, f.coeffs.clone(), f.constant, true).min_over(b);
                    let u = analysis.backsubstitute(k, f.coeffs.clone(), f.constant, false).max_over(b);
                    let l = l.max(iv_lo[i]);
                    let u = u.min(iv_hi[i]).max(l);
                    new_lo.push(l);
                    new_hi.push(u);
                }
                analysis.relations.push(Relation::Affine(k));
                analysis.layers.push(AffineBounds { lower: forms.clone(), upper: forms, lo: new_lo.clone(), hi: new_hi.clone() });
                lo = new_lo;
                hi = new_hi;
            }
            Op::Relu => {
                let n = lo.len();
                let mut lower = Vec::with_capacity(n);
                let mut upper = Vec::with_capacity(n);
                for i in 0..n {
                    let (ls, li, us, ui) = relu_relaxation(lo[i], hi[i])?;
                    lower.push((ls, li));
                    upper.push((us, ui));
                }
                let unit = |i: usize, (s, c): (f64, f64)| {
                    let mut coeffs = vec![0.0; n];
                    coeffs[i] = s;
                    AffineForm { coeffs, constant: c }
                };
                let new_lo: Vec<f64> = lo.iter().map(|v| v.max(0.0)).collect();
                let new_hi: Vec<f64> = hi.iter().map(|v| v.max(0.0)).collect();
                analysis.layers.push(AffineBounds {
                    lower: lower.iter().enumerate().map(|(i, r)| unit(i, *r)).collect(),
                    upper: upper.iter().enumerate().map(|(i, r)| unit(i, *r)).collect(),
                    lo: new_lo.clone(),
                    hi: new_hi.clone(),
                });
                analysis.relations.push(Relation::Diag { lower, upper });
                lo = new_lo;
                hi = new_hi;
            }
        }
    }
    let m = lo.len();
    let k = analysis.relations.len();
    let unit = |j: usize| {
        let mut c = vec![0.0; m];
        c[j] = 1.0;
        c
    };
    analysis.output_lower = (0..m).map(|j| analysis.backsubstitute(k, unit(j), 0.0, true)).collect();
    analysis.output_upper = (0..m).map(|j| analysis.backsubstitute(k, unit(j), 0.0, false)).collect();
    analysis.output = IntervalBox { lo, hi };
    Ok(analysis)
}

/// Affine-bound propagation with back-substitution to the input box. Each
/// layer's concrete bounds are also intersected with one interval step from
/// the previous layer, so the result is never looser than interval propagation.
pub fn propagate_affine(m: &Model, b: &IntervalBox) -> Result<AffineAnalysis, AnalyzerError> {
    propagate_stack_affine(&LayerStack::from_model(m)?, b)
}

/// `width(b[i]) · Σ |coeff of x[i]|` over all output bound forms.
pub fn influence_scores(lower: &[AffineForm], upper: &[AffineForm], b: &IntervalBox) -> Vec<f64> {
    (0..b.dim())
        .map(|i| {
            let total: f64 = lower.iter().chain(upper).map(|f| f.coeffs.get(i).map_or(0.0, |c| c.abs())).sum();
            b.width(i) * total
        })
        .collect()
}
