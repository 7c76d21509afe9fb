//! The NNet text format.
//!
//! ```text
//! // comment lines
//! numLayers,inputSize,outputSize,maxLayerSize
//! size_0,size_1,...,size_numLayers
//! 0                       (unused flag)
//! input mins
//! input maxes
//! means (inputSize + 1 entries, the last one for outputs)
//! ranges (likewise)
//! per layer: one weight row per output neuron, then one bias per line
//! ```

use std::fmt::Write;

use super::network::{Dense, Layer, NetworkGraph, Normalization};
use super::ModelError;

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next_values(&mut self, what: &str) -> Result<(usize, Vec<f64>), ModelError> {
        let Some(&(line, text)) = self.lines.get(self.pos) else {
            return Err(ModelError::ShapeMismatch(format!("file ends before {what}")));
        };
        self.pos += 1;
        let mut values = Vec::new();
        for cell in text.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let v: f64 = cell
                .parse()
                .map_err(|_| ModelError::FormatError { line, reason: format!("`{cell}` is not a number") })?;
            if !v.is_finite() {
                return Err(ModelError::NonFiniteWeight);
            }
            values.push(v);
        }
        Ok((line, values))
    }

    fn next_counts(&mut self, what: &str) -> Result<(usize, Vec<usize>), ModelError> {
        let (line, values) = self.next_values(what)?;
        let counts = values
            .iter()
            .map(|v| {
                if v.fract() == 0.0 && *v >= 0.0 {
                    Ok(*v as usize)
                } else {
                    Err(ModelError::FormatError { line, reason: format!("{what}: `{v}` is not a count") })
                }
            })
            .collect::<Result<_, _>>()?;
        Ok((line, counts))
    }
}

fn expect_len(line: usize, values: &[f64], n: usize, what: &str) -> Result<(), ModelError> {
    if values.len() != n {
        return Err(ModelError::ShapeMismatch(format!("line {line}: {what} has {} entries, expected {n}", values.len())));
    }
    Ok(())
}

/// Parses an NNet file. Normalization constants are stored in
/// [`NetworkGraph::normalization`] and not applied.
pub fn parse_nnet(source: &str) -> Result<NetworkGraph, ModelError> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .skip_while(|(_, l)| l.starts_with("//") || l.is_empty())
        .filter(|(_, l)| !l.is_empty())
        .collect::<Vec<_>>();
    if lines.is_empty() {
        return Err(ModelError::FormatError { line: 1, reason: "no header line".into() });
    }
    // Comments are only allowed before the header; anything later is data.
    lines.retain(|(_, l)| !l.starts_with("//"));
    let mut lines = Lines { lines, pos: 0 };

    let (line, header) = lines.next_counts("header")?;
    if header.len() < 3 {
        return Err(ModelError::FormatError { line, reason: "header needs numLayers,inputSize,outputSize,maxLayerSize".into() });
    }
    let (num_layers, input_size, output_size) = (header[0], header[1], header[2]);
    if num_layers == 0 {
        return Err(ModelError::FormatError { line, reason: "zero layers".into() });
    }
    let (line, sizes) = lines.next_counts("layer sizes")?;
    if sizes.len() != num_layers + 1 {
        return Err(ModelError::ShapeMismatch(format!(
            "line {line}: header declares {num_layers} layers but {} sizes are listed",
            sizes.len()
        )));
    }
    if sizes[0] != input_size || sizes[num_layers] != output_size {
        return Err(ModelError::ShapeMismatch(format!(
            "line {line}: layer sizes {sizes:?} disagree with input size {input_size} / output size {output_size}"
        )));
    }
    if sizes.contains(&0) {
        return Err(ModelError::ShapeMismatch(format!("line {line}: zero-width layer")));
    }
    lines.next_values("flag line")?;
    let (l, input_mins) = lines.next_values("input mins")?;
    expect_len(l, &input_mins, input_size, "input mins")?;
    let (l, input_maxes) = lines.next_values("input maxes")?;
    expect_len(l, &input_maxes, input_size, "input maxes")?;
    let (l, mut means) = lines.next_values("means")?;
    if means.len() == input_size {
        means.push(0.0);
    }
    expect_len(l, &means, input_size + 1, "means")?;
    let (l, mut ranges) = lines.next_values("ranges")?;
    if ranges.len() == input_size {
        ranges.push(1.0);
    }
    expect_len(l, &ranges, input_size + 1, "ranges")?;
    if let Some(i) = ranges.iter().position(|r| *r == 0.0) {
        return Err(ModelError::FormatError { line: l, reason: format!("range {i} is zero") });
    }

    let mut layers = Vec::with_capacity(2 * num_layers);
    for k in 0..num_layers {
        let (rows, cols) = (sizes[k + 1], sizes[k]);
        let mut weights = Vec::with_capacity(rows);
        for r in 0..rows {
            let (l, row) = lines.next_values(&format!("weight row {r} of layer {k}"))?;
            expect_len(l, &row, cols, &format!("weight row {r} of layer {k}"))?;
            weights.push(row);
        }
        let mut bias = Vec::with_capacity(rows);
        for r in 0..rows {
            let (l, b) = lines.next_values(&format!("bias {r} of layer {k}"))?;
            expect_len(l, &b, 1, &format!("bias {r} of layer {k}"))?;
            bias.push(b[0]);
        }
        if k > 0 {
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Dense(Dense::new(weights, bias)?));
    }
    if let Some((line, _)) = lines.lines.get(lines.pos) {
        return Err(ModelError::ShapeMismatch(format!(
            "line {line}: data continues after the {num_layers} layers declared in the header"
        )));
    }
    let mut net = NetworkGraph::new(layers)?;
    let output_mean = means.pop().unwrap_or(0.0);
    let output_range = ranges.pop().unwrap_or(1.0);
    net.normalization = Some(Normalization {
        input_mins,
        input_maxes,
        input_means: means,
        input_ranges: ranges,
        output_mean,
        output_range,
    });
    Ok(net)
}

fn join(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        write!(out, "{v:?},").unwrap();
    }
    out
}

/// Writes a network in NNet form. The network must alternate dense layers and
/// ReLUs with no ReLU at either end.
pub fn serialize_nnet(net: &NetworkGraph) -> Result<String, ModelError> {
    let mut dense = Vec::new();
    let mut expect_dense = true;
    for layer in net.layers() {
        match (layer, expect_dense) {
            (Layer::Dense(d), true) => dense.push(d),
            (Layer::Relu, false) => {}
            _ => {
                return Err(ModelError::ShapeMismatch(
                    "NNet holds alternating dense and ReLU layers only".into(),
                ))
            }
        }
        expect_dense = !expect_dense;
    }
    if expect_dense {
        return Err(ModelError::ShapeMismatch("NNet networks end with a dense layer".into()));
    }
    let mut sizes = vec![net.input_dim()];
    sizes.extend(dense.iter().map(|d| d.out_dim()));
    let max = sizes.iter().copied().max().unwrap_or(0);
    let norm = net.normalization.clone().unwrap_or_else(|| Normalization::identity(net.input_dim()));
    let mut out = String::from("// written by verimux\n");
    writeln!(out, "{},{},{},{},", dense.len(), net.input_dim(), net.output_dim(), max).unwrap();
    writeln!(out, "{}", sizes.iter().map(|s| format!("{s},")).collect::<String>()).unwrap();
    writeln!(out, "0,").unwrap();
    writeln!(out, "{}", join(&norm.input_mins)).unwrap();
    writeln!(out, "{}", join(&norm.input_maxes)).unwrap();
    let mut means = norm.input_means.clone();
    means.push(norm.output_mean);
    let mut ranges = norm.input_ranges.clone();
    ranges.push(norm.output_range);
    writeln!(out, "{}", join(&means)).unwrap();
    writeln!(out, "{}", join(&ranges)).unwrap();
    for d in dense {
        for row in &d.weights {
            writeln!(out, "{}", join(row)).unwrap();
        }
        for b in &d.bias {
            writeln!(out, "{b:?},").unwrap();
        }
    }
    Ok(out)
}
