//! Native JSON model format.
//!
//! ```text
//! {"kind": "network", "layers": [{"dense": {"w": [[..]], "b": [..]}}, {"relu": {}}],
//!  "normalization": {"input_mins": [..], ...}}              (normalization optional)
//! {"kind": "svm", "kernel": "linear" | {"rbf": {"gamma": g}},
//!  "functions": [{"support_vectors": [[..]], "dual_coefs": [..], "intercept": b}]}
//! {"kind": "pipeline", "stages": [model, ...]}
//! ```

use serde_json::{json, Map, Value};

use super::network::{Dense, Layer, NetworkGraph, Normalization};
use super::svm::{DecisionFunction, Kernel, SvmModel};
use super::{compose_sequential, Model, ModelError};

fn schema(path: &str, reason: impl Into<String>) -> ModelError {
    ModelError::SchemaError { path: path.to_string(), reason: reason.into() }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ModelError> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, ModelError> {
    obj.get(key).ok_or_else(|| schema(path, format!("missing field `{key}`")))
}

fn number(v: &Value, path: &str) -> Result<f64, ModelError> {
    let x = v.as_f64().ok_or_else(|| schema(path, "expected a number"))?;
    if !x.is_finite() {
        return Err(ModelError::NonFiniteWeight);
    }
    Ok(x)
}

fn vector(v: &Value, path: &str) -> Result<Vec<f64>, ModelError> {
    let items = v.as_array().ok_or_else(|| schema(path, "expected an array of numbers"))?;
    items.iter().enumerate().map(|(i, x)| number(x, &format!("{path}[{i}]"))).collect()
}

fn matrix(v: &Value, path: &str) -> Result<Vec<Vec<f64>>, ModelError> {
    let rows = v.as_array().ok_or_else(|| schema(path, "expected an array of rows"))?;
    rows.iter().enumerate().map(|(i, r)| vector(r, &format!("{path}[{i}]"))).collect()
}

pub fn parse_native_model(source: &str) -> Result<Model, ModelError> {
    let value: Value = serde_json::from_str(source).map_err(|e| schema("$", e.to_string()))?;
    model_from_value(&value, "$")
}

fn model_from_value(v: &Value, path: &str) -> Result<Model, ModelError> {
    let obj = object(v, path)?;
    let kind = field(obj, "kind", path)?.as_str().ok_or_else(|| schema(&format!("{path}.kind"), "expected a string"))?;
    match kind {
        "network" => network(obj, path).map(Model::Network),
        "svm" => svm(obj, path).map(Model::Svm),
        "pipeline" => {
            let p = format!("{path}.stages");
            let stages = field(obj, "stages", path)?.as_array().ok_or_else(|| schema(&p, "expected an array"))?;
            if stages.is_empty() {
                return Err(schema(&p, "pipeline needs at least one stage"));
            }
            let stages = stages
                .iter()
                .enumerate()
                .map(|(i, s)| model_from_value(s, &format!("{p}[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            compose_sequential(stages).map(Model::Pipeline)
        }
        other => Err(schema(&format!("{path}.kind"), format!("unknown kind `{other}`"))),
    }
}

fn network(obj: &Map<String, Value>, path: &str) -> Result<NetworkGraph, ModelError> {
    let lp = format!("{path}.layers");
    let items = field(obj, "layers", path)?.as_array().ok_or_else(|| schema(&lp, "expected an array"))?;
    let mut layers = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let p = format!("{lp}[{i}]");
        let layer = object(item, &p)?;
        if layer.len() != 1 {
            return Err(schema(&p, "a layer is an object with exactly one key"));
        }
        let (name, body) = layer.iter().next().unwrap();
        match name.as_str() {
            "dense" => {
                let d = object(body, &format!("{p}.dense"))?;
                let w = matrix(field(d, "w", &format!("{p}.dense"))?, &format!("{p}.dense.w"))?;
                let b = vector(field(d, "b", &format!("{p}.dense"))?, &format!("{p}.dense.b"))?;
                let dense = Dense::new(w, b).map_err(|e| match e {
                    ModelError::ShapeMismatch(reason) => schema(&format!("{p}.dense"), reason),
                    other => other,
                })?;
                layers.push(Layer::Dense(dense));
            }
            "relu" => layers.push(Layer::Relu),
            other => return Err(ModelError::UnknownActivation(other.to_string())),
        }
    }
    let mut net = NetworkGraph::new(layers).map_err(|e| match e {
        ModelError::ShapeMismatch(reason) => schema(&lp, reason),
        other => other,
    })?;
    if let Some(n) = obj.get("normalization") {
        let p = format!("{path}.normalization");
        let o = object(n, &p)?;
        let vec_field = |k: &str| vector(field(o, k, &p)?, &format!("{p}.{k}"));
        let norm = Normalization {
            input_mins: vec_field("input_mins")?,
            input_maxes: vec_field("input_maxes")?,
            input_means: vec_field("input_means")?,
            input_ranges: vec_field("input_ranges")?,
            output_mean: number(field(o, "output_mean", &p)?, &format!("{p}.output_mean"))?,
            output_range: number(field(o, "output_range", &p)?, &format!("{p}.output_range"))?,
        };
        let n = net.input_dim();
        for (name, v) in [
            ("input_mins", &norm.input_mins),
            ("input_maxes", &norm.input_maxes),
            ("input_means", &norm.input_means),
            ("input_ranges", &norm.input_ranges),
        ] {
            if v.len() != n {
                return Err(schema(&format!("{p}.{name}"), format!("expected {n} entries")));
            }
        }
        net.normalization = Some(norm);
    }
    Ok(net)
}

fn kernel(v: &Value, obj: &Map<String, Value>, path: &str) -> Result<Kernel, ModelError> {
    let p = format!("{path}.kernel");
    let gamma = |g: Option<&Value>, gp: &str| -> Result<Kernel, ModelError> {
        let g = g.ok_or_else(|| schema(gp, "rbf kernel needs `gamma`"))?;
        Ok(Kernel::Rbf { gamma: number(g, gp)? })
    };
    match v {
        Value::String(s) => match s.as_str() {
            "linear" => Ok(Kernel::Linear),
            "rbf" => gamma(obj.get("gamma"), &format!("{path}.gamma")),
            other => Err(ModelError::UnknownKernel(other.to_string())),
        },
        Value::Object(o) if o.len() == 1 => {
            let (name, body) = o.iter().next().unwrap();
            match name.as_str() {
                "linear" => Ok(Kernel::Linear),
                "rbf" => gamma(body.get("gamma"), &format!("{p}.rbf.gamma")),
                other => Err(ModelError::UnknownKernel(other.to_string())),
            }
        }
        _ => Err(schema(&p, "expected \"linear\" or {\"rbf\": {\"gamma\": g}}")),
    }
}

fn svm(obj: &Map<String, Value>, path: &str) -> Result<SvmModel, ModelError> {
    let kernel = kernel(field(obj, "kernel", path)?, obj, path)?;
    let fp = format!("{path}.functions");
    let items = field(obj, "functions", path)?.as_array().ok_or_else(|| schema(&fp, "expected an array"))?;
    let mut functions = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let p = format!("{fp}[{i}]");
        let o = object(item, &p)?;
        functions.push(DecisionFunction {
            support_vectors: matrix(field(o, "support_vectors", &p)?, &format!("{p}.support_vectors"))?,
            dual_coefs: vector(field(o, "dual_coefs", &p)?, &format!("{p}.dual_coefs"))?,
            intercept: number(field(o, "intercept", &p)?, &format!("{p}.intercept"))?,
        });
    }
    SvmModel::new(kernel, functions).map_err(|e| match e {
        ModelError::SchemaError { path: inner, reason } => schema(&format!("{path}.{inner}"), reason),
        other => other,
    })
}

fn to_value(m: &Model) -> Value {
    match m {
        Model::Network(net) => {
            let layers: Vec<Value> = net
                .layers()
                .iter()
                .map(|l| match l {
                    Layer::Dense(d) => json!({"dense": {"w": d.weights, "b": d.bias}}),
                    Layer::Relu => json!({"relu": {}}),
                })
                .collect();
            let mut v = json!({"kind": "network", "layers": layers});
            if let Some(n) = &net.normalization {
                v["normalization"] = json!({
                    "input_mins": n.input_mins,
                    "input_maxes": n.input_maxes,
                    "input_means": n.input_means,
                    "input_ranges": n.input_ranges,
                    "output_mean": n.output_mean,
                    "output_range": n.output_range,
                });
            }
            v
        }
        Model::Svm(s) => {
            let kernel = match s.kernel() {
                Kernel::Linear => json!("linear"),
                Kernel::Rbf { gamma } => json!({"rbf": {"gamma": gamma}}),
            };
            let functions: Vec<Value> = s
                .functions()
                .iter()
                .map(|f| {
                    json!({"support_vectors": f.support_vectors, "dual_coefs": f.dual_coefs, "intercept": f.intercept})
                })
                .collect();
            json!({"kind": "svm", "kernel": kernel, "functions": functions})
        }
        Model::Pipeline(p) => json!({"kind": "pipeline", "stages": p.stages().iter().map(to_value).collect::<Vec<_>>()}),
    }
}

/// Serializes to the native format; [`parse_native_model`] reads it back unchanged.
pub fn to_native_json(m: &Model) -> String {
    serde_json::to_string_pretty(&to_value(m)).expect("model values are finite")
}
