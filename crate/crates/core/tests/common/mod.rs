//! Generators and oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use verimux::analyzer::{check_witness, propagate_affine, propagate_box, verify_goal, AnalyzerConfig, Domain, Outcome};
use verimux::dispatch::sexpr::{parse_all, real_value, Sexpr};
use verimux::dispatch::{emit_smtlib, file_stem, solve, SolverAdapter};
use verimux::exact::{self, Rational};
use verimux::model::{eval_model, random_network, Dense, Layer, Model, NetworkGraph};
use verimux::problem::{
    negate_goal, Atom, IntervalBox, LinOp, LinearAtom, NormalizedGoal, Polarity, ProblemMeta, Var, VerificationProblem,
};

pub const REL_TOL: f64 = 1e-9;
pub const GRID_STEP: f64 = 1e-3;
pub const DECIDE_MARGIN: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Widths `[input, hidden..., output]` with `dense` affine layers.
pub fn random_sizes(rng: &mut ChaCha8Rng, max_dense: usize, max_width: usize, max_input: usize) -> Vec<usize> {
    let dense = rng.gen_range(1..=max_dense);
    let mut sizes = vec![rng.gen_range(1..=max_input)];
    for _ in 0..dense {
        sizes.push(rng.gen_range(1..=max_width));
    }
    sizes
}

pub fn relu_net(rng: &mut ChaCha8Rng, max_dense: usize, max_width: usize, max_input: usize) -> NetworkGraph {
    let sizes = random_sizes(rng, max_dense, max_width, max_input);
    random_network(&sizes, rng.gen())
}

/// Dense layers only.
pub fn affine_net(rng: &mut ChaCha8Rng, max_dense: usize, max_width: usize, max_input: usize) -> NetworkGraph {
    let sizes = random_sizes(rng, max_dense, max_width, max_input);
    let layers = sizes
        .windows(2)
        .map(|p| {
            let w = (0..p[1]).map(|_| (0..p[0]).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
            let b = (0..p[1]).map(|_| rng.gen_range(-0.5..=0.5)).collect();
            Layer::Dense(Dense::new(w, b).unwrap())
        })
        .collect();
    NetworkGraph::new(layers).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, n: usize, max_width: f64) -> IntervalBox {
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for _ in 0..n {
        let c: f64 = rng.gen_range(-1.0..=1.0);
        let w = rng.gen_range(0.1..=1.0) * max_width;
        lo.push(c - w / 2.0);
        hi.push(c + w / 2.0);
    }
    IntervalBox::new(lo, hi).unwrap()
}

pub fn sample(rng: &mut ChaCha8Rng, b: &IntervalBox) -> Vec<f64> {
    (0..b.dim()).map(|i| if b.width(i) > 0.0 { rng.gen_range(b.lo[i]..=b.hi[i]) } else { b.lo[i] }).collect()
}

pub fn slack(v: f64) -> f64 {
    REL_TOL * v.abs().max(1.0)
}

pub fn inside(y: &[f64], b: &IntervalBox) -> bool {
    y.iter().zip(b.lo.iter().zip(&b.hi)).all(|(v, (l, h))| *v >= l - slack(*l) && *v <= h + slack(*h))
}

pub fn box_within(inner: &IntervalBox, outer: &IntervalBox) -> bool {
    (0..inner.dim()).all(|i| inner.lo[i] >= outer.lo[i] - slack(outer.lo[i]) && inner.hi[i] <= outer.hi[i] + slack(outer.hi[i]))
}

pub fn corners(b: &IntervalBox) -> Vec<Vec<f64>> {
    let n = b.dim();
    (0u32..1 << n).map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { b.hi[i] } else { b.lo[i] }).collect()).collect()
}

/// Exact output range of an affine map: the extremes sit at box corners.
pub fn corner_bounds(m: &Model, b: &IntervalBox) -> IntervalBox {
    let outs: Vec<Vec<f64>> = corners(b).iter().map(|x| eval_model(m, x).unwrap()).collect();
    let k = outs[0].len();
    let lo = (0..k).map(|j| outs.iter().map(|y| y[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi = (0..k).map(|j| outs.iter().map(|y| y[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    IntervalBox { lo, hi }
}

pub fn lin(terms: &[(Var, f64)], op: LinOp, bound: f64) -> Atom {
    let coeffs = terms.iter().map(|(v, c)| (*v, exact::from_f64(*c).unwrap())).collect();
    Atom::Linear(LinearAtom::new(coeffs, op, exact::from_f64(bound).unwrap()).expect("mentions a variable"))
}

pub fn problem(model: Model, region: IntervalBox, goal: NormalizedGoal, name: &str) -> VerificationProblem {
    VerificationProblem {
        input_region: region,
        residual: vec![],
        model: Arc::new(model),
        model_name: "M".into(),
        output_constraint: goal,
        polarity: Polarity::Proof,
        meta: ProblemMeta { goal: name.into(), sample: None, part: None },
    }
}

#[derive(Debug, Default)]
pub struct Tally {
    pub checked: usize,
    pub failures: Vec<String>,
}

impl Tally {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn fail(&mut self, msg: String) {
        if self.failures.len() < 20 {
            self.failures.push(msg);
        } else if self.failures.len() == 20 {
            self.failures.push("...".into());
        }
    }
}

/// Random ReLU networks (≤ 4 dense layers, ≤ 8 neurons per layer, input
/// dimension ≤ 4) with sampled outputs checked against both domains.
pub fn soundness_suite(nets: usize, samples: usize, seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut t = Tally::default();
    for k in 0..nets {
        let net = relu_net(&mut r, 4, 8, 4);
        let b = random_box(&mut r, net.input_dim(), 2.0);
        let m = Model::Network(net);
        let boxed = propagate_box(&m, &b).unwrap();
        let affine = propagate_affine(&m, &b).unwrap().output;
        for _ in 0..samples {
            let x = sample(&mut r, &b);
            let y = eval_model(&m, &x).unwrap();
            t.checked += 1;
            if !inside(&y, &boxed) {
                t.fail(format!("net {k}: {y:?} outside box bounds {boxed}"));
            }
            if !inside(&y, &affine) {
                t.fail(format!("net {k}: {y:?} outside affine bounds {affine}"));
            }
        }
    }
    t
}

/// Affine output box inside the interval output box, on the soundness
/// suite's networks.
pub fn dominance_suite(nets: usize, seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut t = Tally::default();
    for k in 0..nets {
        let net = relu_net(&mut r, 4, 8, 4);
        let b = random_box(&mut r, net.input_dim(), 2.0);
        let m = Model::Network(net);
        let boxed = propagate_box(&m, &b).unwrap();
        let affine = propagate_affine(&m, &b).unwrap().output;
        t.checked += 1;
        if !box_within(&affine, &boxed) {
            t.fail(format!("net {k}: affine {affine} not inside interval {boxed}"));
        }
    }
    t
}

/// Affine bounds on ReLU-free networks against corner enumeration.
pub fn affine_exactness_suite(nets: usize, seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut t = Tally::default();
    for k in 0..nets {
        let net = affine_net(&mut r, 3, 6, 4);
        let b = random_box(&mut r, net.input_dim(), 2.0);
        let m = Model::Network(net);
        let got = propagate_affine(&m, &b).unwrap().output;
        let want = corner_bounds(&m, &b);
        t.checked += 1;
        let close = |a: f64, b: f64| (a - b).abs() <= slack(b);
        let same = (0..want.dim()).all(|j| close(got.lo[j], want.lo[j]) && close(got.hi[j], want.hi[j]));
        if !same {
            t.fail(format!("net {k}: affine {got} vs corners {want}"));
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Holds(f64),
    Violated(Vec<f64>, f64),
    Undecided(f64),
}

/// Evaluates the property on the grid `lo + k·step` (plus the upper face) and
/// decides it when the smallest margin is clear of zero by `DECIDE_MARGIN`.
pub fn grid_oracle(p: &VerificationProblem, step: f64) -> Truth {
    let b = &p.input_region;
    let axes: Vec<Vec<f64>> = (0..b.dim())
        .map(|i| {
            let n = (b.width(i) / step).floor() as usize;
            let mut v: Vec<f64> = (0..=n).map(|k| b.lo[i] + k as f64 * step).collect();
            if *v.last().unwrap() < b.hi[i] {
                v.push(b.hi[i]);
            }
            v
        })
        .collect();
    let property = p.property().compile();
    let mut worst = f64::INFINITY;
    let mut arg = b.lo.clone();
    let mut idx = vec![0usize; b.dim()];
    let mut x = vec![0.0; b.dim()];
    'outer: loop {
        for (i, k) in idx.iter().enumerate() {
            x[i] = axes[i][*k];
        }
        if p.residual_holds(&x) {
            let y = eval_model(&p.model, &x).unwrap();
            let m = property.margin(&x, &y);
            if m < worst {
                worst = m;
                arg = x.clone();
            }
        }
        for i in 0..idx.len() {
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
    if worst < -DECIDE_MARGIN {
        Truth::Violated(arg, worst)
    } else if worst > DECIDE_MARGIN {
        Truth::Holds(worst)
    } else {
        Truth::Undecided(worst)
    }
}

/// A goal on a network's outputs whose threshold is drawn from the sampled
/// output range, so that roughly half of the goals hold.
pub fn random_output_goal(rng: &mut ChaCha8Rng, m: &Model, b: &IntervalBox) -> NormalizedGoal {
    let k = m.output_dim();
    let ys: Vec<Vec<f64>> = (0..200).map(|_| eval_model(m, &sample(rng, b)).unwrap()).collect();
    let pick = rng.gen_range(0..3);
    if pick == 2 && k >= 2 {
        let c = m.classify(&b.center()).unwrap();
        return NormalizedGoal::atom(Atom::ClassIs(c));
    }
    let terms: Vec<(Var, f64)> = if pick == 1 && k >= 2 {
        let a = rng.gen_range(0..k);
        let c = (a + rng.gen_range(1..k)) % k;
        vec![(Var::Output(a), 1.0), (Var::Output(c), -1.0)]
    } else {
        vec![(Var::Output(rng.gen_range(0..k)), 1.0)]
    };
    let value = |y: &Vec<f64>| terms.iter().map(|(v, c)| if let Var::Output(j) = v { c * y[*j] } else { 0.0 }).sum::<f64>();
    let lo = ys.iter().map(value).fold(f64::INFINITY, f64::min);
    let hi = ys.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
    let bound = lo + rng.gen_range(0.3..1.3) * (hi - lo).max(1e-3);
    let op = if rng.gen_bool(0.5) { LinOp::Le } else { LinOp::Lt };
    let g = NormalizedGoal::atom(lin(&terms, op, bound));
    if rng.gen_bool(0.25) && k >= 2 {
        // a second, independent way for the goal to hold
        let j = rng.gen_range(0..k);
        let lo_j = ys.iter().map(|y| y[j]).fold(f64::INFINITY, f64::min);
        g.or(&NormalizedGoal::atom(lin(&[(Var::Output(j), 1.0)], LinOp::Le, lo_j)))
    } else {
        g
    }
}

/// Widths keeping the grid near 10⁵ points.
pub fn grid_width(n: usize) -> f64 {
    match n {
        1 => 1.0,
        2 => 0.3,
        _ => 0.05,
    }
}

#[derive(Debug, Default)]
pub struct GridSummary {
    pub generated: usize,
    pub decided: usize,
    pub truth_holds: usize,
    pub truth_violated: usize,
    pub valid: usize,
    pub falsified: usize,
    pub unknown: usize,
    pub contradictions: Vec<String>,
}

/// Generates problems until `count` are decided by the grid oracle, and
/// compares each with the analyzer's verdict.
pub fn grid_suite(count: usize, seed: u64, domain: Domain) -> GridSummary {
    let mut r = rng(seed);
    let mut s = GridSummary::default();
    let cfg = AnalyzerConfig { domain, ..AnalyzerConfig::default() };
    while s.decided < count {
        s.generated += 1;
        let sizes = {
            let mut v = vec![r.gen_range(1..=3)];
            for _ in 0..r.gen_range(1..=2) {
                v.push(r.gen_range(2..=6));
            }
            v.push(r.gen_range(2..=3));
            v
        };
        let m = Model::Network(random_network(&sizes, r.gen()));
        let n = sizes[0];
        let region = random_box(&mut r, n, grid_width(n));
        let goal = random_output_goal(&mut r, &m, &region);
        let p = problem(m, region, goal, &format!("grid{}", s.generated));
        let truth = grid_oracle(&p, GRID_STEP);
        if matches!(truth, Truth::Undecided(_)) {
            continue;
        }
        s.decided += 1;
        let v = verify_goal(&p, &cfg);
        match &truth {
            Truth::Holds(_) => s.truth_holds += 1,
            Truth::Violated(..) => s.truth_violated += 1,
            Truth::Undecided(_) => unreachable!(),
        }
        match (&v.outcome, &truth) {
            (Outcome::Valid, Truth::Violated(x, m)) => {
                s.contradictions.push(format!("{}: Valid but grid violation at {x:?} (margin {m:e})", p.id()))
            }
            (Outcome::Falsified { witness }, Truth::Holds(m)) => {
                s.contradictions.push(format!("{}: Falsified at {witness:?} but grid margin {m:e}", p.id()))
            }
            (Outcome::Falsified { witness }, _) => {
                if let Err(e) = check_witness(&p, witness, cfg.tolerance) {
                    s.contradictions.push(format!("{}: witness does not re-verify: {e}", p.id()));
                }
            }
            (Outcome::Error { message }, _) => s.contradictions.push(format!("{}: error {message}", p.id())),
            _ => {}
        }
        match v.outcome {
            Outcome::Valid => s.valid += 1,
            Outcome::Falsified { .. } => s.falsified += 1,
            _ => s.unknown += 1,
        }
    }
    s
}

// ---- SMT-LIB semantics oracle ----

/// `Σ coeff·name + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lin {
    pub coeffs: BTreeMap<String, f64>,
    pub constant: f64,
}

impl Lin {
    fn constant(c: f64) -> Lin {
        Lin { coeffs: BTreeMap::new(), constant: c }
    }

    fn var(name: &str) -> Lin {
        Lin { coeffs: [(name.to_string(), 1.0)].into(), constant: 0.0 }
    }

    fn scale(mut self, k: f64) -> Lin {
        self.coeffs.values_mut().for_each(|c| *c *= k);
        self.constant *= k;
        self
    }

    fn add(mut self, o: &Lin) -> Lin {
        for (v, c) in &o.coeffs {
            *self.coeffs.entry(v.clone()).or_insert(0.0) += c;
        }
        self.constant += o.constant;
        self
    }

    fn as_constant(&self) -> Option<f64> {
        self.coeffs.values().all(|c| *c == 0.0).then_some(self.constant)
    }

    /// Replaces defined names by their definitions.
    fn subst(&self, defs: &BTreeMap<String, Lin>) -> Lin {
        let mut out = Lin::constant(self.constant);
        for (v, c) in &self.coeffs {
            match defs.get(v) {
                Some(d) => out = out.add(&d.clone().scale(*c)),
                None => out = out.add(&Lin::var(v).scale(*c)),
            }
        }
        out
    }
}

fn num(e: &Sexpr) -> Option<f64> {
    real_value(e).map(|r: Rational| exact::to_f64(&r))
}

fn lin_of(e: &Sexpr) -> Result<Lin, String> {
    if let Some(v) = num(e) {
        return Ok(Lin::constant(v));
    }
    if let Some(a) = e.atom() {
        return Ok(Lin::var(a));
    }
    let items = e.list().ok_or("bad term")?;
    let args = &items[1..];
    match e.head() {
        Some("+") => args.iter().try_fold(Lin::default(), |acc, a| Ok(acc.add(&lin_of(a)?))),
        Some("-") if args.len() == 1 => Ok(lin_of(&args[0])?.scale(-1.0)),
        Some("-") => {
            let mut acc = lin_of(&args[0])?;
            for a in &args[1..] {
                acc = acc.add(&lin_of(a)?.scale(-1.0));
            }
            Ok(acc)
        }
        Some("*") if args.len() == 2 => {
            let (a, b) = (lin_of(&args[0])?, lin_of(&args[1])?);
            match (a.as_constant(), b.as_constant()) {
                (Some(k), _) => Ok(b.scale(k)),
                (_, Some(k)) => Ok(a.scale(k)),
                _ => Err(format!("non-linear product {e}")),
            }
        }
        _ => Err(format!("unsupported term {e}")),
    }
}

/// `expr ≤ 0`, or `expr < 0` when strict; `deep` rows take part in the depth
/// maximisation.
#[derive(Debug, Clone)]
struct Row {
    expr: Lin,
    strict: bool,
    deep: bool,
}

type Dnf = Vec<Vec<Row>>;

fn dnf_of(e: &Sexpr, deep: bool) -> Result<Dnf, String> {
    let items = e.list().ok_or_else(|| format!("bad formula {e}"))?;
    let args = &items[1..];
    match e.head() {
        Some("and") => {
            let mut acc: Dnf = vec![vec![]];
            for a in args {
                let d = dnf_of(a, deep)?;
                acc = acc.iter().flat_map(|c| d.iter().map(move |x| c.iter().chain(x).cloned().collect())).collect();
            }
            Ok(acc)
        }
        Some("or") => args.iter().try_fold(Vec::new(), |mut acc, a| {
            acc.extend(dnf_of(a, deep)?);
            Ok(acc)
        }),
        Some(op @ ("<" | "<=" | ">" | ">=")) if args.len() == 2 => {
            let (l, r) = (lin_of(&args[0])?, lin_of(&args[1])?);
            let expr = match op {
                "<" | "<=" => l.add(&r.scale(-1.0)),
                _ => r.add(&l.scale(-1.0)),
            };
            Ok(vec![vec![Row { expr, strict: matches!(op, "<" | ">"), deep }]])
        }
        _ => Err(format!("unsupported formula {e}")),
    }
}

#[derive(Debug, Clone)]
enum Def {
    Affine(String, Lin),
    Relu(String, Lin),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SmtAnswer {
    /// A satisfying assignment of the inputs, `depth` inside every strict
    /// and every counterexample atom.
    Sat { x: Vec<f64>, depth: f64 },
    Unsat,
    /// Satisfiable only on the boundary of the counterexample condition, or
    /// too close to call.
    Marginal(f64),
}

/// Decides an emitted QF_LRA script by enumerating every ReLU phase pattern
/// and, per pattern and counterexample disjunct, enumerating the vertices of
/// the polytope in (inputs, depth) space. The largest depth over all
/// feasible vertices decides the answer.
pub fn smt_oracle(script: &str) -> Result<SmtAnswer, String> {
    let cmds = parse_all(script).map_err(|e| e.to_string())?;
    let mut inputs = Vec::new();
    let mut defs = Vec::new();
    let mut constraints: Vec<Dnf> = Vec::new();
    let asserts = cmds.iter().filter(|c| c.head() == Some("assert")).count();
    let mut seen = 0;
    for c in &cmds {
        let items = c.list().ok_or("bad command")?;
        match c.head() {
            Some("declare-const") => {
                let name = items[1].atom().ok_or("bad declaration")?;
                if name.starts_with("X_") {
                    inputs.push(name.to_string());
                }
            }
            Some("assert") => {
                seen += 1;
                let f = &items[1];
                if f.head() == Some("=") {
                    let parts = f.list().unwrap();
                    let name = parts[1].atom().ok_or("bad definition")?.to_string();
                    let rhs = &parts[2];
                    if rhs.head() == Some("ite") {
                        let ite = rhs.list().unwrap();
                        let cond = ite[1].list().ok_or("bad ite")?;
                        let v = lin_of(&cond[1])?;
                        let ok = ite[1].head() == Some(">=")
                            && num(&cond[2]) == Some(0.0)
                            && lin_of(&ite[2])? == v
                            && num(&ite[3]) == Some(0.0);
                        if !ok {
                            return Err(format!("unexpected ite {rhs}"));
                        }
                        defs.push(Def::Relu(name, v));
                    } else {
                        defs.push(Def::Affine(name, lin_of(rhs)?));
                    }
                } else {
                    // the last assertion is the counterexample condition
                    constraints.push(dnf_of(f, seen == asserts)?);
                }
            }
            _ => {}
        }
    }
    let relus = defs.iter().filter(|d| matches!(d, Def::Relu(..))).count();
    if relus > 16 {
        return Err(format!("{relus} ReLUs is too many to enumerate"));
    }
    let mut cases: Dnf = vec![vec![]];
    for d in &constraints {
        cases = cases.iter().flat_map(|c| d.iter().map(move |x| c.iter().chain(x).cloned().collect())).collect();
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for phase in 0u32..1 << relus {
        let mut env: BTreeMap<String, Lin> = BTreeMap::new();
        let mut phase_rows = Vec::new();
        let mut r = 0;
        for d in &defs {
            match d {
                Def::Affine(name, e) => {
                    let v = e.subst(&env);
                    env.insert(name.clone(), v);
                }
                Def::Relu(name, e) => {
                    let v = e.subst(&env);
                    if phase >> r & 1 == 1 {
                        phase_rows.push(Row { expr: v.clone().scale(-1.0), strict: false, deep: false });
                        env.insert(name.clone(), v);
                    } else {
                        phase_rows.push(Row { expr: v, strict: false, deep: false });
                        env.insert(name.clone(), Lin::constant(0.0));
                    }
                    r += 1;
                }
            }
        }
        for case in &cases {
            let rows: Vec<Row> = phase_rows
                .iter()
                .cloned()
                .chain(case.iter().map(|row| Row { expr: row.expr.subst(&env), ..row.clone() }))
                .collect();
            if let Some((depth, x)) = deepest_vertex(&rows, &inputs)? {
                if best.as_ref().map_or(true, |(d, _)| depth > *d) {
                    best = Some((depth, x));
                }
            }
        }
    }
    Ok(match best {
        None => SmtAnswer::Unsat,
        Some((d, x)) if d > DECIDE_MARGIN => SmtAnswer::Sat { x, depth: d },
        Some((d, _)) if d < -DECIDE_MARGIN => SmtAnswer::Unsat,
        Some((d, _)) => SmtAnswer::Marginal(d),
    })
}

/// Maximises `t` over `{(x, t) : a·x + s·t ≤ b, -1 ≤ t ≤ 1}` by vertex
/// enumeration, where `s = 1` for strict or deep rows (normalised to unit
/// length in `x`). Returns `None` when the polytope is empty.
fn deepest_vertex(rows: &[Row], inputs: &[String]) -> Result<Option<(f64, Vec<f64>)>, String> {
    let n = inputs.len();
    let d = n + 1;
    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    for row in rows {
        let mut coeffs = vec![0.0; d];
        for (v, c) in &row.expr.coeffs {
            let i = inputs.iter().position(|x| x == v).ok_or_else(|| format!("`{v}` is undefined"))?;
            coeffs[i] += c;
        }
        let mut rhs = -row.expr.constant;
        if row.strict || row.deep {
            let norm = coeffs[..n].iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 0.0 {
                coeffs.iter_mut().for_each(|c| *c /= norm);
                rhs /= norm;
            }
            coeffs[n] = 1.0;
        }
        a.push(coeffs);
        b.push(rhs);
    }
    for s in [1.0, -1.0] {
        let mut t = vec![0.0; d];
        t[n] = s;
        a.push(t);
        b.push(1.0);
    }
    let m = a.len();
    let feasible = |x: &[f64]| {
        a.iter().zip(&b).all(|(row, rhs)| {
            let lhs: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum();
            lhs <= rhs + 1e-9 * rhs.abs().max(1.0)
        })
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pick: Vec<usize> = (0..d).collect();
    loop {
        let sys: Vec<Vec<f64>> = pick.iter().map(|&i| a[i].clone()).collect();
        let rhs: Vec<f64> = pick.iter().map(|&i| b[i]).collect();
        if let Some(x) = solve_square(sys, rhs) {
            if feasible(&x) && best.as_ref().map_or(true, |(t, _)| x[n] > *t) {
                best = Some((x[n], x[..n].to_vec()));
            }
        }
        // next combination
        let mut i = d;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            if pick[i] < m - d + i {
                pick[i] += 1;
                for j in i + 1..d {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// `get-model` answer assigning `x` to the inputs.
pub fn sat_answer(x: &[f64]) -> String {
    let mut s = String::from("sat\n(\n");
    for (i, v) in x.iter().enumerate() {
        let lit = if *v < 0.0 { format!("(- {})", -v) } else { format!("{v}") };
        s.push_str(&format!("  (define-fun X_{i} () Real {lit})\n"));
    }
    s.push_str(")\n");
    s
}

/// Desk-scale problem: input dimension ≤ 2, at most 6 hidden neurons.
pub fn desk_problem(r: &mut ChaCha8Rng, k: usize) -> VerificationProblem {
    let n = r.gen_range(1..=2);
    let mut sizes = vec![n];
    let mut budget: usize = 6;
    for _ in 0..r.gen_range(1..=2) {
        if budget < 1 {
            break;
        }
        let w = r.gen_range(1..=budget.min(4));
        sizes.push(w);
        budget -= w;
    }
    sizes.push(r.gen_range(1..=3));
    let m = Model::Network(random_network(&sizes, r.gen()));
    let region = random_box(r, n, 2.0);
    let goal = random_output_goal(r, &m, &region);
    problem(m, region, goal, &format!("desk{k}"))
}

#[derive(Debug, Default)]
pub struct SmtSummary {
    pub problems: usize,
    pub sat: usize,
    pub unsat: usize,
    pub marginal: usize,
    pub conclusive: usize,
    pub agreements: usize,
    pub replayed: usize,
    pub genuine: usize,
    pub failures: Vec<String>,
}

/// Emits `count` desk-scale problems, decides each with [`smt_oracle`],
/// compares with the analyzer, and replays every `sat` model through the
/// mock solver, whose verdict must re-verify concretely.
pub fn smt_suite(count: usize, seed: u64, dir: &Path) -> SmtSummary {
    let mut r = rng(seed);
    let mut s = SmtSummary::default();
    let replay = dir.join("replay");
    let work = dir.join("work");
    std::fs::create_dir_all(&replay).unwrap();
    let adapter = SolverAdapter::mock("mock-smt", Some(&replay));
    let cfg = AnalyzerConfig::default();
    for k in 0..count {
        let p = desk_problem(&mut r, k);
        s.problems += 1;
        let script = match emit_smtlib(&negate_goal(&p)) {
            Ok(t) => t,
            Err(e) => {
                s.failures.push(format!("{}: emit failed: {e}", p.id()));
                continue;
            }
        };
        let answer = match smt_oracle(&script) {
            Ok(a) => a,
            Err(e) => {
                s.failures.push(format!("{}: oracle failed: {e}", p.id()));
                continue;
            }
        };
        let verdict = verify_goal(&p, &cfg);
        let oracle_sat = match &answer {
            SmtAnswer::Sat { .. } => {
                s.sat += 1;
                Some(true)
            }
            SmtAnswer::Unsat => {
                s.unsat += 1;
                Some(false)
            }
            SmtAnswer::Marginal(_) => {
                s.marginal += 1;
                None
            }
        };
        let analyzer_sat = match verdict.outcome {
            Outcome::Valid => Some(false),
            Outcome::Falsified { .. } => Some(true),
            _ => None,
        };
        if let (Some(a), Some(o)) = (analyzer_sat, oracle_sat) {
            s.conclusive += 1;
            if a == o {
                s.agreements += 1;
            } else {
                s.failures.push(format!("{}: analyzer {} but oracle {answer:?}", p.id(), verdict.outcome.tag()));
            }
        }
        if let SmtAnswer::Sat { x, .. } = &answer {
            std::fs::write(replay.join(format!("{}.out", file_stem(&p.id()))), sat_answer(x)).unwrap();
            s.replayed += 1;
            let v = solve(&p, &adapter, &work, Duration::from_secs(10), cfg.tolerance);
            match &v.outcome {
                Outcome::Falsified { witness } if check_witness(&p, witness, cfg.tolerance).is_ok() => s.genuine += 1,
                other => s.failures.push(format!("{}: replayed model gave {other:?}", p.id())),
            }
        }
    }
    s
}
