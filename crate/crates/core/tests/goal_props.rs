mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::*;
use verimux::model::{eval_model, random_network, Model};
use verimux::problem::{normalize_goal, split_goals, GoalEnv, IntervalBox, NormalizedGoal};
use verimux::speclang::{parse_formula, parse_spec, print_formula, print_module, typecheck_spec, FormulaKind};

/// Random goal tree that can print itself and be evaluated directly.
#[derive(Debug, Clone)]
enum Tree {
    /// `Σ c·M(x)[j] + Σ d·x[i] op bound`
    Cmp { outs: Vec<(usize, i64)>, ins: Vec<(usize, i64)>, op: &'static str, bound: f64 },
    ArgMax(usize),
    And(Box<Tree>, Box<Tree>),
    Or(Box<Tree>, Box<Tree>),
    Implies(Box<Tree>, Box<Tree>),
    Not(Box<Tree>),
}

impl Tree {
    fn gen(r: &mut ChaCha8Rng, n: usize, k: usize, depth: usize) -> Tree {
        if depth == 0 || r.gen_bool(0.3) {
            if r.gen_bool(0.2) {
                return Tree::ArgMax(r.gen_range(0..k));
            }
            let mut outs = vec![(r.gen_range(0..k), r.gen_range(1..=3) * if r.gen_bool(0.5) { 1 } else { -1 })];
            if r.gen_bool(0.4) {
                outs.push((r.gen_range(0..k), r.gen_range(-2..=2)));
            }
            let ins = if r.gen_bool(0.3) { vec![(r.gen_range(0..n), r.gen_range(-2..=2))] } else { vec![] };
            let op = ["<", "<=", ">", ">=", "="][r.gen_range(0..5)];
            let bound = (r.gen_range(-20..=20) as f64) / 10.0;
            return Tree::Cmp { outs, ins, op, bound };
        }
        let a = Box::new(Tree::gen(r, n, k, depth - 1));
        let b = Box::new(Tree::gen(r, n, k, depth - 1));
        match r.gen_range(0..4) {
            0 => Tree::And(a, b),
            1 => Tree::Or(a, b),
            2 => Tree::Implies(a, b),
            _ => Tree::Not(a),
        }
    }

    fn text(&self) -> String {
        match self {
            Tree::Cmp { outs, ins, op, bound } => {
                let mut terms: Vec<String> = outs.iter().map(|(j, c)| format!("({} * M(x)[{j}])", lit(*c as f64))).collect();
                terms.extend(ins.iter().map(|(i, c)| format!("({} * x[{i}])", lit(*c as f64))));
                format!("{} {op} {}", terms.join(" + "), lit(*bound))
            }
            Tree::ArgMax(c) => format!("(argmax M(x)) = {c}"),
            Tree::And(a, b) => format!("({} /\\ {})", a.text(), b.text()),
            Tree::Or(a, b) => format!("({} \\/ {})", a.text(), b.text()),
            Tree::Implies(a, b) => format!("({} -> {})", a.text(), b.text()),
            Tree::Not(a) => format!("(not {})", a.text()),
        }
    }

    /// Value and the distance of the nearest atom from its boundary.
    fn eval(&self, x: &[f64], y: &[f64]) -> (bool, f64) {
        match self {
            Tree::Cmp { outs, ins, op, bound } => {
                let lhs: f64 = outs.iter().map(|(j, c)| *c as f64 * y[*j]).sum::<f64>()
                    + ins.iter().map(|(i, c)| *c as f64 * x[*i]).sum::<f64>();
                let d = lhs - bound;
                let v = match *op {
                    "<" => d < 0.0,
                    "<=" => d <= 0.0,
                    ">" => d > 0.0,
                    ">=" => d >= 0.0,
                    _ => d == 0.0,
                };
                (v, d.abs())
            }
            Tree::ArgMax(c) => {
                let gap = (0..y.len()).filter(|j| j != c).map(|j| y[*c] - y[j]).fold(f64::INFINITY, f64::min);
                (gap > 0.0, gap.abs())
            }
            Tree::And(a, b) | Tree::Or(a, b) | Tree::Implies(a, b) => {
                let ((va, da), (vb, db)) = (a.eval(x, y), b.eval(x, y));
                let v = match self {
                    Tree::And(..) => va && vb,
                    Tree::Or(..) => va || vb,
                    _ => !va || vb,
                };
                (v, da.min(db))
            }
            Tree::Not(a) => {
                let (v, d) = a.eval(x, y);
                (!v, d)
            }
        }
    }
}

fn lit(v: f64) -> String {
    if v < 0.0 {
        format!("(- {:?})", -v)
    } else {
        format!("{v:?}")
    }
}

/// Typechecks `forall x: vector n. text` and normalizes the body.
fn normalize(text: &str, n: usize, models: &BTreeMap<String, Arc<Model>>) -> NormalizedGoal {
    let src = format!("model M from \"m.json\";\ngoal g: forall x: vector {n}. {text}\n");
    let module = parse_spec(&src).unwrap_or_else(|e| panic!("{text}: {e}"));
    let sigs = models.iter().map(|(k, m)| (k.clone(), m.signature())).collect();
    let typed = typecheck_spec(&module, &sigs).unwrap_or_else(|e| panic!("{text}: {e}"));
    let FormulaKind::Forall { body, .. } = &typed.module.goals[0].body.kind else { unreachable!() };
    let mut env = GoalEnv::new("g", Some(("x".into(), n)), models);
    normalize_goal(body, &mut env).unwrap_or_else(|e| panic!("{text}: {e}"))
}

fn setup(r: &mut ChaCha8Rng) -> (usize, BTreeMap<String, Arc<Model>>) {
    let n = r.gen_range(1..=3);
    let k = r.gen_range(2..=4);
    let m = Model::Network(random_network(&[n, 4, k], r.gen()));
    (n, [("M".to_string(), Arc::new(m))].into())
}

#[test]
fn double_negation_normalizes_to_the_same_goal() {
    let mut r = rng(40);
    for _ in 0..200 {
        let (n, models) = setup(&mut r);
        let k = models["M"].output_dim();
        let t = Tree::gen(&mut r, n, k, 3);
        let g = normalize(&t.text(), n, &models);
        let gg = normalize(&format!("(not (not {}))", t.text()), n, &models);
        assert_eq!(gg, g, "{}", t.text());
        assert_eq!(g.negate().negate(), g, "{}", t.text());
    }
}

#[test]
fn normal_form_agrees_with_direct_evaluation() {
    let mut r = rng(41);
    let mut checked = 0;
    while checked < 1000 {
        let (n, models) = setup(&mut r);
        let m = models["M"].clone();
        let k = m.output_dim();
        let t = Tree::gen(&mut r, n, k, 3);
        let g = normalize(&t.text(), n, &models);
        let (q, not_q) = (g.compile(), g.negate().compile());
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..=2.0)).collect();
            let y = eval_model(&m, &x).unwrap();
            let (want, gap) = t.eval(&x, &y);
            if gap < 1e-6 {
                continue;
            }
            checked += 1;
            assert_eq!(q.holds(&x, &y), want, "{} at {x:?}", t.text());
            assert_eq!(not_q.holds(&x, &y), !want, "negation of {} at {x:?}", t.text());
        }
    }
}

#[test]
fn partition_covers_the_region() {
    let mut r = rng(42);
    for k in 0..10 {
        let n = r.gen_range(1..=3);
        let m = Model::Network(random_network(&[n, 3, 2], r.gen()));
        let region = random_box(&mut r, n, 2.0);
        let p = problem(m, region.clone(), NormalizedGoal::truth(true), &format!("part{k}"));
        let parts = split_goals(&p, 3, 4096).unwrap();
        assert_eq!(parts.len(), 3usize.pow(n as u32));
        let volume: f64 = parts.iter().map(|q| q.input_region.volume()).sum();
        assert!((volume - region.volume()).abs() <= 1e-9 * region.volume().max(1.0));
        for q in &parts {
            assert!(box_within(&q.input_region, &region));
            assert_eq!(q.output_constraint, p.output_constraint);
        }
        for _ in 0..200 {
            let x = sample(&mut r, &region);
            assert!(parts.iter().any(|q| q.input_region.contains(&x)), "{x:?} in no part");
        }
    }
    let b = IntervalBox::new(vec![0.0], vec![1.0]).unwrap();
    let p = problem(Model::Network(random_network(&[1, 1], 0)), b, NormalizedGoal::truth(true), "big");
    assert!(split_goals(&p, 5000, 4096).is_err());
}

fn spec_text(r: &mut ChaCha8Rng) -> String {
    let mut s = String::from("model M from \"m.json\";\ndataset D from \"d.csv\" labeled;\n");
    s.push_str("predicate near(a: vector 2, b: vector 2, e: real) = dist_linf(a, b, e);\n");
    for g in 0..r.gen_range(1..=4) {
        let t = Tree::gen(r, 2, 3, 3);
        if r.gen_bool(0.3) {
            s.push_str(&format!("goal g{g}: forall a in D. robust_to(M, a, 0.{})\n", r.gen_range(1..=9)));
        } else {
            s.push_str(&format!("goal g{g}: forall x: vector 2. (-1 <= x[0] <= 1 /\\ near(x, x, 0.5)) -> {}\n", t.text()));
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn print_then_parse_is_identity(seed in any::<u64>()) {
        let src = spec_text(&mut rng(seed));
        let m = parse_spec(&src).unwrap();
        let printed = print_module(&m);
        let again = parse_spec(&printed).unwrap();
        prop_assert_eq!(m.structure(), again.structure());
        prop_assert_eq!(print_module(&again), printed);
    }

    #[test]
    fn formula_printing_is_stable(seed in any::<u64>()) {
        let t = Tree::gen(&mut rng(seed), 3, 3, 4);
        let f = parse_formula(&t.text()).unwrap();
        let once = print_formula(&f);
        prop_assert_eq!(print_formula(&parse_formula(&once).unwrap()), once);
    }
}
