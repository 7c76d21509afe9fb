mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use verimux::metamorphic::{
    agreement_table, apply_transform, derive_property, symmetrize, OutputRelation, TransformKind, Transformation,
};
use verimux::model::{eval_model, random_network, Dataset, Model, Sample};

fn data(seed: u64, n: usize, rows: usize) -> Dataset {
    let mut r = rng(seed);
    Dataset {
        rows: (0..rows).map(|_| Sample { features: (0..n).map(|_| r.gen_range(-2.0..=2.0)).collect(), label: None }).collect(),
        feature_dim: n,
    }
}

#[test]
fn sign_flip_symmetry_is_exact() {
    let t = Transformation::new(TransformKind::SignFlip(vec![0, 2]), OutputRelation::IdentityExpected).unwrap();
    for seed in 0..5 {
        let net = symmetrize(&random_network(&[3, 5, 4], seed), &t).unwrap();
        let m = Model::Network(net);
        let table = agreement_table(&m, &data(seed, 3, 500), &t).unwrap();
        assert_eq!(table.total_agree, 500, "{table}");
    }
}

#[test]
fn symmetrized_outputs_are_equivariant() {
    let t = Transformation::new(TransformKind::InputPermutation(vec![2, 1, 0]), OutputRelation::LabelPermutation(vec![1, 0]))
        .unwrap();
    let m = Model::Network(symmetrize(&random_network(&[3, 4, 2], 8), &t).unwrap());
    for row in data(8, 3, 100).rows {
        let y = eval_model(&m, &row.features).unwrap();
        let moved = eval_model(&m, &apply_transform(&t, &row.features, 0).unwrap()).unwrap();
        assert!((moved[0] - y[1]).abs() < 1e-12 && (moved[1] - y[0]).abs() < 1e-12);
    }
}

#[test]
fn zero_noise_agrees_everywhere() {
    let t = Transformation::from_json(r#"{"kind":"noise","eps":0.0,"seed":3}"#).unwrap();
    assert_eq!(derive_property(&t), OutputRelation::IdentityExpected);
    let m = Model::Network(random_network(&[4, 6, 3], 2));
    let table = agreement_table(&m, &data(1, 4, 300), &t).unwrap();
    assert_eq!(table.total_agree, 300);
    assert!(table.rows.iter().all(|r| r.percentage.map_or(true, |p| p == 100.0)));
}

#[test]
fn noise_is_seeded() {
    let m = Model::Network(random_network(&[4, 6, 3], 2));
    let d = data(2, 4, 400);
    let t = |seed: u64| Transformation::from_json(&format!(r#"{{"kind":"noise","eps":0.5,"seed":{seed}}}"#)).unwrap();
    assert_eq!(agreement_table(&m, &d, &t(1)).unwrap(), agreement_table(&m, &d, &t(1)).unwrap());
    let x = [0.1, 0.2, 0.3, 0.4];
    assert_ne!(apply_transform(&t(1), &x, 0).unwrap(), apply_transform(&t(2), &x, 0).unwrap());
    assert_ne!(apply_transform(&t(1), &x, 0).unwrap(), apply_transform(&t(1), &x, 1).unwrap());
}

proptest! {
    #[test]
    fn table_counts_are_consistent(seed in any::<u64>(), eps in 0.0f64..1.0) {
        let m = Model::Network(random_network(&[3, 4, 3], seed));
        let d = data(seed, 3, 60);
        let t = Transformation::new(TransformKind::AdditiveNoise { eps, seed }, OutputRelation::IdentityExpected).unwrap();
        let table = agreement_table(&m, &d, &t).unwrap();
        prop_assert_eq!(table.rows.iter().map(|r| r.base).sum::<usize>(), 60);
        prop_assert_eq!(table.rows.iter().map(|r| r.agree).sum::<usize>(), table.total_agree);
        for r in &table.rows {
            prop_assert!(r.agree <= r.base);
            match r.percentage {
                Some(p) => prop_assert!((p - 100.0 * r.agree as f64 / r.base as f64).abs() < 1e-9),
                None => prop_assert_eq!(r.base, 0),
            }
        }
    }

    #[test]
    fn transform_json_round_trips(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let t = Transformation::new(TransformKind::InputPermutation(perm), OutputRelation::IdentityExpected).unwrap();
        prop_assert_eq!(Transformation::from_json(&t.to_json()).unwrap(), t);
    }
}
