mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use verimux::model::{
    compose_sequential, eval_model, parse_native_model, parse_nnet, random_network, serialize_nnet, to_native_json,
    DecisionFunction, Dense, Kernel, Layer, Model, NetworkGraph, SvmModel,
};

#[test]
fn nnet_round_trip_on_random_networks() {
    let mut r = rng(20);
    for k in 0..20 {
        let net = relu_net(&mut r, 4, 8, 5);
        let text = serialize_nnet(&net).unwrap();
        let back = parse_nnet(&text).unwrap();
        assert_eq!(back.layers(), net.layers(), "network {k}");
        assert_eq!(serialize_nnet(&back).unwrap(), text);
    }
}

fn svm(r: &mut rand_chacha::ChaCha8Rng, dim: usize, classes: usize, kernel: Kernel) -> SvmModel {
    let functions = (0..classes)
        .map(|_| {
            let n = r.gen_range(1..=3);
            DecisionFunction {
                support_vectors: (0..n).map(|_| (0..dim).map(|_| r.gen_range(-1.0..=1.0)).collect()).collect(),
                dual_coefs: (0..n).map(|_| r.gen_range(-1.0..=1.0)).collect(),
                intercept: r.gen_range(-0.5..=0.5),
            }
        })
        .collect();
    SvmModel::new(kernel, functions).unwrap()
}

#[test]
fn pipeline_is_stagewise_evaluation() {
    let mut r = rng(21);
    let net = random_network(&[3, 5, 4], 9);
    let s = svm(&mut r, 4, 3, Kernel::Rbf { gamma: 0.7 });
    let pipe = Model::Pipeline(compose_sequential(vec![Model::Network(net.clone()), Model::Svm(s.clone())]).unwrap());
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..=2.0)).collect();
        let hidden = eval_model(&Model::Network(net.clone()), &x).unwrap();
        let want = eval_model(&Model::Svm(s.clone()), &hidden).unwrap();
        assert_eq!(eval_model(&pipe, &x).unwrap(), want);
    }
}

#[test]
fn composition_is_associative() {
    let a = Model::Network(random_network(&[2, 3], 1));
    let b = Model::Network(random_network(&[3, 4], 2));
    let c = Model::Network(random_network(&[4, 2], 3));
    let left = compose_sequential(vec![Model::Pipeline(compose_sequential(vec![a.clone(), b.clone()]).unwrap()), c.clone()]);
    let right = compose_sequential(vec![a, Model::Pipeline(compose_sequential(vec![b, c]).unwrap())]);
    assert_eq!(left.unwrap(), right.unwrap());
}

#[test]
fn relu_is_idempotent() {
    let mut r = rng(22);
    for _ in 0..20 {
        let net = relu_net(&mut r, 3, 6, 3);
        let mut layers = net.layers().to_vec();
        layers.push(Layer::Relu);
        let once = NetworkGraph::new(layers.clone()).unwrap();
        layers.push(Layer::Relu);
        let twice = NetworkGraph::new(layers).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..net.input_dim()).map(|_| r.gen_range(-3.0..=3.0)).collect();
            assert_eq!(eval_model(&Model::Network(once.clone()), &x).unwrap(), eval_model(&Model::Network(twice.clone()), &x).unwrap());
        }
    }
}

#[test]
fn evaluation_is_deterministic_across_threads() {
    use rayon::prelude::*;
    let m = Model::Network(random_network(&[4, 8, 8, 3], 5));
    let xs: Vec<Vec<f64>> = (0..200).map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0).collect()).collect();
    let serial: Vec<Vec<f64>> = xs.iter().map(|x| eval_model(&m, x).unwrap()).collect();
    let parallel: Vec<Vec<f64>> = xs.par_iter().map(|x| eval_model(&m, x).unwrap()).collect();
    assert_eq!(serial, parallel);
}

#[test]
fn pipeline_stage_mismatch_names_the_stage() {
    let a = Model::Network(random_network(&[2, 3], 1));
    let b = Model::Network(random_network(&[4, 2], 2));
    let e = compose_sequential(vec![a, b]).unwrap_err();
    assert_eq!(e.to_string(), "dimension mismatch at stage 1: expected 3, found 4");
}

fn dense_strategy(inp: usize, out: usize) -> impl Strategy<Value = Dense> {
    (
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, inp), out),
        prop::collection::vec(-10.0f64..10.0, out),
    )
        .prop_map(|(w, b)| Dense::new(w, b).unwrap())
}

fn network_strategy() -> impl Strategy<Value = NetworkGraph> {
    (1usize..4, prop::collection::vec(1usize..5, 1..4)).prop_flat_map(|(inp, widths)| {
        let mut sizes = vec![inp];
        sizes.extend(widths);
        let layers: Vec<_> = sizes.windows(2).map(|p| dense_strategy(p[0], p[1])).collect();
        (layers, prop::collection::vec(any::<bool>(), sizes.len() - 1)).prop_map(|(dense, relu)| {
            let mut layers = Vec::new();
            for (d, r) in dense.into_iter().zip(relu) {
                layers.push(Layer::Dense(d));
                if r {
                    layers.push(Layer::Relu);
                }
            }
            NetworkGraph::new(layers).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn native_json_round_trip(net in network_strategy()) {
        let m = Model::Network(net);
        let text = to_native_json(&m);
        let back = parse_native_model(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(to_native_json(&back), text);
    }

    #[test]
    fn svm_json_round_trip(seed in any::<u64>(), rbf in any::<bool>()) {
        let mut r = rng(seed);
        let kernel = if rbf { Kernel::Rbf { gamma: 0.5 } } else { Kernel::Linear };
        let m = Model::Svm(svm(&mut r, 3, 2, kernel));
        let back = parse_native_model(&to_native_json(&m)).unwrap();
        prop_assert_eq!(back, m);
    }
}
