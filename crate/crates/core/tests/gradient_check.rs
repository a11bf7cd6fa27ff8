mod common;

use common::{gradients, max_relative_error, random_case, relative_error};
use nlfpca::network::{self, accumulate_backward, Activation};

fn check(act: Activation) {
    for seed in 0..100 {
        let c = random_case(seed, act);
        let err = max_relative_error(&c);
        assert!(err < 1e-5, "{act} seed {seed}: relative error {err:e}");
    }
}

#[test]
fn tanh_gradients_match_central_differences() {
    check(Activation::Tanh);
}

#[test]
fn sigmoid_gradients_match_central_differences() {
    check(Activation::Sigmoid);
}

#[test]
fn relu_gradients_match_central_differences() {
    check(Activation::Relu);
}

#[test]
fn every_parameter_is_exercised() {
    let c = random_case(3, Activation::Tanh);
    let (a, _) = gradients(&c);
    assert_eq!(a.len(), c.params.dims.parameter_count());
    assert!(a.iter().filter(|g| g.abs() > 1e-8).count() > a.len() / 2);
}

#[test]
fn scaled_accumulation_is_the_batch_mean() {
    let c1 = random_case(5, Activation::Sigmoid);
    let c2 = random_case(6, Activation::Sigmoid);
    let p = &c1.params;
    let mut acc = p.zeros_like();
    for c in [&c1, &c2] {
        let t = network::forward(p, &c.x, &c.eval).unwrap();
        accumulate_backward(p, &c.x, &t, &c.target, &c.eval, 0.5, &mut acc);
    }
    let single = |c: &common::GradCase| {
        let t = network::forward(p, &c.x, &c.eval).unwrap();
        network::backward(p, &c.x, &t, &c.target, &c.eval)
            .unwrap()
            .to_flat()
    };
    let (g1, g2) = (single(&c1), single(&c2));
    for (i, a) in acc.to_flat().iter().enumerate() {
        let want = 0.5 * (g1[i] + g2[i]);
        assert!(relative_error(*a, want) < 1e-12);
    }
}
