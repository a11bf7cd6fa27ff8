#![allow(dead_code)]

use nlfpca::bspline::{uniform_grid, BSplineBasis, EvalMatrix};
use nlfpca::network::{self, Activation, Dims, NetworkParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-4;

pub struct GradCase {
    pub params: NetworkParams,
    pub eval: EvalMatrix,
    pub x: Vec<f64>,
    pub target: Vec<f64>,
}

/// Random network with L=4, J=3, K=2, R=3 on a 7-point grid.
pub fn random_case(seed: u64, activation: Activation) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims::new(4, 3, 2, 3).unwrap();
    let mut params = NetworkParams::init(dims, activation, seed).unwrap();
    params
        .b
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-0.5..0.5));
    params
        .a
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-0.5..0.5));
    let eval = BSplineBasis::new(4, 3)
        .unwrap()
        .eval_matrix(&uniform_grid(7))
        .unwrap();
    let x = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
    let target = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
    GradCase {
        params,
        eval,
        x,
        target,
    }
}

fn loss_at(c: &GradCase, p: &NetworkParams) -> f64 {
    let t = network::forward(p, &c.x, &c.eval).unwrap();
    network::curve_loss(&t.output, &c.target)
}

/// Analytic and central-difference gradients, flattened in field order.
pub fn gradients(c: &GradCase) -> (Vec<f64>, Vec<f64>) {
    let trace = network::forward(&c.params, &c.x, &c.eval).unwrap();
    let analytic = network::backward(&c.params, &c.x, &trace, &c.target, &c.eval)
        .unwrap()
        .to_flat();
    let base = c.params.to_flat();
    let mut p = c.params.clone();
    let mut numeric = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut f = base.clone();
        f[i] = base[i] + FD_STEP;
        p.copy_from_flat(&f).unwrap();
        let up = loss_at(c, &p);
        f[i] = base[i] - FD_STEP;
        p.copy_from_flat(&f).unwrap();
        let down = loss_at(c, &p);
        numeric.push((up - down) / (2.0 * FD_STEP));
    }
    (analytic, numeric)
}

pub fn relative_error(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(GRAD_FLOOR)
}

/// Largest relative error over every parameter of `c`.
pub fn max_relative_error(c: &GradCase) -> f64 {
    let (a, f) = gradients(c);
    a.iter()
        .zip(&f)
        .map(|(&a, &f)| relative_error(a, f))
        .fold(0.0, f64::max)
}
