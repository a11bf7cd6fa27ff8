use nalgebra::DMatrix;
use proptest::prelude::*;

use nlfpca::bspline::{smooth_curves, uniform_grid, BSplineBasis, CurveSet};
use nlfpca::linear_fpca::fit_fpca;
use nlfpca::network::{self, Activation, Dims, NetworkParams};
use nlfpca::simulation::{generate, SimCase};
use nlfpca::trainer::{train, TrainConfig};

fn activation() -> impl Strategy<Value = Activation> {
    prop::sample::select(Activation::ALL.to_vec())
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn net(seed: u64, act: Activation, dims: Dims) -> NetworkParams {
    let mut p = NetworkParams::init(dims, act, seed).unwrap();
    for (i, b) in p.b.iter_mut().enumerate() {
        *b = 0.1 * (i as f64 - 1.0);
    }
    for (i, a) in p.a.iter_mut().enumerate() {
        *a = 0.07 * ((i * 5 % 9) as f64 - 4.0);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity(l in 2usize..16, d in 1usize..5, t in prop::collection::vec(0.0f64..=1.0, 1000)) {
        prop_assume!(l > d);
        let b = BSplineBasis::new(l, d).unwrap();
        for &t in &t {
            let s: f64 = b.eval(t).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smoother_is_a_projection(coefs in prop::collection::vec(-3.0f64..3.0, 10)) {
        let basis = BSplineBasis::new(10, 3).unwrap();
        let obs = uniform_grid(51);
        let c = DMatrix::from_row_slice(1, 10, &coefs);
        let y = CurveSet::from_coefficients(basis.clone(), c.clone(), &obs).unwrap();
        let back = smooth_curves(y.values(), &obs, &basis, 0.0, &obs).unwrap();
        for (a, b) in back.coefficients().iter().zip(c.iter()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn reconstruction_depends_only_on_scores(seed in 0u64..1000, act in activation(),
                                             x in prop::collection::vec(-2.0f64..2.0, 6),
                                             step in -1.0f64..1.0) {
        // J < L, so D has a null space: moving x along it leaves the scores alone
        let dims = Dims::new(6, 4, 2, 3).unwrap();
        let p = net(seed, act, dims);
        let d = DMatrix::from_row_slice(4, 6, &p.d);
        let eig = (d.transpose() * &d).symmetric_eigen();
        let z = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
        let x2: Vec<f64> = x.iter().zip(z.iter()).map(|(a, b)| a + step * b).collect();
        let eval = BSplineBasis::new(6, 3).unwrap().eval_matrix(&uniform_grid(9)).unwrap();
        let (s1, s2) = (network::encode(&p, &x).unwrap(), network::encode(&p, &x2).unwrap());
        for (a, b) in s1.iter().zip(&s2) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let out1 = network::forward(&p, &x, &eval).unwrap().output;
        let out2 = network::forward(&p, &x2, &eval).unwrap().output;
        prop_assert_eq!(&out1, &network::decode(&p, &s1, &eval).unwrap());
        prop_assert_eq!(&out2, &network::decode(&p, &s2, &eval).unwrap());
        for (a, b) in out1.iter().zip(&out2) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        // equal scores decode identically
        prop_assert_eq!(network::decode(&p, &s1, &eval).unwrap(), out1);
    }

    #[test]
    fn hidden_units_are_interchangeable(seed in 0u64..1000, act in activation(),
                                        pj in permutation(5), pr in permutation(4),
                                        x in prop::collection::vec(-2.0f64..2.0, 6)) {
        let dims = Dims::new(6, 5, 2, 4).unwrap();
        let (l, k) = (6, 2);
        let p = net(seed, act, dims);
        let mut q = p.clone();
        for (new, &old) in pj.iter().enumerate() {
            q.b[new] = p.b[old];
            q.d[new * l..(new + 1) * l].copy_from_slice(&p.d[old * l..(old + 1) * l]);
            q.w[new * k..(new + 1) * k].copy_from_slice(&p.w[old * k..(old + 1) * k]);
        }
        let r = 4;
        for (new, &old) in pr.iter().enumerate() {
            q.u[new] = p.u[old];
            q.a[new * l..(new + 1) * l].copy_from_slice(&p.a[old * l..(old + 1) * l]);
            for kk in 0..k {
                let (dst, src) = ((kk * r + new) * l, (kk * r + old) * l);
                q.v[dst..dst + l].copy_from_slice(&p.v[src..src + l]);
            }
        }
        let eval = BSplineBasis::new(6, 3).unwrap().eval_matrix(&uniform_grid(11)).unwrap();
        let a = network::forward(&p, &x, &eval).unwrap();
        let b = network::forward(&q, &x, &eval).unwrap();
        for (u, v) in a.scores().iter().zip(b.scores()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
        for (u, v) in a.output.iter().zip(&b.output) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn fpca_score_covariance_is_diagonal_eigenvalues() {
    let mut c = SimCase::new(1, 500, 21);
    c.noise_sd = 0.1;
    let d = generate(&c).unwrap();
    let basis = BSplineBasis::new(10, 3).unwrap();
    let grid = uniform_grid(101);
    let curves = smooth_curves(&d.observations, &d.obs_grid, &basis, 1e-9, &grid).unwrap();
    let m = fit_fpca(&curves, &basis.gram_matrix(), 2).unwrap();
    let s = m.scores(&curves).unwrap();
    let n = s.nrows() as f64;
    let cov = s.transpose() * &s / (n - 1.0);
    let lam = m.eigenvalues();
    for k in 0..2 {
        assert!((cov[(k, k)] - lam[k]).abs() < 3.0 * lam[k] / n.sqrt());
    }
    assert!(cov[(0, 1)].abs() < 3.0 * lam[1] / n.sqrt());
}

#[test]
fn best_loss_is_the_running_minimum() {
    let c = generate(&SimCase::new(3, 60, 4)).unwrap();
    let basis = BSplineBasis::new(8, 3).unwrap();
    let curves = smooth_curves(
        &c.observations,
        &c.obs_grid,
        &basis,
        1e-9,
        &uniform_grid(31),
    )
    .unwrap();
    let mut cfg = TrainConfig::new(Dims::new(8, 6, 2, 6).unwrap());
    cfg.max_epochs = 40;
    cfg.batch_size = 16;
    cfg.adam.learning_rate = 1e-2;
    let (_, h) = train(&curves, &cfg).unwrap();
    let monitored: Vec<f64> = h.val_loss.iter().map(|v| v.unwrap()).collect();
    let min = monitored.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(h.best_loss, min);
    assert_eq!(monitored[h.best_epoch], min);
    assert!(monitored.iter().skip(h.best_epoch + 1).all(|&v| v >= min));
}
