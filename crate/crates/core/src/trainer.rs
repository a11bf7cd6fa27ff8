//! Mini-batch Adam training of the functional autoencoder.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bspline::{CurveSet, EvalMatrix};
use crate::error::{Error, Result};
use crate::network::{
    self, accumulate_backward, encode_traced, encoder_backward, forward_into, Activation,
    AdamConfig, AdamState, Dims, ForwardTrace, NetworkParams,
};
use crate::simulation::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dims: Dims,
    pub activation: Activation,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    /// Epochs without improvement before stopping; `None` disables early stopping.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            activation: Activation::Tanh,
            adam: AdamConfig::default(),
            batch_size: 64,
            max_epochs: 500,
            validation_fraction: 0.2,
            patience: Some(50),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.epsilon > 0.0) {
            return Err(Error::Config(
                "learning rate and epsilon must be positive".into(),
            ));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation split is held out.
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<Option<f64>>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub epoch_seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn record(&self, epoch: usize) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: self.train_loss[epoch],
            val_loss: self.val_loss[epoch],
            seconds: self.epoch_seconds[epoch],
        }
    }
}

struct Sample {
    x: Vec<f64>,
    target: Vec<f64>,
}

fn samples(curves: &CurveSet, rows: &[usize]) -> Vec<Sample> {
    rows.iter()
        .map(|&i| Sample {
            x: curves.coefficient_row(i),
            target: curves.value_row(i),
        })
        .collect()
}

fn mean_loss(
    params: &NetworkParams,
    data: &[Sample],
    eval: &EvalMatrix,
    trace: &mut ForwardTrace,
) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        forward_into(params, &s.x, eval, trace)?;
        total += network::curve_loss(&trace.output, &s.target);
    }
    Ok(total / data.len() as f64)
}

/// Trains on `curves` (coefficients as inputs, dense values on the curve
/// grid as targets) and returns the parameters from the best monitored epoch.
pub fn train(curves: &CurveSet, config: &TrainConfig) -> Result<(NetworkParams, TrainHistory)> {
    train_with_observer(curves, config, |_| {})
}

/// [`train`], calling `observer` after every epoch.
pub fn train_with_observer<F: FnMut(&EpochRecord)>(
    curves: &CurveSet,
    config: &TrainConfig,
    mut observer: F,
) -> Result<(NetworkParams, TrainHistory)> {
    config.validate()?;
    let n = curves.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "training needs n >= 2 curves, got {n}"
        )));
    }
    if config.dims.basis != curves.basis().count() {
        return Err(Error::InvalidDimension(format!(
            "network expects L={} but curves use L={}",
            config.dims.basis,
            curves.basis().count()
        )));
    }
    let eval = curves.eval_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xA11CE));

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64) * config.validation_fraction).round() as usize;
    let n_val = n_val.min(n - 1);
    let (val_rows, train_rows) = order.split_at(n_val);
    let val = samples(curves, val_rows);
    let train = samples(curves, train_rows);

    let mut params = NetworkParams::init(config.dims, config.activation, config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut trace = ForwardTrace::with_shape(config.dims, eval.points());

    let mut history = TrainHistory {
        best_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = params.clone();
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let batch = config.batch_size.min(train.len());

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in idx.chunks(batch).enumerate() {
            grads.fill(0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let s = &train[i];
                forward_into(&params, &s.x, eval, &mut trace)?;
                batch_loss +=
                    accumulate_backward(&params, &s.x, &trace, &s.target, eval, scale, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {b}"
                )));
            }
            epoch_loss += batch_loss;
            adam.step(&mut params, &grads, &config.adam)
                .map_err(|e| match e {
                    Error::NonFinite(_) => {
                        Error::NonFinite(format!("gradient at epoch {epoch}, batch {b}"))
                    }
                    other => other,
                })?;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let (val_loss, monitored) = if val.is_empty() {
            (None, mean_loss(&params, &train, eval, &mut trace)?)
        } else {
            let v = mean_loss(&params, &val, eval, &mut trace)?;
            (Some(v), v)
        };
        if !monitored.is_finite() {
            return Err(Error::NonFinite(format!("monitored loss at epoch {epoch}")));
        }
        if monitored < history.best_loss {
            history.best_loss = monitored;
            history.best_epoch = epoch;
            best.clone_from(&params);
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.epoch_seconds.push(started.elapsed().as_secs_f64());
        observer(&history.record(epoch));

        if let Some(p) = config.patience {
            if epoch - history.best_epoch >= p {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Row `i` is the reconstruction of curve `i` on the grid of `eval`.
pub fn reconstruct_all(
    params: &NetworkParams,
    coefs: &DMatrix<f64>,
    eval: &EvalMatrix,
) -> Result<DMatrix<f64>> {
    if coefs.ncols() != params.dims.basis {
        return Err(Error::shape(params.dims.basis, coefs.ncols()));
    }
    let m = eval.points();
    let mut out = DMatrix::zeros(coefs.nrows(), m);
    let mut trace = ForwardTrace::with_shape(params.dims, m);
    let mut x = vec![0.0; coefs.ncols()];
    for i in 0..coefs.nrows() {
        for (c, v) in x.iter_mut().enumerate() {
            *v = coefs[(i, c)];
        }
        forward_into(params, &x, eval, &mut trace)?;
        for (mm, &v) in trace.output.iter().enumerate() {
            out[(i, mm)] = v;
        }
    }
    Ok(out)
}

/// Bottleneck scores for every curve (`n x K`).
pub fn encode_all(params: &NetworkParams, coefs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = params.dims.components;
    let mut out = DMatrix::zeros(coefs.nrows(), k);
    for i in 0..coefs.nrows() {
        let x: Vec<f64> = coefs.row(i).iter().copied().collect();
        let s = network::encode(params, &x)?;
        for (c, v) in s.into_iter().enumerate() {
            out[(i, c)] = v;
        }
    }
    Ok(out)
}

/// Settings for [`fit_encoder_regression`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Fits the encoder half alone (one output score) to a scalar functional of
/// the curves by mean squared error. Returns the parameters and final loss.
///
/// Only `b`, `d` and `w` are trained; decoder fields stay at their
/// initial values and are irrelevant to the output.
pub fn fit_encoder_regression(
    coefs: &DMatrix<f64>,
    targets: &[f64],
    cfg: &RegressionConfig,
) -> Result<(NetworkParams, f64)> {
    let n = coefs.nrows();
    if targets.len() != n || n == 0 {
        return Err(Error::shape(n, targets.len()));
    }
    let dims = Dims::new(coefs.ncols(), cfg.hidden, 1, 1)?;
    let mut params = NetworkParams::init(dims, cfg.activation, cfg.seed)?;
    let mut state = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| coefs.row(i).iter().copied().collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xF00D));
    let mut idx: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.clamp(1, n);
    let mut last = f64::INFINITY;
    for _ in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in idx.chunks(batch) {
            grads.fill(0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let tr = encode_traced(&params, &rows[i])?;
                let e = tr.scores[0] - targets[i];
                total += e * e;
                encoder_backward(&params, &rows[i], &tr, &[2.0 * e], scale, &mut grads);
            }
            state.step(&mut params, &grads, &cfg.adam)?;
        }
        last = total / n as f64;
        if !last.is_finite() {
            return Err(Error::NonFinite("encoder regression loss".into()));
        }
    }
    Ok((params, last))
}
