//! The subcommands as library functions.
//!
//! Data live in one directory per replicate, `out_dir/rep_000`, ... Each holds
//! `{train,test}_observations.csv` and, for simulated data,
//! `{train,test}_truth.csv` (evaluation grid) and `{train,test}_scores.csv`.
//! Replicate `r` derives its seeds from `derive_seed(seed, r)`: stream 0 for
//! the training sample, 1 for the test sample and 2 for model fitting.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bspline::{smooth_curves, uniform_grid, BSplineBasis, CurveSet};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{
    read_curves_csv, read_ucr, write_curves_csv, write_file, write_matrix_csv, ModelFile, UcrData,
};
use crate::methods::{FittedModel, MethodRegistry};
use crate::simulation::{self, derive_seed, Metrics, SimCase};

pub const SPLITS: [&str; 2] = ["train", "test"];

/// One sample of curves with everything needed to score a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub obs_grid: Vec<f64>,
    /// `n x T`.
    pub observations: DMatrix<f64>,
    pub eval_grid: Vec<f64>,
    /// True curves on `eval_grid`, when known.
    pub truth: Option<DMatrix<f64>>,
    pub scores: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub index: usize,
    pub train: Split,
    pub test: Split,
}

impl Replicate {
    pub fn split(&self, name: &str) -> &Split {
        if name == "train" {
            &self.train
        } else {
            &self.test
        }
    }
}

pub fn replicate_dir(cfg: &RunConfig, r: usize) -> PathBuf {
    cfg.out_dir.join(format!("rep_{r:03}"))
}

pub fn replicate_seed(cfg: &RunConfig, r: usize) -> u64 {
    derive_seed(cfg.seed, r as u64)
}

/// Seed handed to the fitting method of replicate `r`.
pub fn model_seed(cfg: &RunConfig, r: usize) -> u64 {
    derive_seed(replicate_seed(cfg, r), 2)
}

/// Builds replicate `r` in memory, simulating or splitting `ucr`.
pub fn build_replicate(cfg: &RunConfig, r: usize, ucr: Option<&UcrData>) -> Result<Replicate> {
    let seed = replicate_seed(cfg, r);
    let (train, test) = match ucr {
        None => (
            simulate_split(cfg, cfg.n, derive_seed(seed, 0))?,
            simulate_split(cfg, cfg.n_test, derive_seed(seed, 1))?,
        ),
        Some(data) => split_ucr(cfg, data, derive_seed(seed, 0))?,
    };
    Ok(Replicate {
        index: r,
        train,
        test,
    })
}

fn simulate_split(cfg: &RunConfig, n: usize, seed: u64) -> Result<Split> {
    let case = SimCase {
        case: cfg.case,
        n,
        obs_points: cfg.obs_points,
        noise_sd: cfg.noise_sd,
        seed,
    };
    let data = simulation::generate(&case)?;
    let eval_grid = uniform_grid(cfg.sim_eval_points());
    Ok(Split {
        truth: Some(data.truth(&eval_grid)?),
        scores: Some(data.scores),
        obs_grid: data.obs_grid,
        observations: data.observations,
        eval_grid,
    })
}

fn split_ucr(cfg: &RunConfig, data: &UcrData, seed: u64) -> Result<(Split, Split)> {
    let rows = data.values.nrows();
    if cfg.n + cfg.n_test > rows {
        return Err(Error::Config(format!(
            "n + n_test = {} exceeds the {rows} rows of the data file",
            cfg.n + cfg.n_test
        )));
    }
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let eval_grid = uniform_grid(cfg.eval_points_or(data.grid.len()));
    let take = |idx: &[usize]| Split {
        obs_grid: data.grid.clone(),
        observations: data.values.select_rows(idx),
        eval_grid: eval_grid.clone(),
        truth: None,
        scores: None,
    };
    Ok((
        take(&order[..cfg.n]),
        take(&order[cfg.n..cfg.n + cfg.n_test]),
    ))
}

fn load_ucr(cfg: &RunConfig) -> Result<Option<UcrData>> {
    cfg.ucr_file.as_deref().map(read_ucr).transpose()
}

/// Writes every replicate's data files and the resolved config. Returns the
/// files written.
pub fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ucr = load_ucr(cfg)?;
    let mut written = vec![write_config(cfg)?];
    for r in 0..cfg.replicates {
        let rep = build_replicate(cfg, r, ucr.as_ref())?;
        let dir = replicate_dir(cfg, r);
        for name in SPLITS {
            let s = rep.split(name);
            let p = dir.join(format!("{name}_observations.csv"));
            write_curves_csv(&p, &s.obs_grid, &s.observations)?;
            written.push(p);
            if let Some(truth) = &s.truth {
                let p = dir.join(format!("{name}_truth.csv"));
                write_curves_csv(&p, &s.eval_grid, truth)?;
                written.push(p);
            }
            if let Some(scores) = &s.scores {
                let p = dir.join(format!("{name}_scores.csv"));
                write_matrix_csv(&p, &["xi1".into(), "xi2".into()], scores)?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

fn write_config(cfg: &RunConfig) -> Result<PathBuf> {
    let p = cfg.out_dir.join("config.toml");
    write_file(&p, cfg.to_toml()?.as_bytes())?;
    Ok(p)
}

/// Reads replicate `r` back from disk.
pub fn read_replicate(cfg: &RunConfig, r: usize) -> Result<Replicate> {
    let dir = replicate_dir(cfg, r);
    let read = |name: &str| -> Result<Split> {
        let obs = read_curves_csv(&dir.join(format!("{name}_observations.csv")))?;
        let truth_path = dir.join(format!("{name}_truth.csv"));
        let (eval_grid, truth) = if truth_path.exists() {
            let t = read_curves_csv(&truth_path)?;
            if t.values.nrows() != obs.values.nrows() {
                return Err(Error::InvalidInput(format!(
                    "{} has {} rows but the observations have {}",
                    truth_path.display(),
                    t.values.nrows(),
                    obs.values.nrows()
                )));
            }
            (t.grid, Some(t.values))
        } else {
            (uniform_grid(cfg.eval_points_or(obs.grid.len())), None)
        };
        Ok(Split {
            obs_grid: obs.grid,
            observations: obs.values,
            eval_grid,
            truth,
            scores: None,
        })
    };
    Ok(Replicate {
        index: r,
        train: read("train")?,
        test: read("test")?,
    })
}

/// Smooths a split's observations onto `basis`, evaluated on its eval grid.
pub fn smooth_split(split: &Split, basis: &BSplineBasis, ridge: f64) -> Result<CurveSet> {
    smooth_curves(
        &split.observations,
        &split.obs_grid,
        basis,
        ridge,
        &split.eval_grid,
    )
}

/// Writes basis coefficients and smoothed curves for every replicate.
pub fn smooth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let basis = cfg.basis()?;
    let header: Vec<String> = (1..=basis.count()).map(|l| format!("c{l}")).collect();
    let mut written = Vec::new();
    for r in 0..cfg.replicates {
        let rep = read_replicate(cfg, r)?;
        let dir = replicate_dir(cfg, r);
        for name in SPLITS {
            let curves = smooth_split(rep.split(name), &basis, cfg.ridge)?;
            let p = dir.join(format!("{name}_coefficients.csv"));
            write_matrix_csv(&p, &header, curves.coefficients())?;
            written.push(p);
            let p = dir.join(format!("{name}_smoothed.csv"));
            write_curves_csv(&p, curves.grid(), curves.values())?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Fits `cfg.method` to the training split with basis size `l`, width `j`
/// and `k` components.
pub fn fit_replicate(
    cfg: &RunConfig,
    rep: &Replicate,
    l: usize,
    j: usize,
    k: usize,
) -> Result<Box<dyn FittedModel>> {
    let basis = BSplineBasis::new(l, cfg.degree)?;
    let curves = smooth_split(&rep.train, &basis, cfg.ridge)?;
    let settings = cfg.fit_settings(l, j, k, model_seed(cfg, rep.index))?;
    MethodRegistry::with_builtins()
        .get(&cfg.method)?
        .fit(&curves, &settings)
}

pub fn model_path(cfg: &RunConfig, r: usize, method: &str) -> PathBuf {
    replicate_dir(cfg, r).join(format!("model_{method}.bin"))
}

pub fn train_log_path(cfg: &RunConfig, r: usize, method: &str) -> PathBuf {
    replicate_dir(cfg, r).join(format!("train_log_{method}.csv"))
}

/// Trains one model per replicate; writes the model file and the training
/// log (`epoch,train_loss,val_loss`, one row per epoch run).
pub fn train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for r in 0..cfg.replicates {
        let rep = read_replicate(cfg, r)?;
        let model = fit_replicate(cfg, &rep, cfg.basis_count, cfg.hidden, cfg.components)?;
        let p = model_path(cfg, r, &cfg.method);
        model.to_model_file()?.save(&p)?;
        written.push(p);

        let mut log = String::from("epoch,train_loss,val_loss\n");
        if let Some(h) = model.history() {
            for e in 0..h.epochs() {
                let rec = h.record(e);
                write!(log, "{},{}", rec.epoch, rec.train_loss).expect("write to string");
                match rec.val_loss {
                    Some(v) => writeln!(log, ",{v}"),
                    None => writeln!(log, ","),
                }
                .expect("write to string");
            }
        }
        let p = train_log_path(cfg, r, &cfg.method);
        write_file(&p, log.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

/// Reconstruction errors of one split: against the truth (when known) and
/// against the observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMetrics {
    pub truth: Option<Metrics>,
    pub observed: Metrics,
}

pub fn evaluate_split(model: &dyn FittedModel, split: &Split, ridge: f64) -> Result<SplitMetrics> {
    let curves = smooth_split(split, model.basis(), ridge)?;
    let truth = match &split.truth {
        Some(t) => Some(simulation::rmse(
            &model.reconstruct(&curves, curves.eval_matrix())?,
            t,
        )?),
        None => None,
    };
    let obs_eval = model.basis().eval_matrix(&split.obs_grid)?;
    let observed =
        simulation::rmse_observed(&model.reconstruct(&curves, &obs_eval)?, &split.observations)?;
    Ok(SplitMetrics { truth, observed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub replicate: usize,
    pub split: &'static str,
    pub metrics: SplitMetrics,
}

pub const METRIC_NAMES: [&str; 4] = ["rmse", "rrmse", "rmse_obs", "rrmse_obs"];

impl MetricRow {
    pub fn values(&self) -> [Option<f64>; 4] {
        let t = self.metrics.truth;
        [
            t.map(|m| m.rmse),
            t.map(|m| m.rrmse),
            Some(self.metrics.observed.rmse),
            Some(self.metrics.observed.rrmse),
        ]
    }
}

/// Mean and sample standard deviation of one metric over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub split: &'static str,
    pub metric: &'static str,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub method: String,
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
}

impl Evaluation {
    pub fn summary_for(&self, split: &str, metric: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.split == split && s.metric == metric)
    }

    /// Aligned text table, `mean (sd)` per split and metric.
    pub fn render(&self) -> String {
        let mut out = format!("method: {}\n{:<6}", self.method, "split");
        for m in METRIC_NAMES {
            write!(out, "  {m:>26}").expect("write to string");
        }
        out.push('\n');
        for split in SPLITS {
            write!(out, "{split:<6}").expect("write to string");
            for m in METRIC_NAMES {
                let cell = self
                    .summary_for(split, m)
                    .map(|s| format!("{:.6} ({:.6})", s.mean, s.sd))
                    .unwrap_or_else(|| "-".into());
                write!(out, "  {cell:>26}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn summarise(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for split in SPLITS {
        for (i, metric) in METRIC_NAMES.iter().enumerate() {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.split == split)
                .filter_map(|r| r.values()[i])
                .collect();
            if vals.is_empty() {
                continue;
            }
            let (mean, sd) = mean_sd(&vals);
            out.push(SummaryRow {
                split,
                metric,
                mean,
                sd,
                count: vals.len(),
            });
        }
    }
    out
}

pub fn metrics_path(cfg: &RunConfig, method: &str) -> PathBuf {
    cfg.out_dir.join(format!("metrics_{method}.csv"))
}

pub fn summary_path(cfg: &RunConfig, method: &str) -> PathBuf {
    cfg.out_dir.join(format!("summary_{method}.csv"))
}

/// Loads each replicate's `cfg.method` model and scores both splits.
/// Writes `metrics_<method>.csv` (one row per replicate and split, empty
/// cells where there is no truth) and `summary_<method>.csv`.
pub fn evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    let registry = MethodRegistry::with_builtins();
    let mut rows = Vec::new();
    for r in 0..cfg.replicates {
        let rep = read_replicate(cfg, r)?;
        let model = registry.load(&ModelFile::load(&model_path(cfg, r, &cfg.method))?)?;
        for split in SPLITS {
            rows.push(MetricRow {
                replicate: r,
                split,
                metrics: evaluate_split(model.as_ref(), rep.split(split), cfg.ridge)?,
            });
        }
    }
    let eval = Evaluation {
        method: cfg.method.clone(),
        summary: summarise(&rows),
        rows,
    };
    write_evaluation(cfg, &eval)?;
    Ok(eval)
}

fn write_evaluation(cfg: &RunConfig, eval: &Evaluation) -> Result<()> {
    let mut text = format!("replicate,split,{}\n", METRIC_NAMES.join(","));
    for row in &eval.rows {
        write!(text, "{},{}", row.replicate, row.split).expect("write to string");
        for v in row.values() {
            match v {
                Some(v) => write!(text, ",{v}"),
                None => write!(text, ","),
            }
            .expect("write to string");
        }
        text.push('\n');
    }
    write_file(&metrics_path(cfg, &eval.method), text.as_bytes())?;

    let mut text = String::from("split,metric,mean,sd,replicates\n");
    for s in &eval.summary {
        writeln!(
            text,
            "{},{},{},{},{}",
            s.split, s.metric, s.mean, s.sd, s.count
        )
        .expect("write to string");
    }
    write_file(&summary_path(cfg, &eval.method), text.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub case: u8,
    pub basis_count: usize,
    pub hidden: usize,
    pub components: usize,
    pub replicate: usize,
    pub split: &'static str,
    pub metrics: Metrics,
}

pub fn sweep_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join(format!("sweep_{}.csv", cfg.method))
}

/// Fits `cfg.method` at every `(L, J, K)` of the sweep grid on every
/// replicate, generated in memory exactly as `simulate` would. Rows hold
/// errors against the truth, or against the observations for file data
/// (reported with case 0).
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let ucr = load_ucr(cfg)?;
    let case = if ucr.is_some() { 0 } else { cfg.case };
    let mut rows = Vec::new();
    for r in 0..cfg.replicates {
        let rep = build_replicate(cfg, r, ucr.as_ref())?;
        for (l, j, k) in cfg.sweep_grid() {
            let model = fit_replicate(cfg, &rep, l, j, k)?;
            for split in SPLITS {
                let m = evaluate_split(model.as_ref(), rep.split(split), cfg.ridge)?;
                rows.push(SweepRow {
                    case,
                    basis_count: l,
                    hidden: j,
                    components: k,
                    replicate: r,
                    split,
                    metrics: m.truth.unwrap_or(m.observed),
                });
            }
        }
    }
    let mut text = String::from("case,L,J,K,replicate,split,rmse,rrmse\n");
    for w in &rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            w.case,
            w.basis_count,
            w.hidden,
            w.components,
            w.replicate,
            w.split,
            w.metrics.rmse,
            w.metrics.rrmse
        )
        .expect("write to string");
    }
    write_file(&sweep_path(cfg), text.as_bytes())?;
    Ok(rows)
}

/// Human summary of sweep rows: mean (sd) per grid point and split.
pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut keys: Vec<(usize, usize, usize, &str)> = Vec::new();
    for r in rows {
        let key = (r.basis_count, r.hidden, r.components, r.split);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = format!(
        "{:>4} {:>4} {:>4} {:<6} {:>24} {:>24}\n",
        "L", "J", "K", "split", "rmse", "rrmse"
    );
    for (l, j, k, split) in keys {
        let sel: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| (r.basis_count, r.hidden, r.components, r.split) == (l, j, k, split))
            .collect();
        let (m1, s1) = mean_sd(&sel.iter().map(|r| r.metrics.rmse).collect::<Vec<_>>());
        let (m2, s2) = mean_sd(&sel.iter().map(|r| r.metrics.rrmse).collect::<Vec<_>>());
        writeln!(
            out,
            "{l:>4} {j:>4} {k:>4} {split:<6} {:>24} {:>24}",
            format!("{m1:.6} ({s1:.6})"),
            format!("{m2:.6} ({s2:.6})")
        )
        .expect("write to string");
    }
    out
}

/// One path per line.
pub fn manifest(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| format!("{}\n", p.display())).collect()
}
