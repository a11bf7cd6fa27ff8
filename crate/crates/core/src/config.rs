//! Run configuration shared by every subcommand.
//!
//! A flat TOML table. Keys missing from the file take their defaults; unknown
//! keys are rejected. Command-line `--set key=value` overrides are merged into
//! the table before it is deserialised, so they go through the same checks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bspline::{BSplineBasis, DEFAULT_DEGREE, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::methods::{FitSettings, MethodRegistry};
use crate::network::{Activation, AdamConfig, Dims};
use crate::simulation::{DEFAULT_EVAL_POINTS, DEFAULT_NOISE_SD, DEFAULT_OBS_POINTS};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // data
    pub case: u8,
    /// Training curves per replicate.
    pub n: usize,
    /// Test curves per replicate.
    pub n_test: usize,
    pub obs_points: usize,
    /// Grid for truth curves, reconstructions and the training loss. Defaults
    /// to 101 points for simulated data and to the file width for UCR data.
    pub eval_points: Option<usize>,
    pub noise_sd: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Import this UCR file instead of simulating; it is split into `n`
    /// training and `n_test` test rows per replicate.
    pub ucr_file: Option<PathBuf>,

    // basis
    pub basis_count: usize,
    pub degree: usize,
    pub ridge: f64,

    // model
    pub method: String,
    pub hidden: usize,
    pub components: usize,
    /// Decoder width `R`; defaults to `hidden`.
    pub decoder: Option<usize>,
    pub activation: Activation,

    // training
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    /// 0 disables early stopping.
    pub patience: usize,

    // sweep grid; an empty list means the single value above
    pub sweep_basis: Vec<usize>,
    pub sweep_hidden: Vec<usize>,
    pub sweep_components: Vec<usize>,

    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            case: 1,
            n: 1000,
            n_test: 1000,
            obs_points: DEFAULT_OBS_POINTS,
            eval_points: None,
            noise_sd: DEFAULT_NOISE_SD,
            replicates: 20,
            seed: 0,
            ucr_file: None,
            basis_count: 10,
            degree: DEFAULT_DEGREE,
            ridge: DEFAULT_RIDGE,
            method: "network".into(),
            hidden: 20,
            components: 2,
            decoder: None,
            activation: Activation::Tanh,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 64,
            max_epochs: 500,
            validation_fraction: 0.2,
            patience: 50,
            sweep_basis: Vec::new(),
            sweep_hidden: Vec::new(),
            sweep_components: Vec::new(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = parse_override(item)?;
            table.insert(key, value);
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn decoder_width(&self) -> usize {
        self.decoder.unwrap_or(self.hidden)
    }

    pub fn eval_points_or(&self, fallback: usize) -> usize {
        self.eval_points.unwrap_or(fallback)
    }

    pub fn sim_eval_points(&self) -> usize {
        self.eval_points_or(DEFAULT_EVAL_POINTS)
    }

    pub fn basis(&self) -> Result<BSplineBasis> {
        BSplineBasis::new(self.basis_count, self.degree)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// Settings for fitting with basis size `l`, widths `j` (encoder and
    /// decoder when the decoder is tied) and `k` components.
    pub fn fit_settings(&self, l: usize, j: usize, k: usize, seed: u64) -> Result<FitSettings> {
        let r = self.decoder.unwrap_or(j);
        let mut train = TrainConfig::new(Dims::new(l, j, k, r)?);
        train.activation = self.activation;
        train.adam = self.adam();
        train.batch_size = self.batch_size;
        train.max_epochs = self.max_epochs;
        train.validation_fraction = self.validation_fraction;
        train.patience = (self.patience > 0).then_some(self.patience);
        train.seed = seed;
        train.validate()?;
        Ok(FitSettings { train })
    }

    pub fn sweep_grid(&self) -> Vec<(usize, usize, usize)> {
        let pick = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
        let mut grid = Vec::new();
        for &l in &pick(&self.sweep_basis, self.basis_count) {
            for &j in &pick(&self.sweep_hidden, self.hidden) {
                for &k in &pick(&self.sweep_components, self.components) {
                    grid.push((l, j, k));
                }
            }
        }
        grid
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.ucr_file.is_none() && !(1..=5).contains(&self.case) {
            return fail(format!("case must be 1..=5, got {}", self.case));
        }
        if self.n < 2 || self.n_test < 1 {
            return fail(format!(
                "need n >= 2 and n_test >= 1, got {} and {}",
                self.n, self.n_test
            ));
        }
        if self.obs_points < 2 {
            return fail(format!("obs_points must be >= 2, got {}", self.obs_points));
        }
        if self.eval_points.is_some_and(|m| m < 2) {
            return fail("eval_points must be >= 2".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return fail(format!(
                "noise_sd must be finite and >= 0, got {}",
                self.noise_sd
            ));
        }
        if self.replicates == 0 {
            return fail("replicates must be >= 1".into());
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return fail(format!("ridge must be finite and >= 0, got {}", self.ridge));
        }
        if self.degree < 1 {
            return fail("degree must be >= 1".into());
        }
        MethodRegistry::with_builtins().get(&self.method)?;
        for (l, j, k) in self.sweep_grid() {
            if l < self.degree + 1 {
                return fail(format!(
                    "basis_count L={l} is below degree + 1 = {}",
                    self.degree + 1
                ));
            }
            if k > j {
                return fail(format!("components K={k} exceeds hidden J={j}"));
            }
            self.fit_settings(l, j, k, self.seed)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Splits `key=value`; the value is read as a TOML value, falling back to a
/// bare string (so `method=fpca` works without quotes).
fn parse_override(item: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim().to_string();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, overrides: &[&str]) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, text).unwrap();
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        RunConfig::load(Some(&p), &o)
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::load(None, &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn file_and_overrides() {
        let cfg = load(
            "case = 4\nhidden = 8\n",
            &["hidden=12", "method=fpca", "sweep_components=[2,3]"],
        )
        .unwrap();
        assert_eq!(cfg.case, 4);
        assert_eq!(cfg.hidden, 12);
        assert_eq!(cfg.method, "fpca");
        assert_eq!(cfg.sweep_grid(), vec![(10, 12, 2), (10, 12, 3)]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(load("hiden = 3\n", &[]), Err(Error::Config(_))));
        assert!(load("", &["nosuch=1"]).is_err());
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(load("basis_count = 3\ndegree = 3\n", &[]).is_err());
        assert!(load("components = 5\nhidden = 4\n", &[]).is_err());
        assert!(load("validation_fraction = 1.0\n", &[]).is_err());
        assert!(load("method = \"kpca\"\n", &[]).is_err());
        assert!(load("case = 6\n", &[]).is_err());
        assert!(load("", &["sweep_basis=[10,3]"]).is_err());
        assert!(load("", &["bad"]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            decoder: Some(7),
            learning_rate: 0.1 + 0.2,
            ..RunConfig::default()
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(load(&text, &[]).unwrap(), cfg);
    }
}
