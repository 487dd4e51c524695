//! Experiment configuration: one flat TOML file per experiment.
//!
//! ```toml
//! dataset = "synthetic"
//! classes = 3
//! hidden = [32, 16]
//! method = "tekfac"
//! eta = 0.001
//! damping_mode = "auto_trace"
//! epochs = 10
//! seed = 7
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tekfac::fim::EXACT_FIM_MAX_DIM;
use tekfac::optimizer::DampingKind;
use tekfac::{Activation, FisherFlavor, LrDecay, OptimizerConfig, OptimizerKind, Schedule};

use crate::dataset::SyntheticSpec;
use crate::error::{HarnessError, Result};

/// Serde adapter for types that round-trip through `Display` / `FromStr`.
mod text {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(
        value: &T,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, T, D>(d: D) -> std::result::Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Required when `dataset = "csv"`. Relative paths resolve against the config file.
    pub csv_path: Option<PathBuf>,
    pub classes: usize,
    pub features: usize,
    pub samples: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub noise: f64,
    pub clusters_per_class: usize,
    /// Ratio between the largest and smallest feature scale.
    pub feature_scale_spread: f64,
    pub test_fraction: f64,

    pub hidden: Vec<usize>,
    #[serde(with = "text")]
    pub activation: Activation,

    #[serde(with = "text")]
    pub method: OptimizerKind,
    pub eta: f64,
    pub lambda: f64,
    pub vartheta: f64,
    #[serde(with = "text")]
    pub damping_mode: DampingKind,
    pub beta1: f64,
    pub beta2: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: Option<usize>,
    #[serde(with = "text")]
    pub fisher: FisherFlavor,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,

    pub t_fim: usize,
    pub t_eig: usize,
    pub t_re: usize,

    pub epochs: usize,
    pub batch_size: usize,
    /// Stops training after this many optimizer steps, mid-epoch if needed.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub output: PathBuf,
    /// `false` writes 0 to every `wall_ms` field so metrics files are reproducible byte for byte.
    pub wall_clock: bool,

    /// Layer widths of the random networks used by `diagnose`.
    pub diag_widths: Vec<usize>,
    pub diag_batch: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let schedule = Schedule::default();
        Self {
            dataset: DatasetSource::Synthetic,
            csv_path: None,
            classes: 3,
            features: 20,
            samples: 600,
            separation: 3.0,
            noise: 1.0,
            clusters_per_class: 1,
            feature_scale_spread: 1.0,
            test_fraction: 0.2,
            hidden: vec![32, 16],
            activation: Activation::Tanh,
            method: OptimizerKind::Natural(tekfac::Method::Tekfac),
            eta: opt.eta,
            lambda: opt.lambda,
            vartheta: opt.vartheta,
            damping_mode: opt.damping_mode,
            beta1: opt.beta1,
            beta2: opt.beta2,
            momentum: opt.momentum,
            lr_decay_factor: opt.lr_decay.factor,
            lr_decay_every: opt.lr_decay.every_n_epochs,
            fisher: opt.fisher_flavor,
            adam_beta1: opt.adam_beta1,
            adam_beta2: opt.adam_beta2,
            adam_eps: opt.adam_eps,
            t_fim: schedule.t_fim,
            t_eig: schedule.t_eig,
            t_re: schedule.t_re,
            epochs: 10,
            batch_size: 64,
            max_steps: None,
            seed: 0,
            output: PathBuf::from("runs/default"),
            wall_clock: true,
            diag_widths: vec![8, 6, 4],
            diag_batch: 64,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads and parses a config file. A relative `csv_path` is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if let (Some(csv), Some(dir)) = (&config.csv_path, path.parent()) {
            if csv.is_relative() {
                config.csv_path = Some(dir.join(csv));
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            eta: self.eta,
            lambda: self.lambda,
            vartheta: self.vartheta,
            damping_mode: self.damping_mode,
            beta1: self.beta1,
            beta2: self.beta2,
            momentum: self.momentum,
            lr_decay: LrDecay {
                factor: self.lr_decay_factor,
                every_n_epochs: self.lr_decay_every,
            },
            fisher_flavor: self.fisher,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            t_fim: self.t_fim,
            t_eig: self.t_eig,
            t_re: self.t_re,
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.classes,
            features: self.features,
            samples: self.samples,
            separation: self.separation,
            noise: self.noise,
            clusters_per_class: self.clusters_per_class,
            scale_spread: self.feature_scale_spread,
            test_fraction: self.test_fraction,
        }
    }

    /// Full layer widths for a dataset with the given shape.
    pub fn widths(&self, features: usize, classes: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(features);
        w.extend_from_slice(&self.hidden);
        w.push(classes);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.optimizer_config().validate()?;
        self.schedule().validate()?;
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!(
                "test_fraction must lie in [0, 1), got {}",
                self.test_fraction
            ));
        }
        match self.dataset {
            DatasetSource::Synthetic => self.synthetic_spec().validate()?,
            DatasetSource::Csv if self.csv_path.is_none() => {
                return bad("dataset = \"csv\" needs csv_path".into());
            }
            DatasetSource::Csv => {}
        }
        if self.diag_widths.len() < 2 || self.diag_widths.contains(&0) {
            return bad("diag_widths needs at least two positive widths".into());
        }
        for pair in self.diag_widths.windows(2) {
            let dim = (pair[0] + 1) * pair[1];
            if dim > EXACT_FIM_MAX_DIM {
                return bad(format!(
                    "diag_widths layer {}->{} has a {dim}-dimensional block, above the exact-FIM limit {EXACT_FIM_MAX_DIM}",
                    pair[0], pair[1]
                ));
            }
        }
        if self.diag_batch == 0 {
            return bad("diag_batch must be >= 1".into());
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<OptimizerKind>,
    pub eta: Option<f64>,
    pub vartheta: Option<f64>,
    pub damping_mode: Option<DampingKind>,
    pub fisher: Option<FisherFlavor>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.method {
            config.method = v;
        }
        if let Some(v) = self.eta {
            config.eta = v;
        }
        if let Some(v) = self.vartheta {
            config.vartheta = v;
        }
        if let Some(v) = self.damping_mode {
            config.damping_mode = v;
        }
        if let Some(v) = self.fisher {
            config.fisher = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::from_toml_str("etta = 0.1").unwrap_err();
        assert!(err.to_string().contains("etta"), "{err}");
    }

    #[test]
    fn typed_keys_parse() {
        let c = ExperimentConfig::from_toml_str(
            "method = \"kfac\"\nactivation = \"relu\"\nfisher = \"empirical\"\ndamping_mode = \"fixed\"\nhidden = [5]\nlr_decay_every = 20\n",
        )
        .unwrap();
        assert_eq!(c.method, OptimizerKind::Natural(tekfac::Method::Kfac));
        assert_eq!(c.activation, Activation::Relu);
        assert_eq!(c.fisher, FisherFlavor::Empirical);
        assert_eq!(c.damping_mode, DampingKind::Fixed);
        assert_eq!(c.widths(4, 2), vec![4, 5, 2]);
        assert_eq!(c.optimizer_config().lr_decay.every_n_epochs, Some(20));
    }

    #[test]
    fn bad_enum_value_rejected() {
        assert!(ExperimentConfig::from_toml_str("method = \"lbfgs\"").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let cases = [
            "eta = 0.0",
            "momentum = 1.0",
            "t_fim = 0",
            "batch_size = 0",
            "classes = 1",
            "test_fraction = 1.0",
            "dataset = \"csv\"",
            "diag_widths = [20, 32]",
        ];
        for case in cases {
            let c = ExperimentConfig::from_toml_str(case).unwrap();
            assert!(c.validate().is_err(), "{case}");
        }
    }

    #[test]
    fn overrides_replace_keys() {
        let mut c = ExperimentConfig::default();
        Overrides {
            seed: Some(9),
            eta: Some(0.5),
            method: Some(OptimizerKind::Adam),
            ..Default::default()
        }
        .apply(&mut c);
        assert_eq!((c.seed, c.eta, c.method), (9, 0.5, OptimizerKind::Adam));
    }
}
