//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected. [`ExperimentConfig::to_text`] writes every key with its
//! resolved value, so the output parses back into an identical config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{CorpusPlan, Domain};
use crate::error::{Error, Result};
use crate::features::FeatureSetId;
use crate::model::TransBiLstmConfig;
use crate::stats::DEFAULT_SUBJECT_CLUSTERS;
use crate::training::TrainConfig;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelScale {
    Toy,
    Full,
}

impl ModelScale {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelScale::Toy => "toy",
            ModelScale::Full => "full",
        }
    }
}

impl FromStr for ModelScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(ModelScale::Toy),
            "full" => Ok(ModelScale::Full),
            other => Err(Error::validation(format!("model must be 'toy' or 'full', got '{other}'"))),
        }
    }
}

/// Architecture fields that replace the chosen scale's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelOverrides {
    pub patch_len: Option<usize>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_head: Option<usize>,
    pub ffn_units: Option<usize>,
    pub n_encoder_layers: Option<usize>,
    pub n_bilstm_layers: Option<usize>,
    pub bilstm_out: Option<usize>,
    pub dropout_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub domain: Option<Domain>,
    pub feature_set: FeatureSetId,
    pub seed: u64,
    pub clusters: usize,
    pub clusters_file: Option<PathBuf>,
    pub model: ModelScale,
    pub overrides: ModelOverrides,
    pub window_len: usize,
    pub window_stride: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub n_folds: usize,
    pub standardize: bool,
    pub pseudo_weight: f64,
    pub corpus: CorpusPlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::desk(FeatureSetId::C, FeatureSetId::C.width(0));
        Self {
            data: None,
            out: None,
            domain: None,
            feature_set: FeatureSetId::C,
            seed: 0,
            clusters: DEFAULT_SUBJECT_CLUSTERS,
            clusters_file: None,
            model: ModelScale::Toy,
            overrides: ModelOverrides::default(),
            window_len: t.window_len,
            window_stride: t.window_stride,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_eps: t.adam_eps,
            n_folds: t.n_folds,
            standardize: t.standardize,
            pseudo_weight: t.pseudo_weight,
            corpus: CorpusPlan::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::validation(format!("config key '{key}': cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::validation(format!("config key '{key}': expected a boolean, got '{value}'"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("config line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key. Empty values clear optional keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        let o = &mut self.overrides;
        let c = &mut self.corpus;
        match key {
            "data" => self.data = opt_path(value),
            "out" => self.out = opt_path(value),
            "domain" => self.domain = if value.is_empty() { None } else { Some(parse(key, value)?) },
            "feature_set" => self.feature_set = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "clusters" => self.clusters = parse(key, value)?,
            "clusters_file" => self.clusters_file = opt_path(value),
            "model" => self.model = value.parse()?,
            "patch_len" => o.patch_len = Some(parse(key, value)?),
            "d_model" => o.d_model = Some(parse(key, value)?),
            "n_heads" => o.n_heads = Some(parse(key, value)?),
            "d_head" => o.d_head = Some(parse(key, value)?),
            "ffn_units" => o.ffn_units = Some(parse(key, value)?),
            "n_encoder_layers" => o.n_encoder_layers = Some(parse(key, value)?),
            "n_bilstm_layers" => o.n_bilstm_layers = Some(parse(key, value)?),
            "bilstm_out" => o.bilstm_out = Some(parse(key, value)?),
            "dropout_rate" => o.dropout_rate = Some(parse(key, value)?),
            "window_len" => self.window_len = parse(key, value)?,
            "window_stride" => self.window_stride = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "n_folds" => self.n_folds = parse(key, value)?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "pseudo_weight" => self.pseudo_weight = parse(key, value)?,
            "synth_subjects" => c.n_subjects = parse(key, value)?,
            "synth_defog" => c.n_defog = parse(key, value)?,
            "synth_tdcsfog" => c.n_tdcsfog = parse(key, value)?,
            "synth_notype" => c.n_notype = parse(key, value)?,
            "synth_test_defog" => c.n_test_defog = parse(key, value)?,
            "synth_test_tdcsfog" => c.n_test_tdcsfog = parse(key, value)?,
            "synth_defog_duration_s" => c.defog_duration_s = parse(key, value)?,
            "synth_tdcsfog_duration_s" => c.tdcsfog_duration_s = parse(key, value)?,
            "synth_episodes" => c.episodes_per_trial = parse(key, value)?,
            other => return Err(Error::validation(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Number of input columns of the configured feature set.
    pub fn input_dim(&self) -> usize {
        self.feature_set.width(self.clusters)
    }

    pub fn model_config(&self) -> TransBiLstmConfig {
        let d = self.input_dim();
        let base = match self.model {
            ModelScale::Toy => TransBiLstmConfig::toy(d),
            ModelScale::Full => TransBiLstmConfig::full(d),
        };
        let o = &self.overrides;
        TransBiLstmConfig {
            input_dim: d,
            patch_len: o.patch_len.unwrap_or(base.patch_len),
            d_model: o.d_model.unwrap_or(base.d_model),
            n_heads: o.n_heads.unwrap_or(base.n_heads),
            d_head: o.d_head.unwrap_or(base.d_head),
            ffn_units: o.ffn_units.unwrap_or(base.ffn_units),
            n_encoder_layers: o.n_encoder_layers.unwrap_or(base.n_encoder_layers),
            n_bilstm_layers: o.n_bilstm_layers.unwrap_or(base.n_bilstm_layers),
            bilstm_out: o.bilstm_out.unwrap_or(base.bilstm_out),
            dropout_rate: o.dropout_rate.unwrap_or(base.dropout_rate),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            window_len: self.window_len,
            window_stride: self.window_stride,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            seed: self.seed,
            n_folds: self.n_folds,
            feature_set: self.feature_set,
            standardize: self.standardize,
            pseudo_weight: self.pseudo_weight,
            model: self.model_config(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn corpus_plan(&self) -> CorpusPlan {
        CorpusPlan {
            seed: self.seed,
            ..self.corpus.clone()
        }
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let m = self.model_config();
        let c = &self.corpus;
        let pairs: Vec<(&str, String)> = vec![
            ("data", path(&self.data)),
            ("out", path(&self.out)),
            ("domain", self.domain.map(|d| d.to_string()).unwrap_or_default()),
            ("feature_set", self.feature_set.to_string()),
            ("seed", self.seed.to_string()),
            ("clusters", self.clusters.to_string()),
            ("clusters_file", path(&self.clusters_file)),
            ("model", self.model.as_str().to_string()),
            ("patch_len", m.patch_len.to_string()),
            ("d_model", m.d_model.to_string()),
            ("n_heads", m.n_heads.to_string()),
            ("d_head", m.d_head.to_string()),
            ("ffn_units", m.ffn_units.to_string()),
            ("n_encoder_layers", m.n_encoder_layers.to_string()),
            ("n_bilstm_layers", m.n_bilstm_layers.to_string()),
            ("bilstm_out", m.bilstm_out.to_string()),
            ("dropout_rate", m.dropout_rate.to_string()),
            ("window_len", self.window_len.to_string()),
            ("window_stride", self.window_stride.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("n_folds", self.n_folds.to_string()),
            ("standardize", self.standardize.to_string()),
            ("pseudo_weight", self.pseudo_weight.to_string()),
            ("synth_subjects", c.n_subjects.to_string()),
            ("synth_defog", c.n_defog.to_string()),
            ("synth_tdcsfog", c.n_tdcsfog.to_string()),
            ("synth_notype", c.n_notype.to_string()),
            ("synth_test_defog", c.n_test_defog.to_string()),
            ("synth_test_tdcsfog", c.n_test_tdcsfog.to_string()),
            ("synth_defog_duration_s", c.defog_duration_s.to_string()),
            ("synth_tdcsfog_duration_s", c.tdcsfog_duration_s.to_string()),
            ("synth_episodes", c.episodes_per_trial.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Writes [`RESOLVED_CONFIG_FILE`] into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
