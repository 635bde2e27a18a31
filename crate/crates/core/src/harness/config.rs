//! Flat `key = value` configuration. Blank lines and lines starting with
//! `#` are ignored; unknown keys are errors.

use std::fmt;
use std::str::FromStr;

use crate::encoders::EncoderConfig;
use crate::fusion::{FusionConfig, FusionMode};
use crate::preprocess::{OpcodeVocab, DEFAULT_STOPWORDS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Source,
    Opcode,
    Graph,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Source, Modality::Opcode, Modality::Graph];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Source => "source",
            Modality::Opcode => "opcode",
            Modality::Graph => "graph",
        }
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| format!("unknown modality `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model_dim: usize,
    pub heads: usize,
    pub src_layers: usize,
    pub op_blocks: usize,
    pub gnn_layers: usize,
    pub s_max: usize,
    pub hidden: usize,
    pub labels: usize,
    pub tau: f64,
    pub lr: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub window: usize,
    pub stride: usize,
    pub vocab: usize,
    /// Opcode sequences are truncated to this length; 0 keeps everything.
    pub max_opcodes: usize,
    /// Fraction of the training set held out for per-epoch scoring.
    pub holdout: f64,
    pub modalities: Vec<Modality>,
    pub fusion: FusionMode,
    pub stopwords: Vec<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model_dim: 32,
            heads: 4,
            src_layers: 2,
            op_blocks: 2,
            gnn_layers: 3,
            s_max: 16,
            hidden: 32,
            labels: 5,
            tau: 0.5,
            lr: 1e-3,
            clip: 5.0,
            batch: 8,
            epochs: 20,
            seed: 0,
            window: 64,
            stride: 32,
            vocab: 4096,
            max_opcodes: 512,
            holdout: 0.1,
            modalities: Modality::ALL.to_vec(),
            fusion: FusionMode::Full,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::new(key, format!("cannot parse `{value}`")))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "model_dim" => self.model_dim = parse(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "src_layers" => self.src_layers = parse(key, v)?,
            "op_blocks" => self.op_blocks = parse(key, v)?,
            "gnn_layers" => self.gnn_layers = parse(key, v)?,
            "s_max" => self.s_max = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "labels" => self.labels = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "clip" => self.clip = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "stride" => self.stride = parse(key, v)?,
            "vocab" => self.vocab = parse(key, v)?,
            "max_opcodes" => self.max_opcodes = parse(key, v)?,
            "holdout" => self.holdout = parse(key, v)?,
            "modalities" => {
                self.modalities = list(v)
                    .map(|m| m.parse().map_err(|e: String| ConfigError::new(key, e)))
                    .collect::<Result<_, _>>()?
            }
            "fusion" => {
                self.fusion = match v {
                    "full" => FusionMode::Full,
                    "no-cross" => FusionMode::NoCross,
                    _ => return Err(ConfigError::new(key, "expected `full` or `no-cross`")),
                }
            }
            "stopwords" => self.stopwords = list(v).map(str::to_string).collect(),
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "model_dim" => self.model_dim.to_string(),
            "heads" => self.heads.to_string(),
            "src_layers" => self.src_layers.to_string(),
            "op_blocks" => self.op_blocks.to_string(),
            "gnn_layers" => self.gnn_layers.to_string(),
            "s_max" => self.s_max.to_string(),
            "hidden" => self.hidden.to_string(),
            "labels" => self.labels.to_string(),
            "tau" => self.tau.to_string(),
            "lr" => self.lr.to_string(),
            "clip" => self.clip.to_string(),
            "batch" => self.batch.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "window" => self.window.to_string(),
            "stride" => self.stride.to_string(),
            "vocab" => self.vocab.to_string(),
            "max_opcodes" => self.max_opcodes.to_string(),
            "holdout" => self.holdout.to_string(),
            "modalities" => self
                .modalities
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(","),
            "fusion" => match self.fusion {
                FusionMode::Full => "full".into(),
                FusionMode::NoCross => "no-cross".into(),
            },
            "stopwords" => self.stopwords.join(","),
            _ => return None,
        })
    }

    pub const KEYS: [&'static str; 22] = [
        "model_dim",
        "heads",
        "src_layers",
        "op_blocks",
        "gnn_layers",
        "s_max",
        "hidden",
        "labels",
        "tau",
        "lr",
        "clip",
        "batch",
        "epochs",
        "seed",
        "window",
        "stride",
        "vocab",
        "max_opcodes",
        "holdout",
        "modalities",
        "fusion",
        "stopwords",
    ];

    pub fn pairs(&self) -> Vec<(String, String)> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    /// Starts from the defaults and applies `pairs` in order, then validates.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("model_dim", self.model_dim),
            ("heads", self.heads),
            ("s_max", self.s_max),
            ("hidden", self.hidden),
            ("labels", self.labels),
            ("batch", self.batch),
            ("window", self.window),
            ("stride", self.stride),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::new(k, "must be at least 1"));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(ConfigError::new("heads", "must divide model_dim"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(ConfigError::new("tau", "must lie in (0, 1)"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::new("lr", "must be positive"));
        }
        if !(self.clip >= 0.0 && self.clip.is_finite()) {
            return Err(ConfigError::new("clip", "must be non-negative"));
        }
        if self.stride > self.window {
            return Err(ConfigError::new("stride", "must not exceed window"));
        }
        if self.vocab < 16 {
            return Err(ConfigError::new("vocab", "must be at least 16"));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(ConfigError::new("holdout", "must lie in [0, 1)"));
        }
        if self.modalities.is_empty() {
            return Err(ConfigError::new(
                "modalities",
                "needs at least one modality",
            ));
        }
        let mut seen = self.modalities.clone();
        seen.sort_by_key(|m| m.name());
        seen.dedup();
        if seen.len() != self.modalities.len() {
            return Err(ConfigError::new("modalities", "duplicate modality"));
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            model_dim: self.model_dim,
            heads: self.heads,
            src_layers: self.src_layers,
            op_blocks: self.op_blocks,
            gnn_layers: self.gnn_layers,
            s_max: self.s_max,
            vocab: self.vocab,
            window: self.window,
            ff_dim: 2 * self.model_dim,
            op_vocab: OpcodeVocab::new().size(),
        }
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            model_dim: self.model_dim,
            heads: self.heads,
            n_modalities: self.modalities.len(),
            hidden: self.hidden,
            labels: self.labels,
            tau: self.tau,
        }
    }
}

impl FromStr for Config {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(&format!("<line {}>", n + 1), "expected key = value")
            })?;
            pairs.push((k.trim(), v.trim()));
        }
        Config::from_pairs(pairs)
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.pairs() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
