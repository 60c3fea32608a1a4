//! Run configuration: one TOML file plus command-line overrides.
//!
//! Precedence is flag, then file, then built-in default. Relative paths are
//! resolved against the working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use arce::cote::{ChatEndpointConfig, StrategyKind};
use arce::data::TokenizationMode;
use arce::encoder::EncoderConfig;
use arce::eval::MatchMode;
use arce::mlm::PretrainConfig;
use arce::train::FinetuneConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Encoder dimensions; vocabulary size and tag count come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub window_radius: usize,
    pub dropout: f64,
    pub max_len: usize,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let c = EncoderConfig::new(1, 1);
        EncoderSettings {
            embed_dim: c.embed_dim,
            hidden_dim: c.hidden_dim,
            window_radius: c.window_radius,
            dropout: c.dropout,
            max_len: c.max_len,
        }
    }
}

impl EncoderSettings {
    pub fn config(&self, vocab_size: usize, num_tags: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            window_radius: self.window_radius,
            hidden_dim: self.hidden_dim,
            num_tags,
            dropout: self.dropout,
            max_len: self.max_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: PathBuf,
    /// Elucidation corpus; defaults to `<out_dir>/corpus-<strategy>.jsonl`.
    pub corpus: Option<PathBuf>,
    /// Encoder checkpoint to fine-tune or to resume pre-training from;
    /// defaults to `<out_dir>/encoder.ckpt` for fine-tuning.
    pub checkpoint: Option<PathBuf>,
    /// Fine-tuned model; defaults to `<out_dir>/model.ckpt`.
    pub model: Option<PathBuf>,
    pub tokenization: TokenizationMode,
    pub split: [f64; 3],
    pub corpus_fraction: f64,
    pub strategy: StrategyKind,
    /// Use the built-in deterministic endpoint instead of HTTP.
    pub mock: bool,
    pub match_modes: Vec<MatchMode>,
    /// Corpus per prompt strategy for `ablate`; missing entries default to
    /// `<out_dir>/corpus-<strategy>.jsonl`.
    pub ablation: BTreeMap<StrategyKind, PathBuf>,
    /// Corpus fractions for `scale`.
    pub fractions: Vec<f64>,
    pub encoder: EncoderSettings,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub endpoint: ChatEndpointConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            dataset: PathBuf::from("data/toy.conll"),
            corpus: None,
            checkpoint: None,
            model: None,
            tokenization: TokenizationMode::Latin,
            split: [0.8, 0.1, 0.1],
            corpus_fraction: 1.0,
            strategy: StrategyKind::Explain,
            mock: false,
            match_modes: vec![MatchMode::Strict, MatchMode::Partial],
            ablation: BTreeMap::new(),
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            encoder: EncoderSettings::default(),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            endpoint: ChatEndpointConfig::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the file or default.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub mock: bool,
    pub dataset: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub corpus_fraction: Option<f64>,
    pub strategy: Option<StrategyKind>,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CliError::MissingInput {
                what: "config",
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// File (if any) with the overrides applied, validated.
    pub fn resolve(file: Option<&Path>, ov: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(ov);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        if let Some(d) = &ov.out_dir {
            self.out_dir = d.clone();
        }
        self.mock |= ov.mock;
        if let Some(d) = &ov.dataset {
            self.dataset = d.clone();
        }
        if ov.corpus.is_some() {
            self.corpus = ov.corpus.clone();
        }
        if ov.checkpoint.is_some() {
            self.checkpoint = ov.checkpoint.clone();
        }
        if ov.model.is_some() {
            self.model = ov.model.clone();
        }
        if let Some(f) = ov.corpus_fraction {
            self.corpus_fraction = f;
        }
        if let Some(s) = ov.strategy {
            self.strategy = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.endpoint.validate()?;
        self.encoder
            .config(arce::data::vocab::NUM_RESERVED as usize + 1, 3)
            .validate()?;
        if !(self.corpus_fraction > 0.0 && self.corpus_fraction <= 1.0) {
            return Err(CliError::Invalid(format!(
                "corpus_fraction must be in (0, 1], got {}",
                self.corpus_fraction
            )));
        }
        if self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(CliError::Invalid(format!(
                "fractions must lie in (0, 1], got {:?}",
                self.fractions
            )));
        }
        if self.match_modes.is_empty() {
            return Err(CliError::Invalid("match_modes is empty".into()));
        }
        Ok(())
    }

    /// Stage configurations carrying the global seed.
    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            seed: self.seed,
            ..self.pretrain.clone()
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            seed: self.seed,
            ..self.finetune.clone()
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.corpus
            .clone()
            .unwrap_or_else(|| self.default_corpus_path(self.strategy))
    }

    pub fn default_corpus_path(&self, strategy: StrategyKind) -> PathBuf {
        self.out_dir.join(format!("corpus-{strategy}.jsonl"))
    }

    pub fn encoder_path(&self) -> PathBuf {
        self.out_dir.join("encoder.ckpt")
    }

    pub fn model_path(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }
}
