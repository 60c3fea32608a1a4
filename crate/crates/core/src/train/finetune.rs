use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::NerModel;
use super::optim::{adamw_step, AdamWConfig, OptimizerState};
use super::schedule::LinearSchedule;
use crate::checkpoint::SeedRecord;
use crate::crf::{crf_nll, CrfParams, DecodeMode};
use crate::data::{spans_to_bio, Dataset, TagSequence, TokenizationMode, Vocab};
use crate::encoder::{backward, emissions, encode, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::MatchMode;
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Linear,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub encoder_lr: f64,
    pub crf_lr: f64,
    pub weight_decay: f64,
    pub schedule: ScheduleKind,
    pub warmup_steps: usize,
    /// Learning rate of the emission head; `None` trains it at `crf_lr`.
    pub head_lr: Option<f64>,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Return the best-validation checkpoint rather than the last one.
    pub keep_best: bool,
    pub decode_mode: DecodeMode,
    pub crf_boundary: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 10,
            batch_size: 16,
            encoder_lr: 5e-5,
            crf_lr: 5e-1,
            weight_decay: 0.01,
            schedule: ScheduleKind::Linear,
            warmup_steps: 0,
            head_lr: None,
            seed: 0,
            patience: 10,
            keep_best: true,
            decode_mode: DecodeMode::Viterbi,
            crf_boundary: false,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        for (name, lr) in [
            ("encoder_lr", self.encoder_lr),
            ("crf_lr", self.crf_lr),
            ("head_lr", self.head_lr()),
        ] {
            if !lr.is_finite() || lr < 0.0 {
                return Err(Error::invalid(format!(
                    "{name} must be a finite non-negative number, got {lr}"
                )));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        Ok(())
    }

    pub fn head_lr(&self) -> f64 {
        self.head_lr.unwrap_or(self.crf_lr)
    }
}

/// One line of the fine-tuning run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_macro_f1: f64,
    pub lr_encoder: f64,
    pub lr_crf: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: NerModel,
    pub epochs: Vec<FinetuneEpoch>,
    pub best_epoch: usize,
}

const HEAD: [&str; 2] = ["emit_w", "emit_b"];

type Group<'a> = Vec<(&'static str, &'a mut Matrix)>;
type GradGroup<'a> = Vec<(&'static str, &'a Matrix)>;

/// Encoder body, emission head and CRF tensors, each trained at its own rate.
fn split_mut<'a>(enc: &'a mut EncoderParams, crf: &'a mut CrfParams) -> [Group<'a>; 3] {
    let (mut body, mut head) = (Vec::new(), Vec::new());
    for (name, t) in enc.tensors_mut() {
        if HEAD.contains(&name) {
            head.push((name, t));
        } else {
            body.push((name, t));
        }
    }
    [body, head, crf.tensors_mut()]
}

fn split<'a>(enc: &'a EncoderParams, crf: &'a CrfParams) -> [GradGroup<'a>; 3] {
    let (mut body, mut head) = (Vec::new(), Vec::new());
    for (name, t) in enc.tensors() {
        if HEAD.contains(&name) {
            head.push((name, t));
        } else {
            body.push((name, t));
        }
    }
    [body, head, crf.tensors()]
}

struct Example {
    ids: Vec<u32>,
    tags: TagSequence,
}

fn examples(d: &Dataset, vocab: &Vocab, max_len: usize) -> Result<Vec<Example>> {
    d.sentences()
        .iter()
        .map(|a| {
            if a.sentence.len() > max_len {
                return Err(Error::TooLong {
                    len: a.sentence.len(),
                    max_len,
                });
            }
            Ok(Example {
                ids: vocab.encode(a.sentence.texts()),
                tags: spans_to_bio(&a.sentence, &a.spans, d.scheme())?,
            })
        })
        .collect()
}

enum Lr {
    Linear(LinearSchedule),
    Constant(f64),
}

impl Lr {
    fn new(kind: ScheduleKind, base: f64, total: usize, warmup: usize) -> Result<Self> {
        Ok(match kind {
            ScheduleKind::Linear => Lr::Linear(LinearSchedule::new(base, total, warmup)?),
            ScheduleKind::Constant => Lr::Constant(base),
        })
    }

    fn at(&self, step: usize) -> Result<f64> {
        match self {
            Lr::Linear(s) => s.lr_at(step),
            Lr::Constant(v) => Ok(*v),
        }
    }
}

/// Trains the encoder plus a fresh CRF layer on `train`, selecting on strict
/// macro-F1 over `val`.
#[allow(clippy::too_many_arguments)]
pub fn finetune(
    pretrained: &EncoderParams,
    vocab: &Vocab,
    tokenization: TokenizationMode,
    train: &Dataset,
    val: &Dataset,
    cfg: &FinetuneConfig,
    seed_lineage: Vec<SeedRecord>,
    mut on_epoch: impl FnMut(&FinetuneEpoch),
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if train.scheme() != val.scheme() {
        return Err(Error::SchemeMismatch(format!(
            "training types {:?}, validation types {:?}",
            train.scheme().types(),
            val.scheme().types()
        )));
    }
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if pretrained.config.vocab_size != vocab.len() {
        return Err(Error::Shape(format!(
            "encoder expects {} vocabulary entries, vocabulary has {}",
            pretrained.config.vocab_size,
            vocab.len()
        )));
    }
    let scheme = train.scheme().clone();
    let num_tags = scheme.num_tags();
    let mut enc = pretrained.clone();
    if enc.config.num_tags != num_tags {
        enc.reset_emission_head(num_tags, rng::derive_seed(cfg.seed, &[20]));
    }
    let mut crf = CrfParams::new(num_tags, cfg.crf_boundary);
    let data = examples(train, vocab, enc.config.max_len)?;

    let adam = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut states =
        split(&enc, &crf).map(|g| OptimizerState::for_tensors(adam, g.iter().map(|(_, t)| *t)));
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * batches_per_epoch;
    let lr_enc = Lr::new(cfg.schedule, cfg.encoder_lr, total, cfg.warmup_steps)?;
    let lr_head = Lr::new(cfg.schedule, cfg.head_lr(), total, cfg.warmup_steps)?;
    let lr_crf = Lr::new(cfg.schedule, cfg.crf_lr, total, cfg.warmup_steps)?;

    let mut lineage = seed_lineage;
    lineage.push(SeedRecord {
        stage: "finetune".into(),
        seed: cfg.seed,
    });
    let snapshot = |enc: &EncoderParams, crf: &CrfParams| NerModel {
        encoder: enc.clone(),
        crf: crf.clone(),
        scheme: scheme.clone(),
        vocab: vocab.clone(),
        tokenization,
        decode_mode: cfg.decode_mode,
        seed_lineage: lineage.clone(),
    };

    let mut g_enc = enc.zeros_like();
    let mut g_crf = crf.zeros_like();
    let mut step = 0usize;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, NerModel)> = None;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::rng_at(cfg.seed, &[21, epoch as u64]));
        let mut nll_sum = 0.0;

        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            g_enc.scale(0.0);
            g_crf.scale(0.0);
            let mut batch_nll = 0.0;
            for (j, &i) in chunk.iter().enumerate() {
                let ex = &data[i];
                let dropout_seed =
                    rng::derive_seed(cfg.seed, &[22, epoch as u64, b as u64, j as u64]);
                let fwd = encode(&enc, &ex.ids, true, dropout_seed)?;
                let em = emissions(&enc, &fwd.hidden)?;
                let loss = crf_nll(&em, &crf, &ex.tags)?;
                backward(&enc, &fwd, None, Some(&loss.d_emissions), &mut g_enc)?;
                g_crf.add_assign(&loss.d_params)?;
                batch_nll += loss.nll;
            }
            if !batch_nll.is_finite() {
                return Err(Error::NonFinite(format!(
                    "CRF loss at epoch {} batch {b} (encoder norm {:.4e})",
                    epoch + 1,
                    enc.norm()
                )));
            }
            let k = 1.0 / chunk.len() as f64;
            g_enc.scale(k);
            g_crf.scale(k);
            let lrs = [lr_enc.at(step)?, lr_head.at(step)?, lr_crf.at(step)?];
            let grads = split(&g_enc, &g_crf);
            let groups = split_mut(&mut enc, &mut crf);
            for (((mut p, g), st), lr) in groups.into_iter().zip(&grads).zip(&mut states).zip(lrs) {
                adamw_step(&mut p, g, st, lr)?;
            }
            step += 1;
            nll_sum += batch_nll;
        }

        let current = snapshot(&enc, &crf);
        let val_f1 = if val.is_empty() {
            0.0
        } else {
            current.evaluate(val, MatchMode::Strict)?.macro_f1
        };
        let line = FinetuneEpoch {
            epoch: epoch + 1,
            train_nll: nll_sum / data.len() as f64,
            val_macro_f1: val_f1,
            lr_encoder: lr_enc.at(step)?,
            lr_crf: lr_crf.at(step)?,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        log::info!(
            "finetune epoch {} train_nll {:.6} val_macro_f1 {:.4}",
            line.epoch,
            line.train_nll,
            val_f1
        );
        on_epoch(&line);
        log.push(line);

        let improved = best.as_ref().is_none_or(|(f, _, _)| val_f1 > *f);
        if improved {
            best = Some((val_f1, epoch + 1, current));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, e, m)) if cfg.keep_best => (m, e),
        _ => (snapshot(&enc, &crf), log.len()),
    };
    Ok(FinetuneOutcome {
        model,
        epochs: log,
        best_epoch,
    })
}
