//! Masked-token corruption, the masked-LM loss and the pre-training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cote::CoteCorpus;
use crate::data::vocab::{EOS, MASK, NUM_RESERVED};
use crate::data::{TokenizationMode, Vocab};
use crate::encoder::{backward_hidden, encode, EncoderParams};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;
use crate::train::{adamw_step, AdamWConfig, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Probability that an eligible position becomes a target.
    pub mask_ratio: f64,
    /// Shares of targets replaced by `[MASK]`, by a random token, or kept.
    pub mask_split: [f64; 3],
    /// Length of the sequences that consecutive records are packed into,
    /// separated by `[EOS]`; 0 keeps one record per sequence.
    pub pack_len: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 5,
            batch_size: 16,
            lr: 5e-5,
            weight_decay: 0.01,
            mask_ratio: 0.15,
            mask_split: [0.8, 0.1, 0.1],
            pack_len: 0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || self.weight_decay < 0.0 {
            return Err(Error::invalid(
                "learning rate and weight decay must be non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(Error::invalid(format!(
                "mask_ratio must be in [0, 1], got {}",
                self.mask_ratio
            )));
        }
        let sum: f64 = self.mask_split.iter().sum();
        if self.mask_split.iter().any(|x| !(0.0..=1.0).contains(x)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mask_split must be three shares summing to 1, got {:?}",
                self.mask_split
            )));
        }
        Ok(())
    }
}

/// A corrupted sequence with the positions to predict and their original ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub corrupted: Vec<u32>,
    /// Ascending target positions.
    pub targets: Vec<usize>,
    /// Original id at each target position.
    pub originals: Vec<u32>,
}

impl MaskedBatch {
    pub fn len(&self) -> usize {
        self.corrupted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corrupted.is_empty()
    }
}

/// How a selected position was corrupted; exposed for statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replacement {
    Mask,
    Random,
    Keep,
}

/// Selects targets among non-reserved positions and corrupts them. Returns
/// the replacement kind chosen for each target alongside the batch.
pub fn mask_tokens_detailed(
    ids: &[u32],
    cfg: &PretrainConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<(MaskedBatch, Vec<Replacement>)> {
    if ids.is_empty() {
        return Err(Error::invalid("cannot mask an empty sequence"));
    }
    let eligible: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] >= NUM_RESERVED).collect();
    if eligible.is_empty() {
        return Err(Error::invalid(
            "every position holds a reserved token; nothing to mask",
        ));
    }
    if vocab_size <= NUM_RESERVED as usize {
        return Err(Error::invalid("vocabulary has no ordinary tokens"));
    }
    let mut r = rng::rng(seed);
    let mut targets: Vec<usize> = eligible
        .iter()
        .copied()
        .filter(|_| r.random::<f64>() < cfg.mask_ratio)
        .collect();
    if targets.is_empty() {
        targets.push(eligible[r.random_range(0..eligible.len())]);
    }
    let mut corrupted = ids.to_vec();
    let mut kinds = Vec::with_capacity(targets.len());
    let [p_mask, p_random, _] = cfg.mask_split;
    for &i in &targets {
        let u: f64 = r.random();
        let kind = if u < p_mask {
            corrupted[i] = MASK;
            Replacement::Mask
        } else if u < p_mask + p_random {
            corrupted[i] = r.random_range(NUM_RESERVED..vocab_size as u32);
            Replacement::Random
        } else {
            Replacement::Keep
        };
        kinds.push(kind);
    }
    let originals = targets.iter().map(|&i| ids[i]).collect();
    Ok((
        MaskedBatch {
            corrupted,
            targets,
            originals,
        },
        kinds,
    ))
}

pub fn mask_tokens(
    ids: &[u32],
    cfg: &PretrainConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<MaskedBatch> {
    mask_tokens_detailed(ids, cfg, vocab_size, seed).map(|(b, _)| b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmLoss {
    /// Negative log-likelihood summed over targets.
    pub sum: f64,
    pub targets: usize,
    /// Gradient of `sum` with respect to the logits; zero off-target rows.
    pub d_logits: Matrix,
}

impl MlmLoss {
    pub fn mean(&self) -> f64 {
        self.sum / self.targets as f64
    }
}

fn log_softmax_nll(row: &[f64], target: usize, grad: &mut [f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
    let lz = m + z.ln();
    for (g, &x) in grad.iter_mut().zip(row) {
        *g = (x - lz).exp();
    }
    grad[target] -= 1.0;
    lz - row[target]
}

pub fn mlm_loss(logits: &Matrix, batch: &MaskedBatch) -> Result<MlmLoss> {
    if logits.rows() != batch.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} positions",
            logits.rows(),
            batch.len()
        )));
    }
    if batch.targets.is_empty() {
        return Err(Error::invalid("masked batch has no targets"));
    }
    let mut d_logits = Matrix::zeros(logits.rows(), logits.cols());
    let mut sum = 0.0;
    for (&i, &orig) in batch.targets.iter().zip(&batch.originals) {
        if i >= logits.rows() || orig as usize >= logits.cols() {
            return Err(Error::Shape(format!(
                "target {i} (id {orig}) outside {:?} logits",
                logits.shape()
            )));
        }
        sum += log_softmax_nll(logits.row(i), orig as usize, d_logits.row_mut(i));
    }
    if !sum.is_finite() {
        return Err(Error::NonFinite("masked-LM loss".into()));
    }
    Ok(MlmLoss {
        sum,
        targets: batch.targets.len(),
        d_logits,
    })
}

/// Forward, loss and backward for one masked sequence, projecting only the
/// target rows through the output head. Returns the summed loss.
fn masked_step(
    p: &EncoderParams,
    batch: &MaskedBatch,
    dropout_seed: u64,
    grads: &mut EncoderParams,
) -> Result<f64> {
    let fwd = encode(p, &batch.corrupted, true, dropout_seed)?;
    let h = p.config.hidden_dim;
    let k = batch.targets.len();
    let mut hk = Matrix::zeros(k, h);
    for (r, &i) in batch.targets.iter().enumerate() {
        hk.row_mut(r).copy_from_slice(fwd.hidden.row(i));
    }
    let logits = hk.matmul_bias(&p.mlm_w, Some(&p.mlm_b))?;
    let compact = MaskedBatch {
        corrupted: vec![0; k],
        targets: (0..k).collect(),
        originals: batch.originals.clone(),
    };
    let loss = mlm_loss(&logits, &compact)?;
    hk.add_transpose_matmul(&loss.d_logits, &mut grads.mlm_w)?;
    loss.d_logits.add_column_sums(&mut grads.mlm_b)?;
    let dk = loss.d_logits.matmul_transpose(&p.mlm_w)?;
    let mut d_hidden = Matrix::zeros(batch.len(), h);
    for (r, &i) in batch.targets.iter().enumerate() {
        d_hidden.row_mut(i).copy_from_slice(dk.row(r));
    }
    backward_hidden(p, &fwd, d_hidden, grads)?;
    Ok(loss.sum)
}

/// One line of the pre-training run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub examples_seen: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: EncoderParams,
    pub epochs: Vec<PretrainEpoch>,
    /// Chunks dropped because they held no maskable token.
    pub skipped_chunks: usize,
}

/// Token ids of every elucidation, split into chunks of at most `max_len`.
pub fn corpus_sequences(
    corpus: &CoteCorpus,
    vocab: &Vocab,
    mode: TokenizationMode,
    max_len: usize,
    pack_len: usize,
) -> Vec<Vec<u32>> {
    let max_len = max_len.max(1);
    let encoded = corpus.records.iter().map(|rec| {
        let toks = mode.tokenize(&rec.text);
        vocab.encode(toks.iter().map(String::as_str))
    });
    if pack_len == 0 {
        return encoded
            .flat_map(|ids| ids.chunks(max_len).map(<[u32]>::to_vec).collect::<Vec<_>>())
            .collect();
    }
    let mut stream = Vec::new();
    for ids in encoded {
        if !stream.is_empty() {
            stream.push(EOS);
        }
        stream.extend(ids);
    }
    stream
        .chunks(pack_len.min(max_len))
        .map(<[u32]>::to_vec)
        .collect()
}

/// Continues masked-LM training of `params` over the elucidation corpus.
/// `on_epoch` sees each epoch's log line as soon as it is complete.
pub fn pretrain(
    corpus: &CoteCorpus,
    params: EncoderParams,
    cfg: &PretrainConfig,
    vocab: &Vocab,
    mode: TokenizationMode,
    mut on_epoch: impl FnMut(&PretrainEpoch),
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if corpus.records.is_empty() {
        return Err(Error::invalid("pre-training corpus is empty"));
    }
    if params.config.vocab_size != vocab.len() {
        return Err(Error::Shape(format!(
            "encoder expects {} vocabulary entries, vocabulary has {}",
            params.config.vocab_size,
            vocab.len()
        )));
    }
    let mut params = params;
    let all = corpus_sequences(corpus, vocab, mode, params.config.max_len, cfg.pack_len);
    let total = all.len();
    let seqs: Vec<Vec<u32>> = all
        .into_iter()
        .filter(|s| s.iter().any(|&id| id >= NUM_RESERVED))
        .collect();
    let skipped_chunks = total - seqs.len();
    if seqs.is_empty() && cfg.epochs > 0 {
        return Err(Error::invalid(
            "no corpus text maps to ordinary vocabulary tokens",
        ));
    }

    let adam = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut state = OptimizerState::for_tensors(adam, params.tensors().map(|(_, t)| t));
    let mut grads = params.zeros_like();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut seen = 0;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.shuffle(&mut rng::rng_at(cfg.seed, &[1, epoch as u64]));
        let (mut loss_sum, mut target_count) = (0.0, 0usize);

        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grads.scale(0.0);
            let (mut batch_loss, mut batch_targets) = (0.0, 0usize);
            for (j, &si) in chunk.iter().enumerate() {
                let path = [2, epoch as u64, b as u64, j as u64];
                let masked = mask_tokens(
                    &seqs[si],
                    cfg,
                    vocab.len(),
                    rng::derive_seed(cfg.seed, &path),
                )?;
                let dropout_seed =
                    rng::derive_seed(cfg.seed, &[3, epoch as u64, b as u64, j as u64]);
                batch_loss += masked_step(&params, &masked, dropout_seed, &mut grads)?;
                batch_targets += masked.targets.len();
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "masked-LM loss at epoch {} batch {} (parameter norm {:.4e})",
                    epoch + 1,
                    b,
                    params.norm()
                )));
            }
            grads.scale(1.0 / batch_targets as f64);
            let g = grads.tensors();
            adamw_step(&mut params.tensors_mut(), &g, &mut state, cfg.lr).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!(
                    "{what} at epoch {} batch {} (parameter norm {:.4e})",
                    epoch + 1,
                    b,
                    params.norm()
                )),
                e => e,
            })?;
            loss_sum += batch_loss;
            target_count += batch_targets;
            seen += chunk.len();
        }

        let line = PretrainEpoch {
            epoch: epoch + 1,
            mean_loss: loss_sum / target_count.max(1) as f64,
            examples_seen: seen,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        log::info!(
            "pretrain epoch {} mean_loss {:.6}",
            line.epoch,
            line.mean_loss
        );
        on_epoch(&line);
        epochs.push(line);
    }
    Ok(PretrainOutcome {
        params,
        epochs,
        skipped_chunks,
    })
}
