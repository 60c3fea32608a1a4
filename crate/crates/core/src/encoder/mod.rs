//! Compact trainable token encoder.
//!
//! Each position concatenates the embeddings of the `2r + 1` tokens around
//! it (token embedding plus position embedding; the `PAD` embedding for
//! neighbors that fall outside the sentence), applies one affine mixer and a
//! `tanh`, and exposes the result to two affine heads: masked-token logits
//! and per-tag emission scores. Gradients are written out by hand.

mod forward;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::vocab::PAD;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

pub use forward::{
    backward, backward_hidden, emissions, encode, mlm_logits, EmissionMatrix, EncoderForward,
};

pub const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Tokens mixed on each side of a position.
    pub window_radius: usize,
    pub hidden_dim: usize,
    pub num_tags: usize,
    pub dropout: f64,
    pub max_len: usize,
}

impl EncoderConfig {
    /// Default dimensions (`d = 64`, `h = 128`, `r = 2`, dropout 0.1,
    /// 256 positions) for the given vocabulary and tag set.
    pub fn new(vocab_size: usize, num_tags: usize) -> Self {
        EncoderConfig {
            vocab_size,
            embed_dim: 64,
            window_radius: 2,
            hidden_dim: 128,
            num_tags,
            dropout: 0.1,
            max_len: 256,
        }
    }

    pub fn window(&self) -> usize {
        2 * self.window_radius + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid(
                "embed_dim and hidden_dim must be at least 1",
            ));
        }
        if self.vocab_size <= PAD as usize {
            return Err(Error::invalid("vocab_size must include the reserved ids"));
        }
        if self.num_tags == 0 || self.max_len == 0 {
            return Err(Error::invalid("num_tags and max_len must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// All trainable tensors of the encoder, including both heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// vocab × d
    pub token_emb: Matrix,
    /// max_len × d
    pub pos_emb: Matrix,
    /// (2r+1)·d × h
    pub mixer_w: Matrix,
    pub mixer_b: Matrix,
    /// h × vocab
    pub mlm_w: Matrix,
    pub mlm_b: Matrix,
    /// h × num_tags
    pub emit_w: Matrix,
    pub emit_b: Matrix,
}

pub const TENSOR_NAMES: [&str; 8] = [
    "token_emb",
    "pos_emb",
    "mixer_w",
    "mixer_b",
    "mlm_w",
    "mlm_b",
    "emit_w",
    "emit_b",
];

impl EncoderParams {
    pub fn zeros(config: &EncoderConfig) -> Self {
        let c = config;
        EncoderParams {
            config: c.clone(),
            token_emb: Matrix::zeros(c.vocab_size, c.embed_dim),
            pos_emb: Matrix::zeros(c.max_len, c.embed_dim),
            mixer_w: Matrix::zeros(c.window() * c.embed_dim, c.hidden_dim),
            mixer_b: Matrix::zeros(1, c.hidden_dim),
            mlm_w: Matrix::zeros(c.hidden_dim, c.vocab_size),
            mlm_b: Matrix::zeros(1, c.vocab_size),
            emit_w: Matrix::zeros(c.hidden_dim, c.num_tags),
            emit_b: Matrix::zeros(1, c.num_tags),
        }
    }

    /// Same shapes, all zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Tensors in declaration order (the checkpoint order).
    pub fn tensors(&self) -> [(&'static str, &Matrix); 8] {
        [
            ("token_emb", &self.token_emb),
            ("pos_emb", &self.pos_emb),
            ("mixer_w", &self.mixer_w),
            ("mixer_b", &self.mixer_b),
            ("mlm_w", &self.mlm_w),
            ("mlm_b", &self.mlm_b),
            ("emit_w", &self.emit_w),
            ("emit_b", &self.emit_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 8] {
        [
            ("token_emb", &mut self.token_emb),
            ("pos_emb", &mut self.pos_emb),
            ("mixer_w", &mut self.mixer_w),
            ("mixer_b", &mut self.mixer_b),
            ("mlm_w", &mut self.mlm_w),
            ("mlm_b", &mut self.mlm_b),
            ("emit_w", &mut self.emit_w),
            ("emit_b", &mut self.emit_b),
        ]
    }

    pub fn add_assign(&mut self, other: &EncoderParams) -> Result<()> {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Replaces the emission head with a freshly initialized one of width
    /// `num_tags`.
    pub fn reset_emission_head(&mut self, num_tags: usize, seed: u64) {
        self.config.num_tags = num_tags;
        let mut r = rng::rng_at(seed, &[0x656d_6974]);
        self.emit_w = uniform(&mut r, self.config.hidden_dim, num_tags);
        self.emit_b = Matrix::zeros(1, num_tags);
    }

    pub fn check_shapes(&self) -> Result<()> {
        let expected = Self::zeros(&self.config);
        for ((name, a), (_, b)) in self.tensors().into_iter().zip(expected.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!(
                    "{name}: {:?}, config implies {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

fn uniform(r: &mut rng::Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| r.random_range(-INIT_RANGE..INIT_RANGE))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// Weights and embeddings uniform in (−0.05, 0.05), biases zero, `PAD`
/// embedding row zero.
pub fn init_params(cfg: &EncoderConfig, seed: u64) -> Result<EncoderParams> {
    cfg.validate()?;
    let mut r = rng::rng(seed);
    let mut token_emb = uniform(&mut r, cfg.vocab_size, cfg.embed_dim);
    token_emb.row_mut(PAD as usize).fill(0.0);
    let pos_emb = uniform(&mut r, cfg.max_len, cfg.embed_dim);
    let mixer_w = uniform(&mut r, cfg.window() * cfg.embed_dim, cfg.hidden_dim);
    let mlm_w = uniform(&mut r, cfg.hidden_dim, cfg.vocab_size);
    let emit_w = uniform(&mut r, cfg.hidden_dim, cfg.num_tags);
    Ok(EncoderParams {
        config: cfg.clone(),
        token_emb,
        pos_emb,
        mixer_w,
        mixer_b: Matrix::zeros(1, cfg.hidden_dim),
        mlm_w,
        mlm_b: Matrix::zeros(1, cfg.vocab_size),
        emit_w,
        emit_b: Matrix::zeros(1, cfg.num_tags),
    })
}
