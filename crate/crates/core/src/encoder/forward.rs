use rand::Rng as _;

use super::EncoderParams;
use crate::data::vocab::PAD;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

/// Per-position tag scores for one sentence (`n × num_tags`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix(Matrix);

impl EmissionMatrix {
    pub fn new(scores: Matrix) -> Result<Self> {
        if !scores.is_finite() {
            return Err(Error::NonFinite("emission scores".into()));
        }
        Ok(EmissionMatrix(scores))
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn num_tags(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn score(&self, i: usize, tag: usize) -> f64 {
        self.0.get(i, tag)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Hidden states plus everything `backward` needs from the forward pass.
#[derive(Debug, Clone)]
pub struct EncoderForward {
    pub hidden: Matrix,
    ids: Vec<u32>,
    /// n × (2r+1)·d window inputs.
    inputs: Matrix,
    /// tanh activations before dropout.
    activations: Matrix,
    /// Inverted-dropout multipliers (0 or 1/(1−p)), train mode only.
    dropout_mask: Option<Vec<f64>>,
}

impl EncoderForward {
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
}

pub fn encode(
    p: &EncoderParams,
    ids: &[u32],
    train_mode: bool,
    seed: u64,
) -> Result<EncoderForward> {
    let cfg = &p.config;
    let n = ids.len();
    if n > cfg.max_len {
        return Err(Error::TooLong {
            len: n,
            max_len: cfg.max_len,
        });
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Shape(format!(
            "token id {bad} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let (d, r, w) = (cfg.embed_dim, cfg.window_radius as isize, cfg.window());

    let mut inputs = Matrix::zeros(n, w * d);
    for i in 0..n {
        let row = inputs.row_mut(i);
        for slot in 0..w {
            let j = i as isize + slot as isize - r;
            let dst = &mut row[slot * d..(slot + 1) * d];
            if j >= 0 && (j as usize) < n {
                let j = j as usize;
                let e = p.token_emb.row(ids[j] as usize);
                let q = p.pos_emb.row(j);
                for k in 0..d {
                    dst[k] = e[k] + q[k];
                }
            } else {
                dst.copy_from_slice(p.token_emb.row(PAD as usize));
            }
        }
    }

    let mut activations = inputs.matmul_bias(&p.mixer_w, Some(&p.mixer_b))?;
    activations
        .as_mut_slice()
        .iter_mut()
        .for_each(|x| *x = x.tanh());

    let mut hidden = activations.clone();
    let dropout_mask = if train_mode && cfg.dropout > 0.0 {
        let keep = 1.0 - cfg.dropout;
        let mut r = rng::rng(seed);
        let mask: Vec<f64> = (0..hidden.as_slice().len())
            .map(|_| {
                if r.random::<f64>() < cfg.dropout {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        hidden
            .as_mut_slice()
            .iter_mut()
            .zip(&mask)
            .for_each(|(h, m)| *h *= m);
        Some(mask)
    } else {
        None
    };

    Ok(EncoderForward {
        hidden,
        ids: ids.to_vec(),
        inputs,
        activations,
        dropout_mask,
    })
}

fn check_hidden(p: &EncoderParams, hidden: &Matrix) -> Result<()> {
    if hidden.cols() != p.config.hidden_dim {
        return Err(Error::Shape(format!(
            "hidden width {} but encoder has {}",
            hidden.cols(),
            p.config.hidden_dim
        )));
    }
    Ok(())
}

/// Unnormalized masked-token scores, `n × vocab`.
pub fn mlm_logits(p: &EncoderParams, hidden: &Matrix) -> Result<Matrix> {
    check_hidden(p, hidden)?;
    hidden.matmul_bias(&p.mlm_w, Some(&p.mlm_b))
}

pub fn emissions(p: &EncoderParams, hidden: &Matrix) -> Result<EmissionMatrix> {
    check_hidden(p, hidden)?;
    EmissionMatrix::new(hidden.matmul_bias(&p.emit_w, Some(&p.emit_b))?)
}

/// Accumulates into `grads` the gradient of a loss whose derivatives with
/// respect to the MLM logits and/or the emission scores of `fwd` are given.
pub fn backward(
    p: &EncoderParams,
    fwd: &EncoderForward,
    d_logits: Option<&Matrix>,
    d_emissions: Option<&Matrix>,
    grads: &mut EncoderParams,
) -> Result<()> {
    let n = fwd.ids.len();
    let cfg = &p.config;
    if grads.config != *cfg {
        return Err(Error::Shape(
            "gradient buffer built for a different config".into(),
        ));
    }
    let mut d_hidden = Matrix::zeros(n, cfg.hidden_dim);
    if let Some(dl) = d_logits {
        if dl.shape() != (n, cfg.vocab_size) {
            return Err(Error::Shape(format!(
                "logit gradient {:?}, expected {:?}",
                dl.shape(),
                (n, cfg.vocab_size)
            )));
        }
        fwd.hidden.add_transpose_matmul(dl, &mut grads.mlm_w)?;
        dl.add_column_sums(&mut grads.mlm_b)?;
        d_hidden.add_assign(&dl.matmul_transpose(&p.mlm_w)?)?;
    }
    if let Some(de) = d_emissions {
        if de.shape() != (n, cfg.num_tags) {
            return Err(Error::Shape(format!(
                "emission gradient {:?}, expected {:?}",
                de.shape(),
                (n, cfg.num_tags)
            )));
        }
        fwd.hidden.add_transpose_matmul(de, &mut grads.emit_w)?;
        de.add_column_sums(&mut grads.emit_b)?;
        d_hidden.add_assign(&de.matmul_transpose(&p.emit_w)?)?;
    }

    backward_hidden(p, fwd, d_hidden, grads)
}

/// Accumulates into `grads` the gradient flowing back from `d_hidden`
/// through dropout, the mixer and the embeddings. Head tensors are left
/// alone.
pub fn backward_hidden(
    p: &EncoderParams,
    fwd: &EncoderForward,
    d_hidden: Matrix,
    grads: &mut EncoderParams,
) -> Result<()> {
    let n = fwd.ids.len();
    let cfg = &p.config;
    if d_hidden.shape() != (n, cfg.hidden_dim) || fwd.hidden.shape() != d_hidden.shape() {
        return Err(Error::Shape(format!(
            "hidden gradient {:?}, expected {:?}",
            d_hidden.shape(),
            (n, cfg.hidden_dim)
        )));
    }
    if grads.config != *cfg {
        return Err(Error::Shape(
            "gradient buffer built for a different config".into(),
        ));
    }
    // Through dropout and tanh.
    let mut d_pre = d_hidden;
    if let Some(mask) = &fwd.dropout_mask {
        d_pre
            .as_mut_slice()
            .iter_mut()
            .zip(mask)
            .for_each(|(g, m)| *g *= m);
    }
    d_pre
        .as_mut_slice()
        .iter_mut()
        .zip(fwd.activations.as_slice())
        .for_each(|(g, a)| *g *= 1.0 - a * a);

    fwd.inputs
        .add_transpose_matmul(&d_pre, &mut grads.mixer_w)?;
    d_pre.add_column_sums(&mut grads.mixer_b)?;
    let d_inputs = d_pre.matmul_transpose(&p.mixer_w)?;

    let (d, r, w) = (cfg.embed_dim, cfg.window_radius as isize, cfg.window());
    for i in 0..n {
        let row = d_inputs.row(i);
        for slot in 0..w {
            let j = i as isize + slot as isize - r;
            let g = &row[slot * d..(slot + 1) * d];
            if j >= 0 && (j as usize) < n {
                let j = j as usize;
                add_into(grads.token_emb.row_mut(fwd.ids[j] as usize), g);
                add_into(grads.pos_emb.row_mut(j), g);
            } else {
                add_into(grads.token_emb.row_mut(PAD as usize), g);
            }
        }
    }
    Ok(())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}
