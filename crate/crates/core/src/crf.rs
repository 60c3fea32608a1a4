//! Linear-chain CRF: path scores, log-space forward-backward, NLL with its
//! gradient, and Viterbi decoding (optionally restricted to valid BIO).

use serde::{Deserialize, Serialize};

use crate::data::{LabelScheme, TagSequence};
use crate::encoder::EmissionMatrix;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Which decoder turns emissions into tags at prediction time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Viterbi,
    /// Viterbi restricted to valid BIO sequences.
    Constrained,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(DecodeMode::Viterbi),
            "constrained" => Ok(DecodeMode::Constrained),
            _ => Err(Error::invalid(format!(
                "unknown decode mode {s:?} (expected viterbi or constrained)"
            ))),
        }
    }
}

/// Transition scores `A[y, y']` for moving from tag `y` to tag `y'`, plus
/// optional start/end scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub transitions: Matrix,
    pub start: Option<Matrix>,
    pub end: Option<Matrix>,
}

impl CrfParams {
    /// All-zero transitions; boundary vectors only when `boundary` is set.
    pub fn new(num_tags: usize, boundary: bool) -> Self {
        let b = boundary.then(|| Matrix::zeros(1, num_tags));
        CrfParams {
            transitions: Matrix::zeros(num_tags, num_tags),
            start: b.clone(),
            end: b,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.transitions.rows()
    }

    pub fn has_boundary(&self) -> bool {
        self.start.is_some()
    }

    pub fn zeros_like(&self) -> Self {
        Self::new(self.num_tags(), self.has_boundary())
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = vec![("crf_transitions", &self.transitions)];
        if let (Some(s), Some(e)) = (&self.start, &self.end) {
            v.push(("crf_start", s));
            v.push(("crf_end", e));
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut v = vec![("crf_transitions", &mut self.transitions)];
        if let (Some(s), Some(e)) = (&mut self.start, &mut self.end) {
            v.push(("crf_start", s));
            v.push(("crf_end", e));
        }
        v
    }

    pub fn add_assign(&mut self, other: &CrfParams) -> Result<()> {
        let others = other.tensors();
        let mine = self.tensors_mut();
        if mine.len() != others.len() {
            return Err(Error::Shape("boundary mode differs".into()));
        }
        for ((_, a), (_, b)) in mine.into_iter().zip(others) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(k);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.num_tags();
        if self.transitions.cols() != t {
            return Err(Error::Shape(format!(
                "transition matrix is {:?}",
                self.transitions.shape()
            )));
        }
        if self.start.is_some() != self.end.is_some() {
            return Err(Error::Shape(
                "start and end scores must both be present or absent".into(),
            ));
        }
        for (name, m) in self.tensors() {
            if name != "crf_transitions" && m.shape() != (1, t) {
                return Err(Error::Shape(format!(
                    "{name} is {:?}, expected (1, {t})",
                    m.shape()
                )));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(())
    }

    #[inline]
    fn start(&self, t: usize) -> f64 {
        self.start.as_ref().map_or(0.0, |s| s.get(0, t))
    }

    #[inline]
    fn end(&self, t: usize) -> f64 {
        self.end.as_ref().map_or(0.0, |s| s.get(0, t))
    }
}

fn check_dims(em: &EmissionMatrix, crf: &CrfParams) -> Result<()> {
    if em.num_tags() != crf.num_tags() || crf.transitions.cols() != crf.num_tags() {
        return Err(Error::Shape(format!(
            "emissions have {} tags, transitions are {:?}",
            em.num_tags(),
            crf.transitions.shape()
        )));
    }
    Ok(())
}

fn check_tags(em: &EmissionMatrix, y: &TagSequence) -> Result<()> {
    if y.len() != em.len() {
        return Err(Error::Shape(format!(
            "{} tags for {} positions",
            y.len(),
            em.len()
        )));
    }
    if let Some(&bad) = y.as_slice().iter().find(|&&t| t >= em.num_tags()) {
        return Err(Error::Shape(format!(
            "tag index {bad} outside {} tags",
            em.num_tags()
        )));
    }
    Ok(())
}

pub fn sequence_score(em: &EmissionMatrix, crf: &CrfParams, y: &TagSequence) -> Result<f64> {
    check_dims(em, crf)?;
    check_tags(em, y)?;
    let y = y.as_slice();
    let Some((&first, &last)) = y.first().zip(y.last()) else {
        return Ok(0.0);
    };
    let mut s = crf.start(first) + em.score(0, first);
    for i in 1..y.len() {
        s += crf.transitions.get(y[i - 1], y[i]) + em.score(i, y[i]);
    }
    Ok(s + crf.end(last))
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Forward log-scores `alpha[i][t]`: log-sum over prefixes ending in `t`.
fn forward(em: &EmissionMatrix, crf: &CrfParams) -> Matrix {
    let (n, t) = (em.len(), em.num_tags());
    let mut alpha = Matrix::zeros(n, t);
    for y in 0..t {
        alpha.set(0, y, crf.start(y) + em.score(0, y));
    }
    for i in 1..n {
        for y in 0..t {
            let v = log_sum_exp((0..t).map(|p| alpha.get(i - 1, p) + crf.transitions.get(p, y)));
            alpha.set(i, y, v + em.score(i, y));
        }
    }
    alpha
}

/// Backward log-scores `beta[i][t]`: log-sum over suffixes after `t`.
fn backward(em: &EmissionMatrix, crf: &CrfParams) -> Matrix {
    let (n, t) = (em.len(), em.num_tags());
    let mut beta = Matrix::zeros(n, t);
    for y in 0..t {
        beta.set(n - 1, y, crf.end(y));
    }
    for i in (0..n - 1).rev() {
        for y in 0..t {
            let v = log_sum_exp(
                (0..t).map(|q| crf.transitions.get(y, q) + em.score(i + 1, q) + beta.get(i + 1, q)),
            );
            beta.set(i, y, v);
        }
    }
    beta
}

/// Log of the sum of `exp(score)` over every tag sequence. Zero for an
/// empty sentence.
pub fn log_partition(em: &EmissionMatrix, crf: &CrfParams) -> Result<f64> {
    check_dims(em, crf)?;
    if em.is_empty() {
        return Ok(0.0);
    }
    let alpha = forward(em, crf);
    let n = em.len();
    Ok(log_sum_exp(
        (0..em.num_tags()).map(|y| alpha.get(n - 1, y) + crf.end(y)),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// `p(y_i = t)`, n × T.
    pub unary: Matrix,
    /// `p(y_i = t, y_{i+1} = t')`, one T × T table per adjacent pair.
    pub pairwise: Vec<Matrix>,
    pub log_z: f64,
}

pub fn posterior_marginals(em: &EmissionMatrix, crf: &CrfParams) -> Result<Marginals> {
    check_dims(em, crf)?;
    let (n, t) = (em.len(), em.num_tags());
    if n == 0 {
        return Ok(Marginals {
            unary: Matrix::zeros(0, t),
            pairwise: Vec::new(),
            log_z: 0.0,
        });
    }
    let alpha = forward(em, crf);
    let beta = backward(em, crf);
    let log_z = log_sum_exp((0..t).map(|y| alpha.get(n - 1, y) + crf.end(y)));

    let mut unary = Matrix::zeros(n, t);
    for i in 0..n {
        for y in 0..t {
            unary.set(i, y, (alpha.get(i, y) + beta.get(i, y) - log_z).exp());
        }
    }
    let pairwise = (0..n - 1)
        .map(|i| {
            let mut m = Matrix::zeros(t, t);
            for a in 0..t {
                for b in 0..t {
                    let lp = alpha.get(i, a)
                        + crf.transitions.get(a, b)
                        + em.score(i + 1, b)
                        + beta.get(i + 1, b);
                    m.set(a, b, (lp - log_z).exp());
                }
            }
            m
        })
        .collect();
    Ok(Marginals {
        unary,
        pairwise,
        log_z,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfLoss {
    pub nll: f64,
    pub d_emissions: Matrix,
    pub d_params: CrfParams,
}

/// Negative log-likelihood of `y` and its gradients: expected feature counts
/// under the posterior minus the observed counts.
pub fn crf_nll(em: &EmissionMatrix, crf: &CrfParams, y: &TagSequence) -> Result<CrfLoss> {
    let gold = sequence_score(em, crf, y)?;
    let m = posterior_marginals(em, crf)?;
    let y = y.as_slice();

    let mut d_emissions = m.unary.clone();
    for (i, &t) in y.iter().enumerate() {
        d_emissions.set(i, t, d_emissions.get(i, t) - 1.0);
    }
    let mut d_params = crf.zeros_like();
    for (i, pair) in m.pairwise.iter().enumerate() {
        d_params.transitions.add_assign(pair)?;
        let (a, b) = (y[i], y[i + 1]);
        d_params
            .transitions
            .set(a, b, d_params.transitions.get(a, b) - 1.0);
    }
    if let (Some(ds), Some(de), Some((&first, &last))) = (
        &mut d_params.start,
        &mut d_params.end,
        y.first().zip(y.last()),
    ) {
        let n = y.len();
        ds.row_mut(0).copy_from_slice(m.unary.row(0));
        de.row_mut(0).copy_from_slice(m.unary.row(n - 1));
        ds.set(0, first, ds.get(0, first) - 1.0);
        de.set(0, last, de.get(0, last) - 1.0);
    }

    // Rounding can push a near-certain sequence a hair below zero.
    let nll = (m.log_z - gold).max(0.0);
    if !nll.is_finite() {
        return Err(Error::NonFinite("crf loss".into()));
    }
    Ok(CrfLoss {
        nll,
        d_emissions,
        d_params,
    })
}

fn decode(
    em: &EmissionMatrix,
    crf: &CrfParams,
    allow: impl Fn(Option<usize>, usize) -> bool,
) -> Result<(TagSequence, f64)> {
    check_dims(em, crf)?;
    let (n, t) = (em.len(), em.num_tags());
    if n == 0 {
        return Ok((TagSequence(Vec::new()), 0.0));
    }
    let neg = f64::NEG_INFINITY;
    let mut delta = Matrix::zeros(n, t);
    let mut back = vec![0usize; n * t];
    for y in 0..t {
        delta.set(
            0,
            y,
            if allow(None, y) {
                crf.start(y) + em.score(0, y)
            } else {
                neg
            },
        );
    }
    for i in 1..n {
        for y in 0..t {
            let (mut best, mut arg) = (neg, 0);
            for p in 0..t {
                if !allow(Some(p), y) {
                    continue;
                }
                let v = delta.get(i - 1, p) + crf.transitions.get(p, y);
                if v > best {
                    best = v;
                    arg = p;
                }
            }
            delta.set(i, y, best + em.score(i, y));
            back[i * t + y] = arg;
        }
    }
    let (mut best, mut last) = (neg, 0);
    for y in 0..t {
        let v = delta.get(n - 1, y) + crf.end(y);
        if v > best {
            best = v;
            last = y;
        }
    }
    if best == neg {
        return Err(Error::invalid("no admissible tag sequence"));
    }
    let mut tags = vec![0; n];
    tags[n - 1] = last;
    for i in (1..n).rev() {
        tags[i - 1] = back[i * t + tags[i]];
    }
    let tags = TagSequence(tags);
    let score = sequence_score(em, crf, &tags)?;
    Ok((tags, score))
}

/// Highest-scoring tag sequence. Ties go to the lower tag index at every
/// step of the backtrace.
pub fn viterbi(em: &EmissionMatrix, crf: &CrfParams) -> Result<(TagSequence, f64)> {
    decode(em, crf, |_, _| true)
}

/// Like [`viterbi`], restricted to sequences that are valid BIO under
/// `scheme`.
pub fn constrained_viterbi(
    em: &EmissionMatrix,
    crf: &CrfParams,
    scheme: &LabelScheme,
) -> Result<(TagSequence, f64)> {
    if scheme.num_tags() != em.num_tags() {
        return Err(Error::SchemeMismatch(format!(
            "scheme has {} tags, emissions have {}",
            scheme.num_tags(),
            em.num_tags()
        )));
    }
    decode(em, crf, |p, y| scheme.allows(p, y))
}
