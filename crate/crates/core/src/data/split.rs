use rand::seq::SliceRandom;

use super::types::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Shuffles sentences with a seeded PRNG and cuts them into train/val/test.
/// Validation and test get `floor(N * r)` sentences; train takes the rest.
pub fn split_dataset(
    d: &Dataset,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must sum to 1, got {total}"
        )));
    }
    let n = d.len();
    let size = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let (n_val, n_test) = (size(ratios[1]), size(ratios[2]));
    let n_train = n - n_val - n_test;
    if n >= 3 && (n_train == 0 || n_val == 0 || n_test == 0) {
        return Err(Error::invalid(format!(
            "split of {n} sentences with ratios {ratios:?} leaves a part empty ({n_train}/{n_val}/{n_test})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed));
    let take =
        |idx: &[usize]| d.with_sentences(idx.iter().map(|&i| d.sentences()[i].clone()).collect());
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_val]),
        take(&order[n_train + n_val..]),
    ))
}
