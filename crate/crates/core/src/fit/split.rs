//! Deterministic train/validation/test splits and k-fold partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Sample, Splits};
use crate::error::{Error, Result};

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Splits `n` units into train/validation/test index sets. Train and
/// validation sizes are the rounded fractions; test takes the remainder.
pub fn split(n: usize, fractions: [f64; 3], seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let idx = permutation(n, seed);
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    Ok((
        idx[..n_train].to_vec(),
        idx[n_train..n_train + n_val].to_vec(),
        idx[n_train + n_val..].to_vec(),
    ))
}

/// [`split`] applied to scanpaths.
pub fn split_samples(samples: &[Sample], fractions: [f64; 3], seed: u64) -> Result<Splits> {
    let (a, b, c) = split(samples.len(), fractions, seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect();
    Ok(Splits {
        train: pick(&a),
        val: pick(&b),
        test: pick(&c),
    })
}

/// Partitions `n` units into `k` folds whose sizes differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::Usage(format!("cannot make {k} folds from {n} units")));
    }
    let idx = permutation(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[at..at + size].to_vec());
        at += size;
    }
    Ok(folds)
}
