use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Splits each class separately, sending `round(train_fraction * class_count)`
/// samples of that class to the training side.
///
/// Which samples go where is decided by a seeded shuffle; both outputs keep
/// the original relative order of their samples.
pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let (neg, pos) = ds.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Validation(
            "stratified split needs both classes present".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; ds.len()];
    for label in [0u8, 1] {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == label).collect();
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        idx.shuffle(&mut rng);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Dataset::new(ds.dims), Dataset::new(ds.dims));
    for (s, keep) in ds.samples.iter().zip(in_train) {
        if keep {
            train.samples.push(s.clone());
        } else {
            test.samples.push(s.clone());
        }
    }
    Ok((train, test))
}
