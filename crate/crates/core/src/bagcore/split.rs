use rand::seq::SliceRandom;

use super::BagDataset;
use crate::error::{MilError, Result};
use crate::rng::seeded;

/// Shuffles bag indices under `seed` and holds out `round(test_fraction * n)` bags.
///
/// Returns `(train, test)`; key masks and contributions follow their bags.
pub fn split_train_test(ds: &BagDataset, test_fraction: f64, seed: u64) -> Result<(BagDataset, BagDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(MilError::config(format!(
            "test fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(MilError::data(format!("cannot split {n} bags")));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(MilError::data(format!(
            "test fraction {test_fraction} of {n} bags leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    Ok((ds.subset(train_idx), ds.subset(test_idx)))
}
