//! Deterministic benchmark generators: digit-style bags, a Gaussian-cluster
//! stand-in for digit images, additive-contribution bags and motif-pair
//! protein bags.

mod additive;
mod ppi;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use additive::{generate_additive_bags, AdditiveBags, AdditiveSpec};
pub use ppi::{encode_window_pair, generate_ppi_bags, window_offsets, PpiSpec, AMINO_ACIDS};

use crate::bagcore::{Bag, BagDataset, Task};
use crate::error::{MilError, Result};
use crate::rng::{derive_seed, seeded, MilRng};

/// Balanced 0/1 labels in random order.
pub(crate) fn balanced_labels(num_bags: usize, rng: &mut MilRng) -> Vec<f64> {
    let mut labels: Vec<f64> = (0..num_bags).map(|i| (i < num_bags / 2) as u8 as f64).collect();
    labels.shuffle(rng);
    labels
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClfBagSpec {
    pub key_class: usize,
    pub bag_size: usize,
    pub num_bags: usize,
    #[serde(default = "one")]
    pub keys_per_positive: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl ClfBagSpec {
    pub fn new(key_class: usize, bag_size: usize, num_bags: usize, seed: u64) -> Self {
        ClfBagSpec {
            key_class,
            bag_size,
            num_bags,
            keys_per_positive: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.key_class > 9 {
            return Err(MilError::config("key_class must be a digit 0..9"));
        }
        if self.bag_size == 0 {
            return Err(MilError::config("bag_size must be >= 1"));
        }
        if self.num_bags == 0 || !self.num_bags.is_multiple_of(2) {
            return Err(MilError::config("num_bags must be even and positive"));
        }
        if self.keys_per_positive == 0 || self.keys_per_positive > self.bag_size {
            return Err(MilError::config("keys_per_positive must lie in 1..=bag_size"));
        }
        Ok(())
    }
}

/// Key-digit classification bags. Positive bags hold exactly
/// `keys_per_positive` key instances at random positions, negatives hold none.
pub fn create_bags_clf(instances: &[Vec<f64>], labels: &[usize], spec: &ClfBagSpec) -> Result<BagDataset> {
    spec.validate()?;
    if instances.len() != labels.len() {
        return Err(MilError::data("instances and labels differ in length"));
    }
    let (keys, others): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i] == spec.key_class);
    if keys.is_empty() || others.is_empty() {
        return Err(MilError::data(format!(
            "need both key class {} and other classes among the instances",
            spec.key_class
        )));
    }
    let mut rng = seeded(spec.seed);
    let bag_labels = balanced_labels(spec.num_bags, &mut rng);
    let mut bags = Vec::with_capacity(spec.num_bags);
    let mut masks = Vec::with_capacity(spec.num_bags);
    for &y in &bag_labels {
        let mut mask = vec![false; spec.bag_size];
        if y == 1.0 {
            let mut slots: Vec<usize> = (0..spec.bag_size).collect();
            slots.shuffle(&mut rng);
            for &s in &slots[..spec.keys_per_positive] {
                mask[s] = true;
            }
        }
        let members: Vec<Vec<f64>> = mask
            .iter()
            .map(|&is_key| {
                let pool = if is_key { &keys } else { &others };
                instances[*pool.choose(&mut rng).expect("non-empty pool")].clone()
            })
            .collect();
        bags.push(Bag::new(members)?);
        masks.push(mask);
    }
    BagDataset::new(bags, bag_labels, Task::Classification)?.with_key_masks(masks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelAggregation {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegBagSpec {
    pub bag_size: usize,
    pub num_bags: usize,
    #[serde(default = "mean_agg")]
    pub agg: LabelAggregation,
    #[serde(default)]
    pub seed: u64,
}

fn mean_agg() -> LabelAggregation {
    LabelAggregation::Mean
}

/// Bags whose label is the mean (or sum) of member targets; the targets are
/// kept as per-instance contributions.
pub fn create_bags_reg(instances: &[Vec<f64>], targets: &[usize], spec: &RegBagSpec) -> Result<BagDataset> {
    if spec.bag_size == 0 {
        return Err(MilError::config("bag_size must be >= 1"));
    }
    if instances.is_empty() || instances.len() != targets.len() {
        return Err(MilError::data("need equally many instances and targets, at least one"));
    }
    let mut rng = seeded(spec.seed);
    let mut bags = Vec::with_capacity(spec.num_bags);
    let mut labels = Vec::with_capacity(spec.num_bags);
    let mut contribs = Vec::with_capacity(spec.num_bags);
    for _ in 0..spec.num_bags {
        let picks: Vec<usize> = (0..spec.bag_size)
            .map(|_| rng.random_range(0..instances.len()))
            .collect();
        let c: Vec<f64> = picks.iter().map(|&i| targets[i] as f64).collect();
        let sum: f64 = c.iter().sum();
        labels.push(match spec.agg {
            LabelAggregation::Sum => sum,
            LabelAggregation::Mean => sum / c.len() as f64,
        });
        bags.push(Bag::new(picks.iter().map(|&i| instances[i].clone()).collect())?);
        contribs.push(c);
    }
    BagDataset::new(bags, labels, Task::Regression)?.with_contributions(contribs)
}

/// Gaussian blobs around class centres drawn uniformly in `[0, center_scale]^d`.
/// Sample `i` belongs to class `i % classes`.
pub fn generate_cluster_instances(
    n: usize,
    d: usize,
    classes: usize,
    center_scale: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if classes == 0 || n < classes || d == 0 {
        return Err(MilError::config("need d >= 1 and n >= classes >= 1"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite() && center_scale.is_finite()) {
        return Err(MilError::config(
            "noise_sigma and center_scale must be finite, sigma >= 0",
        ));
    }
    let mut center_rng = seeded(derive_seed(seed, 1, 0));
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| center_rng.random::<f64>() * center_scale).collect())
        .collect();
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| MilError::config(e.to_string()))?;
    let mut rng = seeded(derive_seed(seed, 2, 0));
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let xs = labels
        .iter()
        .map(|&c| centers[c].iter().map(|&m| m + noise.sample(&mut rng)).collect())
        .collect();
    Ok((xs, labels))
}
