use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bagcore::{Bag, BagDataset, Task};
use crate::error::{MilError, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveSpec {
    pub num_bags: usize,
    pub bag_size_min: usize,
    pub bag_size_max: usize,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AdditiveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bag_size_min == 0 || self.bag_size_min > self.bag_size_max {
            return Err(MilError::config("need 1 <= bag_size_min <= bag_size_max"));
        }
        if self.dim == 0 {
            return Err(MilError::config("dim must be >= 1"));
        }
        Ok(())
    }
}

/// Additive bags together with the hidden weight vector that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveBags {
    pub dataset: BagDataset,
    pub true_weights: Vec<f64>,
}

/// Bags whose label is the sum of per-instance contributions `w·x`.
pub fn generate_additive_bags(spec: &AdditiveSpec) -> Result<AdditiveBags> {
    spec.validate()?;
    let mut wrng = seeded(derive_seed(spec.seed, 1, 0));
    let w: Vec<f64> = (0..spec.dim).map(|_| wrng.sample(StandardNormal)).collect();
    let mut rng = seeded(derive_seed(spec.seed, 2, 0));
    let mut bags = Vec::with_capacity(spec.num_bags);
    let mut labels = Vec::with_capacity(spec.num_bags);
    let mut contribs = Vec::with_capacity(spec.num_bags);
    for _ in 0..spec.num_bags {
        let n = rng.random_range(spec.bag_size_min..=spec.bag_size_max);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let c: Vec<f64> = xs.iter().map(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        labels.push(c.iter().sum());
        contribs.push(c);
        bags.push(Bag::new(xs)?);
    }
    let dataset = BagDataset::new(bags, labels, Task::Regression)?.with_contributions(contribs)?;
    Ok(AdditiveBags {
        dataset,
        true_weights: w,
    })
}
