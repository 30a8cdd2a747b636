//! Bag-of-instances data model.
//!
//! A [`Bag`] is a non-empty, ordered set of equally sized feature vectors stored
//! row-major in one flat buffer. A [`BagDataset`] pairs bags with bag labels and
//! optional per-instance ground truth (key masks for classification benchmarks,
//! additive contributions for regression benchmarks).

mod idx;
mod jsonl;
mod scaler;
mod split;

pub use idx::{load_idx_images, load_idx_labels, parse_idx_images, parse_idx_labels};
pub use jsonl::{read_bags_jsonl, read_bags_jsonl_as, write_bags_jsonl, BagRecord};
pub use scaler::{fit_scaler, transform, BagMinMaxScaler, ScalerState};
pub use split::split_train_test;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};

/// Learning task attached to a dataset or an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Regression => f.write_str("regression"),
            Task::Classification => f.write_str("classification"),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = MilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" | "reg" => Ok(Task::Regression),
            "classification" | "clf" => Ok(Task::Classification),
            other => Err(MilError::config(format!("unknown task {other:?}"))),
        }
    }
}

/// A non-empty bag of instances sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    data: Vec<f64>,
    dim: usize,
}

impl Bag {
    /// Builds a bag from its instance vectors.
    pub fn new(instances: Vec<Vec<f64>>) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| MilError::data("bag must contain at least one instance"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(MilError::data("instances must have dimension >= 1"));
        }
        let mut data = Vec::with_capacity(dim * instances.len());
        for (i, inst) in instances.iter().enumerate() {
            if inst.len() != dim {
                return Err(MilError::data(format!(
                    "instance {i} has dimension {} but the bag uses {dim}",
                    inst.len()
                )));
            }
            data.extend_from_slice(inst);
        }
        Self::from_flat(data, dim)
    }

    /// Builds a bag from a row-major buffer of `len * dim` values.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(MilError::data("instances must have dimension >= 1"));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(MilError::data(format!(
                "flat buffer of length {} is not a non-empty multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MilError::data(format!(
                "non-finite feature value in instance {}",
                pos / dim
            )));
        }
        Ok(Bag { data, dim })
    }

    /// Number of instances.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false; bags are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instance(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn instances(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// The bag as an `n x d` matrix view.
    pub fn view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.dim), &self.data).expect("bag buffer is n*d")
    }

    /// Returns a copy with the instances reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Bag> {
        if order.len() != self.len() {
            return Err(MilError::data("permutation length differs from bag size"));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            if i >= self.len() {
                return Err(MilError::data("permutation index out of range"));
            }
            data.extend_from_slice(self.instance(i));
        }
        Ok(Bag { data, dim: self.dim })
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Bag {
        let dim = self.dim;
        let data = self.data.iter().enumerate().map(|(k, &v)| f(k % dim, v)).collect();
        Bag { data, dim }
    }
}

/// A labeled collection of bags.
#[derive(Debug, Clone, PartialEq)]
pub struct BagDataset {
    bags: Vec<Bag>,
    labels: Vec<f64>,
    bag_ids: Vec<u64>,
    key_masks: Option<Vec<Vec<bool>>>,
    contributions: Option<Vec<Vec<f64>>>,
    task: Task,
}

impl BagDataset {
    /// Creates a dataset, checking label count, feature dimension and label domain.
    ///
    /// Bag ids default to `0..n`.
    pub fn new(bags: Vec<Bag>, labels: Vec<f64>, task: Task) -> Result<Self> {
        if bags.len() != labels.len() {
            return Err(MilError::data(format!(
                "{} bags but {} labels",
                bags.len(),
                labels.len()
            )));
        }
        if let Some(first) = bags.first() {
            let d = first.dim();
            if let Some(i) = bags.iter().position(|b| b.dim() != d) {
                return Err(MilError::data(format!(
                    "bag {i} has dimension {} but the dataset uses {d}",
                    bags[i].dim()
                )));
            }
        }
        if let Some(i) = labels.iter().position(|y| !y.is_finite()) {
            return Err(MilError::data(format!("label of bag {i} is not finite")));
        }
        if task == Task::Classification {
            if let Some(i) = labels.iter().position(|&y| y != 0.0 && y != 1.0) {
                return Err(MilError::data(format!(
                    "classification label of bag {i} is {} (expected 0 or 1)",
                    labels[i]
                )));
            }
        }
        let bag_ids = (0..bags.len() as u64).collect();
        Ok(BagDataset {
            bags,
            labels,
            bag_ids,
            key_masks: None,
            contributions: None,
            task,
        })
    }

    /// An empty dataset of the given task.
    pub fn empty(task: Task) -> Self {
        BagDataset {
            bags: Vec::new(),
            labels: Vec::new(),
            bag_ids: Vec::new(),
            key_masks: None,
            contributions: None,
            task,
        }
    }

    pub fn with_bag_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.bags.len() {
            return Err(MilError::data("bag id count differs from bag count"));
        }
        self.bag_ids = ids;
        Ok(self)
    }

    pub fn with_key_masks(mut self, masks: Vec<Vec<bool>>) -> Result<Self> {
        self.check_per_instance(masks.iter().map(Vec::len), "key_mask")?;
        self.key_masks = Some(masks);
        Ok(self)
    }

    pub fn with_contributions(mut self, contributions: Vec<Vec<f64>>) -> Result<Self> {
        self.check_per_instance(contributions.iter().map(Vec::len), "contributions")?;
        if contributions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MilError::data("non-finite contribution value"));
        }
        self.contributions = Some(contributions);
        Ok(self)
    }

    fn check_per_instance(&self, lens: impl ExactSizeIterator<Item = usize>, what: &str) -> Result<()> {
        if lens.len() != self.bags.len() {
            return Err(MilError::data(format!(
                "{what} given for {} bags but the dataset has {}",
                lens.len(),
                self.bags.len()
            )));
        }
        for (i, (len, bag)) in lens.zip(&self.bags).enumerate() {
            if len != bag.len() {
                return Err(MilError::data(format!(
                    "{what} of bag {i} has {len} entries but the bag has {} instances",
                    bag.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// Feature dimension, or `None` for an empty dataset.
    pub fn dim(&self) -> Option<usize> {
        self.bags.first().map(Bag::dim)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn bag_ids(&self) -> &[u64] {
        &self.bag_ids
    }

    pub fn key_masks(&self) -> Option<&[Vec<bool>]> {
        self.key_masks.as_deref()
    }

    pub fn contributions(&self) -> Option<&[Vec<f64>]> {
        self.contributions.as_deref()
    }

    /// Total number of instances across all bags.
    pub fn num_instances(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    /// Number of bags labelled 1.
    pub fn num_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1.0).count()
    }

    /// Selects the bags at `indices`, in that order, carrying all side data along.
    pub fn subset(&self, indices: &[usize]) -> BagDataset {
        BagDataset {
            bags: indices.iter().map(|&i| self.bags[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            bag_ids: indices.iter().map(|&i| self.bag_ids[i]).collect(),
            key_masks: self
                .key_masks
                .as_ref()
                .map(|m| indices.iter().map(|&i| m[i].clone()).collect()),
            contributions: self
                .contributions
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i].clone()).collect()),
            task: self.task,
        }
    }

    /// Same dataset with the bags replaced; side data is kept as is.
    pub(crate) fn with_bags_replaced(&self, bags: Vec<Bag>) -> BagDataset {
        debug_assert_eq!(bags.len(), self.bags.len());
        BagDataset {
            bags,
            labels: self.labels.clone(),
            bag_ids: self.bag_ids.clone(),
            key_masks: self.key_masks.clone(),
            contributions: self.contributions.clone(),
            task: self.task,
        }
    }
}
