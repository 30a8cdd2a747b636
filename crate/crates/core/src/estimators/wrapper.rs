//! Classical MIL methods built around a single-instance learner.
//!
//! * Instance-level: every instance inherits its bag label, the learner is fit
//!   on the flattened instance table, and bag predictions aggregate the
//!   instance predictions.
//! * Bag-level: every bag is collapsed to one vector by elementwise
//!   aggregation and the learner is fit on the collapsed vectors.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bagcore::{Bag, BagDataset, Task};
use crate::error::{MilError, Result};
use crate::nn::{
    backward_batch, forward_batch, init_params, predict_batch, sigmoid, AdamState, HiddenActivation, LossKind, Mlp,
    MlpSpec, OutputActivation, Parameters,
};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Max,
    Min,
}

impl Aggregation {
    pub fn apply(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Aggregation::Mean => {
                let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                sum / n as f64
            }
            Aggregation::Max => values.fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Min => values.fold(f64::INFINITY, f64::min),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
            Aggregation::Min => "min",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = MilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            "min" => Ok(Aggregation::Min),
            other => Err(MilError::config(format!("unknown aggregation {other:?}"))),
        }
    }
}

/// Single-instance network and its training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseLearnerConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub hidden_activation: HiddenActivation,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_activation() -> HiddenActivation {
    HiddenActivation::Relu
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}

impl Default for BaseLearnerConfig {
    fn default() -> Self {
        BaseLearnerConfig {
            hidden: default_hidden(),
            hidden_activation: default_activation(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl BaseLearnerConfig {
    fn spec(&self, input_dim: usize) -> Result<MlpSpec> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        MlpSpec::new(sizes, self.hidden_activation, OutputActivation::Identity)
    }

    fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(MilError::config("hidden sizes must be >= 1"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(MilError::config("epochs and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MilError::config("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(MilError::config("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrapperConfig {
    pub aggregation: Aggregation,
    #[serde(default)]
    pub base: BaseLearnerConfig,
    pub task: Task,
}

impl WrapperConfig {
    pub fn new(aggregation: Aggregation, task: Task) -> Self {
        WrapperConfig {
            aggregation,
            base: BaseLearnerConfig::default(),
            task,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()
    }

    fn loss(&self) -> LossKind {
        match self.task {
            Task::Regression => LossKind::Mse,
            Task::Classification => LossKind::BceWithLogits,
        }
    }
}

/// Fits a single-output network on `rows` with minibatch Adam.
fn train_rows(cfg: &BaseLearnerConfig, rows: &Array2<f64>, targets: &[f64], loss: LossKind) -> Result<(Mlp, Vec<f64>)> {
    let spec = cfg.spec(rows.ncols())?;
    let mut params = init_params(&spec, derive_seed(cfg.seed, 1, 0));
    let mut adam = AdamState::new(&params, cfg.learning_rate, cfg.weight_decay);
    let mut rng = seeded(derive_seed(cfg.seed, 4, 0));
    let mut order: Vec<usize> = (0..rows.nrows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = rows.select(ndarray::Axis(0), batch);
            let cache = forward_batch(&spec, &params, x.view())?;
            let out = cache.output();
            let scale = 1.0 / batch.len() as f64;
            let mut d_out = Array2::zeros(out.raw_dim());
            for (r, &i) in batch.iter().enumerate() {
                let (l, g) = loss.eval(out[[r, 0]], targets[i]);
                total += l;
                d_out[[r, 0]] = g * scale;
            }
            let (grads, _) = backward_batch(&spec, &params, &cache, d_out.view(), false)?;
            adam.update(&mut params.tensors_mut(), &grads.tensors());
        }
        let mean = total / rows.nrows() as f64;
        if !mean.is_finite() {
            return Err(MilError::Numeric(format!("non-finite loss at epoch {epoch}")));
        }
        history.push(mean);
    }
    Ok((Mlp { spec, params }, history))
}

fn check_fit(config: &WrapperConfig, ds: &BagDataset) -> Result<usize> {
    config.validate()?;
    if ds.task() != config.task {
        return Err(MilError::config(format!(
            "model task {} does not match dataset task {}",
            config.task,
            ds.task()
        )));
    }
    ds.dim().ok_or_else(|| MilError::data("cannot fit on an empty dataset"))
}

fn check_dims(expected: usize, bags: &[&Bag]) -> Result<()> {
    if let Some(b) = bags.iter().find(|b| b.dim() != expected) {
        return Err(MilError::data(format!(
            "bag has dimension {} but the model expects {expected}",
            b.dim()
        )));
    }
    Ok(())
}

/// Instance-level wrapper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceWrapperModel {
    pub config: WrapperConfig,
    pub params: Mlp,
    pub history: Vec<f64>,
}

pub fn fit_instance_wrapper(config: &WrapperConfig, ds: &BagDataset) -> Result<InstanceWrapperModel> {
    let dim = check_fit(config, ds)?;
    let n = ds.num_instances();
    let mut data = Vec::with_capacity(n * dim);
    let mut targets = Vec::with_capacity(n);
    for (bag, &y) in ds.bags().iter().zip(ds.labels()) {
        data.extend_from_slice(bag.as_flat());
        targets.extend(std::iter::repeat_n(y, bag.len()));
    }
    let rows = Array2::from_shape_vec((n, dim), data).expect("instance table");
    let (params, history) = train_rows(&config.base, &rows, &targets, config.loss())?;
    Ok(InstanceWrapperModel {
        config: config.clone(),
        params,
        history,
    })
}

impl InstanceWrapperModel {
    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn input_dim(&self) -> usize {
        self.params.spec.input_size()
    }

    /// Raw instance scores of one bag: logits or regression outputs.
    fn instance_scores(&self, bag: &Bag) -> Result<Vec<f64>> {
        Ok(self.params.predict_batch(bag.view())?.column(0).to_vec())
    }

    /// Instance-level predictions in label space (probabilities or values).
    pub fn instance_predictions(&self, bag: &Bag) -> Result<Vec<f64>> {
        check_dims(self.input_dim(), &[bag])?;
        let scores = self.instance_scores(bag)?;
        Ok(match self.task() {
            Task::Regression => scores,
            Task::Classification => scores.into_iter().map(sigmoid).collect(),
        })
    }

    pub fn predict_value(&self, bags: &[&Bag]) -> Result<Vec<f64>> {
        check_dims(self.input_dim(), bags)?;
        bags.iter()
            .map(|b| {
                let preds = self.instance_predictions(b)?;
                Ok(self.config.aggregation.apply(preds.into_iter()))
            })
            .collect()
    }

    /// Softmax of the raw instance scores within each bag.
    pub fn get_instance_weights(&self, bags: &[&Bag]) -> Result<Vec<Vec<f64>>> {
        check_dims(self.input_dim(), bags)?;
        bags.iter().map(|b| Ok(softmax(&self.instance_scores(b)?))).collect()
    }
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Bag-level wrapper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagWrapperModel {
    pub config: WrapperConfig,
    pub params: Mlp,
    pub history: Vec<f64>,
}

/// Elementwise aggregation of a bag's instances.
pub fn collapse_bag(bag: &Bag, aggregation: Aggregation) -> Vec<f64> {
    (0..bag.dim())
        .map(|j| aggregation.apply(bag.instances().map(|inst| inst[j])))
        .collect()
}

fn collapse_all(bags: &[&Bag], aggregation: Aggregation, dim: usize) -> Array2<f64> {
    let data: Vec<f64> = bags.iter().flat_map(|b| collapse_bag(b, aggregation)).collect();
    Array2::from_shape_vec((bags.len(), dim), data).expect("collapsed rows")
}

pub fn fit_bag_wrapper(config: &WrapperConfig, ds: &BagDataset) -> Result<BagWrapperModel> {
    let dim = check_fit(config, ds)?;
    let bags: Vec<&Bag> = ds.bags().iter().collect();
    let rows = collapse_all(&bags, config.aggregation, dim);
    let (params, history) = train_rows(&config.base, &rows, ds.labels(), config.loss())?;
    Ok(BagWrapperModel {
        config: config.clone(),
        params,
        history,
    })
}

impl BagWrapperModel {
    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn input_dim(&self) -> usize {
        self.params.spec.input_size()
    }

    pub fn predict_value(&self, bags: &[&Bag]) -> Result<Vec<f64>> {
        check_dims(self.input_dim(), bags)?;
        if bags.is_empty() {
            return Ok(Vec::new());
        }
        let rows = collapse_all(bags, self.config.aggregation, self.input_dim());
        let out = predict_batch(&self.params.spec, &self.params.params, rows.view())?;
        Ok(match self.task() {
            Task::Regression => out.column(0).to_vec(),
            Task::Classification => out.column(0).iter().map(|&z| sigmoid(z)).collect(),
        })
    }

    /// Uniform: a collapsed bag carries no instance attribution.
    pub fn get_instance_weights(&self, bags: &[&Bag]) -> Result<Vec<Vec<f64>>> {
        check_dims(self.input_dim(), bags)?;
        Ok(bags.iter().map(|b| vec![1.0 / b.len() as f64; b.len()]).collect())
    }
}
