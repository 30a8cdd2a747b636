//! Bag networks: instance encoder, pooling, and a prediction head trained end
//! to end on bag labels.

use log::debug;
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::pooling::{pool_batch, pool_batch_backward, AttentionParams, PoolingKind};
use crate::bagcore::{Bag, BagDataset, Task};
use crate::error::{MilError, Result};
use crate::nn::{
    backward_batch, forward_batch, init_params, predict_batch, sigmoid, AdamState, HiddenActivation, LossKind,
    MlpParams, MlpSpec, OutputActivation, Parameters,
};
use crate::rng::{derive_seed, seeded};

/// Bags scored per chunk at prediction time.
const PREDICT_CHUNK: usize = 256;

/// Architecture and training settings of a bag network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralMilConfig {
    #[serde(default = "defaults::encoder_hidden")]
    pub encoder_hidden: Vec<usize>,
    #[serde(default = "defaults::attention_hidden")]
    pub attention_hidden: usize,
    #[serde(default = "defaults::head_hidden")]
    pub head_hidden: Vec<usize>,
    #[serde(default = "PoolingKind::dynamic")]
    pub pooling: PoolingKind,
    pub task: Task,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_bags")]
    pub batch_bags: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn encoder_hidden() -> Vec<usize> {
        vec![256, 128]
    }
    pub fn attention_hidden() -> usize {
        64
    }
    pub fn head_hidden() -> Vec<usize> {
        vec![64]
    }
    pub fn epochs() -> usize {
        200
    }
    pub fn batch_bags() -> usize {
        32
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
}

impl NeuralMilConfig {
    /// Default dynamic-pooling network for `task`.
    pub fn new(task: Task) -> Self {
        NeuralMilConfig {
            encoder_hidden: defaults::encoder_hidden(),
            attention_hidden: defaults::attention_hidden(),
            head_hidden: defaults::head_hidden(),
            pooling: PoolingKind::dynamic(),
            task,
            epochs: defaults::epochs(),
            batch_bags: defaults::batch_bags(),
            learning_rate: defaults::learning_rate(),
            weight_decay: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pooling.validate()?;
        if self.encoder_hidden.is_empty() || self.encoder_hidden.contains(&0) {
            return Err(MilError::config("encoder_hidden must be non-empty with sizes >= 1"));
        }
        if self.head_hidden.contains(&0) {
            return Err(MilError::config("head_hidden sizes must be >= 1"));
        }
        if self.pooling.uses_attention() && self.attention_hidden == 0 {
            return Err(MilError::config("attention_hidden must be >= 1"));
        }
        if self.epochs == 0 || self.batch_bags == 0 {
            return Err(MilError::config("epochs and batch_bags must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MilError::config("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(MilError::config("weight_decay must be non-negative"));
        }
        Ok(())
    }

    fn loss(&self) -> LossKind {
        match self.task {
            Task::Regression => LossKind::Mse,
            Task::Classification => LossKind::BceWithLogits,
        }
    }
}

/// Fixed shapes of a bag network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralArch {
    pub encoder: MlpSpec,
    pub head: MlpSpec,
    pub pooling: PoolingKind,
}

impl NeuralArch {
    pub fn new(config: &NeuralMilConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(MilError::data("input dimension must be >= 1"));
        }
        let mut enc = vec![input_dim];
        enc.extend(&config.encoder_hidden);
        let embed = *enc.last().expect("non-empty");
        let mut head = vec![embed];
        head.extend(&config.head_hidden);
        head.push(1);
        Ok(NeuralArch {
            encoder: MlpSpec::new(enc, HiddenActivation::Relu, OutputActivation::Identity)?,
            head: MlpSpec::new(head, HiddenActivation::Relu, OutputActivation::Identity)?,
            pooling: config.pooling,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_size()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.output_size()
    }
}

/// Trainable tensors of a bag network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralParams {
    pub encoder: MlpParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionParams>,
    pub head: MlpParams,
}

impl Parameters for NeuralParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.tensors();
        if let Some(a) = &self.attention {
            out.extend(a.tensors());
        }
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.tensors_mut();
        if let Some(a) = &mut self.attention {
            out.extend(a.tensors_mut());
        }
        out.extend(self.head.tensors_mut());
        out
    }
}

impl NeuralParams {
    pub fn init(arch: &NeuralArch, attention_hidden: usize, seed: u64) -> Self {
        NeuralParams {
            encoder: init_params(&arch.encoder, derive_seed(seed, 1, 0)),
            attention: arch.pooling.uses_attention().then(|| {
                AttentionParams::init(
                    arch.embed_dim(),
                    attention_hidden,
                    arch.pooling.is_gated(),
                    derive_seed(seed, 2, 0),
                )
            }),
            head: init_params(&arch.head, derive_seed(seed, 3, 0)),
        }
    }
}

/// Stacks the instances of `bags` row-wise and returns bag offsets.
fn stack(bags: &[&Bag]) -> (Array2<f64>, Vec<usize>) {
    let dim = bags[0].dim();
    let total: usize = bags.iter().map(|b| b.len()).sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut offsets = Vec::with_capacity(bags.len() + 1);
    offsets.push(0);
    for b in bags {
        data.extend_from_slice(b.as_flat());
        offsets.push(offsets.last().unwrap() + b.len());
    }
    (
        Array2::from_shape_vec((total, dim), data).expect("stacked bags"),
        offsets,
    )
}

fn check_dims(arch: &NeuralArch, bags: &[&Bag]) -> Result<()> {
    if let Some(b) = bags.iter().find(|b| b.dim() != arch.input_dim()) {
        return Err(MilError::data(format!(
            "bag has dimension {} but the model expects {}",
            b.dim(),
            arch.input_dim()
        )));
    }
    Ok(())
}

/// Raw head outputs (regression values or logits) and pooling weights.
fn infer(arch: &NeuralArch, params: &NeuralParams, bags: &[&Bag]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_dims(arch, bags)?;
    let mut outputs = Vec::with_capacity(bags.len());
    let mut weights = Vec::with_capacity(bags.len());
    for chunk in bags.chunks(PREDICT_CHUNK) {
        let (x, offsets) = stack(chunk);
        let h = predict_batch(&arch.encoder, &params.encoder, x.view())?;
        let (z, cache) = pool_batch(arch.pooling, params.attention.as_ref(), h.view(), &offsets)?;
        let out = predict_batch(&arch.head, &params.head, z.view())?;
        outputs.extend(out.column(0).iter().copied());
        for w in offsets.windows(2) {
            weights.push(cache.weights[w[0]..w[1]].to_vec());
        }
    }
    Ok((outputs, weights))
}

/// Mean loss over a batch of bags and its gradient with respect to every parameter.
pub fn batch_loss_and_gradient(
    arch: &NeuralArch,
    params: &NeuralParams,
    bags: &[&Bag],
    labels: &[f64],
    loss: LossKind,
) -> Result<(f64, NeuralParams)> {
    check_dims(arch, bags)?;
    let (x, offsets) = stack(bags);
    let enc_cache = forward_batch(&arch.encoder, &params.encoder, x.view())?;
    let h = enc_cache.output();
    let (z, pool_cache) = pool_batch(arch.pooling, params.attention.as_ref(), h.view(), &offsets)?;
    let head_cache = forward_batch(&arch.head, &params.head, z.view())?;
    let out = head_cache.output();

    let scale = 1.0 / bags.len() as f64;
    let mut total = 0.0;
    let mut d_out = Array2::zeros(out.raw_dim());
    for (b, &y) in labels.iter().enumerate() {
        let (l, g) = loss.eval(out[[b, 0]], y);
        total += l;
        d_out[[b, 0]] = g * scale;
    }

    let (head_grad, dz) = backward_batch(&arch.head, &params.head, &head_cache, d_out.view(), true)?;
    let dz = dz.expect("requested");
    let (dh, attn_grad) = pool_batch_backward(
        arch.pooling,
        params.attention.as_ref(),
        h.view(),
        &offsets,
        &pool_cache,
        dz.view(),
    );
    let (enc_grad, _) = backward_batch(&arch.encoder, &params.encoder, &enc_cache, dh.view(), false)?;
    Ok((
        total * scale,
        NeuralParams {
            encoder: enc_grad,
            attention: attn_grad,
            head: head_grad,
        },
    ))
}

/// Trained bag network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralMilModel {
    pub config: NeuralMilConfig,
    pub params: NeuralModelParams,
    /// Mean training loss of every epoch.
    pub history: Vec<f64>,
}

/// Serialized form of the network: architecture plus tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralModelParams {
    pub arch: NeuralArch,
    #[serde(flatten)]
    pub tensors: NeuralParams,
}

/// Trains a bag network on `ds`.
pub fn fit_neural(config: &NeuralMilConfig, ds: &BagDataset) -> Result<NeuralMilModel> {
    fit_neural_with(config, ds, |_, _| {})
}

/// As [`fit_neural`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn fit_neural_with(
    config: &NeuralMilConfig,
    ds: &BagDataset,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<NeuralMilModel> {
    config.validate()?;
    if ds.task() != config.task {
        return Err(MilError::config(format!(
            "model task {} does not match dataset task {}",
            config.task,
            ds.task()
        )));
    }
    let dim = ds
        .dim()
        .ok_or_else(|| MilError::data("cannot fit on an empty dataset"))?;
    let arch = NeuralArch::new(config, dim)?;
    let mut params = NeuralParams::init(&arch, config.attention_hidden, config.seed);
    let mut adam = AdamState::new(&params, config.learning_rate, config.weight_decay);
    let mut rng = seeded(derive_seed(config.seed, 4, 0));
    let loss = config.loss();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_bags) {
            let bags: Vec<&Bag> = batch.iter().map(|&i| &ds.bags()[i]).collect();
            let labels: Vec<f64> = batch.iter().map(|&i| ds.labels()[i]).collect();
            let (l, grads) = batch_loss_and_gradient(&arch, &params, &bags, &labels, loss)?;
            if !l.is_finite() {
                return Err(MilError::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            epoch_loss += l * batch.len() as f64;
            let g = grads.tensors();
            adam.update(&mut params.tensors_mut(), &g);
        }
        let mean = epoch_loss / ds.len() as f64;
        debug!("epoch {epoch}: loss {mean:.6}");
        on_epoch(epoch, mean);
        history.push(mean);
    }
    if params.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(MilError::Numeric("training produced non-finite parameters".into()));
    }
    Ok(NeuralMilModel {
        config: config.clone(),
        params: NeuralModelParams { arch, tensors: params },
        history,
    })
}

impl NeuralMilModel {
    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn input_dim(&self) -> usize {
        self.params.arch.input_dim()
    }

    /// Head outputs: regression values, or logits for classification.
    pub fn decision_function(&self, bags: &[&Bag]) -> Result<Vec<f64>> {
        Ok(infer(&self.params.arch, &self.params.tensors, bags)?.0)
    }

    /// Regression values, or probabilities of the positive class.
    pub fn predict_value(&self, bags: &[&Bag]) -> Result<Vec<f64>> {
        let raw = self.decision_function(bags)?;
        Ok(match self.task() {
            Task::Regression => raw,
            Task::Classification => raw.into_iter().map(sigmoid).collect(),
        })
    }

    pub fn get_instance_weights(&self, bags: &[&Bag]) -> Result<Vec<Vec<f64>>> {
        Ok(infer(&self.params.arch, &self.params.tensors, bags)?.1)
    }

    /// Instance embeddings of one bag.
    pub fn embed(&self, bag: &Bag) -> Result<Array2<f64>> {
        check_dims(&self.params.arch, &[bag])?;
        predict_batch(&self.params.arch.encoder, &self.params.tensors.encoder, bag.view())
    }
}
