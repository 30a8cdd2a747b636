//! Dense feed-forward networks in double precision.
//!
//! Everything works on row-major batches: a batch is an `n x in` matrix and a
//! layer computes `act(X W^T + b)` with `W` stored `out x in`.

mod adam;
mod gradcheck;
mod loss;
pub(crate) mod serde_matrix;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{gradient_check, max_relative_error, relative_error};
pub use loss::{loss_bce_with_logits, loss_mse, sigmoid, LossKind};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

/// Layer widths and activations of a dense network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let spec = MlpSpec {
            layer_sizes,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(MilError::config("an MLP needs at least input and output sizes"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(MilError::config("layer sizes must be >= 1"));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            match self.output_activation {
                OutputActivation::Identity => Activation::Identity,
                OutputActivation::Sigmoid => Activation::Sigmoid,
            }
        } else {
            match self.hidden_activation {
                HiddenActivation::Relu => Activation::Relu,
                HiddenActivation::Tanh => Activation::Tanh,
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => z.clone(),
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Sigmoid => z.mapv(sigmoid),
        }
    }

    /// Multiplies `grad` in place by the activation derivative, given the
    /// pre-activation `z` and output `a`.
    fn backprop(self, grad: &mut Array2<f64>, z: &Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => ndarray::Zip::from(grad).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => ndarray::Zip::from(grad).and(a).for_each(|g, &a| *g *= 1.0 - a * a),
            Activation::Sigmoid => ndarray::Zip::from(grad).and(a).for_each(|g, &a| *g *= a * (1.0 - a)),
        }
    }
}

/// One affine layer; `w` is `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    #[serde(with = "serde_matrix")]
    pub w: Array2<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub b: Array1<f64>,
}

/// Weights and biases of every layer. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

/// Flat access to every trainable tensor, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [slice(&l.w), l.b.as_slice().expect("contiguous")])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.w.as_slice_mut().expect("contiguous"),
                    l.b.as_slice_mut().expect("contiguous"),
                ]
            })
            .collect()
    }
}

/// Forces row-major layout; `dot` may hand back column-major results.
pub(crate) fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

pub(crate) fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameter matrices are contiguous")
}

impl MlpParams {
    /// All-zero parameters shaped for `spec`.
    pub fn zeros(spec: &MlpSpec) -> Self {
        MlpParams {
            layers: spec
                .layer_sizes
                .windows(2)
                .map(|w| DenseLayer {
                    w: Array2::zeros((w[1], w[0])),
                    b: Array1::zeros(w[1]),
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.w *= factor;
            l.b *= factor;
        }
    }

    /// Checks that the shapes agree with `spec` and every value is finite.
    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        if self.layers.len() != spec.num_layers() {
            return Err(MilError::shape(format!(
                "{} layers for a spec with {}",
                self.layers.len(),
                spec.num_layers()
            )));
        }
        for (k, (l, w)) in self.layers.iter().zip(spec.layer_sizes.windows(2)).enumerate() {
            if l.w.dim() != (w[1], w[0]) || l.b.len() != w[1] {
                return Err(MilError::shape(format!("layer {k} does not match the spec")));
            }
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(MilError::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> MlpParams {
    let mut rng = seeded(seed);
    let mut params = MlpParams::zeros(spec);
    for layer in &mut params.layers {
        let (fan_out, fan_in) = layer.w.dim();
        glorot_fill(&mut layer.w, fan_in, fan_out, &mut rng);
    }
    params
}

pub(crate) fn glorot_fill(w: &mut Array2<f64>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    w.mapv_inplace(|_| rng.random_range(-limit..=limit));
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[k + 1]` the output of layer `k`.
    acts: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("cache holds at least the input")
    }

    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }

    pub fn post_activations(&self) -> &[Array2<f64>] {
        &self.acts[1..]
    }
}

fn check_input(spec: &MlpSpec, cols: usize) -> Result<()> {
    if cols != spec.input_size() {
        return Err(MilError::shape(format!(
            "input has {cols} features, network expects {}",
            spec.input_size()
        )));
    }
    Ok(())
}

/// Forward pass over a batch, keeping what backward needs.
pub fn forward_batch(spec: &MlpSpec, params: &MlpParams, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
    check_input(spec, x.ncols())?;
    let mut acts = Vec::with_capacity(params.layers.len() + 1);
    let mut pre = Vec::with_capacity(params.layers.len());
    acts.push(x.to_owned());
    for (k, layer) in params.layers.iter().enumerate() {
        let z = acts[k].dot(&layer.w.t()) + &layer.b;
        acts.push(spec.activation(k).apply(&z));
        pre.push(z);
    }
    Ok(ForwardCache { acts, pre })
}

/// Forward pass over a batch without caching.
pub fn predict_batch(spec: &MlpSpec, params: &MlpParams, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_input(spec, x.ncols())?;
    let mut cur: Option<Array2<f64>> = None;
    for (k, layer) in params.layers.iter().enumerate() {
        let z = match &cur {
            None => x.dot(&layer.w.t()),
            Some(a) => a.dot(&layer.w.t()),
        } + &layer.b;
        cur = Some(spec.activation(k).apply(&z));
    }
    Ok(cur.expect("at least one layer"))
}

/// Forward pass for a single input vector.
pub fn forward(spec: &MlpSpec, params: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    let cache = forward_batch(spec, params, view)?;
    let out = cache.output().row(0).to_vec();
    Ok((out, cache))
}

/// Reverse pass over a batch. `grad_output` is `dL/d output`, shaped like the
/// network output. The input gradient is computed only when requested.
pub fn backward_batch(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &ForwardCache,
    grad_output: ArrayView2<'_, f64>,
    want_input_grad: bool,
) -> Result<(MlpParams, Option<Array2<f64>>)> {
    let out = cache.output();
    if grad_output.dim() != out.dim() {
        return Err(MilError::shape(format!(
            "grad_output is {:?}, output is {:?}",
            grad_output.dim(),
            out.dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut grads = Vec::with_capacity(n_layers);
    let mut delta = grad_output.to_owned();
    let mut input_grad = None;
    for k in (0..n_layers).rev() {
        spec.activation(k)
            .backprop(&mut delta, &cache.pre[k], &cache.acts[k + 1]);
        let w_grad = standard(delta.t().dot(&cache.acts[k]));
        let b_grad = delta.sum_axis(Axis(0));
        let next = if k > 0 || want_input_grad {
            Some(delta.dot(&params.layers[k].w))
        } else {
            None
        };
        grads.push(DenseLayer { w: w_grad, b: b_grad });
        match next {
            Some(d) if k > 0 => delta = d,
            other => input_grad = other,
        }
    }
    grads.reverse();
    Ok((MlpParams { layers: grads }, input_grad))
}

/// Reverse pass for a single example produced by [`forward`].
pub fn backward(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &ForwardCache,
    grad_output: &[f64],
) -> Result<(MlpParams, Vec<f64>)> {
    let g = ArrayView2::from_shape((1, grad_output.len()), grad_output).map_err(|e| MilError::shape(e.to_string()))?;
    let (grads, input) = backward_batch(spec, params, cache, g, true)?;
    Ok((grads, input.expect("requested").row(0).to_vec()))
}

/// A network together with its architecture, the unit that serializes to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    #[serde(flatten)]
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec, seed);
        Ok(Mlp { spec, params })
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        predict_batch(&self.spec, &self.params, x)
    }
}
