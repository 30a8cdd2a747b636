//! Permutation-invariant pooling of instance embeddings into bag embeddings.
//!
//! All routines operate on a batch of bags stacked into one `N x h` matrix of
//! instance embeddings; `offsets` (length `B + 1`) delimits the bags.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};
use crate::nn::{glorot_fill, serde_matrix, sigmoid, standard, Parameters};
use crate::rng::seeded;

/// How instance embeddings are collapsed into a bag embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolingKind {
    Mean,
    Max,
    Attention,
    /// Attention softmax sharpened or flattened by a temperature.
    #[serde(rename = "dynamic")]
    DynamicPooling {
        temperature: f64,
    },
    GatedAttention,
}

impl PoolingKind {
    pub fn dynamic() -> Self {
        PoolingKind::DynamicPooling { temperature: 1.0 }
    }

    /// Every pooling kind, with the default temperature for dynamic pooling.
    pub fn all() -> [PoolingKind; 5] {
        [
            PoolingKind::Mean,
            PoolingKind::Max,
            PoolingKind::Attention,
            PoolingKind::dynamic(),
            PoolingKind::GatedAttention,
        ]
    }

    pub fn uses_attention(self) -> bool {
        matches!(
            self,
            PoolingKind::Attention | PoolingKind::DynamicPooling { .. } | PoolingKind::GatedAttention
        )
    }

    pub fn is_gated(self) -> bool {
        matches!(self, PoolingKind::GatedAttention)
    }

    fn temperature(self) -> f64 {
        match self {
            PoolingKind::DynamicPooling { temperature } => temperature,
            _ => 1.0,
        }
    }

    pub fn validate(self) -> Result<()> {
        if let PoolingKind::DynamicPooling { temperature } = self {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(MilError::config(format!(
                    "pooling temperature must be positive, got {temperature}"
                )));
            }
        }
        Ok(())
    }

    /// Short name used on the command line and in model ids.
    pub fn name(self) -> &'static str {
        match self {
            PoolingKind::Mean => "mean",
            PoolingKind::Max => "max",
            PoolingKind::Attention => "attention",
            PoolingKind::DynamicPooling { .. } => "dynamic",
            PoolingKind::GatedAttention => "gated",
        }
    }
}

impl std::str::FromStr for PoolingKind {
    type Err = MilError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mean" => PoolingKind::Mean,
            "max" => PoolingKind::Max,
            "attention" => PoolingKind::Attention,
            "dynamic" | "dynamic_pooling" => PoolingKind::dynamic(),
            "gated" | "gated_attention" => PoolingKind::GatedAttention,
            other => return Err(MilError::config(format!("unknown pooling {other:?}"))),
        })
    }
}

/// Scorer `s_i = u . tanh(V h_i)`, optionally gated as
/// `s_i = u . (tanh(V h_i) * sigmoid(U h_i))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    #[serde(with = "serde_matrix")]
    pub v: Array2<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub u: Array1<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    pub gate: Option<Array2<f64>>,
}

mod opt_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Array2<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => serde_matrix::serialize(m, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Array2<f64>>, D::Error> {
        serde_matrix::deserialize(d).map(Some)
    }
}

impl AttentionParams {
    pub fn init(embed_dim: usize, hidden: usize, gated: bool, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut v = Array2::zeros((hidden, embed_dim));
        glorot_fill(&mut v, embed_dim, hidden, &mut rng);
        let mut u = Array2::zeros((1, hidden));
        glorot_fill(&mut u, hidden, 1, &mut rng);
        let gate = gated.then(|| {
            let mut g = Array2::zeros((hidden, embed_dim));
            glorot_fill(&mut g, embed_dim, hidden, &mut rng);
            g
        });
        AttentionParams {
            v,
            u: u.row(0).to_owned(),
            gate,
        }
    }

    pub fn zeros_like(&self) -> Self {
        AttentionParams {
            v: Array2::zeros(self.v.raw_dim()),
            u: Array1::zeros(self.u.raw_dim()),
            gate: self.gate.as_ref().map(|g| Array2::zeros(g.raw_dim())),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.v.ncols()
    }

    /// Raw scores for every row of `h`, with the intermediate activations.
    fn scores(&self, h: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>, Option<Array2<f64>>) {
        let t = h.dot(&self.v.t()).mapv(f64::tanh);
        match &self.gate {
            None => (t.dot(&self.u), t, None),
            Some(gate) => {
                let g = h.dot(&gate.t()).mapv(sigmoid);
                ((&t * &g).dot(&self.u), t, Some(g))
            }
        }
    }
}

impl Parameters for AttentionParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.v.as_slice().expect("contiguous"),
            self.u.as_slice().expect("contiguous"),
        ];
        if let Some(g) = &self.gate {
            out.push(g.as_slice().expect("contiguous"));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.v.as_slice_mut().expect("contiguous"),
            self.u.as_slice_mut().expect("contiguous"),
        ];
        if let Some(g) = &mut self.gate {
            out.push(g.as_slice_mut().expect("contiguous"));
        }
        out
    }
}

/// Saved state of [`pool_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct PoolCache {
    /// Per-instance pooling weights, concatenated over bags.
    pub weights: Vec<f64>,
    tanh: Option<Array2<f64>>,
    gate: Option<Array2<f64>>,
    /// Row index of the first maximizer, per bag and coordinate.
    argmax: Option<Array2<usize>>,
}

fn softmax_into(scores: &[f64], temperature: f64, out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = ((s - max) / temperature).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn check_offsets(offsets: &[usize], n: usize) -> Result<()> {
    if offsets.len() < 2 || offsets[0] != 0 || *offsets.last().unwrap() != n {
        return Err(MilError::shape("bag offsets do not cover the embedding rows"));
    }
    if offsets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MilError::data("empty bag in batch"));
    }
    Ok(())
}

/// Pools every bag of a stacked batch. Returns the `B x h` bag embeddings.
pub(crate) fn pool_batch(
    kind: PoolingKind,
    attn: Option<&AttentionParams>,
    h: ArrayView2<'_, f64>,
    offsets: &[usize],
) -> Result<(Array2<f64>, PoolCache)> {
    check_offsets(offsets, h.nrows())?;
    let n_bags = offsets.len() - 1;
    let dim = h.ncols();
    let mut z = Array2::zeros((n_bags, dim));
    let mut weights = vec![0.0; h.nrows()];
    let mut cache = PoolCache {
        weights: Vec::new(),
        tanh: None,
        gate: None,
        argmax: None,
    };
    match kind {
        PoolingKind::Mean => {
            for b in 0..n_bags {
                let (lo, hi) = (offsets[b], offsets[b + 1]);
                let n = (hi - lo) as f64;
                let seg = h.slice(ndarray::s![lo..hi, ..]);
                z.row_mut(b).assign(&(seg.sum_axis(Axis(0)) / n));
                weights[lo..hi].fill(1.0 / n);
            }
        }
        PoolingKind::Max => {
            let mut argmax = Array2::zeros((n_bags, dim));
            for b in 0..n_bags {
                let (lo, hi) = (offsets[b], offsets[b + 1]);
                for j in 0..dim {
                    let mut best = lo;
                    for i in lo + 1..hi {
                        if h[[i, j]] > h[[best, j]] {
                            best = i;
                        }
                    }
                    let top = h[[best, j]];
                    z[[b, j]] = top;
                    argmax[[b, j]] = best;
                    let ties = (lo..hi).filter(|&i| h[[i, j]] == top).count() as f64;
                    for i in lo..hi {
                        if h[[i, j]] == top {
                            weights[i] += 1.0 / (ties * dim as f64);
                        }
                    }
                }
            }
            cache.argmax = Some(argmax);
        }
        PoolingKind::Attention | PoolingKind::DynamicPooling { .. } | PoolingKind::GatedAttention => {
            let attn = attn.ok_or_else(|| MilError::config("attention pooling without scorer"))?;
            if attn.embed_dim() != dim {
                return Err(MilError::shape("attention scorer width differs from embeddings"));
            }
            let (scores, t, g) = attn.scores(h);
            let tau = kind.temperature();
            let scores = scores.as_slice().expect("contiguous");
            for b in 0..n_bags {
                let (lo, hi) = (offsets[b], offsets[b + 1]);
                softmax_into(&scores[lo..hi], tau, &mut weights[lo..hi]);
                let mut zb = z.row_mut(b);
                for i in lo..hi {
                    zb.scaled_add(weights[i], &h.row(i));
                }
            }
            cache.tanh = Some(t);
            cache.gate = g;
        }
    }
    cache.weights = weights;
    Ok((z, cache))
}

/// Backward pass of [`pool_batch`]: returns `dL/dh` and the scorer gradient.
pub(crate) fn pool_batch_backward(
    kind: PoolingKind,
    attn: Option<&AttentionParams>,
    h: ArrayView2<'_, f64>,
    offsets: &[usize],
    cache: &PoolCache,
    dz: ArrayView2<'_, f64>,
) -> (Array2<f64>, Option<AttentionParams>) {
    let n_bags = offsets.len() - 1;
    let mut dh = Array2::zeros(h.raw_dim());
    match kind {
        PoolingKind::Mean => {
            for b in 0..n_bags {
                let (lo, hi) = (offsets[b], offsets[b + 1]);
                let scale = 1.0 / (hi - lo) as f64;
                for i in lo..hi {
                    dh.row_mut(i).scaled_add(scale, &dz.row(b));
                }
            }
            (dh, None)
        }
        PoolingKind::Max => {
            let argmax = cache.argmax.as_ref().expect("max cache");
            for b in 0..n_bags {
                for j in 0..h.ncols() {
                    dh[[argmax[[b, j]], j]] += dz[[b, j]];
                }
            }
            (dh, None)
        }
        _ => {
            let attn = attn.expect("attention params");
            let t = cache.tanh.as_ref().expect("attention cache");
            let tau = kind.temperature();
            let a = &cache.weights;
            let mut ds = Array1::zeros(h.nrows());
            for b in 0..n_bags {
                let (lo, hi) = (offsets[b], offsets[b + 1]);
                let dzb = dz.row(b);
                let mut mean_da = 0.0;
                for i in lo..hi {
                    let da = dzb.dot(&h.row(i));
                    ds[i] = da;
                    mean_da += a[i] * da;
                    dh.row_mut(i).scaled_add(a[i], &dzb);
                }
                for i in lo..hi {
                    ds[i] = a[i] * (ds[i] - mean_da) / tau;
                }
            }
            // s = P u with P = tanh(V h) (times the gate when present)
            let ds_col = ds.view().insert_axis(Axis(1));
            let u_row = attn.u.view().insert_axis(Axis(0));
            let dp = ds_col.dot(&u_row);
            let mut grads = attn.zeros_like();
            let (dt, p) = match &cache.gate {
                None => (dp.clone(), None),
                Some(g) => (&dp * g, Some(t * g)),
            };
            grads.u = match &p {
                None => t.t().dot(&ds),
                Some(p) => p.t().dot(&ds),
            };
            let dpre_v = &dt * &t.mapv(|x| 1.0 - x * x);
            grads.v = standard(dpre_v.t().dot(&h));
            dh += &dpre_v.dot(&attn.v);
            if let (Some(g), Some(gate)) = (&cache.gate, &attn.gate) {
                let dg = &dp * t;
                let dpre_u = &dg * &g.mapv(|x| x * (1.0 - x));
                grads.gate = Some(standard(dpre_u.t().dot(&h)));
                dh += &dpre_u.dot(gate);
            }
            (dh, Some(grads))
        }
    }
}

/// Pools a single bag of embeddings, returning the bag embedding and the
/// per-instance weights.
pub fn pool(
    kind: PoolingKind,
    embeddings: &[Vec<f64>],
    attn: Option<&AttentionParams>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    kind.validate()?;
    let first = embeddings
        .first()
        .ok_or_else(|| MilError::data("cannot pool an empty bag"))?;
    let dim = first.len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(MilError::shape("embeddings of unequal width"));
    }
    let flat: Vec<f64> = embeddings.iter().flatten().copied().collect();
    let h = ArrayView2::from_shape((embeddings.len(), dim), &flat).expect("n x h");
    let (z, cache) = pool_batch(kind, attn, h, &[0, embeddings.len()])?;
    Ok((z.row(0).to_vec(), cache.weights))
}
