//! Consensus of trained models: a genetic search picks the subset whose
//! averaged predictions score best on validation bags.

use std::collections::HashMap;

use log::{debug, info};
use ndarray::{Array2, Axis};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bagcore::{BagDataset, Task};
use crate::error::{MilError, Result};
use crate::estimators::{
    Aggregation, BaseLearnerConfig, EstimatorConfig, MilModel, NeuralMilConfig, PoolingKind, WrapperConfig,
};
use crate::metrics::Metric;
use crate::rng::seeded;

/// Predictions of `M` models on the same samples, one column per model.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    values: Array2<f64>,
    column_ids: Vec<String>,
}

impl PredictionMatrix {
    pub fn new(values: Array2<f64>, column_ids: Vec<String>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(MilError::config("prediction matrix needs at least one model"));
        }
        if column_ids.len() != values.ncols() {
            return Err(MilError::shape("one id per prediction column is required"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MilError::Numeric("non-finite prediction in matrix".into()));
        }
        Ok(PredictionMatrix { values, column_ids })
    }

    /// Builds the matrix from per-model prediction vectors.
    pub fn from_columns(columns: &[Vec<f64>], column_ids: Vec<String>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(MilError::shape("prediction columns differ in length"));
        }
        let values = Array2::from_shape_fn((n, columns.len()), |(i, m)| columns[m][i]);
        Self::new(values, column_ids)
    }

    pub fn num_models(&self) -> usize {
        self.values.ncols()
    }

    pub fn num_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column_ids(&self) -> &[String] {
        &self.column_ids
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.values.column(m).to_vec()
    }
}

/// Which models take part in the consensus.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConsensusMask {
    bits: Vec<bool>,
}

impl ConsensusMask {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return Err(MilError::config("consensus mask selects no model"));
        }
        Ok(ConsensusMask { bits })
    }

    pub fn singleton(m: usize, len: usize) -> Self {
        let mut bits = vec![false; len];
        bits[m] = true;
        ConsensusMask { bits }
    }

    pub fn all(len: usize) -> Self {
        ConsensusMask { bits: vec![true; len] }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn selected(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    /// Mask as 0/1 integers, the JSON form.
    pub fn as_ints(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| b as u8).collect()
    }
}

/// Row-wise mean over the selected columns.
pub fn consensus_predict(p: &PredictionMatrix, mask: &ConsensusMask) -> Result<Vec<f64>> {
    if mask.bits.len() != p.num_models() {
        return Err(MilError::shape(format!(
            "mask has {} bits for {} models",
            mask.bits.len(),
            p.num_models()
        )));
    }
    let cols = mask.selected();
    if cols.is_empty() {
        return Err(MilError::config("consensus mask selects no model"));
    }
    let picked = p.values.select(Axis(1), &cols);
    Ok(picked.mean_axis(Axis(1)).expect("non-empty").to_vec())
}

/// Validation fitness. R² falls back to negative mean squared error when the
/// targets have no variance.
pub fn fitness(metric: Metric, y: &[f64], pred: &[f64]) -> Result<f64> {
    if metric == Metric::R2 {
        let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
        if y.iter().all(|&v| v == mean) {
            let mse = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
            return Ok(-mse);
        }
    }
    metric.score(y, pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    #[serde(default = "defaults::population")]
    pub population: usize,
    #[serde(default = "defaults::generations")]
    pub generations: usize,
    #[serde(default = "defaults::tournament_size")]
    pub tournament_size: usize,
    /// Per-bit probability of taking the second parent's bit.
    #[serde(default = "defaults::crossover_prob")]
    pub crossover_prob: f64,
    /// Per-bit flip probability; `None` means `1 / M`.
    #[serde(default)]
    pub mutation_prob: Option<f64>,
    #[serde(default = "defaults::elitism")]
    pub elitism: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn population() -> usize {
        50
    }
    pub fn generations() -> usize {
        100
    }
    pub fn tournament_size() -> usize {
        3
    }
    pub fn crossover_prob() -> f64 {
        0.5
    }
    pub fn elitism() -> usize {
        2
    }
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: defaults::population(),
            generations: defaults::generations(),
            tournament_size: defaults::tournament_size(),
            crossover_prob: defaults::crossover_prob(),
            mutation_prob: None,
            elitism: defaults::elitism(),
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(MilError::config("population must be >= 2"));
        }
        if self.elitism >= self.population {
            return Err(MilError::config("elitism must be below the population size"));
        }
        if self.tournament_size == 0 {
            return Err(MilError::config("tournament_size must be >= 1"));
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.crossover_prob) || !self.mutation_prob.is_none_or(prob_ok) {
            return Err(MilError::config("probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub mask: ConsensusMask,
    pub score: f64,
    /// Best score seen so far, after initialization and after each generation.
    pub history: Vec<f64>,
}

struct Evaluator<'a> {
    p: &'a PredictionMatrix,
    y: &'a [f64],
    metric: Metric,
    cache: HashMap<Vec<bool>, f64>,
}

impl Evaluator<'_> {
    fn score(&mut self, mask: &ConsensusMask) -> Result<f64> {
        if let Some(&s) = self.cache.get(&mask.bits) {
            return Ok(s);
        }
        let s = fitness(self.metric, self.y, &consensus_predict(self.p, mask)?)?;
        self.cache.insert(mask.bits.clone(), s);
        Ok(s)
    }
}

/// Genetic search over consensus masks. The initial population holds every
/// singleton (the best `population - 1` when there are too many), the
/// all-ones mask, and random masks. Returns the best mask ever evaluated.
pub fn genetic_search(p: &PredictionMatrix, y: &[f64], metric: Metric, cfg: &GaConfig) -> Result<GaResult> {
    cfg.validate()?;
    let m = p.num_models();
    if y.len() != p.num_samples() {
        return Err(MilError::data("validation targets and prediction rows differ"));
    }
    let mutation = cfg.mutation_prob.unwrap_or(1.0 / m as f64);
    let mut rng = seeded(cfg.seed);
    let mut eval = Evaluator {
        p,
        y,
        metric,
        cache: HashMap::new(),
    };

    let mut singles: Vec<(ConsensusMask, f64)> = (0..m)
        .map(|i| {
            let mask = ConsensusMask::singleton(i, m);
            eval.score(&mask).map(|s| (mask, s))
        })
        .collect::<Result<_>>()?;
    if singles.len() > cfg.population - 1 {
        // Stable sort keeps the lower index first among equal scores.
        singles.sort_by(|a, b| b.1.total_cmp(&a.1));
        singles.truncate(cfg.population - 1);
    }
    let mut population: Vec<ConsensusMask> = singles.into_iter().map(|(mask, _)| mask).collect();
    population.push(ConsensusMask::all(m));
    while population.len() < cfg.population {
        let mut bits: Vec<bool> = (0..m).map(|_| rng.random()).collect();
        repair(&mut bits, &mut rng);
        population.push(ConsensusMask { bits });
    }

    let mut scores: Vec<f64> = population.iter().map(|x| eval.score(x)).collect::<Result<_>>()?;
    let (mut best, mut best_score) = best_of(&population, &scores);
    let mut history = vec![best_score];

    for generation in 0..cfg.generations {
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut next: Vec<ConsensusMask> = ranked[..cfg.elitism].iter().map(|&i| population[i].clone()).collect();
        while next.len() < cfg.population {
            let a = tournament(&scores, cfg.tournament_size, &mut rng);
            let b = tournament(&scores, cfg.tournament_size, &mut rng);
            let mut bits: Vec<bool> = population[a]
                .bits
                .iter()
                .zip(&population[b].bits)
                .map(|(&x, &y)| if rng.random::<f64>() < cfg.crossover_prob { y } else { x })
                .collect();
            for bit in bits.iter_mut() {
                if rng.random::<f64>() < mutation {
                    *bit = !*bit;
                }
            }
            repair(&mut bits, &mut rng);
            next.push(ConsensusMask { bits });
        }
        population = next;
        scores = population.iter().map(|x| eval.score(x)).collect::<Result<_>>()?;
        let (cand, cand_score) = best_of(&population, &scores);
        if cand_score > best_score {
            best = cand;
            best_score = cand_score;
        }
        debug!("generation {generation}: best {best_score:.6}");
        history.push(best_score);
    }
    Ok(GaResult {
        mask: best,
        score: best_score,
        history,
    })
}

fn repair(bits: &mut [bool], rng: &mut impl Rng) {
    if !bits.iter().any(|&b| b) {
        let i = rng.random_range(0..bits.len());
        bits[i] = true;
    }
}

fn best_of(population: &[ConsensusMask], scores: &[f64]) -> (ConsensusMask, f64) {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    (population[best].clone(), scores[best])
}

fn tournament(scores: &[f64], size: usize, rng: &mut impl Rng) -> usize {
    let idx: Vec<usize> = (0..scores.len()).collect();
    let mut winner = *idx.choose(rng).expect("non-empty population");
    for _ in 1..size {
        let c = *idx.choose(rng).expect("non-empty population");
        if scores[c] > scores[winner] {
            winner = c;
        }
    }
    winner
}

/// Scores every non-empty mask; feasible for small pools only.
pub fn exhaustive_search(p: &PredictionMatrix, y: &[f64], metric: Metric) -> Result<(ConsensusMask, f64)> {
    let m = p.num_models();
    if m > 20 {
        return Err(MilError::config("exhaustive search is limited to 20 models"));
    }
    let mut best: Option<(ConsensusMask, f64)> = None;
    for code in 1u32..(1 << m) {
        let mask = ConsensusMask {
            bits: (0..m).map(|i| code >> i & 1 == 1).collect(),
        };
        let s = fitness(metric, y, &consensus_predict(p, &mask)?)?;
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((mask, s));
        }
    }
    Ok(best.expect("at least one mask"))
}

/// Trained pool with prediction columns on validation and test bags.
#[derive(Debug, Clone)]
pub struct ModelPool {
    pub models: Vec<MilModel>,
    pub val: PredictionMatrix,
    pub test: PredictionMatrix,
}

/// Distinct ids for a list of configs: the estimator label, suffixed on repeats.
fn pool_ids(configs: &[EstimatorConfig]) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    configs
        .iter()
        .map(|c| {
            let label = c.label();
            let n = seen.entry(label.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                label
            } else {
                format!("{label}#{n}")
            }
        })
        .collect()
}

/// Trains every config on `train` and collects predictions on `val` and `test`.
pub fn build_model_pool(
    train: &BagDataset,
    val: &BagDataset,
    test: &BagDataset,
    configs: &[EstimatorConfig],
) -> Result<ModelPool> {
    let ids = pool_ids(configs);
    let mut models = Vec::with_capacity(configs.len());
    let mut val_cols = Vec::with_capacity(configs.len());
    let mut test_cols = Vec::with_capacity(configs.len());
    for (cfg, id) in configs.iter().zip(&ids) {
        info!("training pool member {id}");
        let model = cfg.fit(train).map_err(|e| e.context(id))?;
        val_cols.push(model.predict_dataset(val).map_err(|e| e.context(id))?);
        test_cols.push(model.predict_dataset(test).map_err(|e| e.context(id))?);
        models.push(model);
    }
    Ok(ModelPool {
        models,
        val: PredictionMatrix::from_columns(&val_cols, ids.clone())?,
        test: PredictionMatrix::from_columns(&test_cols, ids)?,
    })
}

/// Every pooling kind on `neural`, plus instance wrappers (mean, max) and a
/// mean bag wrapper on `base`.
pub fn default_pool(task: Task, neural: &NeuralMilConfig, base: &BaseLearnerConfig) -> Vec<EstimatorConfig> {
    let mut pool: Vec<EstimatorConfig> = PoolingKind::all()
        .into_iter()
        .map(|pooling| {
            let mut c = neural.clone();
            c.task = task;
            c.pooling = pooling;
            EstimatorConfig::Neural(c)
        })
        .collect();
    let wrap = |aggregation| WrapperConfig {
        aggregation,
        base: base.clone(),
        task,
    };
    pool.push(EstimatorConfig::InstanceWrapper(wrap(Aggregation::Mean)));
    pool.push(EstimatorConfig::InstanceWrapper(wrap(Aggregation::Max)));
    pool.push(EstimatorConfig::BagWrapper(wrap(Aggregation::Mean)));
    pool
}

/// JSON summary of a consensus run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub mask: Vec<u8>,
    pub val_score: f64,
    pub test_score: f64,
    pub model_ids: Vec<String>,
    pub metric: Metric,
    pub best_single_id: String,
    pub best_single_val_score: f64,
    pub best_single_test_score: f64,
}

/// Searches a consensus on the pool's validation columns and scores it once
/// on test.
pub fn run_consensus(
    pool: &ModelPool,
    y_val: &[f64],
    y_test: &[f64],
    metric: Metric,
    cfg: &GaConfig,
) -> Result<ConsensusReport> {
    let ga = genetic_search(&pool.val, y_val, metric, cfg)?;
    let test_pred = consensus_predict(&pool.test, &ga.mask)?;
    let test_score = fitness(metric, y_test, &test_pred)?;
    let singles: Vec<f64> = (0..pool.val.num_models())
        .map(|m| fitness(metric, y_val, &pool.val.column(m)))
        .collect::<Result<_>>()?;
    let best = (0..singles.len()).fold(0, |b, m| if singles[m] > singles[b] { m } else { b });
    Ok(ConsensusReport {
        mask: ga.mask.as_ints(),
        val_score: ga.score,
        test_score,
        model_ids: pool.val.column_ids().to_vec(),
        metric,
        best_single_id: pool.val.column_ids()[best].clone(),
        best_single_val_score: singles[best],
        best_single_test_score: fitness(metric, y_test, &pool.test.column(best))?,
    })
}
