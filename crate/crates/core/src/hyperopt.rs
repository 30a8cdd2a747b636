//! Stepwise hyperparameter search: one parameter at a time, in grid order,
//! holding every other parameter at its incumbent value.

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bagcore::{split_train_test, BagDataset};
use crate::error::{MilError, Result};
use crate::estimators::{EstimatorConfig, PoolingKind};
use crate::metrics::Metric;
use crate::rng::{derive_seed, seeded};

/// One tunable parameter and its candidate values, in trial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub param: String,
    pub candidates: Vec<Value>,
}

/// Ordered list of parameters to tune.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamGrid(pub Vec<GridEntry>);

impl ParamGrid {
    pub fn new() -> Self {
        ParamGrid(Vec::new())
    }

    pub fn with(mut self, param: &str, candidates: Vec<Value>) -> Self {
        self.0.push(GridEntry {
            param: param.to_string(),
            candidates,
        });
        self
    }

    pub fn entries(&self) -> &[GridEntry] {
        &self.0
    }

    /// Number of trainings a search over this grid performs.
    pub fn num_trainings(&self) -> usize {
        1 + self.0.iter().map(|e| e.candidates.len()).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.0.iter().enumerate() {
            if e.candidates.is_empty() {
                return Err(MilError::config(format!("no candidates for {:?}", e.param)));
            }
            if self.0[..i].iter().any(|p| p.param == e.param) {
                return Err(MilError::config(format!("duplicate grid parameter {:?}", e.param)));
            }
        }
        Ok(())
    }
}

/// Default search space. The temperature step is included only for dynamic
/// pooling networks.
pub fn default_param_grid(config: &EstimatorConfig) -> ParamGrid {
    use serde_json::json;
    let hidden_name = match config {
        EstimatorConfig::Neural(_) => "encoder_hidden",
        _ => "hidden",
    };
    let grid = ParamGrid::new()
        .with(hidden_name, vec![json!([128]), json!([256, 128])])
        .with("learning_rate", vec![json!(1e-2), json!(1e-3), json!(1e-4)])
        .with("weight_decay", vec![json!(0.0), json!(1e-4)])
        .with("epochs", vec![json!(100), json!(200)]);
    match config {
        EstimatorConfig::Neural(c) if matches!(c.pooling, PoolingKind::DynamicPooling { .. }) => {
            grid.with("temperature", vec![json!(0.5), json!(1.0), json!(2.0)])
        }
        _ => grid,
    }
}

const FIXED_FIELDS: [&str; 3] = ["kind", "task", "seed"];

/// Returns `config` with `param` set to `value`.
///
/// Neural configs accept their own fields plus `temperature` (dynamic pooling
/// only); wrapper configs accept `aggregation` and the base learner fields.
pub fn apply_param(config: &EstimatorConfig, param: &str, value: &Value) -> Result<EstimatorConfig> {
    let unknown = || MilError::config(format!("unknown parameter {param:?} for {}", config.label()));
    if FIXED_FIELDS.contains(&param) {
        return Err(MilError::config(format!("parameter {param:?} cannot be tuned")));
    }
    let mut obj = serde_json::to_value(config)?;
    let target = match config {
        EstimatorConfig::Neural(c) if param == "temperature" => {
            if !matches!(c.pooling, PoolingKind::DynamicPooling { .. }) {
                return Err(MilError::config("temperature applies to dynamic pooling only"));
            }
            &mut obj["pooling"]
        }
        EstimatorConfig::Neural(_) => &mut obj,
        _ if param == "aggregation" => &mut obj,
        _ => &mut obj["base"],
    };
    let slot = target
        .as_object_mut()
        .and_then(|m| m.get_mut(param))
        .ok_or_else(unknown)?;
    *slot = value.clone();
    let updated: EstimatorConfig =
        serde_json::from_value(obj).map_err(|e| MilError::config(format!("bad value {value} for {param:?}: {e}")))?;
    updated.validate()?;
    Ok(updated)
}

/// How candidates are scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Validation {
    /// One fixed fit/validation split.
    Holdout { fraction: f64 },
    /// Mean score over `k` folds.
    KFold { k: usize },
}

impl Default for Validation {
    fn default() -> Self {
        Validation::Holdout { fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// `"default"` for the baseline evaluation.
    pub param: String,
    pub candidate: Value,
    /// Validation score; `None` when training failed numerically.
    pub score: Option<f64>,
    /// Whether this candidate became the incumbent.
    pub adopted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoptResult {
    pub best_config: EstimatorConfig,
    pub best_score: f64,
    pub baseline_score: f64,
    pub metric: Metric,
    pub trace: Vec<TraceEntry>,
    pub n_trainings: usize,
}

/// Fit/validation pairs, fixed for the whole search.
fn make_folds(ds: &BagDataset, validation: Validation, seed: u64) -> Result<Vec<(BagDataset, BagDataset)>> {
    match validation {
        Validation::Holdout { fraction } => Ok(vec![split_train_test(ds, fraction, seed)?]),
        Validation::KFold { k } => {
            if k < 2 || k > ds.len() {
                return Err(MilError::data(format!("cannot make {k} folds from {} bags", ds.len())));
            }
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut seeded(seed));
            Ok((0..k)
                .map(|f| {
                    let (val, fit): (Vec<(usize, usize)>, Vec<(usize, usize)>) =
                        order.iter().copied().enumerate().partition(|(pos, _)| pos % k == f);
                    let pick = |v: Vec<(usize, usize)>| v.into_iter().map(|(_, i)| i).collect::<Vec<_>>();
                    (ds.subset(&pick(fit)), ds.subset(&pick(val)))
                })
                .collect())
        }
    }
}

/// Trains `config` on every fold and returns the mean validation score, or
/// `None` when training diverged.
fn evaluate(
    config: &EstimatorConfig,
    folds: &[(BagDataset, BagDataset)],
    metric: Metric,
    seed: u64,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    for (f, (fit, val)) in folds.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.set_seed(derive_seed(seed, f as u64, 0));
        let model = match cfg.fit(fit) {
            Ok(m) => m,
            Err(MilError::Numeric(msg)) => {
                info!("{}: training diverged ({msg})", config.label());
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let values = model.predict_dataset(val)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        total += metric.score(val.labels(), &values)?;
    }
    Ok(Some(total / folds.len() as f64))
}

/// Coordinate-wise search. A candidate replaces the incumbent only when it
/// scores strictly higher, so the incumbent score never decreases.
pub fn stepwise_search(
    default_config: &EstimatorConfig,
    grid: &ParamGrid,
    ds: &BagDataset,
    validation: Validation,
    metric: Metric,
    seed: u64,
) -> Result<HoptResult> {
    grid.validate()?;
    default_config.validate()?;
    // Reject unknown names before spending any training time.
    for e in grid.entries() {
        apply_param(default_config, &e.param, &e.candidates[0])?;
    }
    let folds = make_folds(ds, validation, seed)?;

    let baseline = evaluate(default_config, &folds, metric, derive_seed(seed, 0, 0))?
        .ok_or_else(|| MilError::Numeric("the default configuration diverged".into()))?;
    info!("baseline {}: {baseline:.4}", default_config.label());
    let mut trace = vec![TraceEntry {
        param: "default".into(),
        candidate: Value::Null,
        score: Some(baseline),
        adopted: true,
    }];
    let mut incumbent = default_config.clone();
    let mut best = baseline;

    for (p, entry) in grid.entries().iter().enumerate() {
        let step_base = incumbent.clone();
        let mut step_best: Option<(usize, f64, EstimatorConfig)> = None;
        let first = trace.len();
        for (c, value) in entry.candidates.iter().enumerate() {
            let cfg = apply_param(&step_base, &entry.param, value)?;
            let score = evaluate(&cfg, &folds, metric, derive_seed(seed, p as u64 + 1, c as u64))?;
            info!("{} = {value}: {score:?}", entry.param);
            if let Some(s) = score {
                if step_best.as_ref().is_none_or(|(_, b, _)| s > *b) {
                    step_best = Some((c, s, cfg));
                }
            }
            trace.push(TraceEntry {
                param: entry.param.clone(),
                candidate: value.clone(),
                score,
                adopted: false,
            });
        }
        if let Some((c, s, cfg)) = step_best {
            if s > best {
                best = s;
                incumbent = cfg;
                trace[first + c].adopted = true;
            }
        }
    }
    let n_trainings = trace.len();
    Ok(HoptResult {
        best_config: incumbent,
        best_score: best,
        baseline_score: baseline,
        metric,
        trace,
        n_trainings,
    })
}
