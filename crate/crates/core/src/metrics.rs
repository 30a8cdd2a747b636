//! Bag-level scores and key-instance-detection (KID) scores.

use serde::{Deserialize, Serialize};

use crate::bagcore::{BagDataset, Task};
use crate::error::{MilError, Result};
use crate::estimators::{MilModel, THRESHOLD};

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(MilError::data(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

/// Fraction of exact label matches.
pub fn accuracy(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len(), "accuracy")?;
    if y.is_empty() {
        return Err(MilError::data("accuracy of an empty sequence"));
    }
    let hits = y.iter().zip(yhat).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y.len() as f64)
}

/// Coefficient of determination.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len(), "r2")?;
    if y.len() < 2 {
        return Err(MilError::data("r2 needs at least two values"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MilError::data("r2 is undefined when y has zero variance"));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Index of the largest weight; ties resolve to the lowest index.
pub fn argmax(weights: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &w) in weights.iter().enumerate() {
        if best.is_none_or(|b| w > weights[b]) {
            best = Some(i);
        }
    }
    best
}

/// Share of positive bags whose top-weighted instance is a key instance.
pub fn kid_accuracy(weights: &[Vec<f64>], key_masks: &[Vec<bool>], labels: &[f64]) -> Result<f64> {
    check_lengths(weights.len(), key_masks.len(), "kid_accuracy")?;
    check_lengths(weights.len(), labels.len(), "kid_accuracy")?;
    let mut hits = 0usize;
    let mut positives = 0usize;
    for ((w, mask), &y) in weights.iter().zip(key_masks).zip(labels) {
        if y != 1.0 {
            continue;
        }
        check_lengths(w.len(), mask.len(), "kid_accuracy bag")?;
        positives += 1;
        if argmax(w).is_some_and(|i| mask[i]) {
            hits += 1;
        }
    }
    if positives == 0 {
        return Err(MilError::data("kid_accuracy needs at least one positive bag"));
    }
    Ok(hits as f64 / positives as f64)
}

/// Ranks starting at 1, ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a.len(), b.len(), "spearman")?;
    if a.len() < 2 {
        return Err(MilError::data("spearman needs at least two values"));
    }
    if is_constant(a) || is_constant(b) {
        return Err(MilError::data("spearman is undefined for constant input"));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

/// Mean per-bag rank correlation and the number of bags skipped because one
/// side was constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCorrelation {
    pub mean: f64,
    pub skipped: usize,
}

pub fn kid_rank_correlation_detail(weights: &[Vec<f64>], contributions: &[Vec<f64>]) -> Result<RankCorrelation> {
    check_lengths(weights.len(), contributions.len(), "kid_rank_correlation")?;
    let mut total = 0.0;
    let mut used = 0usize;
    for (w, c) in weights.iter().zip(contributions) {
        check_lengths(w.len(), c.len(), "kid_rank_correlation bag")?;
        if w.len() < 2 || is_constant(w) || is_constant(c) {
            continue;
        }
        total += spearman(c, w)?;
        used += 1;
    }
    if used == 0 {
        return Err(MilError::data("kid_rank_correlation: every bag was constant"));
    }
    Ok(RankCorrelation {
        mean: total / used as f64,
        skipped: weights.len() - used,
    })
}

/// Mean per-bag Spearman correlation between contributions and weights.
pub fn kid_rank_correlation(weights: &[Vec<f64>], contributions: &[Vec<f64>]) -> Result<f64> {
    Ok(kid_rank_correlation_detail(weights, contributions)?.mean)
}

/// Validation score used for model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    R2,
}

impl Metric {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification => Metric::Accuracy,
            Task::Regression => Metric::R2,
        }
    }

    /// Scores predicted values: probabilities are thresholded at 0.5 for
    /// accuracy, regression values are compared directly for R².
    pub fn score(self, y: &[f64], values: &[f64]) -> Result<f64> {
        match self {
            Metric::Accuracy => {
                let hard: Vec<f64> = values.iter().map(|&p| if p >= THRESHOLD { 1.0 } else { 0.0 }).collect();
                accuracy(y, &hard)
            }
            Metric::R2 => r2(y, values),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = MilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "r2" => Ok(Metric::R2),
            other => Err(MilError::config(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kid_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kid_rank_corr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kid_skipped_bags: Option<usize>,
    pub n_test_bags: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_positive_bags: Option<usize>,
}

/// Scores `model` on `ds`. KID fields are filled when the dataset carries
/// key masks (classification) or contributions (regression).
pub fn evaluate(model: &MilModel, ds: &BagDataset) -> Result<MetricsReport> {
    if ds.task() != model.task() {
        return Err(MilError::config(format!(
            "model task {} does not match dataset task {}",
            model.task(),
            ds.task()
        )));
    }
    if ds.is_empty() {
        return Err(MilError::data("cannot evaluate on an empty dataset"));
    }
    let bags: Vec<_> = ds.bags().iter().collect();
    let preds = model.predict(&bags)?;
    let weights = model.get_instance_weights(&bags)?;
    let mut report = MetricsReport {
        task: ds.task(),
        accuracy: None,
        r2: None,
        kid_accuracy: None,
        kid_rank_corr: None,
        kid_skipped_bags: None,
        n_test_bags: ds.len(),
        n_positive_bags: None,
    };
    match ds.task() {
        Task::Classification => {
            report.accuracy = Some(accuracy(ds.labels(), &preds)?);
            let positives = ds.num_positive();
            report.n_positive_bags = Some(positives);
            if let (Some(masks), true) = (ds.key_masks(), positives > 0) {
                report.kid_accuracy = Some(kid_accuracy(&weights, masks, ds.labels())?);
            }
        }
        Task::Regression => {
            report.r2 = Some(r2(ds.labels(), &preds)?);
            if let Some(contribs) = ds.contributions() {
                if let Ok(rc) = kid_rank_correlation_detail(&weights, contribs) {
                    report.kid_rank_corr = Some(rc.mean);
                    report.kid_skipped_bags = Some(rc.skipped);
                }
            }
        }
    }
    Ok(report)
}
