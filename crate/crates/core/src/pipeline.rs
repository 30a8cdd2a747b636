//! End-to-end runs: benchmark datasets, split and scale, train, evaluate.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::bagcore::{
    fit_scaler, load_idx_images, load_idx_labels, split_train_test, transform, BagDataset, ScalerState, Task,
};
use crate::datagen::{
    create_bags_clf, create_bags_reg, generate_additive_bags, generate_cluster_instances, generate_ppi_bags,
    AdditiveSpec, ClfBagSpec, LabelAggregation, PpiSpec, RegBagSpec,
};
use crate::error::{MilError, Result};
use crate::estimators::{EstimatorConfig, MilModel, ModelFile, NeuralMilConfig};
use crate::metrics::{evaluate, MetricsReport};

/// Dimension, noise and centre spread of the digit surrogate. A linear probe
/// separates its classes at well above 95% instance accuracy.
pub const SURROGATE_DIM: usize = 64;
pub const SURROGATE_CENTER_SCALE: f64 = 1.0;
pub const SURROGATE_NOISE: f64 = 0.5;
pub const DIGIT_CLASSES: usize = 10;
pub const KEY_DIGIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    MnistClf,
    MnistReg,
    Additive,
    Ppi,
}

impl Benchmark {
    pub fn task(self) -> Task {
        match self {
            Benchmark::MnistClf | Benchmark::Ppi => Task::Classification,
            Benchmark::MnistReg | Benchmark::Additive => Task::Regression,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::MnistClf => "mnist-clf",
            Benchmark::MnistReg => "mnist-reg",
            Benchmark::Additive => "additive",
            Benchmark::Ppi => "ppi",
        }
    }

    pub fn default_num_bags(self) -> usize {
        match self {
            Benchmark::Additive => 3000,
            _ => 2000,
        }
    }

    /// Epoch budget of the desk preset.
    pub fn desk_epochs(self) -> usize {
        match self {
            Benchmark::MnistClf | Benchmark::Ppi => 20,
            Benchmark::MnistReg | Benchmark::Additive => 100,
        }
    }

    /// The dynamic-pooling network at desk size.
    pub fn desk_config(self, seed: u64) -> NeuralMilConfig {
        let mut c = NeuralMilConfig::new(self.task());
        c.encoder_hidden = vec![64, 32];
        c.attention_hidden = 32;
        c.head_hidden = vec![32];
        c.epochs = self.desk_epochs();
        c.seed = seed;
        c
    }
}

impl std::str::FromStr for Benchmark {
    type Err = MilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist-clf" => Ok(Benchmark::MnistClf),
            "mnist-reg" => Ok(Benchmark::MnistReg),
            "additive" => Ok(Benchmark::Additive),
            "ppi" => Ok(Benchmark::Ppi),
            _ => Err(MilError::config(format!("unknown benchmark {s:?}"))),
        }
    }
}

/// IDX image and label files of a digit corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DigitFiles {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl DigitFiles {
    pub fn is_complete(&self) -> bool {
        self.images.is_some() && self.labels.is_some()
    }
}

/// Digit instances with pixel intensities in `[0, 1]`.
pub fn load_digits(images: &Path, labels: &Path) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let xs = load_idx_images(images)?;
    let ys = load_idx_labels(labels)?;
    if xs.len() != ys.len() {
        return Err(MilError::data(format!("{} images but {} labels", xs.len(), ys.len())));
    }
    let xs = xs
        .into_iter()
        .map(|v| v.into_iter().map(|p| p / 255.0).collect())
        .collect();
    Ok((xs, ys.into_iter().map(usize::from).collect()))
}

/// Digit-surrogate instances: `5 * num_bags` Gaussian-cluster samples.
pub fn surrogate_digits(num_bags: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    generate_cluster_instances(
        (5 * num_bags).max(DIGIT_CLASSES),
        SURROGATE_DIM,
        DIGIT_CLASSES,
        SURROGATE_CENTER_SCALE,
        SURROGATE_NOISE,
        seed,
    )
}

/// Dataset of a benchmark. Digit benchmarks read the IDX files when both are
/// given and fall back to the cluster surrogate otherwise.
pub fn benchmark_dataset(bench: Benchmark, num_bags: usize, seed: u64, digits: &DigitFiles) -> Result<BagDataset> {
    let digit_source = || match (&digits.images, &digits.labels) {
        (Some(i), Some(l)) => load_digits(i, l),
        _ => {
            warn!("no IDX files given for {}; using the cluster surrogate", bench.name());
            surrogate_digits(num_bags, seed)
        }
    };
    match bench {
        Benchmark::MnistClf => {
            let (x, y) = digit_source()?;
            create_bags_clf(&x, &y, &ClfBagSpec::new(KEY_DIGIT, 5, num_bags, seed))
        }
        Benchmark::MnistReg => {
            let (x, y) = digit_source()?;
            create_bags_reg(
                &x,
                &y,
                &RegBagSpec {
                    bag_size: 5,
                    num_bags,
                    agg: LabelAggregation::Mean,
                    seed,
                },
            )
        }
        Benchmark::Additive => Ok(generate_additive_bags(&AdditiveSpec {
            num_bags,
            bag_size_min: 3,
            bag_size_max: 8,
            dim: 32,
            seed,
        })?
        .dataset),
        Benchmark::Ppi => generate_ppi_bags(&PpiSpec::new(num_bags, seed)),
    }
}

/// Train and test bags scaled by a scaler fitted on the training side only.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train: BagDataset,
    pub test: BagDataset,
    pub scaler: ScalerState,
}

pub fn prepare_split(ds: &BagDataset, test_fraction: f64, seed: u64) -> Result<PreparedSplit> {
    let (train, test) = split_train_test(ds, test_fraction, seed)?;
    let scaler = fit_scaler(&train)?;
    Ok(PreparedSplit {
        train: transform(&scaler, &train)?,
        test: transform(&scaler, &test)?,
        scaler,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: ModelFile,
    pub report: MetricsReport,
    pub train_seconds: f64,
}

/// Split 80/20 under `seed`, scale, fit `config` on train, evaluate on test.
pub fn run_experiment(ds: &BagDataset, config: &EstimatorConfig, seed: u64) -> Result<RunOutcome> {
    let split = prepare_split(ds, 0.2, seed)?;
    let start = Instant::now();
    let model: MilModel = config.fit(&split.train)?;
    let train_seconds = start.elapsed().as_secs_f64();
    info!("{} trained in {train_seconds:.1}s", config.label());
    let report = evaluate(&model, &split.test)?;
    Ok(RunOutcome {
        model: ModelFile {
            model,
            scaler: Some(split.scaler),
        },
        report,
        train_seconds,
    })
}

/// One-line summary row of a benchmark report.
pub fn summary_row(name: &str, report: &MetricsReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    format!(
        "{name:<10} accuracy={} r2={} kid_accuracy={} kid_rank_corr={} n_test={}",
        fmt(report.accuracy),
        fmt(report.r2),
        fmt(report.kid_accuracy),
        fmt(report.kid_rank_corr),
        report.n_test_bags
    )
}
