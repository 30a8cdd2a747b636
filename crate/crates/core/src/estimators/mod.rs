//! MIL estimators under one fit / predict / get_instance_weights contract.

mod neural;
mod pooling;
mod wrapper;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use neural::{
    batch_loss_and_gradient, fit_neural, fit_neural_with, NeuralArch, NeuralMilConfig, NeuralMilModel,
    NeuralModelParams, NeuralParams,
};
pub use pooling::{pool, AttentionParams, PoolingKind};
pub use wrapper::{
    collapse_bag, fit_bag_wrapper, fit_instance_wrapper, Aggregation, BagWrapperModel, BaseLearnerConfig,
    InstanceWrapperModel, WrapperConfig,
};

use crate::bagcore::{Bag, BagDataset, ScalerState, Task};
use crate::error::{MilError, Result};

/// Hard-label threshold on the positive-class probability.
pub const THRESHOLD: f64 = 0.5;

/// Configuration of any estimator, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorConfig {
    Neural(NeuralMilConfig),
    InstanceWrapper(WrapperConfig),
    BagWrapper(WrapperConfig),
}

impl EstimatorConfig {
    pub fn task(&self) -> Task {
        match self {
            EstimatorConfig::Neural(c) => c.task,
            EstimatorConfig::InstanceWrapper(c) | EstimatorConfig::BagWrapper(c) => c.task,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            EstimatorConfig::Neural(c) => c.seed,
            EstimatorConfig::InstanceWrapper(c) | EstimatorConfig::BagWrapper(c) => c.base.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            EstimatorConfig::Neural(c) => c.seed = seed,
            EstimatorConfig::InstanceWrapper(c) | EstimatorConfig::BagWrapper(c) => c.base.seed = seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorConfig::Neural(c) => c.validate(),
            EstimatorConfig::InstanceWrapper(c) | EstimatorConfig::BagWrapper(c) => c.validate(),
        }
    }

    /// Short human-readable name, e.g. `neural/dynamic` or `bag_wrapper/mean`.
    pub fn label(&self) -> String {
        match self {
            EstimatorConfig::Neural(c) => format!("neural/{}", c.pooling.name()),
            EstimatorConfig::InstanceWrapper(c) => {
                format!("instance_wrapper/{}", c.aggregation.name())
            }
            EstimatorConfig::BagWrapper(c) => format!("bag_wrapper/{}", c.aggregation.name()),
        }
    }

    pub fn fit(&self, ds: &BagDataset) -> Result<MilModel> {
        Ok(match self {
            EstimatorConfig::Neural(c) => MilModel::Neural(fit_neural(c, ds)?),
            EstimatorConfig::InstanceWrapper(c) => MilModel::InstanceWrapper(fit_instance_wrapper(c, ds)?),
            EstimatorConfig::BagWrapper(c) => MilModel::BagWrapper(fit_bag_wrapper(c, ds)?),
        })
    }
}

/// A trained estimator. Serializes as `{"kind": .., "config": .., "params": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MilModel {
    Neural(NeuralMilModel),
    InstanceWrapper(InstanceWrapperModel),
    BagWrapper(BagWrapperModel),
}

impl MilModel {
    pub fn task(&self) -> Task {
        match self {
            MilModel::Neural(m) => m.task(),
            MilModel::InstanceWrapper(m) => m.task(),
            MilModel::BagWrapper(m) => m.task(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            MilModel::Neural(m) => m.input_dim(),
            MilModel::InstanceWrapper(m) => m.input_dim(),
            MilModel::BagWrapper(m) => m.input_dim(),
        }
    }

    pub fn config(&self) -> EstimatorConfig {
        match self {
            MilModel::Neural(m) => EstimatorConfig::Neural(m.config.clone()),
            MilModel::InstanceWrapper(m) => EstimatorConfig::InstanceWrapper(m.config.clone()),
            MilModel::BagWrapper(m) => EstimatorConfig::BagWrapper(m.config.clone()),
        }
    }

    /// Mean training loss per epoch.
    pub fn history(&self) -> &[f64] {
        match self {
            MilModel::Neural(m) => &m.history,
            MilModel::InstanceWrapper(m) => &m.history,
            MilModel::BagWrapper(m) => &m.history,
        }
    }

    /// Regression values, or positive-class probabilities.
    pub fn predict_value(&self, bags: &[&Bag]) -> Result<Vec<f64>> {
        match self {
            MilModel::Neural(m) => m.predict_value(bags),
            MilModel::InstanceWrapper(m) => m.predict_value(bags),
            MilModel::BagWrapper(m) => m.predict_value(bags),
        }
    }

    /// Regression values, or hard 0/1 labels at [`THRESHOLD`].
    pub fn predict(&self, bags: &[&Bag]) -> Result<Vec<f64>> {
        let values = self.predict_value(bags)?;
        Ok(match self.task() {
            Task::Regression => values,
            Task::Classification => values
                .into_iter()
                .map(|p| if p >= THRESHOLD { 1.0 } else { 0.0 })
                .collect(),
        })
    }

    pub fn get_instance_weights(&self, bags: &[&Bag]) -> Result<Vec<Vec<f64>>> {
        match self {
            MilModel::Neural(m) => m.get_instance_weights(bags),
            MilModel::InstanceWrapper(m) => m.get_instance_weights(bags),
            MilModel::BagWrapper(m) => m.get_instance_weights(bags),
        }
    }

    pub fn predict_dataset(&self, ds: &BagDataset) -> Result<Vec<f64>> {
        self.predict_value(&ds.bags().iter().collect::<Vec<_>>())
    }

    pub fn instance_weights_dataset(&self, ds: &BagDataset) -> Result<Vec<Vec<f64>>> {
        self.get_instance_weights(&ds.bags().iter().collect::<Vec<_>>())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// On-disk model: the estimator envelope plus the scaler fitted on its
/// training bags, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: MilModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<ScalerState>,
}

impl ModelFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| MilError::format(None, format!("model file: {e}")))
    }
}
