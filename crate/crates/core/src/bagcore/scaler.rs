use serde::{Deserialize, Serialize};

use super::BagDataset;
use crate::error::{MilError, Result};

/// Per-feature minima and maxima over every instance of every training bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalerState {
    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    /// Scales one feature value. Constant features map to 0; values outside the
    /// fitted range extrapolate linearly.
    #[inline]
    pub fn scale(&self, j: usize, x: f64) -> f64 {
        let range = self.maxs[j] - self.mins[j];
        if range > 0.0 {
            (x - self.mins[j]) / range
        } else {
            0.0
        }
    }
}

/// Fits a [`ScalerState`] on all instances of `ds`.
pub fn fit_scaler(ds: &BagDataset) -> Result<ScalerState> {
    let d = ds
        .dim()
        .ok_or_else(|| MilError::data("cannot fit a scaler on an empty dataset"))?;
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for bag in ds.bags() {
        for inst in bag.instances() {
            for (j, &v) in inst.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
    }
    Ok(ScalerState { mins, maxs })
}

/// Applies the min-max map to every instance; labels and side data pass through.
pub fn transform(state: &ScalerState, ds: &BagDataset) -> Result<BagDataset> {
    match ds.dim() {
        None => return Ok(ds.clone()),
        Some(d) if d != state.dim() => {
            return Err(MilError::data(format!(
                "dataset has dimension {d} but the scaler was fitted on {}",
                state.dim()
            )))
        }
        _ => {}
    }
    let bags = ds
        .bags()
        .iter()
        .map(|b| b.map_values(|j, v| state.scale(j, v)))
        .collect();
    Ok(ds.with_bags_replaced(bags))
}

/// Fit/transform front end over [`fit_scaler`] and [`transform`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BagMinMaxScaler {
    state: Option<ScalerState>,
}

impl BagMinMaxScaler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fit(&mut self, ds: &BagDataset) -> Result<&mut Self> {
        self.state = Some(fit_scaler(ds)?);
        Ok(self)
    }

    pub fn transform(&self, ds: &BagDataset) -> Result<BagDataset> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| MilError::config("scaler used before fit"))?;
        transform(state, ds)
    }

    pub fn fit_transform(&mut self, ds: &BagDataset) -> Result<BagDataset> {
        self.fit(ds)?;
        self.transform(ds)
    }

    pub fn state(&self) -> Option<&ScalerState> {
        self.state.as_ref()
    }
}

impl From<ScalerState> for BagMinMaxScaler {
    fn from(state: ScalerState) -> Self {
        BagMinMaxScaler { state: Some(state) }
    }
}
