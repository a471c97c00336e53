use serde::{Deserialize, Serialize};

use crate::diffnet::Real;
use crate::error::ModelResult;
use crate::geometry::{chamfer_distance, kurtosis_metric, paired_l2_distance, PointCloud};
use crate::victim::Victim;

/// Outcome of attacking one cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    /// The adversarial cloud (the input itself when an attack fails outright).
    pub cloud: PointCloud,
    pub target: usize,
    /// Victim prediction on `cloud`.
    pub prediction: usize,
    pub success: bool,
    pub paired_l2: f64,
    pub chamfer: f64,
    /// `None` when the nearest-neighbor distances have no spread.
    pub kurtosis: Option<f64>,
    /// Wall time of the attack call.
    pub seconds: f64,
    /// Why no adversary was produced, for attacks that can fail explicitly.
    pub failure: Option<String>,
    /// Gradient evaluations or optimizer passes spent.
    #[serde(default)]
    pub iterations: usize,
}

impl AttackResult {
    /// Scores `adversarial` against `original` with an independent victim
    /// forward pass.
    pub fn measure<T: Real>(
        victim: &Victim<T>,
        original: &PointCloud,
        adversarial: PointCloud,
        target: usize,
        seconds: f64,
    ) -> ModelResult<Self> {
        let prediction = victim.predict(&adversarial)?;
        Self::with_prediction(original, adversarial, target, prediction, seconds)
    }

    pub fn with_prediction(original: &PointCloud, adversarial: PointCloud, target: usize, prediction: usize, seconds: f64) -> ModelResult<Self> {
        Ok(Self {
            paired_l2: paired_l2_distance(original, &adversarial)?,
            chamfer: chamfer_distance(original, &adversarial)?,
            kurtosis: kurtosis_metric(&adversarial).ok(),
            success: prediction == target,
            prediction,
            target,
            cloud: adversarial,
            seconds,
            failure: None,
            iterations: 1,
        })
    }

    pub fn failed(original: &PointCloud, target: usize, prediction: usize, seconds: f64, reason: impl Into<String>) -> ModelResult<Self> {
        let mut r = Self::with_prediction(original, original.clone(), target, prediction, seconds)?;
        r.success = false;
        r.failure = Some(reason.into());
        Ok(r)
    }
}
