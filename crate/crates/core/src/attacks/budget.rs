use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ModelResult};

/// Perturbation budget and optimizer settings shared by the baseline attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackBudget {
    /// Per-coordinate step for FGSM; ℓ2 radius of the whole perturbation for IFGM.
    pub eps: f64,
    pub steps: usize,
    /// IFGM step length; `None` means `eps / steps`.
    pub step_size: Option<f64>,
    /// Normalize IFGM gradients per point instead of over the flattened cloud.
    pub per_point: bool,
    pub cw_c: f64,
    pub cw_kappa: f64,
    pub cw_lr: f64,
    pub cw_steps: usize,
    pub binary_search_rounds: usize,
}

impl Default for AttackBudget {
    fn default() -> Self {
        Self {
            eps: 0.3,
            steps: 10,
            step_size: None,
            per_point: false,
            cw_c: 10.0,
            cw_kappa: 0.0,
            cw_lr: 0.01,
            cw_steps: 200,
            binary_search_rounds: 5,
        }
    }
}

impl AttackBudget {
    pub fn step(&self) -> f64 {
        self.step_size.unwrap_or(self.eps / self.steps.max(1) as f64)
    }

    pub fn validate(&self) -> ModelResult<()> {
        let values = [self.eps, self.step(), self.cw_c, self.cw_kappa, self.cw_lr];
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::Config(format!("attack budget needs finite non-negative values: {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn validate_iterative(&self) -> ModelResult<()> {
        self.validate()?;
        if self.steps == 0 {
            return Err(ModelError::Config("iterative attack needs at least one step".into()));
        }
        Ok(())
    }

    /// Per-coordinate step whose sign perturbation of `points` points has
    /// ℓ2 norm `eps_l2`, for comparing FGSM with IFGM at equal total budget.
    pub fn sign_step_for_l2(eps_l2: f64, points: usize) -> f64 {
        eps_l2 / ((3 * points.max(1)) as f64).sqrt()
    }
}
