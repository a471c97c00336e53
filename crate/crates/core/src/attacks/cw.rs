use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::gradient::{flat_cloud, flat_matrix};
use super::{AttackBudget, AttackResult};
use crate::diffnet::{adam_update, argmax, chamfer_with_grad, hausdorff_with_grad, squared_displacement, AdamState, Mat, Param, Real};
use crate::error::{ModelError, ModelResult};
use crate::geometry::PointCloud;
use crate::victim::Victim;

/// Distortion term of the optimization attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Squared ℓ2 norm of the perturbation.
    L2,
    Chamfer,
    Hausdorff,
}

fn distance(mode: DistanceMode, adv: &Mat<f64>, clean: &Mat<f64>) -> (f64, Mat<f64>) {
    match mode {
        DistanceMode::L2 => squared_displacement(adv, clean),
        DistanceMode::Chamfer => chamfer_with_grad(adv, clean),
        DistanceMode::Hausdorff => hausdorff_with_grad(adv, clean),
    }
}

/// `max(max_{i≠t} z_i − z_t, −κ)` and the index of the strongest rival.
fn margin<T: Real>(logits: &[T], target: usize, kappa: f64) -> (f64, usize) {
    let rival = (0..logits.len())
        .filter(|&i| i != target)
        .max_by(|&a, &b| logits[a].f64().total_cmp(&logits[b].f64()))
        .unwrap_or(target);
    ((logits[rival].f64() - logits[target].f64()).max(-kappa), rival)
}

fn succeeded<T: Real>(logits: &[T], target: usize, kappa: f64) -> bool {
    argmax(logits) == target && margin(logits, target, f64::INFINITY).0 <= -kappa
}

struct Best {
    flat: Vec<f64>,
    distance: f64,
    prediction: usize,
}

/// Optimization attack minimizing `d(P, P̂) + c·margin` with Adam over a
/// per-point perturbation, binary-searching `c` across rounds. Returns the
/// successful adversary of least distance, or a failure result.
pub fn cw_attack<T: Real>(
    victim: &Victim<T>,
    cloud: &PointCloud,
    target: usize,
    mode: DistanceMode,
    budget: &AttackBudget,
) -> ModelResult<AttackResult> {
    budget.validate()?;
    let classes = victim.classes();
    if target >= classes {
        return Err(ModelError::TargetOutOfRange { target, classes });
    }
    let start = Instant::now();
    let x0 = cloud.flat();
    let clean = Mat::from_vec(cloud.len(), 3, x0.clone());
    let kappa = budget.cw_kappa;
    let clean_logits = victim.logits(&flat_matrix(&x0))?;
    if succeeded(&clean_logits, target, kappa) {
        return AttackResult::with_prediction(cloud, cloud.clone(), target, target, start.elapsed().as_secs_f64());
    }

    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
    let mut c = budget.cw_c;
    let mut best: Option<Best> = None;
    let mut iterations = 0;
    for _ in 0..budget.binary_search_rounds {
        let mut delta = Param {
            name: "delta".into(),
            shape: vec![cloud.len(), 3],
            value: vec![0.0f64; x0.len()],
        };
        let mut state = AdamState::new(x0.len(), budget.cw_lr);
        let mut round_success = false;
        for step in 0..=budget.cw_steps {
            let x: Vec<f64> = x0.iter().zip(&delta.value).map(|(a, d)| a + d).collect();
            let adv = Mat::from_vec(cloud.len(), 3, x.clone());
            let (logits, cache) = victim.forward(&flat_matrix(&x), None)?;
            let (d, dgrad) = distance(mode, &adv, &clean);
            if succeeded(&logits, target, kappa) {
                round_success = true;
                if best.as_ref().is_none_or(|b| d < b.distance) {
                    best = Some(Best {
                        flat: x.clone(),
                        distance: d,
                        prediction: argmax(&logits),
                    });
                }
            }
            iterations += 1;
            if step == budget.cw_steps {
                break; // the last pass only scores the final iterate
            }
            let (m, rival) = margin(&logits, target, kappa);
            let mut dlogits = vec![T::zero(); logits.len()];
            if m > -kappa {
                dlogits[rival] = T::lit(c);
                dlogits[target] = T::lit(-c);
            }
            let vgrad = victim.backward(&cache, &dlogits, None, true).expect("input gradient");
            let grad: Vec<f64> = dgrad.data().iter().zip(vgrad.data()).map(|(a, b)| a + b.f64()).collect();
            if grad.iter().any(|g| !g.is_finite()) {
                break;
            }
            adam_update(&mut delta, &grad, &mut state).map_err(ModelError::Diff)?;
        }
        if round_success {
            upper = upper.min(c);
            c = 0.5 * (lower + upper);
        } else {
            lower = lower.max(c);
            c = if upper.is_finite() { 0.5 * (lower + upper) } else { 2.0 * c };
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let mut r = match best {
        Some(b) => AttackResult::with_prediction(cloud, flat_cloud(cloud, &b.flat)?, target, b.prediction, seconds)?,
        None => AttackResult::failed(
            cloud,
            target,
            argmax(&clean_logits),
            seconds,
            format!("no successful adversary in {} rounds", budget.binary_search_rounds),
        )?,
    };
    r.iterations = iterations;
    Ok(r)
}
