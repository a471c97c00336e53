use std::time::Instant;

use super::{AttackBudget, AttackResult};
use crate::diffnet::{Mat, Real};
use crate::error::ModelResult;
use crate::geometry::{Point, PointCloud};
use crate::victim::Victim;

pub(crate) fn flat_matrix<T: Real>(flat: &[f64]) -> Mat<T> {
    Mat::from_vec(flat.len() / 3, 3, flat.iter().map(|&v| T::lit(v)).collect())
}

pub(crate) fn flat_cloud(original: &PointCloud, flat: &[f64]) -> ModelResult<PointCloud> {
    let pts: Vec<Point> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(original.map_points(pts)?)
}

fn target_gradient<T: Real>(victim: &Victim<T>, flat: &[f64], target: usize) -> ModelResult<Vec<f64>> {
    let (_, g) = victim.loss_and_input_gradient(&flat_matrix(flat), target)?;
    Ok(g.data().iter().map(|v| v.f64()).collect())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One signed step of size `eps` down the targeted cross-entropy gradient.
pub fn fgsm_targeted<T: Real>(victim: &Victim<T>, cloud: &PointCloud, target: usize, budget: &AttackBudget) -> ModelResult<AttackResult> {
    budget.validate()?;
    let start = Instant::now();
    let x = cloud.flat();
    let g = target_gradient(victim, &x, target)?;
    let adv: Vec<f64> = x.iter().zip(&g).map(|(v, d)| v - budget.eps * sign(*d)).collect();
    let out = flat_cloud(cloud, &adv)?;
    let prediction = victim.predict(&out)?;
    let mut r = AttackResult::with_prediction(cloud, out, target, prediction, start.elapsed().as_secs_f64())?;
    r.iterations = 1;
    Ok(r)
}

fn normalize(g: &mut [f64], per_point: bool) -> bool {
    let scale_chunk = |c: &mut [f64]| {
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            c.iter_mut().for_each(|v| *v /= n);
        }
        n > 0.0
    };
    if per_point {
        g.chunks_exact_mut(3).fold(false, |any, c| scale_chunk(c) || any)
    } else {
        scale_chunk(g)
    }
}

/// Iterative normalized-gradient descent on the targeted cross-entropy with
/// the accumulated perturbation projected onto the ℓ2 ball of radius `eps`.
/// Stops early, with `iterations` recording the count, when the gradient vanishes.
pub fn ifgm_targeted<T: Real>(victim: &Victim<T>, cloud: &PointCloud, target: usize, budget: &AttackBudget) -> ModelResult<AttackResult> {
    budget.validate_iterative()?;
    let start = Instant::now();
    let x0 = cloud.flat();
    let mut x = x0.clone();
    let step = budget.step();
    let mut taken = 0;
    for _ in 0..budget.steps {
        let mut g = target_gradient(victim, &x, target)?;
        if !normalize(&mut g, budget.per_point) {
            break;
        }
        let mut delta: Vec<f64> = x.iter().zip(&x0).zip(&g).map(|((v, o), d)| v - step * d - o).collect();
        let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > budget.eps {
            let s = budget.eps / norm;
            delta.iter_mut().for_each(|v| *v *= s);
        }
        x = x0.iter().zip(&delta).map(|(o, d)| o + d).collect();
        taken += 1;
    }
    let out = flat_cloud(cloud, &x)?;
    let prediction = victim.predict(&out)?;
    let mut r = AttackResult::with_prediction(cloud, out, target, prediction, start.elapsed().as_secs_f64())?;
    r.iterations = taken;
    Ok(r)
}

