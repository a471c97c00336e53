use serde::{Deserialize, Serialize};

use crate::diffnet::{chamfer_with_grad, mean_squared_displacement, softmax_cross_entropy, Mat, Real};
use crate::error::ModelResult;

/// Where the balance weight `alpha` sits in the generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `alpha·L_cls + L_rec + beta·L_dis`: larger alpha buys success with distortion.
    Classification,
    /// `L_cls + alpha·L_rec + beta·L_dis`.
    Reconstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructionMode {
    /// Mean squared per-point displacement.
    L2,
    /// Summed squared displacement `‖P̂ − P‖²`: `L2` times the point count,
    /// which moves the useful range of alpha up by that factor.
    #[serde(rename = "l2-sum")]
    L2Sum,
    Chamfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub weighting: Weighting,
    pub reconstruction: ReconstructionMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            weighting: Weighting::Classification,
            reconstruction: ReconstructionMode::L2,
        }
    }
}

impl LossWeights {
    /// Multipliers of `(L_cls, L_rec, L_dis)`.
    pub fn multipliers(&self) -> (f64, f64, f64) {
        match self.weighting {
            Weighting::Classification => (self.alpha, 1.0, self.beta),
            Weighting::Reconstruction => (1.0, self.alpha, self.beta),
        }
    }
}

/// Loss value and its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLoss {
    pub total: f64,
    pub cls: f64,
    pub rec: f64,
    pub dis: f64,
}

/// Gradients of the weighted generator loss.
#[derive(Debug, Clone)]
pub struct GeneratorLossGrads<T> {
    pub logits: Vec<T>,
    /// Reconstruction part of the adversarial-coordinate gradient.
    pub adv: Mat<T>,
    pub scores: Vec<T>,
}

/// `‖1 − D(P̂)‖²`, averaged over patch scores.
pub fn dis_loss<T: Real>(fake_scores: &[T]) -> (T, Vec<T>) {
    let n = T::lit(fake_scores.len() as f64);
    let loss = fake_scores.iter().map(|&s| (T::one() - s) * (T::one() - s)).sum::<T>() / n;
    let grad = fake_scores.iter().map(|&s| T::lit(-2.0) * (T::one() - s) / n).collect();
    (loss, grad)
}

/// `½‖D(P̂)‖² + ½‖1 − D(P)‖²`, each term averaged over patch scores.
/// Returns the loss and gradients with respect to fake and real scores.
pub fn loss_discriminator<T: Real>(fake_scores: &[T], real_scores: &[T]) -> (T, Vec<T>, Vec<T>) {
    let half = T::lit(0.5);
    let (nf, nr) = (T::lit(fake_scores.len() as f64), T::lit(real_scores.len() as f64));
    let fake = fake_scores.iter().map(|&s| s * s).sum::<T>() / nf;
    let real = real_scores.iter().map(|&s| (T::one() - s) * (T::one() - s)).sum::<T>() / nr;
    let dfake = fake_scores.iter().map(|&s| s / nf).collect();
    let dreal = real_scores.iter().map(|&s| -(T::one() - s) / nr).collect();
    (half * fake + half * real, dfake, dreal)
}

pub fn reconstruction_loss<T: Real>(adv: &Mat<T>, clean: &Mat<T>, mode: ReconstructionMode) -> (T, Mat<T>) {
    match mode {
        ReconstructionMode::L2 => mean_squared_displacement(adv, clean),
        ReconstructionMode::L2Sum => {
            let (loss, mut grad) = mean_squared_displacement(adv, clean);
            let n = T::lit(adv.rows() as f64);
            grad.scale(n);
            (loss * n, grad)
        }
        ReconstructionMode::Chamfer => chamfer_with_grad(adv, clean),
    }
}

/// Weighted generator objective from victim logits on the adversarial cloud,
/// the clean cloud and discriminator scores of the adversarial cloud.
pub fn loss_generator<T: Real>(
    logits: &[T],
    adv: &Mat<T>,
    clean: &Mat<T>,
    fake_scores: &[T],
    target: usize,
    weights: &LossWeights,
) -> ModelResult<(GeneratorLoss, GeneratorLossGrads<T>)> {
    let (wc, wr, wd) = weights.multipliers();
    let (cls, mut dlogits) = softmax_cross_entropy(logits, target)?;
    let (rec, mut dadv) = reconstruction_loss(adv, clean, weights.reconstruction);
    let (dis, mut dscores) = if fake_scores.is_empty() {
        (T::zero(), Vec::new())
    } else {
        dis_loss(fake_scores)
    };
    dlogits.iter_mut().for_each(|v| *v *= T::lit(wc));
    dadv.scale(T::lit(wr));
    dscores.iter_mut().for_each(|v| *v *= T::lit(wd));
    let (cls, rec, dis) = (cls.f64(), rec.f64(), dis.f64());
    Ok((
        GeneratorLoss {
            total: wc * cls + wr * rec + wd * dis,
            cls,
            rec,
            dis,
        },
        GeneratorLossGrads {
            logits: dlogits,
            adv: dadv,
            scores: dscores,
        },
    ))
}
