//! Point-cloud classifiers under attack.

mod pointnet;
mod pointnetpp;
mod set_abstraction;
mod train;

#[cfg(test)]
mod tests;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use pointnet::{PointNet, PointNetCache, PointNetConfig};
pub use pointnetpp::{LevelSpec, PointNetPp, PointNetPpCache, PointNetPpConfig};
pub use set_abstraction::{SaCache, SetAbstraction};
pub use train::{accuracy, train_victim, EpochStats, TrainedVictim, VictimTrainConfig};

use crate::diffnet::{argmax, softmax_cross_entropy, GradStore, Mat, Network, ParamStore, Real};
use crate::error::{ModelError, ModelResult};
use crate::geometry::{Point, PointCloud};

/// Architecture and hyperparameters of a victim, tagged by architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum VictimConfig {
    PointNet(PointNetConfig),
    PointNetPp(PointNetPpConfig),
}

impl Default for VictimConfig {
    fn default() -> Self {
        Self::PointNet(PointNetConfig::default())
    }
}

impl VictimConfig {
    pub fn arch_tag(&self) -> &'static str {
        match self {
            Self::PointNet(_) => "pointnet",
            Self::PointNetPp(_) => "pointnetpp",
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Self::PointNet(c) => c.classes,
            Self::PointNetPp(c) => c.classes,
        }
    }

    pub fn with_classes(mut self, classes: usize) -> Self {
        match &mut self {
            Self::PointNet(c) => c.classes = classes,
            Self::PointNetPp(c) => c.classes = classes,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Victim<T> {
    PointNet(PointNet<T>),
    PointNetPp(PointNetPp<T>),
}

#[derive(Debug, Clone)]
pub enum VictimCache<T> {
    PointNet(PointNetCache<T>),
    PointNetPp(PointNetPpCache<T>),
}

/// Cloud coordinates as an `N × 3` matrix.
pub fn cloud_matrix<T: Real>(cloud: &PointCloud) -> Mat<T> {
    let data = cloud.points().iter().flat_map(|p| p.iter().map(|&v| T::lit(v))).collect();
    Mat::from_vec(cloud.len(), 3, data)
}

/// Rows of an `N × 3` matrix as points.
pub fn matrix_points<T: Real>(xyz: &Mat<T>) -> Vec<Point> {
    pointnetpp::coords_of(xyz)
}

impl<T: Real> Victim<T> {
    pub fn new(config: &VictimConfig, seed: u64) -> ModelResult<Self> {
        Ok(match config {
            VictimConfig::PointNet(c) => Self::PointNet(PointNet::new(c.clone(), seed)?),
            VictimConfig::PointNetPp(c) => Self::PointNetPp(PointNetPp::new(c.clone(), seed)?),
        })
    }

    pub fn config(&self) -> VictimConfig {
        match self {
            Self::PointNet(m) => VictimConfig::PointNet(m.config().clone()),
            Self::PointNetPp(m) => VictimConfig::PointNetPp(m.config().clone()),
        }
    }

    pub fn arch_tag(&self) -> &'static str {
        match self {
            Self::PointNet(_) => "pointnet",
            Self::PointNetPp(_) => "pointnetpp",
        }
    }

    pub fn classes(&self) -> usize {
        self.config().classes()
    }

    pub fn logits(&self, xyz: &Mat<T>) -> ModelResult<Vec<T>> {
        match self {
            Self::PointNet(m) => m.logits(xyz),
            Self::PointNetPp(m) => m.logits(xyz),
        }
    }

    pub fn cloud_logits(&self, cloud: &PointCloud) -> ModelResult<Vec<T>> {
        self.logits(&cloud_matrix(cloud))
    }

    pub fn predict(&self, cloud: &PointCloud) -> ModelResult<usize> {
        Ok(argmax(&self.cloud_logits(cloud)?))
    }

    /// Forward pass keeping activations for [`Victim::backward`].
    pub fn forward(&self, xyz: &Mat<T>, dropout_rng: Option<&mut ChaCha8Rng>) -> ModelResult<(Vec<T>, VictimCache<T>)> {
        Ok(match self {
            Self::PointNet(m) => {
                let (l, c) = m.forward(xyz, dropout_rng)?;
                (l, VictimCache::PointNet(c))
            }
            Self::PointNetPp(m) => {
                let (l, c) = m.forward(xyz, dropout_rng)?;
                (l, VictimCache::PointNetPp(c))
            }
        })
    }

    /// Backpropagates logit gradients into `grads` (if given) and returns the
    /// coordinate gradient when `need_input` is set.
    pub fn backward(&self, cache: &VictimCache<T>, dlogits: &[T], grads: Option<&mut GradStore<T>>, need_input: bool) -> Option<Mat<T>> {
        match (self, cache) {
            (Self::PointNet(m), VictimCache::PointNet(c)) => m.backward(c, dlogits, grads, need_input),
            (Self::PointNetPp(m), VictimCache::PointNetPp(c)) => m.backward(c, dlogits, grads, need_input),
            _ => panic!("victim cache from a different architecture"),
        }
    }

    /// Cross-entropy of `label` and its gradient with respect to the coordinates.
    pub fn loss_and_input_gradient(&self, xyz: &Mat<T>, label: usize) -> ModelResult<(T, Mat<T>)> {
        let classes = self.classes();
        if label >= classes {
            return Err(ModelError::TargetOutOfRange { target: label, classes });
        }
        let (logits, cache) = self.forward(xyz, None)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, label)?;
        let grad = self.backward(&cache, &dlogits, None, true).expect("input gradient");
        Ok((loss, grad))
    }

    pub fn input_gradient(&self, cloud: &PointCloud, label: usize) -> ModelResult<Vec<Point>> {
        let (_, g) = self.loss_and_input_gradient(&cloud_matrix(cloud), label)?;
        Ok(matrix_points(&g))
    }

    pub fn cast<U: Real>(&self) -> Victim<U> {
        let mut out = Victim::<U>::new(&self.config(), 0).expect("config already validated");
        *out.store_mut() = self.store().cast();
        out
    }
}

impl<T: Real> Network<T> for Victim<T> {
    fn store(&self) -> &ParamStore<T> {
        match self {
            Self::PointNet(m) => m.store(),
            Self::PointNetPp(m) => m.store(),
        }
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        match self {
            Self::PointNet(m) => m.store_mut(),
            Self::PointNetPp(m) => m.store_mut(),
        }
    }
}
