use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cloud_matrix, Victim, VictimConfig};
use crate::diffnet::{argmax, softmax_cross_entropy, Adam, Network, Real};
use crate::error::{ModelError, ModelResult};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VictimTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VictimTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedVictim {
    pub model: Victim<f32>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub history: Vec<EpochStats>,
}

/// Fraction of `clouds` whose prediction equals their label.
pub fn accuracy<T: Real>(model: &Victim<T>, clouds: &[PointCloud]) -> ModelResult<f64> {
    if clouds.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for c in clouds {
        if Some(model.predict(c)?) == c.label() {
            hits += 1;
        }
    }
    Ok(hits as f64 / clouds.len() as f64)
}

fn label_of(c: &PointCloud, classes: usize) -> ModelResult<usize> {
    let label = c
        .label()
        .ok_or_else(|| ModelError::Config("training cloud without a label".into()))?;
    if label >= classes {
        return Err(ModelError::TargetOutOfRange { target: label, classes });
    }
    Ok(label)
}

/// Minibatch Adam on softmax cross-entropy. Initialization, shuffling and
/// dropout all derive from `train.seed`.
pub fn train_victim(config: &VictimConfig, train: &VictimTrainConfig, train_set: &[PointCloud], test_set: &[PointCloud]) -> ModelResult<TrainedVictim> {
    if train_set.is_empty() {
        return Err(ModelError::Config("empty training set".into()));
    }
    let classes = config.classes();
    let labels = train_set.iter().map(|c| label_of(c, classes)).collect::<ModelResult<Vec<_>>>()?;
    for c in test_set {
        label_of(c, classes)?;
    }
    let mut model = Victim::<f32>::new(config, train.seed)?;
    let mut adam = Adam::new(model.store(), train.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x5eed_0f_7a1e);
    let inputs: Vec<_> = train_set.iter().map(cloud_matrix::<f32>).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(train.epochs);
    let batch = train.batch_size.max(1);
    for epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut hits) = (0.0, 0usize);
        for chunk in order.chunks(batch) {
            let mut grads = model.store().zero_grads();
            for &i in chunk {
                let (logits, cache) = model.forward(&inputs[i], Some(&mut rng))?;
                let diverged = || ModelError::Diverged {
                    epoch,
                    reason: format!("non-finite loss on training cloud {i}"),
                };
                let (loss, dlogits) = softmax_cross_entropy(&logits, labels[i]).map_err(|_| diverged())?;
                if !loss.is_finite() {
                    return Err(diverged());
                }
                total += loss as f64;
                hits += usize::from(argmax(&logits) == labels[i]);
                model.backward(&cache, &dlogits, Some(&mut grads), false);
            }
            grads.scale(1.0 / chunk.len() as f32);
            adam.step(model.store_mut(), &grads).map_err(|e| ModelError::Diverged {
                epoch,
                reason: e.to_string(),
            })?;
        }
        history.push(EpochStats {
            epoch,
            loss: total / train_set.len() as f64,
            train_accuracy: hits as f64 / train_set.len() as f64,
        });
    }
    Ok(TrainedVictim {
        train_accuracy: accuracy(&model, train_set)?,
        test_accuracy: accuracy(&model, test_set)?,
        model,
        history,
    })
}
