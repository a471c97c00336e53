use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::discriminator::{Discriminator, DiscriminatorConfig};
use super::generator::{Generator, GeneratorConfig};
use super::loss::{loss_discriminator, loss_generator, LossWeights};
use crate::diffnet::{argmax, Adam, Mat, Network, ParamStore};
use crate::error::{ModelError, ModelResult};
use crate::geometry::PointCloud;
use crate::victim::{cloud_matrix, Victim};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    #[serde(flatten)]
    pub loss: LossWeights,
    pub lr_g: f64,
    pub lr_d: f64,
    /// Both learning rates are multiplied by this after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Validation clouds scored after every epoch.
    pub validation_size: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            loss: LossWeights::default(),
            lr_g: 1e-3,
            lr_d: 1e-5,
            lr_decay: 1.0,
            batch_size: 4,
            epochs: 200,
            seed: 0,
            validation_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LgganConfig {
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    #[serde(default)]
    pub hyper: HyperParams,
}

/// Per-epoch means of the loss components plus validation success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_cls: f64,
    pub l_rec: f64,
    pub l_dis: f64,
    pub l_d: f64,
    pub val_success: f64,
}

#[derive(Debug, Clone)]
pub struct LgganRun {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub log: Vec<EpochLog>,
    /// Set when training stopped on a non-finite loss or gradient; the
    /// networks then hold the last parameters that produced finite values.
    pub abort: Option<String>,
}

/// A target drawn uniformly from every class except `truth`.
pub fn sample_target(rng: &mut ChaCha8Rng, truth: usize, classes: usize) -> usize {
    let t = rng.random_range(0..classes - 1);
    if t >= truth {
        t + 1
    } else {
        t
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Targeted success rate of `generator` on `clouds` with fixed `targets`.
pub fn success_rate(generator: &Generator<f32>, victim: &Victim<f32>, clouds: &[PointCloud], targets: &[usize]) -> ModelResult<f64> {
    if clouds.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (c, &t) in clouds.iter().zip(targets) {
        let adv = generator.generate(&cloud_matrix(c), t)?;
        hits += usize::from(argmax(&victim.logits(&adv)?) == t);
    }
    Ok(hits as f64 / clouds.len() as f64)
}

fn labels(clouds: &[PointCloud], classes: usize) -> ModelResult<Vec<usize>> {
    clouds
        .iter()
        .map(|c| match c.label() {
            Some(l) if l < classes => Ok(l),
            Some(l) => Err(ModelError::TargetOutOfRange { target: l, classes }),
            None => Err(ModelError::Config("training cloud without a label".into())),
        })
        .collect()
}

fn step_failure<E: std::fmt::Display>(stepped: Result<(), E>, store: &ParamStore<f32>, which: &str, epoch: usize) -> Option<String> {
    match stepped {
        Err(e) => Some(format!("{which} step in epoch {epoch}: {e}")),
        Ok(()) if store.params().iter().any(|p| p.value.iter().any(|v| !v.is_finite())) => {
            Some(format!("{which} parameters left the finite range in epoch {epoch}"))
        }
        Ok(()) => None,
    }
}

struct Sample {
    clean: Mat<f32>,
    target: usize,
}

/// Alternating least-squares GAN training against a frozen victim. Each
/// minibatch takes one discriminator step, then one generator step scored by
/// the updated discriminator. `on_epoch` sees every log record as it is made.
pub fn train_lggan(
    victim: &Victim<f32>,
    train: &[PointCloud],
    validation: &[PointCloud],
    config: &LgganConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> ModelResult<LgganRun> {
    let hp = &config.hyper;
    let classes = config.generator.classes;
    if victim.classes() != classes {
        return Err(ModelError::Config(format!(
            "victim has {} classes, generator {}",
            victim.classes(),
            classes
        )));
    }
    if train.is_empty() || hp.batch_size == 0 {
        return Err(ModelError::Config("empty training set or zero batch size".into()));
    }
    if !(hp.lr_decay > 0.0 && hp.lr_decay.is_finite()) {
        return Err(ModelError::Config(format!("learning-rate decay must be positive, got {}", hp.lr_decay)));
    }
    let truths = labels(train, classes)?;
    let val = &validation[..hp.validation_size.min(validation.len())];
    let val_truths = labels(val, classes)?;
    let mut val_rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(0x7a11_da7e));
    let val_targets: Vec<usize> = val_truths.iter().map(|&l| sample_target(&mut val_rng, l, classes)).collect();

    let mut generator = Generator::<f32>::new(config.generator.clone(), hp.seed)?;
    let mut discriminator = Discriminator::<f32>::new(config.discriminator.clone(), hp.seed.wrapping_add(1))?;
    let mut adam_g = Adam::new(generator.store(), hp.lr_g);
    let mut adam_d = Adam::new(discriminator.store(), hp.lr_d);
    let inputs: Vec<Mat<f32>> = train.iter().map(cloud_matrix).collect();
    let (_, _, wd) = hp.loss.multipliers();
    let mut log = Vec::with_capacity(hp.epochs);
    let mut abort = None;

    'epochs: for epoch in 0..hp.epochs {
        let decay = hp.lr_decay.powi(epoch as i32);
        adam_g.set_lr(hp.lr_g * decay);
        adam_d.set_lr(hp.lr_d * decay);
        let mut rng = epoch_rng(hp.seed, epoch);
        let targets: Vec<usize> = truths.iter().map(|&l| sample_target(&mut rng, l, classes)).collect();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        for chunk in order.chunks(hp.batch_size) {
            let bs = chunk.len() as f32;
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| Sample {
                    clean: inputs[i].clone(),
                    target: targets[i],
                })
                .collect();
            let fakes = batch
                .iter()
                .map(|s| generator.forward(&s.clean, s.target))
                .collect::<ModelResult<Vec<_>>>()?;

            // discriminator step
            let mut dgrads = discriminator.store().zero_grads();
            let mut l_d = 0.0;
            for (s, (fake, _)) in batch.iter().zip(&fakes) {
                let (fs, fc) = discriminator.forward(fake)?;
                let (rs, rc) = discriminator.forward(&s.clean)?;
                let (l, dfake, dreal) = loss_discriminator(&fs, &rs);
                l_d += l as f64;
                discriminator.backward(&fc, &dfake, Some(&mut dgrads), false);
                discriminator.backward(&rc, &dreal, Some(&mut dgrads), false);
            }
            if !l_d.is_finite() {
                abort = Some(format!("non-finite discriminator loss in epoch {epoch}"));
                break 'epochs;
            }
            dgrads.scale(1.0 / bs);
            let d_before = discriminator.store().clone();
            let stepped = adam_d.step(discriminator.store_mut(), &dgrads);
            if let Some(reason) = step_failure(stepped, discriminator.store(), "discriminator", epoch) {
                *discriminator.store_mut() = d_before;
                abort = Some(reason);
                break 'epochs;
            }

            // generator step against the updated discriminator
            let mut ggrads = generator.store().zero_grads();
            let mut parts = [0.0f64; 3];
            let mut failure = None;
            for (s, (fake, gcache)) in batch.iter().zip(&fakes) {
                let (logits, vcache) = victim.forward(fake, None)?;
                let (scores, dcache) = if wd != 0.0 {
                    let (sc, c) = discriminator.forward(fake)?;
                    (sc, Some(c))
                } else {
                    (Vec::new(), None)
                };
                let (loss, grads) = match loss_generator(&logits, fake, &s.clean, &scores, s.target, &hp.loss) {
                    Ok(v) if v.0.total.is_finite() => v,
                    _ => {
                        failure = Some(format!("non-finite generator loss in epoch {epoch}"));
                        break;
                    }
                };
                parts[0] += loss.cls;
                parts[1] += loss.rec;
                parts[2] += loss.dis;
                let mut dadv = grads.adv;
                dadv.add_assign(&victim.backward(&vcache, &grads.logits, None, true).expect("input grad"));
                if let Some(c) = &dcache {
                    dadv.add_assign(&discriminator.backward(c, &grads.scores, None, true).expect("input grad"));
                }
                generator.backward(gcache, &dadv, &mut ggrads);
            }
            if failure.is_none() {
                ggrads.scale(1.0 / bs);
                let g_before = generator.store().clone();
                let stepped = adam_g.step(generator.store_mut(), &ggrads);
                failure = step_failure(stepped, generator.store(), "generator", epoch);
                if failure.is_some() {
                    *generator.store_mut() = g_before;
                }
            }
            if let Some(f) = failure {
                *discriminator.store_mut() = d_before;
                abort = Some(f);
                break 'epochs;
            }
            for (acc, v) in sums.iter_mut().zip([parts[0], parts[1], parts[2], l_d]) {
                *acc += v;
            }
        }
        let n = train.len() as f64;
        let record = EpochLog {
            epoch,
            l_cls: sums[0] / n,
            l_rec: sums[1] / n,
            l_dis: sums[2] / n,
            l_d: sums[3] / n,
            val_success: success_rate(&generator, victim, val, &val_targets)?,
        };
        on_epoch(&record);
        log.push(record);
    }
    Ok(LgganRun {
        generator,
        discriminator,
        log,
        abort,
    })
}
