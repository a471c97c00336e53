use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::{
    max_pool_backward, max_pool_groups, Dense, GradStore, Groups, LastLayer, Mat, Mlp, MlpCache, Network, ParamStore,
    Real,
};
use crate::error::{ModelError, ModelResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointNetConfig {
    pub classes: usize,
    /// Widths of the shared per-point MLP (input width 3 is implied).
    pub point_widths: Vec<usize>,
    /// Hidden widths of the classification head.
    pub head_widths: Vec<usize>,
    /// Learn a 3×3 input alignment transform.
    #[serde(default)]
    pub input_transform: bool,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub dropout: f64,
}

impl Default for PointNetConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            point_widths: vec![64, 64, 64, 128, 1024],
            head_widths: vec![512, 256],
            input_transform: false,
            normalize: false,
            dropout: 0.0,
        }
    }
}

/// Small PointNet predicting a 3×3 transform added to the identity.
#[derive(Debug, Clone, PartialEq)]
struct InputTransform {
    points: Mlp,
    head: Mlp,
}

#[derive(Debug, Clone)]
struct TransformCache<T> {
    points: MlpCache<T>,
    argmax: Vec<usize>,
    head: MlpCache<T>,
    matrix: Vec<T>,
    input: Mat<T>,
}

/// Shared per-point MLP, global max pool and dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct PointNet<T> {
    config: PointNetConfig,
    store: ParamStore<T>,
    transform: Option<InputTransform>,
    points: Mlp,
    head: Option<Mlp>,
    classifier: Dense,
}

#[derive(Debug, Clone)]
pub struct PointNetCache<T> {
    transform: Option<TransformCache<T>>,
    points: MlpCache<T>,
    argmax: Vec<usize>,
    head: Option<MlpCache<T>>,
    mask: Option<Vec<T>>,
    hidden: Mat<T>,
}

impl<T: Real> PointNet<T> {
    pub fn new(config: PointNetConfig, seed: u64) -> ModelResult<Self> {
        if config.classes < 2 || config.point_widths.is_empty() {
            return Err(ModelError::Config("pointnet needs ≥2 classes and ≥1 point layer".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let transform = config.input_transform.then(|| {
            let points = Mlp::new(&mut store, "tnet.points", &[3, 64, 128, 1024], LastLayer::Relu, config.normalize, &mut rng);
            let head = Mlp::new(&mut store, "tnet.head", &[1024, 512, 256, 9], LastLayer::Linear, false, &mut rng);
            // start at the identity transform
            let last = *head.layers().last().expect("layer");
            store.params_mut()[last.weight].value.iter_mut().for_each(|v| *v = T::zero());
            InputTransform { points, head }
        });
        let mut widths = vec![3];
        widths.extend_from_slice(&config.point_widths);
        let points = Mlp::new(&mut store, "points", &widths, LastLayer::Relu, config.normalize, &mut rng);
        let global = points.outputs();
        let head = (!config.head_widths.is_empty()).then(|| {
            let mut w = vec![global];
            w.extend_from_slice(&config.head_widths);
            Mlp::new(&mut store, "head", &w, LastLayer::Relu, false, &mut rng)
        });
        let hidden = head.as_ref().map_or(global, Mlp::outputs);
        let classifier = Dense::new(&mut store, "classifier", hidden, config.classes, &mut rng);
        Ok(Self {
            config,
            store,
            transform,
            points,
            head,
            classifier,
        })
    }

    pub fn config(&self) -> &PointNetConfig {
        &self.config
    }

    pub fn logits(&self, xyz: &Mat<T>) -> ModelResult<Vec<T>> {
        Ok(self.forward(xyz, None)?.0)
    }

    /// Forward pass; `dropout_rng` enables training-mode dropout before the
    /// classifier.
    pub fn forward(&self, xyz: &Mat<T>, dropout_rng: Option<&mut ChaCha8Rng>) -> ModelResult<(Vec<T>, PointNetCache<T>)> {
        let n = xyz.rows();
        if n == 0 {
            return Err(ModelError::Config("empty input cloud".into()));
        }
        let all = Groups::uniform(1, n);
        let (aligned, tcache) = match &self.transform {
            Some(t) => {
                let pc = t.points.forward_cached(&self.store, xyz.clone())?;
                let pool = max_pool_groups(pc.output(), &all)?;
                let hc = t.head.forward_cached(&self.store, pool.output)?;
                let mut matrix = hc.output().data().to_vec();
                for d in 0..3 {
                    matrix[d * 4] += T::one();
                }
                let aligned = xyz.matmul(&matrix, 3);
                let cache = TransformCache {
                    points: pc,
                    argmax: pool.argmax,
                    head: hc,
                    matrix,
                    input: xyz.clone(),
                };
                (aligned, Some(cache))
            }
            None => (xyz.clone(), None),
        };
        let pc = self.points.forward_cached(&self.store, aligned)?;
        let pool = max_pool_groups(pc.output(), &all)?;
        let (mut hidden, hc) = match &self.head {
            Some(h) => {
                let c = h.forward_cached(&self.store, pool.output)?;
                (c.output().clone(), Some(c))
            }
            None => (pool.output, None),
        };
        let mask = match dropout_rng {
            Some(rng) if self.config.dropout > 0.0 => {
                let keep = 1.0 - self.config.dropout;
                let m: Vec<T> = (0..hidden.cols())
                    .map(|_| if rng.random::<f64>() < keep { T::lit(1.0 / keep) } else { T::zero() })
                    .collect();
                for (v, s) in hidden.data_mut().iter_mut().zip(&m) {
                    *v *= *s;
                }
                Some(m)
            }
            _ => None,
        };
        let logits = self.classifier.forward(&self.store, &hidden)?.into_vec();
        Ok((
            logits,
            PointNetCache {
                transform: tcache,
                points: pc,
                argmax: pool.argmax,
                head: hc,
                mask,
                hidden,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &PointNetCache<T>,
        dlogits: &[T],
        mut grads: Option<&mut GradStore<T>>,
        need_input: bool,
    ) -> Option<Mat<T>> {
        let dl = Mat::from_vec(1, dlogits.len(), dlogits.to_vec());
        let mut dh = self
            .classifier
            .backward(&self.store, &cache.hidden, &dl, grads.as_deref_mut(), true)
            .expect("input grad requested");
        if let Some(m) = &cache.mask {
            for (v, s) in dh.data_mut().iter_mut().zip(m) {
                *v *= *s;
            }
        }
        let dpool = match (&self.head, &cache.head) {
            (Some(h), Some(c)) => h.backward(&self.store, c, dh, grads.as_deref_mut(), true).expect("input grad"),
            _ => dh,
        };
        let n = cache.points.output().rows();
        let dpts = max_pool_backward(&dpool, &cache.argmax, n);
        let need_aligned = need_input || self.transform.is_some();
        let daligned = self.points.backward(&self.store, &cache.points, dpts, grads.as_deref_mut(), need_aligned)?;
        let (Some(t), Some(tc)) = (&self.transform, &cache.transform) else {
            return Some(daligned);
        };
        // aligned = input · M
        let mut dmatrix = vec![T::zero(); 9];
        tc.input.accumulate_outer(&daligned, &mut dmatrix);
        let dhead = Mat::from_vec(1, 9, dmatrix);
        let dtpool = t.head.backward(&self.store, &tc.head, dhead, grads.as_deref_mut(), true).expect("input grad");
        let dtpts = max_pool_backward(&dtpool, &tc.argmax, n);
        let dt_in = t.points.backward(&self.store, &tc.points, dtpts, grads, need_input);
        if !need_input {
            return None;
        }
        let mut dx = daligned.matmul_transposed(&tc.matrix, 3);
        if let Some(d) = dt_in {
            dx.add_assign(&d);
        }
        Some(dx)
    }
}

impl<T: Real> Network<T> for PointNet<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }
}
