use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::set_abstraction::{SaCache, SetAbstraction};
use crate::diffnet::{
    max_pool_backward, max_pool_groups, Dense, GradStore, Groups, LastLayer, Mat, Mlp, MlpCache, Network, ParamStore,
    Real,
};
use crate::error::{ModelError, ModelResult};
use crate::geometry::Point;

/// One set-abstraction level: `(m, r, [l₁, ..., l_d])` plus a neighbor cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub centroids: usize,
    pub radius: f64,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    pub widths: Vec<usize>,
}

fn default_neighbors() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointNetPpConfig {
    pub classes: usize,
    pub levels: Vec<LevelSpec>,
    /// Widths of the global level's MLP over `[xyz, features]` of the last
    /// level's centroids.
    pub global_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub dropout: f64,
}

impl Default for PointNetPpConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            levels: vec![
                LevelSpec {
                    centroids: 64,
                    radius: 0.2,
                    neighbors: 32,
                    widths: vec![32, 32, 64],
                },
                LevelSpec {
                    centroids: 16,
                    radius: 0.4,
                    neighbors: 32,
                    widths: vec![64, 64, 128],
                },
            ],
            global_widths: vec![128, 256],
            head_widths: vec![128],
            normalize: false,
            dropout: 0.0,
        }
    }
}

/// Hierarchical classifier: set-abstraction levels, a global pooling level and
/// a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct PointNetPp<T> {
    config: PointNetPpConfig,
    store: ParamStore<T>,
    levels: Vec<SetAbstraction>,
    global: Mlp,
    head: Option<Mlp>,
    classifier: Dense,
}

#[derive(Debug, Clone)]
pub struct PointNetPpCache<T> {
    inputs: usize,
    /// Original point indices of each level's input set.
    level_inputs: Vec<Vec<usize>>,
    levels: Vec<SaCache<T>>,
    /// Original indices of the last level's centroids.
    last: Vec<usize>,
    global: MlpCache<T>,
    argmax: Vec<usize>,
    head: Option<MlpCache<T>>,
    mask: Option<Vec<T>>,
    hidden: Mat<T>,
}

pub(crate) fn coords_of<T: Real>(xyz: &Mat<T>) -> Vec<Point> {
    (0..xyz.rows())
        .map(|r| {
            let row = xyz.row(r);
            [row[0].f64(), row[1].f64(), row[2].f64()]
        })
        .collect()
}

impl<T> PointNetPpCache<T> {
    pub fn levels_len(&self) -> usize {
        self.levels.len()
    }

    /// Number of grouped neighbor rows at level `l`.
    pub fn level_rows(&self, l: usize) -> usize {
        self.levels[l].rows()
    }
}

impl<T: Real> PointNetPp<T> {
    pub fn new(config: PointNetPpConfig, seed: u64) -> ModelResult<Self> {
        if config.classes < 2 || config.global_widths.is_empty() {
            return Err(ModelError::Config("pointnet++ needs ≥2 classes and a global level".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        for (i, l) in config.levels.iter().enumerate() {
            if !(l.radius > 0.0) || l.centroids == 0 || l.neighbors == 0 || l.widths.is_empty() {
                return Err(ModelError::Config(format!("invalid set-abstraction level {i}")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut feature_width = 0;
        let mut levels = Vec::with_capacity(config.levels.len());
        for (i, l) in config.levels.iter().enumerate() {
            let sa = SetAbstraction::new(
                &mut store,
                &format!("sa{i}"),
                feature_width,
                l.radius,
                l.neighbors,
                &l.widths,
                config.normalize,
                &mut rng,
            );
            feature_width = sa.out_width();
            levels.push(sa);
        }
        let mut widths = vec![3 + feature_width];
        widths.extend_from_slice(&config.global_widths);
        let global = Mlp::new(&mut store, "global", &widths, LastLayer::Relu, config.normalize, &mut rng);
        let head = (!config.head_widths.is_empty()).then(|| {
            let mut w = vec![global.outputs()];
            w.extend_from_slice(&config.head_widths);
            Mlp::new(&mut store, "head", &w, LastLayer::Relu, false, &mut rng)
        });
        let hidden = head.as_ref().map_or(global.outputs(), Mlp::outputs);
        let classifier = Dense::new(&mut store, "classifier", hidden, config.classes, &mut rng);
        Ok(Self {
            config,
            store,
            levels,
            global,
            head,
            classifier,
        })
    }

    pub fn config(&self) -> &PointNetPpConfig {
        &self.config
    }

    pub fn logits(&self, xyz: &Mat<T>) -> ModelResult<Vec<T>> {
        Ok(self.forward(xyz, None)?.0)
    }

    pub fn forward(&self, xyz: &Mat<T>, dropout_rng: Option<&mut ChaCha8Rng>) -> ModelResult<(Vec<T>, PointNetPpCache<T>)> {
        let n = xyz.rows();
        if n == 0 {
            return Err(ModelError::Config("empty input cloud".into()));
        }
        let all_coords = coords_of(xyz);
        let mut idx: Vec<usize> = (0..n).collect();
        let mut feats: Option<Mat<T>> = None;
        let mut level_inputs = Vec::with_capacity(self.levels.len());
        let mut caches = Vec::with_capacity(self.levels.len());
        for (sa, spec) in self.levels.iter().zip(&self.config.levels) {
            let coords: Vec<Point> = idx.iter().map(|&i| all_coords[i]).collect();
            let local = xyz.gather_rows(&idx);
            let m = spec.centroids.min(idx.len());
            let (out, cache) = sa.forward(&self.store, &coords, &local, feats.as_ref(), m)?;
            let next: Vec<usize> = cache.sampled.iter().map(|&s| idx[s]).collect();
            level_inputs.push(std::mem::replace(&mut idx, next));
            caches.push(cache);
            feats = Some(out);
        }
        let centers = xyz.gather_rows(&idx);
        let rows = match &feats {
            Some(f) => Mat::hcat(&[&centers, f]),
            None => centers,
        };
        let global = self.global.forward_cached(&self.store, rows)?;
        let pool = max_pool_groups(global.output(), &Groups::uniform(1, idx.len()))?;
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
            PointNetPpCache {
                inputs: n,
                level_inputs,
                levels: caches,
                last: idx,
                global,
                argmax: pool.argmax,
                head: hc,
                mask,
                hidden,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &PointNetPpCache<T>,
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
        let drows_out = max_pool_backward(&dpool, &cache.argmax, cache.last.len());
        let has_levels = !self.levels.is_empty();
        let drows = self
            .global
            .backward(&self.store, &cache.global, drows_out, grads.as_deref_mut(), need_input || has_levels)?;
        let mut dxyz = need_input.then(|| drows.columns(0, 3).scatter_add_rows(&cache.last, cache.inputs));
        let mut dfeat = has_levels.then(|| drows.columns(3, drows.cols() - 3));
        for l in (0..self.levels.len()).rev() {
            let sa = &self.levels[l];
            let df = dfeat.take().expect("feature gradient");
            let need_feats = l > 0;
            let (dx, dprev) = sa.backward(&self.store, &cache.levels[l], &df, grads.as_deref_mut(), need_input, need_feats);
            if let (Some(acc), Some(dx)) = (dxyz.as_mut(), dx) {
                acc.add_assign(&dx.scatter_add_rows(&cache.level_inputs[l], cache.inputs));
            }
            dfeat = dprev;
            if !need_input && dfeat.is_none() {
                break;
            }
        }
        dxyz
    }
}

impl<T: Real> Network<T> for PointNetPp<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }
}
