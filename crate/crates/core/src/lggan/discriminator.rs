use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::GraphConv;
use crate::diffnet::{
    max_pool_backward, max_pool_groups, relu_backward_inplace, relu_inplace, Dense, GradStore, Groups, LastLayer, Mat,
    Mlp, MlpCache, Network, ParamStore, Real,
};
use crate::error::{ModelError, ModelResult};
use crate::geometry::{canonical_seed, farthest_point_sample, knn, knn_graph, NeighborIndex, Point};
use crate::victim::matrix_points;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Pointwise head widths (input width 3 implied).
    pub head_widths: Vec<usize>,
    /// Neighbors for head aggregation, seed pooling and the graph.
    pub k: usize,
    /// Seeds kept by the pool block: `N / pool_divisor`.
    pub pool_divisor: usize,
    pub residual_blocks: usize,
    /// Score every seed patch and average instead of pooling globally.
    #[serde(default)]
    pub patch_scores: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            head_widths: vec![32, 64],
            k: 8,
            pool_divisor: 4,
            residual_blocks: 2,
            patch_scores: false,
        }
    }
}

/// Graph patch discriminator producing one score, or one per seed patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    config: DiscriminatorConfig,
    store: ParamStore<T>,
    head: Mlp,
    blocks: Vec<(GraphConv, GraphConv)>,
    score: Dense,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Mat<T>,
    hidden: Mat<T>,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorCache<T> {
    points: usize,
    head: MlpCache<T>,
    local_rows: Vec<usize>,
    local_argmax: Vec<usize>,
    seed_rows: Vec<usize>,
    seed_argmax: Vec<usize>,
    graph: NeighborIndex,
    blocks: Vec<BlockCache<T>>,
    pooled_input: Mat<T>,
    global_argmax: Option<Vec<usize>>,
    score_input: Mat<T>,
}

fn flat_indices(index: &NeighborIndex) -> (Vec<usize>, Groups) {
    let rows: Vec<usize> = index.lists().iter().flat_map(|l| l.iter().map(|n| n.index)).collect();
    (rows, Groups::from_sizes(index.lists().iter().map(Vec::len)))
}

impl<T: Real> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> ModelResult<Self> {
        if config.head_widths.is_empty() || config.k == 0 || config.pool_divisor == 0 {
            return Err(ModelError::Config("discriminator needs head widths, k ≥ 1 and a pool divisor".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut widths = vec![3];
        widths.extend_from_slice(&config.head_widths);
        let head = Mlp::new(&mut store, "head", &widths, LastLayer::Relu, false, &mut rng);
        let w = head.outputs();
        // residual branches start small so each block begins near identity
        let blocks = (0..config.residual_blocks)
            .map(|b| {
                (
                    GraphConv::new(&mut store, &format!("block.{b}.conv0"), w, w, config.k, 1.0, &mut rng),
                    GraphConv::new(&mut store, &format!("block.{b}.conv1"), w, w, config.k, 0.1, &mut rng),
                )
            })
            .collect();
        let score = Dense::new(&mut store, "score", w, 1, &mut rng);
        Ok(Self {
            config,
            store,
            head,
            blocks,
            score,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn score(&self, xyz: &Mat<T>) -> ModelResult<Vec<T>> {
        Ok(self.forward(xyz)?.0)
    }

    /// Scores of a cloud: a single value, or one per seed in patch mode.
    pub fn forward(&self, xyz: &Mat<T>) -> ModelResult<(Vec<T>, DiscriminatorCache<T>)> {
        let n = xyz.rows();
        if n == 0 {
            return Err(ModelError::Config("empty input cloud".into()));
        }
        let coords = matrix_points(xyz);
        let k = self.config.k.min(n);
        let head = self.head.forward_cached(&self.store, xyz.clone())?;

        // local aggregation over each point's k nearest points (itself included)
        let (local_rows, local_groups) = flat_indices(&knn(&coords, &coords, k)?);
        let local = max_pool_groups(&head.output().gather_rows(&local_rows), &local_groups)?;

        // pool block: FPS seeds, each max-pooling its k nearest points
        let m = (n / self.config.pool_divisor).max(1);
        let seeds = farthest_point_sample(&coords, m, canonical_seed(&coords))?;
        let seed_coords: Vec<Point> = seeds.iter().map(|&s| coords[s]).collect();
        let (seed_rows, seed_groups) = flat_indices(&knn(&seed_coords, &coords, k)?);
        let pooled = max_pool_groups(&local.output.gather_rows(&seed_rows), &seed_groups)?;

        let graph = if m > 1 {
            knn_graph(&seed_coords, self.config.k.min(m - 1))?
        } else {
            NeighborIndex::from_lists(vec![Vec::new()])
        };
        let mut s = pooled.output;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (c0, c1) in &self.blocks {
            let mut h = c0.forward(&self.store, &graph, &s)?;
            relu_inplace(&mut h);
            let mut next = c1.forward(&self.store, &graph, &h)?;
            next.add_assign(&s);
            blocks.push(BlockCache { input: s, hidden: h });
            s = next;
        }
        let (score_input, global_argmax) = if self.config.patch_scores {
            (s.clone(), None)
        } else {
            let g = max_pool_groups(&s, &Groups::uniform(1, m))?;
            (g.output, Some(g.argmax))
        };
        let scores = self.score.forward(&self.store, &score_input)?.into_vec();
        Ok((
            scores,
            DiscriminatorCache {
                points: n,
                head,
                local_rows,
                local_argmax: local.argmax,
                seed_rows,
                seed_argmax: pooled.argmax,
                graph,
                blocks,
                pooled_input: s,
                global_argmax,
                score_input,
            },
        ))
    }

    /// Backpropagates score gradients; returns the coordinate gradient when
    /// `need_input` is set.
    pub fn backward(&self, cache: &DiscriminatorCache<T>, dscores: &[T], mut grads: Option<&mut GradStore<T>>, need_input: bool) -> Option<Mat<T>> {
        let ds = Mat::from_vec(dscores.len(), 1, dscores.to_vec());
        let dsi = self
            .score
            .backward(&self.store, &cache.score_input, &ds, grads.as_deref_mut(), true)
            .expect("input grad");
        let m = cache.pooled_input.rows();
        let mut d = match &cache.global_argmax {
            Some(argmax) => max_pool_backward(&dsi, argmax, m),
            None => dsi,
        };
        for ((c0, c1), bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            // s_out = s + conv1(relu(conv0(s)))
            let mut dh = c1.backward(&self.store, &cache.graph, &bc.hidden, &d, grads.as_deref_mut());
            relu_backward_inplace(&mut dh, &bc.hidden);
            let ds_in = c0.backward(&self.store, &cache.graph, &bc.input, &dh, grads.as_deref_mut());
            d.add_assign(&ds_in);
        }
        let dseed_rows = max_pool_backward(&d, &cache.seed_argmax, cache.seed_rows.len());
        let dlocal = dseed_rows.scatter_add_rows(&cache.seed_rows, cache.points);
        let dlocal_rows = max_pool_backward(&dlocal, &cache.local_argmax, cache.local_rows.len());
        let dhead = dlocal_rows.scatter_add_rows(&cache.local_rows, cache.points);
        self.head.backward(&self.store, &cache.head, dhead, grads, need_input)
    }
}

impl<T: Real> Network<T> for Discriminator<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }
}
