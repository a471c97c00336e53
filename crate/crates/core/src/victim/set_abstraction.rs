use rand_chacha::ChaCha8Rng;

use crate::diffnet::{max_pool_backward, max_pool_groups, GradStore, Groups, LastLayer, Mat, Mlp, MlpCache, ParamStore, Real};
use crate::error::ModelResult;
use crate::geometry::{ball_query, canonical_seed, farthest_point_sample, Point};

/// Sample → group → shared MLP → max-pool stage of a hierarchical point network.
///
/// Centroids come from farthest point sampling seeded at the point nearest
/// the centroid of the input set. Each centroid groups the input points in
/// its ball (nearest first, capped at `neighbors`); grouped rows are the
/// neighbor's offset from the centroid followed by its input features.
#[derive(Debug, Clone, PartialEq)]
pub struct SetAbstraction {
    pub radius: f64,
    pub neighbors: usize,
    pub feature_width: usize,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct SaCache<T> {
    /// Indices (into the level input) of the sampled centroids.
    pub sampled: Vec<usize>,
    neighbor_of_row: Vec<usize>,
    center_of_row: Vec<usize>,
    mlp: MlpCache<T>,
    argmax: Vec<usize>,
    inputs: usize,
}

impl<T> SaCache<T> {
    pub fn rows(&self) -> usize {
        self.neighbor_of_row.len()
    }
}

impl SetAbstraction {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        feature_width: usize,
        radius: f64,
        neighbors: usize,
        widths: &[usize],
        normalize: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut all = vec![3 + feature_width];
        all.extend_from_slice(widths);
        Self {
            radius,
            neighbors,
            feature_width,
            mlp: Mlp::new(store, name, &all, LastLayer::Relu, normalize, rng),
        }
    }

    pub fn out_width(&self) -> usize {
        self.mlp.outputs()
    }

    /// Abstracts `coords` (with matching `xyz` rows and optional `feats`) into
    /// `m` centroids carrying pooled features.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        coords: &[Point],
        xyz: &Mat<T>,
        feats: Option<&Mat<T>>,
        m: usize,
    ) -> ModelResult<(Mat<T>, SaCache<T>)> {
        let sampled = farthest_point_sample(coords, m, canonical_seed(coords))?;
        let centers: Vec<Point> = sampled.iter().map(|&i| coords[i]).collect();
        let balls = ball_query(&centers, coords, self.radius, self.neighbors)?;
        let mut neighbor_of_row = Vec::new();
        let mut center_of_row = Vec::new();
        let mut sizes = Vec::with_capacity(m);
        for (g, list) in balls.lists().iter().enumerate() {
            sizes.push(list.len());
            for n in list {
                neighbor_of_row.push(n.index);
                center_of_row.push(sampled[g]);
            }
        }
        let width = 3 + self.feature_width;
        let mut rows = Mat::zeros(neighbor_of_row.len(), width);
        for (r, (&j, &c)) in neighbor_of_row.iter().zip(&center_of_row).enumerate() {
            let row = rows.row_mut(r);
            for a in 0..3 {
                row[a] = xyz.row(j)[a] - xyz.row(c)[a];
            }
            if let Some(f) = feats {
                row[3..].copy_from_slice(f.row(j));
            }
        }
        let mlp = self.mlp.forward_cached(store, rows)?;
        let groups = Groups::from_sizes(sizes);
        let pooled = max_pool_groups(mlp.output(), &groups)?;
        Ok((
            pooled.output,
            SaCache {
                sampled,
                neighbor_of_row,
                center_of_row,
                mlp,
                argmax: pooled.argmax,
                inputs: coords.len(),
            },
        ))
    }

    /// Returns gradients with respect to the level's input coordinates and
    /// input features, each only when requested.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &SaCache<T>,
        dout: &Mat<T>,
        grads: Option<&mut GradStore<T>>,
        need_xyz: bool,
        need_feats: bool,
    ) -> (Option<Mat<T>>, Option<Mat<T>>) {
        let rows = cache.neighbor_of_row.len();
        let drows = max_pool_backward(dout, &cache.argmax, rows);
        let need_input = need_xyz || (need_feats && self.feature_width > 0);
        let Some(drows) = self.mlp.backward(store, &cache.mlp, drows, grads, need_input) else {
            return (None, None);
        };
        let mut dxyz = need_xyz.then(|| Mat::zeros(cache.inputs, 3));
        let mut dfeat = (need_feats && self.feature_width > 0).then(|| Mat::zeros(cache.inputs, self.feature_width));
        for r in 0..rows {
            let (j, c) = (cache.neighbor_of_row[r], cache.center_of_row[r]);
            let d = drows.row(r);
            if let Some(dx) = dxyz.as_mut() {
                for a in 0..3 {
                    dx.row_mut(j)[a] += d[a];
                    dx.row_mut(c)[a] -= d[a];
                }
            }
            if let Some(df) = dfeat.as_mut() {
                for (acc, v) in df.row_mut(j).iter_mut().zip(&d[3..]) {
                    *acc += *v;
                }
            }
        }
        (dxyz, dfeat)
    }
}
