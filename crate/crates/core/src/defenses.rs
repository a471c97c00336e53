//! Input purification applied before classification: random point dropping,
//! statistical outlier removal and re-centering.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ModelResult};
use crate::geometry::{dist, knn_graph, PointCloud};

/// A defense and its parameters, as named in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Defense {
    Srs { drop_ratio: f64, seed: u64 },
    Sor { k: usize, alpha: f64 },
    Recenter,
}

impl Defense {
    pub fn apply(&self, cloud: &PointCloud) -> ModelResult<PointCloud> {
        match *self {
            Self::Srs { drop_ratio, seed } => srs_defense(cloud, drop_ratio, seed),
            Self::Sor { k, alpha } => sor_defense(cloud, k, alpha),
            Self::Recenter => recenter_defense(cloud),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Srs { .. } => "srs",
            Self::Sor { .. } => "sor",
            Self::Recenter => "recenter",
        }
    }
}

/// Number of points SRS keeps: `⌈N·(1 − drop_ratio)⌉`, ignoring float fuzz.
pub fn srs_keep_count(n: usize, drop_ratio: f64) -> usize {
    (n as f64 * (1.0 - drop_ratio) - 1e-9).ceil().max(0.0) as usize
}

/// Keeps a uniformly random subset of the points, in their input order.
pub fn srs_defense(cloud: &PointCloud, drop_ratio: f64, seed: u64) -> ModelResult<PointCloud> {
    if !(0.0..1.0).contains(&drop_ratio) {
        return Err(ModelError::Config(format!("drop ratio must lie in [0, 1), got {drop_ratio}")));
    }
    let keep = srs_keep_count(cloud.len(), drop_ratio);
    if keep == 0 {
        return Err(ModelError::Config(format!("drop ratio {drop_ratio} leaves no points")));
    }
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(keep);
    order.sort_unstable();
    let pts = order.iter().map(|&i| cloud.points()[i]).collect();
    Ok(cloud.map_points(pts)?)
}

/// Mean distance from every point to its `k` nearest other points.
pub fn mean_knn_distances(cloud: &PointCloud, k: usize) -> ModelResult<Vec<f64>> {
    let pts = cloud.points();
    let graph = knn_graph(pts, k)?;
    Ok(graph
        .lists()
        .iter()
        .enumerate()
        .map(|(i, list)| list.iter().map(|n| dist(&pts[i], &pts[n.index])).sum::<f64>() / k as f64)
        .collect())
}

/// Statistical outlier removal: drops points whose mean kNN distance exceeds
/// `μ + alpha·σ` over the cloud's own mean kNN distances.
pub fn sor_defense(cloud: &PointCloud, k: usize, alpha: f64) -> ModelResult<PointCloud> {
    if k == 0 || k >= cloud.len() {
        return Err(ModelError::Config(format!("SOR needs 0 < k < N, got k = {k} for N = {}", cloud.len())));
    }
    let d = mean_knn_distances(cloud, k)?;
    let n = d.len() as f64;
    let mu = d.iter().sum::<f64>() / n;
    let sigma = (d.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
    let limit = mu + alpha * sigma;
    let pts = cloud.points().iter().zip(&d).filter(|(_, &v)| !(v > limit)).map(|(p, _)| *p).collect();
    Ok(cloud.map_points(pts)?)
}

/// Subtracts the centroid; no rescaling.
pub fn recenter_defense(cloud: &PointCloud) -> ModelResult<PointCloud> {
    let c = cloud.centroid();
    let pts = cloud.points().iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect();
    Ok(cloud.map_points(pts)?)
}
