//! Deterministic point-set kernels: normalization, sampling, neighbor
//! queries, interpolation weights, set distances and the kurtosis metric.
//!
//! Everything here is non-differentiable and works in `f64`. Networks convert
//! coordinates into their own scalar type after the index structures are
//! built.

mod metrics;
mod neighbors;
mod sampling;

pub use metrics::{
    chamfer_distance, hausdorff_distance, kurtosis, kurtosis_metric, nearest_neighbor_distances,
    paired_l2_distance,
};
pub use neighbors::{
    ball_query, interpolate_features, interpolation_weights, knn, knn_graph, InterpWeights,
    Neighbor, NeighborIndex, SNAP_DISTANCE,
};
pub use sampling::{canonical_seed, farthest_point_sample};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single 3D coordinate.
pub type Point = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    Empty,
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("requested {requested} points but only {available} are available")]
    InvalidCount { requested: usize, available: usize },
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("operation needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point count mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("feature rows ({rows}) do not match source points ({points})")]
    FeatureMismatch { rows: usize, points: usize },
    #[error("kurtosis undefined: nearest-neighbor distances have zero variance")]
    UndefinedKurtosis,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// N×3 coordinates with an optional class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point>,
    label: Option<usize>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some(index) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite { index });
        }
        Ok(Self { points, label: None })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn set_label(&mut self, label: Option<usize>) {
        self.label = label;
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        centroid(&self.points)
    }

    /// Rebuilds the cloud from a new set of points, keeping the label.
    pub fn map_points(&self, points: Vec<Point>) -> Result<Self> {
        let mut out = Self::new(points)?;
        out.label = self.label;
        Ok(out)
    }

    /// Flattened `x0 y0 z0 x1 ...` coordinates.
    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// Rounds every coordinate through `f32`, the storage precision of datasets.
    pub fn quantized(&self) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| [p[0] as f32 as f64, p[1] as f32 as f64, p[2] as f32 as f64])
            .collect();
        Self {
            points,
            label: self.label,
        }
    }
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    c.map(|v| v / n)
}

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    dist2(a, b).sqrt()
}

/// Centers the bounding box at the origin and scales its longest edge to 1.
///
/// Zero-extent clouds are translated only.
pub fn normalize_unit_cube(cloud: &PointCloud) -> Result<PointCloud> {
    let points = cloud.points();
    if let Some(index) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(GeometryError::NonFinite { index });
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mid = [0, 1, 2].map(|a| (lo[a] + hi[a]) / 2.0);
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let scale = if extent > 0.0 { extent } else { 1.0 };
    let out = points
        .iter()
        .map(|p| [0, 1, 2].map(|a| (p[a] - mid[a]) / scale))
        .collect();
    cloud.map_points(out)
}
