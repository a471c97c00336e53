use std::cmp::Ordering;

use super::{dist2, GeometryError, Point, Result};

/// Distance below which interpolation snaps to the coincident source point.
pub const SNAP_DISTANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Per-query neighbor lists, each sorted by distance then index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborIndex {
    lists: Vec<Vec<Neighbor>>,
}

impl NeighborIndex {
    pub fn from_lists(lists: Vec<Vec<Neighbor>>) -> Self {
        Self { lists }
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn indices(&self, query: usize) -> impl Iterator<Item = usize> + '_ {
        self.lists[query].iter().map(|n| n.index)
    }

    /// Rectangular groups of `width` indices; short lists repeat their first
    /// (nearest) entry.
    pub fn padded_indices(&self, width: usize) -> Vec<Vec<usize>> {
        self.lists
            .iter()
            .map(|l| {
                let mut g: Vec<usize> = l.iter().take(width).map(|n| n.index).collect();
                let first = g[0];
                g.resize(width, first);
                g
            })
            .collect()
    }
}

fn order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` smallest `(squared distance, index)` pairs, sorted.
fn k_smallest(mut cands: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if k < cands.len() {
        cands.select_nth_unstable_by(k, order);
        cands.truncate(k);
    }
    cands.sort_unstable_by(order);
    cands
}

fn to_neighbors(c: Vec<(f64, usize)>) -> Vec<Neighbor> {
    c.into_iter()
        .map(|(d2, index)| Neighbor {
            index,
            distance: d2.sqrt(),
        })
        .collect()
}

/// Brute-force k nearest neighbors; ties go to the lower source index.
pub fn knn(query: &[Point], source: &[Point], k: usize) -> Result<NeighborIndex> {
    if k == 0 || k > source.len() {
        return Err(GeometryError::InvalidCount {
            requested: k,
            available: source.len(),
        });
    }
    let lists = query
        .iter()
        .map(|q| {
            let cands = source.iter().enumerate().map(|(i, s)| (dist2(q, s), i)).collect();
            to_neighbors(k_smallest(cands, k))
        })
        .collect();
    Ok(NeighborIndex { lists })
}

/// k nearest neighbors of every point among the *other* points of the same set.
pub fn knn_graph(points: &[Point], k: usize) -> Result<NeighborIndex> {
    if k == 0 || k + 1 > points.len() {
        return Err(GeometryError::InvalidCount {
            requested: k + 1,
            available: points.len(),
        });
    }
    let lists = points
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let cands = points
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != qi)
                .map(|(i, s)| (dist2(q, s), i))
                .collect();
            to_neighbors(k_smallest(cands, k))
        })
        .collect();
    Ok(NeighborIndex { lists })
}

/// Up to `max_k` nearest sources within `radius` of each query.
///
/// A query with an empty ball falls back to its single nearest source. The
/// lists are not padded; see [`NeighborIndex::padded_indices`].
pub fn ball_query(query: &[Point], source: &[Point], radius: f64, max_k: usize) -> Result<NeighborIndex> {
    if !(radius > 0.0) {
        return Err(GeometryError::InvalidRadius(radius));
    }
    if max_k == 0 || source.is_empty() {
        return Err(GeometryError::InvalidCount {
            requested: max_k,
            available: source.len(),
        });
    }
    let r2 = radius * radius;
    let lists = query
        .iter()
        .map(|q| {
            let all: Vec<(f64, usize)> = source.iter().enumerate().map(|(i, s)| (dist2(q, s), i)).collect();
            let inside: Vec<(f64, usize)> = all.iter().copied().filter(|c| c.0 <= r2).collect();
            if inside.is_empty() {
                to_neighbors(k_smallest(all, 1))
            } else {
                to_neighbors(k_smallest(inside, max_k))
            }
        })
        .collect();
    Ok(NeighborIndex { lists })
}

/// Normalized inverse-distance weights of one query over its nearest sources.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpWeights {
    pub terms: Vec<(usize, f64)>,
}

/// Inverse-distance weights over the 3 nearest sources (fewer if the source
/// set is smaller). A neighbor closer than [`SNAP_DISTANCE`] takes weight 1.
pub fn interpolation_weights(query: &[Point], source: &[Point]) -> Result<Vec<InterpWeights>> {
    let k = source.len().min(3);
    let nn = knn(query, source, k)?;
    Ok(nn
        .lists()
        .iter()
        .map(|l| {
            if l[0].distance < SNAP_DISTANCE {
                return InterpWeights {
                    terms: vec![(l[0].index, 1.0)],
                };
            }
            let inv: Vec<f64> = l.iter().map(|n| 1.0 / n.distance).collect();
            let total: f64 = inv.iter().sum();
            InterpWeights {
                terms: l.iter().zip(&inv).map(|(n, w)| (n.index, w / total)).collect(),
            }
        })
        .collect())
}

/// Inverse-distance interpolation of row-major `features` (one row of
/// `width` values per source point) onto the query points.
pub fn interpolate_features(query: &[Point], source: &[Point], features: &[f64], width: usize) -> Result<Vec<f64>> {
    if source.len() < 3 {
        return Err(GeometryError::TooFewPoints {
            needed: 3,
            got: source.len(),
        });
    }
    if features.len() != source.len() * width {
        return Err(GeometryError::FeatureMismatch {
            rows: if width == 0 { 0 } else { features.len() / width },
            points: source.len(),
        });
    }
    let weights = interpolation_weights(query, source)?;
    let mut out = vec![0.0; query.len() * width];
    for (q, w) in weights.iter().enumerate() {
        let row = &mut out[q * width..(q + 1) * width];
        if let [(j, _)] = w.terms[..] {
            row.copy_from_slice(&features[j * width..(j + 1) * width]);
            continue;
        }
        for &(j, wj) in &w.terms {
            for (o, f) in row.iter_mut().zip(&features[j * width..(j + 1) * width]) {
                *o += wj * f;
            }
        }
    }
    Ok(out)
}
