use super::{centroid, dist2, GeometryError, Point, Result};

/// Greedy maximin subset selection starting from `seed_index`.
///
/// Each new index maximizes the distance to the closest already-selected
/// point; ties go to the lowest index.
pub fn farthest_point_sample(points: &[Point], m: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m < 1 || m > n {
        return Err(GeometryError::InvalidCount {
            requested: m,
            available: n,
        });
    }
    if seed_index >= n {
        return Err(GeometryError::InvalidCount {
            requested: seed_index + 1,
            available: n,
        });
    }
    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut current = seed_index;
    loop {
        selected.push(current);
        taken[current] = true;
        if selected.len() == m {
            break;
        }
        let anchor = points[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = dist2(&points[i], &anchor);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > best_d {
                best_d = nearest[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}

/// Index of the point closest to the centroid (lowest index on ties).
///
/// Used as the FPS seed inside networks so that sampling does not depend on
/// the storage order of the points.
pub fn canonical_seed(points: &[Point]) -> usize {
    let c = centroid(points);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(p, &c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Recomputes every candidate's distance to the selected set from scratch.
    fn exhaustive_greedy(points: &[Point], m: usize, seed: usize) -> Vec<usize> {
        let mut sel = vec![seed];
        while sel.len() < m {
            let mut best = None;
            let mut best_d = -1.0;
            for i in 0..points.len() {
                if sel.contains(&i) {
                    continue;
                }
                let d = sel.iter().map(|&s| dist(&points[i], &points[s])).fold(f64::INFINITY, f64::min);
                if d > best_d {
                    best_d = d;
                    best = Some(i);
                }
            }
            sel.push(best.unwrap());
        }
        sel
    }

    fn line(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| [x, 0.0, 0.0]).collect()
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let pts = line(&[0.0, 0.3, 2.0, -1.0, 5.0]);
        let mut idx = farthest_point_sample(&pts, 5, 2).unwrap();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_sample_is_seed() {
        let pts = line(&[0.0, 1.0, 2.0]);
        assert_eq!(farthest_point_sample(&pts, 1, 1).unwrap(), vec![1]);
    }

    #[test]
    fn collinear_example() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0, 10.0]);
        let got = farthest_point_sample(&pts, 3, 0).unwrap();
        assert_eq!(got, exhaustive_greedy(&pts, 3, 0));
        assert_eq!(got, vec![0, 4, 3]);
    }

    #[test]
    fn matches_exhaustive_greedy_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 7, 19, 32] {
            let pts: Vec<Point> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            for m in 1..=n {
                assert_eq!(farthest_point_sample(&pts, m, 0).unwrap(), exhaustive_greedy(&pts, m, 0));
            }
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let pts = line(&[0.0, 1.0]);
        assert!(farthest_point_sample(&pts, 0, 0).is_err());
        assert!(farthest_point_sample(&pts, 3, 0).is_err());
        assert!(farthest_point_sample(&pts, 1, 2).is_err());
    }

    #[test]
    fn canonical_seed_picks_point_nearest_centroid() {
        let pts = line(&[-1.0, 0.1, 1.0, 5.0]);
        // centroid x = 1.275
        assert_eq!(canonical_seed(&pts), 2);
    }
}
