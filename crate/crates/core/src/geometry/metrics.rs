use super::{dist, dist2, GeometryError, Point, PointCloud, Result};

fn check_pair(a: &[Point], b: &[Point]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::Empty);
    }
    Ok(())
}

/// Mean Euclidean displacement between index-corresponding points.
pub fn paired_l2_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GeometryError::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let total: f64 = a.points().iter().zip(b.points()).map(|(p, q)| dist(p, q)).sum();
    Ok(total / a.len() as f64)
}

/// Distance from each point of `from` to its nearest point in `to`.
fn directed_nearest<'a>(from: &'a [Point], to: &'a [Point]) -> impl Iterator<Item = f64> + 'a {
    from.iter()
        .map(move |p| to.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min).sqrt())
}

/// Symmetric average of the mean (non-squared) nearest-neighbor distances.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_pair(a.points(), b.points())?;
    let ab: f64 = directed_nearest(a.points(), b.points()).sum::<f64>() / a.len() as f64;
    let ba: f64 = directed_nearest(b.points(), a.points()).sum::<f64>() / b.len() as f64;
    Ok(0.5 * (ab + ba))
}

/// Larger of the two directed Hausdorff distances.
pub fn hausdorff_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_pair(a.points(), b.points())?;
    let ab = directed_nearest(a.points(), b.points()).fold(0.0, f64::max);
    let ba = directed_nearest(b.points(), a.points()).fold(0.0, f64::max);
    Ok(ab.max(ba))
}

/// Distance from every point to its nearest other point, sorted ascending.
pub fn nearest_neighbor_distances(cloud: &PointCloud) -> Result<Vec<f64>> {
    let pts = cloud.points();
    if pts.len() < 2 {
        return Err(GeometryError::TooFewPoints {
            needed: 2,
            got: pts.len(),
        });
    }
    let mut out: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            pts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| dist2(p, q))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Pearson (non-excess) kurtosis `m4 / m2^2` of a sample.
pub fn kurtosis(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(GeometryError::TooFewPoints {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in values {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    // relative floor: float noise on an exactly regular cloud is not variance
    let floor = 1e-12 * mean.abs().max(f64::MIN_POSITIVE);
    if m2 <= floor * floor {
        return Err(GeometryError::UndefinedKurtosis);
    }
    Ok(m4 / (m2 * m2))
}

/// Kurtosis of the sorted nearest-neighbor distance distribution.
pub fn kurtosis_metric(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 4 {
        return Err(GeometryError::TooFewPoints {
            needed: 4,
            got: cloud.len(),
        });
    }
    kurtosis(&nearest_neighbor_distances(cloud)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[Point]) -> PointCloud {
        PointCloud::new(pts.to_vec()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        cloud(&(0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect::<Vec<_>>())
    }

    fn brute_nearest(p: &Point, set: &[Point]) -> f64 {
        let mut best = f64::INFINITY;
        for q in set {
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            if d < best {
                best = d;
            }
        }
        best
    }

    #[test]
    fn paired_l2_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_cloud(&mut rng, 16);
        assert_eq!(paired_l2_distance(&a, &a).unwrap(), 0.0);
        let shifted = cloud(&a.points().iter().map(|p| [p[0] + 0.3, p[1], p[2]]).collect::<Vec<_>>());
        assert!((paired_l2_distance(&a, &shifted).unwrap() - 0.3).abs() < 1e-12);
        let b = random_cloud(&mut rng, 16);
        let mut total = 0.0;
        for i in 0..16 {
            let (p, q) = (a.points()[i], b.points()[i]);
            total += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        }
        assert!((paired_l2_distance(&a, &b).unwrap() - total / 16.0).abs() < 1e-12);
        let short = random_cloud(&mut rng, 3);
        assert!(matches!(paired_l2_distance(&a, &short), Err(GeometryError::SizeMismatch { .. })));
    }

    #[test]
    fn chamfer_and_hausdorff_small_cases() {
        let o = cloud(&[[0.0, 0.0, 0.0]]);
        let x = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&o, &o).unwrap(), 0.0);
        assert_eq!(chamfer_distance(&o, &x).unwrap(), 1.0);
        let two = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(hausdorff_distance(&two, &o).unwrap(), 1.0);
        assert_eq!(hausdorff_distance(&two, &two).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_and_hausdorff_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let a = random_cloud(&mut rng, 32);
            let b = random_cloud(&mut rng, 29);
            let ab: Vec<f64> = a.points().iter().map(|p| brute_nearest(p, b.points())).collect();
            let ba: Vec<f64> = b.points().iter().map(|p| brute_nearest(p, a.points())).collect();
            let ch = 0.5 * (ab.iter().sum::<f64>() / 32.0 + ba.iter().sum::<f64>() / 29.0);
            let hd = ab.iter().chain(&ba).fold(0.0f64, |m, &v| m.max(v));
            assert!((chamfer_distance(&a, &b).unwrap() - ch).abs() < 1e-9);
            assert!((hausdorff_distance(&a, &b).unwrap() - hd).abs() < 1e-9);
            assert_eq!(chamfer_distance(&a, &b).unwrap(), chamfer_distance(&b, &a).unwrap());
            assert_eq!(hausdorff_distance(&a, &b).unwrap(), hausdorff_distance(&b, &a).unwrap());
        }
    }

    #[test]
    fn nearest_distance_cases() {
        let pair = cloud(&[[0.0, 0.0, 0.0], [0.0, 2.5, 0.0]]);
        assert_eq!(nearest_neighbor_distances(&pair).unwrap(), vec![2.5, 2.5]);
        let chain = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert_eq!(nearest_neighbor_distances(&chain).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(nearest_neighbor_distances(&cloud(&[[0.0; 3]])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_cloud(&mut rng, 16);
        let mut want: Vec<f64> = (0..16)
            .map(|i| {
                let others: Vec<Point> = (0..16).filter(|&j| j != i).map(|j| c.points()[j]).collect();
                brute_nearest(&c.points()[i], &others)
            })
            .collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let got = nearest_neighbor_distances(&c).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn kurtosis_of_one_to_four() {
        // mean 2.5; m2 = 1.25; m4 = 2.5625; m4 / m2^2 = 1.64
        let v = [1.0, 2.0, 3.0, 4.0];
        let n = 4.0;
        let mean = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        assert!((m4 / (m2 * m2) - 1.64).abs() < 1e-12);
        assert!((kurtosis(&v).unwrap() - 1.64).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut w = v.to_vec();
        for _ in 0..5 {
            w.shuffle(&mut rng);
            assert_eq!(kurtosis(&w).unwrap(), kurtosis(&v).unwrap());
        }
    }

    #[test]
    fn regular_cloud_has_undefined_kurtosis() {
        let grid: Vec<Point> = (0..4).flat_map(|i| (0..4).map(move |j| [i as f64 * 0.1, j as f64 * 0.1, 0.0])).collect();
        assert_eq!(kurtosis_metric(&cloud(&grid)), Err(GeometryError::UndefinedKurtosis));
        assert!(kurtosis_metric(&cloud(&grid[..3])).is_err());
    }

    #[test]
    fn kurtosis_is_scale_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_cloud(&mut rng, 50);
        let k = kurtosis_metric(&c).unwrap();
        for s in [0.01, 3.0, 250.0] {
            let scaled = cloud(&c.points().iter().map(|p| p.map(|v| v * s)).collect::<Vec<_>>());
            assert!((kurtosis_metric(&scaled).unwrap() - k).abs() < 1e-9 * k);
        }
    }
}
