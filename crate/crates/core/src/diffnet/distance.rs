//! Set distances between a moving `N × 3` cloud and a fixed reference, with
//! (sub)gradients with respect to the moving cloud.
//!
//! Nearest-neighbor assignments are treated as constants, so gradients are
//! exact away from assignment ties. A coincident pair has zero subgradient.

use super::{Mat, Real};

fn row_dist2<T: Real>(a: &[T], b: &[T]) -> T {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

fn nearest<T: Real>(p: &[T], set: &Mat<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for j in 0..set.rows() {
        let d = row_dist2(p, set.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Adds `scale · (a − b) / ‖a − b‖` into `g`.
fn add_unit<T: Real>(g: &mut [T], a: &[T], b: &[T], d: T, scale: T) {
    if d > T::zero() {
        for k in 0..3 {
            g[k] += scale * (a[k] - b[k]) / d;
        }
    }
}

/// Mean squared per-point displacement between index-paired clouds.
pub fn mean_squared_displacement<T: Real>(moving: &Mat<T>, fixed: &Mat<T>) -> (T, Mat<T>) {
    assert_eq!((moving.rows(), moving.cols()), (fixed.rows(), fixed.cols()));
    let n = T::lit(moving.rows() as f64);
    let mut grad = Mat::zeros(moving.rows(), 3);
    let mut total = T::zero();
    for i in 0..moving.rows() {
        for k in 0..3 {
            let d = moving.row(i)[k] - fixed.row(i)[k];
            total += d * d;
            grad.row_mut(i)[k] = T::lit(2.0) * d / n;
        }
    }
    (total / n, grad)
}

/// Sum of squared per-point displacements.
pub fn squared_displacement<T: Real>(moving: &Mat<T>, fixed: &Mat<T>) -> (T, Mat<T>) {
    let (mean, mut grad) = mean_squared_displacement(moving, fixed);
    let n = T::lit(moving.rows() as f64);
    grad.scale(n);
    (mean * n, grad)
}

/// Chamfer distance (symmetric average of mean nearest distances).
pub fn chamfer_with_grad<T: Real>(moving: &Mat<T>, fixed: &Mat<T>) -> (T, Mat<T>) {
    let (na, nb) = (T::lit(moving.rows() as f64), T::lit(fixed.rows() as f64));
    let half = T::lit(0.5);
    let mut grad = Mat::zeros(moving.rows(), 3);
    let (mut ab, mut ba) = (T::zero(), T::zero());
    for i in 0..moving.rows() {
        let (j, d2) = nearest(moving.row(i), fixed);
        let d = d2.sqrt();
        ab += d;
        add_unit(grad.row_mut(i), moving.row(i), fixed.row(j), d, half / na);
    }
    for j in 0..fixed.rows() {
        let (i, d2) = nearest(fixed.row(j), moving);
        let d = d2.sqrt();
        ba += d;
        let a = moving.row(i).to_vec();
        add_unit(grad.row_mut(i), &a, fixed.row(j), d, half / nb);
    }
    (half * (ab / na + ba / nb), grad)
}

/// Hausdorff distance; the subgradient flows through the single pair that
/// attains the maximum.
pub fn hausdorff_with_grad<T: Real>(moving: &Mat<T>, fixed: &Mat<T>) -> (T, Mat<T>) {
    let mut grad = Mat::zeros(moving.rows(), 3);
    // (distance², moving index, fixed index)
    let mut worst = (T::neg_infinity(), 0, 0);
    for i in 0..moving.rows() {
        let (j, d2) = nearest(moving.row(i), fixed);
        if d2 > worst.0 {
            worst = (d2, i, j);
        }
    }
    for j in 0..fixed.rows() {
        let (i, d2) = nearest(fixed.row(j), moving);
        if d2 > worst.0 {
            worst = (d2, i, j);
        }
    }
    let (d2, i, j) = worst;
    let d = d2.sqrt();
    let a = moving.row(i).to_vec();
    add_unit(grad.row_mut(i), &a, fixed.row(j), d, T::one());
    (d, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::finite_difference_check;
    use crate::geometry::{chamfer_distance, hausdorff_distance, PointCloud};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Mat<f64> {
        Mat::from_vec(n, 3, (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn cloud(m: &Mat<f64>) -> PointCloud {
        PointCloud::new((0..m.rows()).map(|r| [m.row(r)[0], m.row(r)[1], m.row(r)[2]]).collect()).unwrap()
    }

    #[test]
    fn values_match_geometry_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 7);
        let b = random(&mut rng, 5);
        assert!((chamfer_with_grad(&a, &b).0 - chamfer_distance(&cloud(&a), &cloud(&b)).unwrap()).abs() < 1e-12);
        assert!((hausdorff_with_grad(&a, &b).0 - hausdorff_distance(&cloud(&a), &cloud(&b)).unwrap()).abs() < 1e-12);
        let c = random(&mut rng, 7);
        let (msd, _) = mean_squared_displacement(&a, &c);
        let want: f64 = (0..7).map(|i| (0..3).map(|k| (a.row(i)[k] - c.row(i)[k]).powi(2)).sum::<f64>()).sum::<f64>() / 7.0;
        assert!((msd - want).abs() < 1e-12);
        assert!((squared_displacement(&a, &c).0 - 7.0 * want).abs() < 1e-12);
    }

    #[test]
    fn gradients_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 6);
        let b = random(&mut rng, 5);
        let c = random(&mut rng, 6);
        type Dist = fn(&Mat<f64>, &Mat<f64>) -> (f64, Mat<f64>);
        let cases: [(Dist, &Mat<f64>); 4] = [
            (mean_squared_displacement, &c),
            (squared_displacement, &c),
            (chamfer_with_grad, &b),
            (hausdorff_with_grad, &b),
        ];
        for (f, fixed) in cases {
            let (_, g) = f(&a, fixed);
            let report = finite_difference_check(|x| f(&Mat::from_vec(6, 3, x.to_vec()), fixed).0, a.data(), g.data(), 1e-4);
            assert!(report.passed, "{report:?}");
        }
    }

    #[test]
    fn identical_clouds_have_zero_distance_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 4);
        for f in [chamfer_with_grad::<f64>, hausdorff_with_grad, mean_squared_displacement] {
            let (d, g) = f(&a, &a);
            assert_eq!(d, 0.0);
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }
}
