/// Central-difference step used by every gradient check.
pub const FD_STEP: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub coordinates: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `f` around `x`.
///
/// Per coordinate the error is `|a - n| / max(|a|, |n|, FD_FLOOR)`; the
/// check passes iff the largest error is below `tolerance`. Failures are
/// reported, never raised.
pub fn finite_difference_check(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], tolerance: f64) -> GradCheckReport {
    let mut worst = 0.0f64;
    let mut worst_index = None;
    let mut probe = x.to_vec();
    let len_ok = analytic.len() == x.len();
    for i in 0..x.len().min(analytic.len()) {
        let orig = probe[i];
        probe[i] = orig + FD_STEP;
        let up = f(&probe);
        probe[i] = orig - FD_STEP;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        if !(err <= worst) {
            worst = if err.is_nan() { f64::INFINITY } else { err };
            worst_index = Some(i);
        }
    }
    GradCheckReport {
        max_relative_error: worst,
        worst_index,
        coordinates: x.len(),
        tolerance,
        passed: len_ok && worst < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_agrees_to_machine_precision() {
        let w = [0.5, -2.0, 3.25];
        let rep = finite_difference_check(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum(), &[1.0, 2.0, 3.0], &w, 1e-4);
        assert!(rep.passed);
        assert!(rep.max_relative_error < 1e-9);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let rep = finite_difference_check(|x| x[0] * x[0], &[1.5], &[2.0], 1e-4);
        assert!(!rep.passed);
        assert_eq!(rep.worst_index, Some(0));
    }
}
