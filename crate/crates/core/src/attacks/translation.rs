use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, ModelResult};
use crate::geometry::PointCloud;

/// Rigid offset of the whole cloud: per axis a magnitude drawn from
/// `Uniform(0, eps)` with an independent random sign.
pub fn translation_attack(cloud: &PointCloud, eps: f64, seed: u64) -> ModelResult<PointCloud> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(ModelError::Config(format!("translation stride must be finite and non-negative, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offset = [0.0; 3];
    for o in &mut offset {
        let magnitude = rng.random_range(0.0..eps);
        *o = if rng.random_bool(0.5) { magnitude } else { -magnitude };
    }
    let pts = cloud.points().iter().map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]]).collect();
    Ok(cloud.map_points(pts)?)
}
