use std::time::Instant;

use super::generator::Generator;
use crate::attacks::AttackResult;
use crate::diffnet::{argmax, Real};
use crate::error::ModelResult;
use crate::geometry::PointCloud;
use crate::victim::{cloud_matrix, matrix_points, Victim};

/// One generator pass plus one victim pass on its output.
pub fn attack_lggan<T: Real>(generator: &Generator<T>, victim: &Victim<T>, cloud: &PointCloud, target: usize) -> ModelResult<AttackResult> {
    let start = Instant::now();
    let adv = generator.generate(&cloud_matrix(cloud), target)?;
    let prediction = argmax(&victim.logits(&adv)?);
    let seconds = start.elapsed().as_secs_f64();
    let out = cloud.map_points(matrix_points(&adv))?;
    AttackResult::with_prediction(cloud, out, target, prediction, seconds)
}
