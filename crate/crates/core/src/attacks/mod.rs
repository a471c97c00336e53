//! Gradient and optimization baselines, and the rigid translation attack.
//!
//! Every attack is a pure function of the victim and the input cloud.

mod budget;
mod cw;
mod gradient;
mod result;
mod translation;

pub use budget::AttackBudget;
pub use cw::{cw_attack, DistanceMode};
pub use gradient::{fgsm_targeted, ifgm_targeted};
pub use result::AttackResult;
pub use translation::translation_attack;
