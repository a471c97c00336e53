//! Minimal differentiable-operator substrate.
//!
//! Networks keep their parameters in a flat [`ParamStore`]; layers only hold
//! slot indices. Forward passes are read-only and return caches; backward
//! passes accumulate into a separate [`GradStore`], so a frozen model can be
//! differentiated with respect to its input without being borrowed mutably.

mod adam;
mod distance;
mod gradcheck;
mod layers;
mod loss;
mod params;
mod tensor;

pub use adam::{adam_update, Adam, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use distance::{chamfer_with_grad, hausdorff_with_grad, mean_squared_displacement, squared_displacement};
pub use gradcheck::{finite_difference_check, GradCheckReport, FD_FLOOR, FD_STEP};
pub use layers::{
    max_pool_backward, max_pool_groups, relu_backward_inplace, relu_inplace, ChannelNorm, Dense, Groups, LastLayer,
    Mlp, MlpCache, NormCache, PoolResult,
};
pub use loss::{argmax, softmax, softmax_cross_entropy};
pub use params::{GradStore, Network, Param, ParamShape, ParamStore};
pub use tensor::{Mat, Real};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
}
