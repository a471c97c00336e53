//! Label-guided adversarial point-cloud generator.
//!
//! A generator maps a clean cloud and a one-hot target label to an
//! adversarial cloud in a single forward pass. It is trained against a frozen
//! victim with a least-squares GAN discriminator over local graph patches.

mod attack;
mod discriminator;
mod generator;
mod graph;
mod label;
mod loss;
mod train;


pub use attack::attack_lggan;
pub use discriminator::{Discriminator, DiscriminatorCache, DiscriminatorConfig};
pub use generator::{
    DecoderCache, EncoderCache, EncoderLevel, FeaturePyramid, Generator, GeneratorCache, GeneratorConfig, LabelConcat, OutputMode,
    PyramidLevel,
};
pub use graph::{graph_conv, graph_conv_backward, GraphConv};
pub use label::LabelCode;
pub use loss::{
    dis_loss, loss_discriminator, loss_generator, reconstruction_loss, GeneratorLoss, GeneratorLossGrads, LossWeights,
    ReconstructionMode, Weighting,
};
pub use train::{sample_target, success_rate, train_lggan, EpochLog, HyperParams, LgganConfig, LgganRun};
