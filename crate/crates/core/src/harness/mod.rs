//! Dataset I/O, the synthetic toy benchmark, checkpoints, experiment
//! configuration, evaluation and report emission.

mod checkpoint;
mod config;
mod dataset;
mod error;
mod eval;
mod report;
mod toy;

pub use checkpoint::{Manifest, ModelCheckpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AttackSection, DataSection, DefenseSection, EvalSection, ExperimentConfig, VictimSection, RESOLVED_CONFIG};
pub use dataset::{
    canonical_cloud, decode_packed, default_class_names, encode_packed, load_dataset, save_dataset, Dataset, DatasetFormat,
    CLASS_FILE, LABEL_FILE, PACKED_MAGIC, PACKED_VERSION,
};
pub use error::{HarnessError, HarnessResult};
pub use eval::{
    aggregate, alpha_sweep, evaluate_attack, evaluate_attack_observed, evaluation_targets, instance_defense, run_attack, AttackContext, AttackRecords, AttackSpec,
    EvalReport, EvalRow, InstanceRecord,
};
pub use report::{emit_report, report_csv, sweep_svg, AlphaSweep, ReportFormat, SweepMean, SweepPoint, CSV_HEADER};
pub use toy::{make_toy_dataset, random_rotation, ToyBenchmark, ToyConfig, ToyShape, TOY_SHAPES};

#[cfg(test)]
mod tests;
