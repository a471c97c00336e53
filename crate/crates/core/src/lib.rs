//! Targeted adversarial attacks on point-cloud classifiers.
//!
//! The crate bundles a label-guided generative attacker ([`lggan`]), the
//! classifiers it attacks ([`victim`]), gradient and optimization baselines
//! ([`attacks`]), input-purification defenses ([`defenses`]), perturbation
//! metrics ([`geometry`]) and the experiment harness behind the `pcadv` CLI
//! ([`harness`]).

pub mod attacks;
pub mod defenses;
pub mod diffnet;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lggan;
pub mod victim;
