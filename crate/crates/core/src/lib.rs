//! Test-driven characterization and modeling of noisy quantum circuits.
//!
//! The pipeline: build characterization test circuits for a device, run
//! them on a [`backend::Backend`], estimate readout and depolarizing
//! parameters, compose a [`noise::CompositeNoiseModel`], and score it on
//! application circuits by total variation distance.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix `f64`.

pub mod applications;
pub mod backend;
pub mod characterization;
pub mod circuit;
pub mod distribution;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod noise;
pub mod rng;
mod scalar;
pub mod simulator;

pub use circuit::{validate, Circuit, Coupling, DeviceTopology, GateKind};
pub use distribution::{Counts, LabeledCounts};
pub use error::{Error, Result};
pub use noise::{Granularity, ModelVariant, NoiseFlags};
pub use scalar::{is_probability, Real};

pub type NoiseModel = noise::CompositeNoiseModel<f64>;
pub type Readout = noise::ReadoutModel<f64>;
pub type Distribution = distribution::OutcomeDistribution<f64>;
pub type Estimate = estimation::EstimationResult<f64>;
pub type CharacterizationRecord = characterization::Characterization<f64>;
pub type Score = evaluation::ModelScore<f64>;
pub type GroundTruth = backend::MockGroundTruth<f64>;
pub type Mock = backend::MockBackend<f64>;
