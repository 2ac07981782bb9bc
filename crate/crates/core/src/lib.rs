//! Damage recovery for a hexapod robot by transferability-guided
//! multi-objective search, with the baselines it is compared against.
//!
//! The numeric kernels are generic over [`scalar::Scalar`]; the aliases below
//! fix them to `f64`, which is what the algorithm drivers and the harness use.

pub mod algorithms;
pub mod error;
pub mod gait;
pub mod harness;
pub mod jsonl;
pub mod measurement;
pub mod moea;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};

pub type Morphology = sim::Morphology<f64>;
pub type Trajectory = sim::Trajectory<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type GaitConfig = gait::GaitConfig<f64>;
pub type Regressor = transfer::Regressor<f64>;
pub type SvrConfig = transfer::SvrConfig<f64>;

pub type Morphology32 = sim::Morphology<f32>;
pub type Trajectory32 = sim::Trajectory<f32>;
pub type SimConfig32 = sim::SimConfig<f32>;
