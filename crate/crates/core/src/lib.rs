//! Activity-aware health monitoring: a simulator of wearables choosing which
//! health metrics to compute each slot, a DDPG agent that learns the choice
//! from the wearer's activity and the device's CPU frequency, comparison
//! baselines and an experiment harness.
//!
//! The math, network and agent layers are generic over [`Scalar`]; the
//! aliases below fix them to `f64`, which is what the harness runs on.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod domain;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ImportanceMatrix = domain::ImportanceMatrix<f64>;
pub type DeviceSpec = domain::DeviceSpec<f64>;
pub type TaskSpec = domain::TaskSpec<f64>;
pub type WeightVector = domain::WeightVector<f64>;
pub type EnvConfig = env::EnvConfig<f64>;
pub type Env = env::Env<f64>;
pub type Mlp = nn::MlpParams<f64>;
