//! MiCuNet: a mixed-curvature multitask fusion network for speech-derived
//! features, with a CNN baseline, metrics, data formats and an experiment
//! runner.

pub mod data;
mod error;
pub mod encoders;
pub mod fpenv;
pub mod fusion;
pub mod gradcheck;
pub mod heads;
pub mod manifold;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod train;
mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
