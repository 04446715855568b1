//! Performance modelling for data-parallel neural network training with a
//! parameter server.
//!
//! * [`model`]: closed-form phase times.
//! * [`sim`]: a discrete-event simulator producing per-rank timelines.
//! * [`calibration`]: least-squares fitting of cost constants from measurements.
//! * [`trace`]: Chrome trace export and profile tables.

pub mod calibration;
pub mod error;
pub mod model;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use model::{ClampMode, ClusterSpec, CostParams, IoMode, ModelOptions, ModelVersion, PhasePrediction, WorkloadSpec};
pub use sim::{run_simulation, SimConfig, SimOptions, SimResult};
