//! Monte-Carlo simulation and analysis of heralded sub-Poissonian light from
//! multi-mode twin beams.
//!
//! - [`model`]: twin-beam photon numbers, detection, run simulation
//! - [`stats`]: moments, NRF and Fano estimators, bootstrap errors
//! - [`conditioning`]: post-selection on the control channel
//! - [`calibration`]: NRF line fit, efficiency, dB and energy conversions
//! - [`pipeline`]: configs, dataset files and reports

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod conditioning;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod presets;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Channel, Dataset, DatasetKind, DetectorParams, PulseRecord, RunSpec, SourceParams};
pub use stats::{Bootstrap, Estimate};
