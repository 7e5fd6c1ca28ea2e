//! Dynamic watermarking for MIMO LTI systems with partial observations.

pub mod attack;
pub mod cli;
pub mod config;
pub mod detect;
pub mod error;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod scenarios;
pub mod simulate;

pub use error::{Result, WmsError};
pub use numerics::{Matrix, SpdMatrix};
