//! Adjoint Monte-Carlo gradients of calibration losses.

pub mod config;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod optimizer;
pub mod paths;
pub mod tape;

pub use error::{Error, Result};
