//! Limited-memory BFGS and the volatility calibration built on it.

mod calibrate;
mod lbfgs;

pub use calibrate::{calibrate, CalibrationConfig, CalibrationTrace, TraceRecord, SIGMA_MIN};
pub use lbfgs::{lbfgs_minimize, IterationRecord, LbfgsConfig, LbfgsOutcome, Objective, Termination};
