use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use super::lbfgs::{lbfgs_minimize, IterationRecord, LbfgsConfig, Objective, Termination};
use crate::error::{Error, Result};
use crate::estimators::{estimate, Algorithm, EstimatorConfig};
use crate::model::{build_model_tape, MarketSpec, VolCurve};
use crate::paths::{derive_seed, PathBatch};
use crate::tape::Tape;

/// Smallest volatility the calibration may visit.
pub const SIGMA_MIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub lbfgs: LbfgsConfig,
    pub estimator: EstimatorConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            lbfgs: LbfgsConfig {
                max_iter: 20,
                grad_norm_tol: 1e-10,
                lower_bound: Some(SIGMA_MIN),
                initial_step: 0.05,
                ..LbfgsConfig::default()
            },
            estimator: EstimatorConfig::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn with_iterations(mut self, n: usize) -> Self {
        self.lbfgs.max_iter = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub params: Vec<f64>,
    /// Cumulative scalar-equivalent forward and reverse applications.
    pub f_evals: u64,
    pub r_evals: u64,
    /// Wall time since the calibration started.
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTrace {
    pub records: Vec<TraceRecord>,
    pub status: Option<Termination>,
}

impl CalibrationTrace {
    pub fn initial_loss(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    fn n_params(&self) -> usize {
        self.records.first().map_or(0, |r| r.params.len())
    }

    /// Columns: `iter,loss,grad_norm,param_1..param_M,f_evals,r_evals,millis`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string(), "loss".into(), "grad_norm".into()];
        header.extend((1..=self.n_params()).map(|k| format!("param_{k}")));
        header.extend(["f_evals".into(), "r_evals".into(), "millis".into()]);
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string(), r.loss.to_string(), r.grad_norm.to_string()];
            row.extend(r.params.iter().map(f64::to_string));
            row.extend([r.f_evals.to_string(), r.r_evals.to_string(), r.millis.to_string()]);
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    /// Parses the output of [`CalibrationTrace::write_csv`]. The status is
    /// not part of the file and comes back as `None`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len();
        if width < 6 {
            return Err(Error::invalid("trace", format!("expected at least 6 columns, got {width}")));
        }
        let m = width - 6;
        let mut records = Vec::new();
        for row in r.records() {
            let row = row?;
            let num = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::invalid("trace", format!("bad number `{}`", &row[i])))
            };
            let int = |i: usize| -> Result<u64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::invalid("trace", format!("bad integer `{}`", &row[i])))
            };
            records.push(TraceRecord {
                iteration: int(0)? as usize,
                loss: num(1)?,
                grad_norm: num(2)?,
                params: (3..3 + m).map(num).collect::<Result<_>>()?,
                f_evals: int(3 + m)?,
                r_evals: int(4 + m)?,
                millis: num(5 + m)?,
            });
        }
        Ok(Self { records, status: None })
    }
}

/// The loss of a market spec under a Monte-Carlo estimator, re-sampled at
/// every optimizer iteration and frozen within one line search.
struct StochasticLoss<'a> {
    tape: Tape,
    targets: Vec<f64>,
    algorithm: Algorithm,
    n_paths: usize,
    seed: u64,
    config: &'a EstimatorConfig,
    paths: Option<PathBatch>,
    f_evals: u64,
    r_evals: u64,
    start: Instant,
    records: Vec<TraceRecord>,
}

impl Objective for StochasticLoss<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let paths = self.paths.as_ref().expect("paths drawn before evaluation");
        let est = estimate(self.algorithm, &self.tape, x, paths, &self.targets, self.config)?;
        self.f_evals += est.f_evals;
        self.r_evals += est.r_evals;
        Ok((est.loss(&self.targets).g, est.grad))
    }

    fn begin_iteration(&mut self, iteration: usize) -> Result<bool> {
        let seed = derive_seed(self.seed, iteration as u64);
        self.paths = Some(PathBatch::generate(seed, self.n_paths, self.tape.n_inputs())?);
        Ok(true)
    }

    fn accepted(&mut self, r: &IterationRecord) {
        self.records.push(TraceRecord {
            iteration: r.iteration,
            loss: r.value,
            grad_norm: r.grad_norm,
            params: r.x.clone(),
            f_evals: self.f_evals,
            r_evals: self.r_evals,
            millis: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }
}

/// Fits the knot volatilities of `initial` to the option prices in `spec`.
///
/// Iteration `k` draws its paths from `derive_seed(seed, k)`; the starting
/// point is iteration 0. The trace holds the starting point plus one record
/// per accepted step.
pub fn calibrate(
    spec: &MarketSpec,
    initial: &VolCurve,
    algorithm: Algorithm,
    n_paths: usize,
    seed: u64,
    config: &CalibrationConfig,
) -> Result<(VolCurve, CalibrationTrace)> {
    if n_paths < algorithm.min_paths().max(2) {
        return Err(Error::TooFewPaths {
            algorithm: algorithm.number(),
            required: 2,
            got: n_paths,
        });
    }
    config.estimator.validate()?;
    let mut objective = StochasticLoss {
        tape: build_model_tape(spec, initial),
        targets: spec.targets(),
        algorithm,
        n_paths,
        seed,
        config: &config.estimator,
        paths: None,
        f_evals: 0,
        r_evals: 0,
        start: Instant::now(),
        records: Vec::new(),
    };
    let outcome = lbfgs_minimize(&mut objective, initial.vols(), &config.lbfgs)?;
    let curve = initial.with_vols(&outcome.x)?;
    Ok((
        curve,
        CalibrationTrace {
            records: objective.records,
            status: Some(outcome.status),
        },
    ))
}
