//! Monte-Carlo estimators of `∂G/∂a` for the loss `G = ½ Σᵢ (E yᵢ − Cᵢ)²`.
//!
//! All three estimators differentiate `y` on a path with one reverse sweep
//! seeded by a residual `λᵢ ≈ E yᵢ − Cᵢ`. They differ in where `λ` comes from:
//!
//! * [`Algorithm::TwoPass`]: the exact path average from a first forward pass.
//! * [`Algorithm::LaggedPath`]: the previous path's outputs.
//! * [`Algorithm::RunningMean`]: the running mean of all previous paths.

mod batched;
mod variance;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use batched::grad_est_batched;
pub use variance::{estimate_variance, BatchMeans, RunningMean, Welford, MIN_TERMS_PER_BATCH};

use crate::error::{Error, Result};
use crate::model::LossValue;
use crate::paths::PathBatch;
use crate::tape::{ReplayCounter, Tape, Workspace};
use variance::TermVariance;

/// Paths per parallel work item in multi-threaded two-pass runs.
const BLOCK_PATHS: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    TwoPass = 1,
    LaggedPath = 2,
    RunningMean = 3,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::TwoPass, Algorithm::LaggedPath, Algorithm::RunningMean];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Algorithm::TwoPass),
            2 => Ok(Algorithm::LaggedPath),
            3 => Ok(Algorithm::RunningMean),
            _ => Err(Error::invalid("algorithm", format!("expected 1, 2 or 3, got {n}"))),
        }
    }

    pub fn min_paths(self) -> usize {
        match self {
            Algorithm::TwoPass => 1,
            _ => 2,
        }
    }

    /// Closed-form `(f_evals, r_evals)` for a run over `n_paths` paths.
    pub fn expected_counts(self, n_paths: usize, cache_forward: bool) -> (u64, u64) {
        let n = n_paths as u64;
        match self {
            Algorithm::TwoPass if cache_forward => (n, n),
            Algorithm::TwoPass => (2 * n, n),
            _ => (n, n - 1),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n = s
            .trim()
            .parse::<u8>()
            .map_err(|_| Error::invalid("algorithm", format!("expected 1, 2 or 3, got `{s}`")))?;
        Algorithm::from_number(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub algorithm: Algorithm,
    pub grad: Vec<f64>,
    /// Variance of each gradient coordinate's estimator.
    pub variance: Vec<f64>,
    pub n_paths: usize,
    /// Scalar-equivalent forward applications.
    pub f_evals: u64,
    /// Scalar-equivalent reverse applications.
    pub r_evals: u64,
    /// Path averages `E yᵢ`, a by-product of every algorithm.
    pub expectations: Vec<f64>,
    pub elapsed: Duration,
    /// Batched replay statistics; `None` for scalar runs.
    pub replay: Option<ReplayCounter>,
}

impl GradientEstimate {
    pub fn std_errors(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    pub fn loss(&self, targets: &[f64]) -> LossValue {
        LossValue::from_expectations(self.expectations.clone(), targets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Lanes per batched replay; 1 selects scalar replay.
    pub batch_width: usize,
    /// Worker threads for the two-pass estimator.
    pub threads: usize,
    /// Batch count for the batch-means variance of algorithms 2 and 3.
    pub variance_batches: usize,
    /// Keep pass-1 node values instead of recomputing them in pass 2.
    pub cache_forward: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            batch_width: 8,
            threads: 1,
            variance_batches: 256,
            cache_forward: false,
        }
    }
}

impl EstimatorConfig {
    pub fn scalar() -> Self {
        Self {
            batch_width: 1,
            ..Self::default()
        }
    }

    pub fn with_batch_width(mut self, c: usize) -> Self {
        self.batch_width = c;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_width == 0 {
            return Err(Error::invalid("batch_width", "must be at least 1"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        if self.variance_batches < 2 {
            return Err(Error::invalid("variance_batches", "must be at least 2"));
        }
        if self.cache_forward && self.threads > 1 {
            return Err(Error::invalid("cache_forward", "only supported with a single thread"));
        }
        Ok(())
    }
}

/// Runs `algorithm`, scalar when `config.batch_width == 1` and batched otherwise.
pub fn estimate(
    algorithm: Algorithm,
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
) -> Result<GradientEstimate> {
    if config.batch_width == 1 {
        grad_est_scalar(algorithm, tape, params, paths, targets, config)
    } else {
        grad_est_batched(algorithm, tape, params, paths, targets, config)
    }
}

/// Two-pass estimator with exact residuals.
pub fn grad_est1(tape: &Tape, params: &[f64], paths: &PathBatch, targets: &[f64]) -> Result<GradientEstimate> {
    grad_est_scalar(Algorithm::TwoPass, tape, params, paths, targets, &EstimatorConfig::scalar())
}

/// Single-pass estimator with residuals from the previous path.
pub fn grad_est2(tape: &Tape, params: &[f64], paths: &PathBatch, targets: &[f64]) -> Result<GradientEstimate> {
    grad_est_scalar(Algorithm::LaggedPath, tape, params, paths, targets, &EstimatorConfig::scalar())
}

/// Single-pass estimator with running-mean residuals.
pub fn grad_est3(tape: &Tape, params: &[f64], paths: &PathBatch, targets: &[f64]) -> Result<GradientEstimate> {
    grad_est_scalar(Algorithm::RunningMean, tape, params, paths, targets, &EstimatorConfig::scalar())
}

/// Scalar replay of any algorithm; `config.batch_width` is ignored.
pub fn grad_est_scalar(
    algorithm: Algorithm,
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
) -> Result<GradientEstimate> {
    check_inputs(algorithm, tape, params, paths, targets, config)?;
    let start = Instant::now();
    let run = match algorithm {
        Algorithm::TwoPass => two_pass_scalar(tape, params, paths, targets, config)?,
        _ => single_pass_scalar(algorithm, tape, params, paths, targets, config)?,
    };
    Ok(run.finish(algorithm, paths.n_paths(), config, start.elapsed(), None))
}

pub(crate) fn check_inputs(
    algorithm: Algorithm,
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
) -> Result<()> {
    config.validate()?;
    if paths.n_paths() < algorithm.min_paths() {
        return Err(Error::TooFewPaths {
            algorithm: algorithm.number(),
            required: algorithm.min_paths(),
            got: paths.n_paths(),
        });
    }
    let dims = [
        ("parameters", tape.n_params(), params.len()),
        ("random inputs", tape.n_inputs(), paths.n_inputs()),
        ("targets", tape.n_outputs(), targets.len()),
    ];
    for (what, expected, got) in dims {
        if expected != got {
            return Err(Error::DimensionMismatch { what, expected, got });
        }
    }
    if let Some(bad) = targets.iter().find(|c| !c.is_finite()) {
        return Err(Error::invalid("targets", format!("non-finite target {bad}")));
    }
    Ok(())
}

/// Accumulated state of a finished sweep, before normalization.
pub(crate) struct Sweep {
    pub grad_sum: Vec<f64>,
    pub n_terms: usize,
    pub variance: Vec<f64>,
    pub output_sums: Vec<f64>,
    pub f_evals: u64,
    pub r_evals: u64,
}

impl Sweep {
    pub(crate) fn finish(
        self,
        algorithm: Algorithm,
        n_paths: usize,
        config: &EstimatorConfig,
        elapsed: Duration,
        replay: Option<ReplayCounter>,
    ) -> GradientEstimate {
        let expected = algorithm.expected_counts(n_paths, config.cache_forward && algorithm == Algorithm::TwoPass);
        assert_eq!(
            (self.f_evals, self.r_evals),
            expected,
            "cost accounting of algorithm {algorithm} over {n_paths} paths"
        );
        let k = self.n_terms as f64;
        let n = n_paths as f64;
        GradientEstimate {
            algorithm,
            grad: self.grad_sum.iter().map(|g| g / k).collect(),
            variance: self.variance,
            n_paths,
            f_evals: self.f_evals,
            r_evals: self.r_evals,
            expectations: self.output_sums.iter().map(|s| s / n).collect(),
            elapsed,
            replay,
        }
    }
}

#[inline]
pub(crate) fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

/// Runs `f` over consecutive path ranges and returns the results in range
/// order. One thread processes `0..n` as a single range; more threads split
/// it into blocks aligned to `align` paths.
pub(crate) fn over_blocks<T, F>(n: usize, align: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<usize>) -> Result<T> + Sync,
{
    if threads <= 1 {
        return Ok(vec![f(0..n)?]);
    }
    let block = BLOCK_PATHS.div_ceil(align) * align;
    let ranges: Vec<Range<usize>> = (0..n).step_by(block).map(|s| s..(s + block).min(n)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| ranges.into_par_iter().map(&f).collect())
}

/// Per-block partial results of a two-pass gradient pass.
pub(crate) struct PassTwo {
    pub grad_sum: Vec<f64>,
    pub moments: Welford,
    pub f_evals: u64,
    pub r_evals: u64,
    pub replay: ReplayCounter,
}

/// Folds block partials in block order.
pub(crate) fn reduce_pass_two(parts: Vec<PassTwo>) -> PassTwo {
    let mut it = parts.into_iter();
    let mut total = it.next().expect("at least one block");
    for p in it {
        add_into(&mut total.grad_sum, &p.grad_sum);
        total.moments.merge(&p.moments);
        total.f_evals += p.f_evals;
        total.r_evals += p.r_evals;
        total.replay = merge_counters(total.replay, p.replay);
    }
    total
}

pub(crate) fn merge_counters(a: ReplayCounter, b: ReplayCounter) -> ReplayCounter {
    ReplayCounter {
        forward_applications: a.forward_applications + b.forward_applications,
        reverse_applications: a.reverse_applications + b.reverse_applications,
        forward_lanes: a.forward_lanes + b.forward_lanes,
        reverse_lanes: a.reverse_lanes + b.reverse_lanes,
    }
}

pub(crate) fn two_pass_variance(moments: &Welford, dim: usize) -> Vec<f64> {
    if moments.count() >= 2 {
        moments.variance_of_mean()
    } else {
        vec![f64::NAN; dim]
    }
}

fn two_pass_scalar(
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
) -> Result<Sweep> {
    let n = paths.n_paths();
    let (m, dim, len) = (tape.n_outputs(), tape.n_params(), tape.len());

    let mut cache = Vec::new();
    let (output_sums, f1) = if config.cache_forward {
        cache.resize(n * len, 0.0);
        let mut ws = Workspace::new(tape);
        let mut y = vec![0.0; m];
        let mut sums = vec![0.0; m];
        for j in 0..n {
            tape.forward_into(params, paths.path(j), &mut ws)?;
            tape.outputs_into(&ws, &mut y);
            add_into(&mut sums, &y);
            cache[j * len..(j + 1) * len].copy_from_slice(ws.values());
        }
        (sums, n as u64)
    } else {
        let parts = over_blocks(n, 1, config.threads, |r| {
            let mut ws = Workspace::new(tape);
            let mut y = vec![0.0; m];
            let mut sums = vec![0.0; m];
            let count = r.len() as u64;
            for j in r {
                tape.forward_into(params, paths.path(j), &mut ws)?;
                tape.outputs_into(&ws, &mut y);
                add_into(&mut sums, &y);
            }
            Ok((sums, count))
        })?;
        let mut it = parts.into_iter();
        let (mut sums, mut count) = it.next().expect("at least one block");
        for (s, c) in it {
            add_into(&mut sums, &s);
            count += c;
        }
        (sums, count)
    };

    let lambda: Vec<f64> = output_sums
        .iter()
        .zip(targets)
        .map(|(s, c)| s / n as f64 - c)
        .collect();

    let parts = over_blocks(n, 1, config.threads, |r| {
        let mut ws = Workspace::new(tape);
        let mut term = vec![0.0; dim];
        let mut part = PassTwo {
            grad_sum: vec![0.0; dim],
            moments: Welford::new(dim),
            f_evals: 0,
            r_evals: 0,
            replay: ReplayCounter::default(),
        };
        for j in r {
            if config.cache_forward {
                ws.load(&cache[j * len..(j + 1) * len]);
            } else {
                tape.forward_into(params, paths.path(j), &mut ws)?;
                part.f_evals += 1;
            }
            term.fill(0.0);
            tape.reverse_sweep(&mut ws, &lambda, &mut term);
            part.r_evals += 1;
            add_into(&mut part.grad_sum, &term);
            part.moments.push(&term);
        }
        Ok(part)
    })?;
    let total = reduce_pass_two(parts);

    Ok(Sweep {
        variance: two_pass_variance(&total.moments, dim),
        grad_sum: total.grad_sum,
        n_terms: n,
        output_sums,
        f_evals: f1 + total.f_evals,
        r_evals: total.r_evals,
    })
}

fn single_pass_scalar(
    algorithm: Algorithm,
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
) -> Result<Sweep> {
    let n = paths.n_paths();
    let (m, dim) = (tape.n_outputs(), tape.n_params());
    let mut ws = Workspace::new(tape);
    let mut y = vec![0.0; m];
    let mut prev = vec![0.0; m];
    let mut lambda = vec![0.0; m];
    let mut term = vec![0.0; dim];
    let mut grad_sum = vec![0.0; dim];
    let mut running = RunningMean::new(m);
    let mut var = TermVariance::for_run(algorithm, dim, n - 1, config.variance_batches);
    let (mut f_evals, mut r_evals) = (0u64, 0u64);

    for j in 0..n {
        tape.forward_into(params, paths.path(j), &mut ws)?;
        f_evals += 1;
        tape.outputs_into(&ws, &mut y);
        if j > 0 {
            residuals(algorithm, &prev, &running, targets, &mut lambda);
            term.fill(0.0);
            tape.reverse_sweep(&mut ws, &lambda, &mut term);
            r_evals += 1;
            add_into(&mut grad_sum, &term);
            var.push(&term);
        }
        running.push(&y);
        prev.copy_from_slice(&y);
    }

    Ok(Sweep {
        grad_sum,
        n_terms: n - 1,
        variance: var.finish(dim),
        output_sums: running.sums().to_vec(),
        f_evals,
        r_evals,
    })
}

/// `λᵢ` for the single-pass algorithms given the preceding path's outputs
/// and the running mean over all preceding paths.
#[inline]
pub(crate) fn residuals(algorithm: Algorithm, prev: &[f64], running: &RunningMean, targets: &[f64], out: &mut [f64]) {
    match algorithm {
        Algorithm::LaggedPath => {
            for ((l, p), c) in out.iter_mut().zip(prev).zip(targets) {
                *l = p - c;
            }
        }
        Algorithm::RunningMean => {
            for (i, (l, c)) in out.iter_mut().zip(targets).enumerate() {
                *l = running.mean(i) - c;
            }
        }
        Algorithm::TwoPass => unreachable!("two-pass residuals come from the first pass"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::TapeBuilder;

    /// y = a·w + a
    fn linear() -> Tape {
        let mut b = TapeBuilder::new();
        let a = b.param();
        let w = b.input();
        let aw = b.mul(a, w);
        let y = b.add(aw, a);
        b.output(y);
        b.build().unwrap()
    }

    /// y = k, independent of the parameter
    fn constant(k: f64) -> Tape {
        let mut b = TapeBuilder::new();
        let a = b.param();
        let w = b.input();
        let zero = b.constant(0.0);
        let z = b.mul(a, zero);
        let zw = b.mul(z, w);
        let kk = b.constant(k);
        let y = b.add(zw, kk);
        b.output(y);
        b.build().unwrap()
    }

    #[test]
    fn cost_counts() {
        let t = linear();
        let paths = PathBatch::generate(1, 100, 1).unwrap();
        let e1 = grad_est1(&t, &[1.0], &paths, &[0.0]).unwrap();
        assert_eq!((e1.f_evals, e1.r_evals), (200, 100));
        for e in [grad_est2(&t, &[1.0], &paths, &[0.0]), grad_est3(&t, &[1.0], &paths, &[0.0])] {
            let e = e.unwrap();
            assert_eq!((e.f_evals, e.r_evals), (100, 99));
        }
        let cached = EstimatorConfig {
            cache_forward: true,
            ..EstimatorConfig::scalar()
        };
        let ec = grad_est_scalar(Algorithm::TwoPass, &t, &[1.0], &paths, &[0.0], &cached).unwrap();
        assert_eq!((ec.f_evals, ec.r_evals), (100, 100));
        assert_eq!(ec.grad, e1.grad);
    }

    #[test]
    fn constant_payoff_has_zero_gradient() {
        let t = constant(3.5);
        let paths = PathBatch::generate(4, 64, 1).unwrap();
        assert_eq!(grad_est1(&t, &[0.7], &paths, &[1.0]).unwrap().grad, vec![0.0]);
        assert_eq!(grad_est2(&t, &[0.7], &paths, &[3.5]).unwrap().grad, vec![0.0]);
        assert_eq!(grad_est3(&t, &[0.7], &paths, &[3.5]).unwrap().grad, vec![0.0]);
    }

    #[test]
    fn rejects_too_few_paths_and_bad_dims() {
        let t = linear();
        let one = PathBatch::generate_any(1, 1, 1).unwrap();
        assert!(grad_est1(&t, &[1.0], &one, &[0.0]).is_ok());
        assert!(matches!(
            grad_est2(&t, &[1.0], &one, &[0.0]),
            Err(Error::TooFewPaths { algorithm: 2, required: 2, got: 1 })
        ));
        assert!(matches!(grad_est3(&t, &[1.0], &one, &[0.0]), Err(Error::TooFewPaths { .. })));
        let paths = PathBatch::generate(1, 10, 1).unwrap();
        assert!(matches!(
            grad_est1(&t, &[1.0], &paths, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { what: "targets", .. })
        ));
    }

    #[test]
    fn threads_agree_with_single_thread() {
        let t = linear();
        let paths = PathBatch::generate(9, 50_000, 1).unwrap();
        let one = grad_est_scalar(Algorithm::TwoPass, &t, &[0.5], &paths, &[0.2], &EstimatorConfig::scalar()).unwrap();
        let cfg = EstimatorConfig::scalar().with_threads(3);
        let many = grad_est_scalar(Algorithm::TwoPass, &t, &[0.5], &paths, &[0.2], &cfg).unwrap();
        let again = grad_est_scalar(Algorithm::TwoPass, &t, &[0.5], &paths, &[0.2], &cfg).unwrap();
        assert_eq!(many.grad, again.grad);
        assert!((many.grad[0] - one.grad[0]).abs() <= 1e-12 * one.grad[0].abs());
        assert!((many.variance[0] - one.variance[0]).abs() <= 1e-9 * one.variance[0]);
    }

    #[test]
    fn algorithm_parsing() {
        assert_eq!("2".parse::<Algorithm>().unwrap(), Algorithm::LaggedPath);
        assert!("4".parse::<Algorithm>().is_err());
        assert_eq!(Algorithm::RunningMean.to_string(), "3");
    }
}
