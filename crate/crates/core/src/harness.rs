//! Experiment drivers: variance tables, gradient comparison, calibration
//! traces and replay speedup. Each writes a CSV that the matching `read_*`
//! function parses back.

use std::fmt::Write as _;
use std::hint::black_box;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{load_spec, RunDefaults};
use crate::error::{Error, Result};
use crate::estimators::{estimate, Algorithm, EstimatorConfig};
use crate::model::{build_model_tape, fixture, MarketSpec, VolCurve};
use crate::optimizer::{calibrate, CalibrationConfig, CalibrationTrace};
use crate::paths::PathBatch;
use crate::tape::{BatchWorkspace, Tape, Workspace};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Market spec file; `None` selects the built-in desk fixture.
    pub spec: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    pub nmc: Vec<usize>,
    pub seed: u64,
    pub batch_width: usize,
    pub threads: usize,
    /// Optimizer iterations for `calibrate`.
    pub iterations: usize,
    pub out: PathBuf,
    /// Timed repetitions per table row; the median is reported.
    pub repetitions: usize,
    /// Independent runs for `measure-speedup`.
    pub speedup_runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spec: None,
            algorithms: Algorithm::ALL.to_vec(),
            nmc: vec![10_000, 100_000, 1_000_000],
            seed: 42,
            batch_width: 8,
            threads: 1,
            iterations: 20,
            out: PathBuf::from("out"),
            repetitions: 3,
            speedup_runs: 5,
        }
    }
}

impl RunConfig {
    /// Replaces every field that `overrides` sets.
    pub fn overlay(&mut self, overrides: &RunDefaults) -> Result<()> {
        if let Some(algs) = &overrides.algorithms {
            self.algorithms = algs.iter().map(|&a| Algorithm::from_number(a)).collect::<Result<_>>()?;
        }
        if let Some(nmc) = &overrides.nmc {
            self.nmc = nmc.clone();
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(c) = overrides.batch_width {
            self.batch_width = c;
        }
        if let Some(t) = overrides.threads {
            self.threads = t;
        }
        if let Some(i) = overrides.iterations {
            self.iterations = i;
        }
        if let Some(out) = &overrides.out {
            self.out = out.clone();
        }
        Ok(())
    }

    /// Defaults, then the spec file's `[run]` table, then `flags`.
    pub fn resolve(spec: Option<PathBuf>, flags: &RunDefaults) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &spec {
            cfg.overlay(&load_spec(path)?.run)?;
        }
        cfg.overlay(flags)?;
        cfg.spec = spec;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::invalid("algorithms", "need at least one"));
        }
        if self.nmc.is_empty() {
            return Err(Error::invalid("nmc", "need at least one path count"));
        }
        if let Some(n) = self.nmc.iter().find(|&&n| n < 2) {
            return Err(Error::invalid("nmc", format!("path counts must be at least 2, got {n}")));
        }
        if self.repetitions == 0 || self.speedup_runs == 0 {
            return Err(Error::invalid("repetitions", "must be at least 1"));
        }
        self.estimator().validate()
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            batch_width: self.batch_width,
            threads: self.threads,
            ..EstimatorConfig::default()
        }
    }

    /// Market and curve from the spec file, or `fallback` without one.
    pub fn market(&self, fallback: fn() -> (MarketSpec, VolCurve)) -> Result<(MarketSpec, VolCurve)> {
        match &self.spec {
            Some(path) => {
                let loaded = load_spec(path)?;
                Ok((loaded.market, loaded.curve))
            }
            None => Ok(fallback()),
        }
    }

    fn out_file(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(self.out.join(name))
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv(input: impl Read) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|row| row.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

fn parse<T: std::str::FromStr>(cell: &str) -> Result<T> {
    cell.trim()
        .parse()
        .map_err(|_| Error::invalid("csv", format!("cannot parse `{cell}`")))
}

fn numbered(prefix: &str, m: usize) -> impl Iterator<Item = String> + '_ {
    (1..=m).map(move |k| format!("{prefix}_{k}"))
}

fn fmt_all(xs: &[f64]) -> impl Iterator<Item = String> + '_ {
    xs.iter().map(f64::to_string)
}

/// Times `repetitions` rounds of every algorithm on one path set, running
/// the algorithms in turn within each round. Returns each algorithm's first
/// estimate with its median wall time in microseconds.
fn timed_estimates(
    algorithms: &[Algorithm],
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
    repetitions: usize,
) -> Result<Vec<(crate::estimators::GradientEstimate, f64)>> {
    let mut first = Vec::with_capacity(algorithms.len());
    let mut times = vec![Vec::with_capacity(repetitions); algorithms.len()];
    for round in 0..repetitions {
        for (&alg, t) in algorithms.iter().zip(&mut times) {
            let e = estimate(alg, tape, params, paths, targets, config)?;
            t.push(e.elapsed.as_secs_f64() * 1e6);
            if round == 0 {
                first.push(e);
            }
        }
    }
    Ok(first.into_iter().zip(times.into_iter().map(median)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub algorithm: Algorithm,
    pub n_paths: usize,
    pub time_us: f64,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTable {
    pub rows: Vec<VarianceRow>,
}

impl VarianceTable {
    pub fn row(&self, algorithm: Algorithm, n_paths: usize) -> Option<&VarianceRow> {
        self.rows
            .iter()
            .find(|r| r.algorithm == algorithm && r.n_paths == n_paths)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let m = self.rows.first().map_or(0, |r| r.variance.len());
        let mut header = vec!["algorithm".to_string(), "n_mc".into(), "time_us".into()];
        header.extend(numbered("var", m));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.algorithm.to_string(), r.n_paths.to_string(), r.time_us.to_string()];
                row.extend(fmt_all(&r.variance));
                row
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    pub fn read(input: impl Read) -> Result<Self> {
        let (_, rows) = read_csv(input)?;
        let rows = rows
            .iter()
            .map(|r| {
                Ok(VarianceRow {
                    algorithm: parse(&r[0])?,
                    n_paths: parse(&r[1])?,
                    time_us: parse(&r[2])?,
                    variance: r[3..].iter().map(|c| parse(c)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = write!(s, "alg {}  N_mc {:>9}  {:>12.0} us ", r.algorithm, r.n_paths, r.time_us);
            for v in &r.variance {
                let _ = write!(s, " {v:>12.6e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Per-coordinate estimator variances and median wall time for every
/// requested (algorithm, N_mc) pair.
pub fn variance_table(market: &MarketSpec, curve: &VolCurve, cfg: &RunConfig) -> Result<VarianceTable> {
    let tape = build_model_tape(market, curve);
    let targets = market.targets();
    let est = cfg.estimator();
    let mut rows = Vec::new();
    for &n in &cfg.nmc {
        let paths = PathBatch::generate(cfg.seed, n, tape.n_inputs())?;
        let timed = timed_estimates(&cfg.algorithms, &tape, curve.vols(), &paths, &targets, &est, cfg.repetitions)?;
        for (&alg, (e, time_us)) in cfg.algorithms.iter().zip(timed) {
            rows.push(VarianceRow {
                algorithm: alg,
                n_paths: n,
                time_us,
                variance: e.variance,
            });
        }
    }
    rows.sort_by_key(|r| (r.algorithm, r.n_paths));
    Ok(VarianceTable { rows })
}

pub fn cmd_variance_table(cfg: &RunConfig) -> Result<(VarianceTable, PathBuf)> {
    let (market, curve) = cfg.market(fixture::table)?;
    let table = variance_table(&market, &curve, cfg)?;
    let path = cfg.out_file("variance_table.csv")?;
    table.save(&path)?;
    Ok((table, path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientRow {
    pub algorithm: Algorithm,
    pub n_paths: usize,
    pub time_us: f64,
    pub grad: Vec<f64>,
    pub std_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientTable {
    pub rows: Vec<GradientRow>,
}

impl GradientTable {
    /// Per coordinate, `(max − min) / |mean|` over the rows at `n_paths`.
    pub fn relative_spread(&self, n_paths: usize) -> Vec<f64> {
        let rows: Vec<&GradientRow> = self.rows.iter().filter(|r| r.n_paths == n_paths).collect();
        let m = rows.first().map_or(0, |r| r.grad.len());
        (0..m)
            .map(|k| {
                let vals: Vec<f64> = rows.iter().map(|r| r.grad[k]).collect();
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                (hi - lo) / mean.abs()
            })
            .collect()
    }

    /// Largest per-coordinate `|gₐ − g_b| / √(seₐ² + se_b²)` over pairs at `n_paths`.
    pub fn max_z_score(&self, n_paths: usize) -> f64 {
        let rows: Vec<&GradientRow> = self.rows.iter().filter(|r| r.n_paths == n_paths).collect();
        let mut worst = 0.0f64;
        for (i, a) in rows.iter().enumerate() {
            for b in &rows[i + 1..] {
                for k in 0..a.grad.len() {
                    let se = (a.std_error[k].powi(2) + b.std_error[k].powi(2)).sqrt();
                    worst = worst.max((a.grad[k] - b.grad[k]).abs() / se);
                }
            }
        }
        worst
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let m = self.rows.first().map_or(0, |r| r.grad.len());
        let mut header = vec!["algorithm".to_string(), "n_mc".into(), "time_us".into()];
        header.extend(numbered("grad", m));
        header.extend(numbered("se", m));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.algorithm.to_string(), r.n_paths.to_string(), r.time_us.to_string()];
                row.extend(fmt_all(&r.grad));
                row.extend(fmt_all(&r.std_error));
                row
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    pub fn read(input: impl Read) -> Result<Self> {
        let (header, rows) = read_csv(input)?;
        let m = header.len().saturating_sub(3) / 2;
        let rows = rows
            .iter()
            .map(|r| {
                let nums = |range: std::ops::Range<usize>| r[range].iter().map(|c| parse(c)).collect::<Result<Vec<f64>>>();
                Ok(GradientRow {
                    algorithm: parse(&r[0])?,
                    n_paths: parse(&r[1])?,
                    time_us: parse(&r[2])?,
                    grad: nums(3..3 + m)?,
                    std_error: nums(3 + m..3 + 2 * m)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = write!(s, "alg {}  N_mc {:>9}  {:>12.0} us ", r.algorithm, r.n_paths, r.time_us);
            for g in &r.grad {
                let _ = write!(s, " {g:>12.6}");
            }
            s.push('\n');
        }
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n_paths).collect();
        ns.dedup();
        for n in ns {
            let spread = self.relative_spread(n);
            let _ = writeln!(
                s,
                "N_mc {n}: max relative spread {:.4}%, max pairwise z {:.2}",
                100.0 * spread.iter().cloned().fold(0.0, f64::max),
                self.max_z_score(n)
            );
        }
        s
    }
}

/// Gradients of every requested algorithm on a common path set per N_mc.
pub fn gradient_table(market: &MarketSpec, curve: &VolCurve, cfg: &RunConfig) -> Result<GradientTable> {
    let tape = build_model_tape(market, curve);
    let targets = market.targets();
    let est = cfg.estimator();
    let mut rows = Vec::new();
    for &n in &cfg.nmc {
        let paths = PathBatch::generate(cfg.seed, n, tape.n_inputs())?;
        let timed = timed_estimates(&cfg.algorithms, &tape, curve.vols(), &paths, &targets, &est, cfg.repetitions)?;
        for (&alg, (e, time_us)) in cfg.algorithms.iter().zip(timed) {
            rows.push(GradientRow {
                algorithm: alg,
                n_paths: n,
                time_us,
                std_error: e.std_errors(),
                grad: e.grad,
            });
        }
    }
    Ok(GradientTable { rows })
}

pub fn cmd_gradient(cfg: &RunConfig) -> Result<(GradientTable, PathBuf)> {
    let (market, curve) = cfg.market(fixture::table)?;
    let table = gradient_table(&market, &curve, cfg)?;
    let path = cfg.out_file("gradient.csv")?;
    table.save(&path)?;
    Ok((table, path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub algorithm: Algorithm,
    pub n_paths: usize,
    pub curve: VolCurve,
    pub trace: CalibrationTrace,
    pub path: PathBuf,
}

pub fn trace_file_name(algorithm: Algorithm, n_paths: usize) -> String {
    format!("calibration_alg{algorithm}_nmc{n_paths}.csv")
}

/// One calibration per (algorithm, N_mc), each trace in its own file.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<Vec<CalibrationRun>> {
    let (market, start) = cfg.market(fixture::calibration)?;
    let calib = CalibrationConfig {
        estimator: cfg.estimator(),
        ..CalibrationConfig::default().with_iterations(cfg.iterations)
    };
    let mut runs = Vec::new();
    for &alg in &cfg.algorithms {
        for &n in &cfg.nmc {
            let (curve, trace) = calibrate(&market, &start, alg, n, cfg.seed, &calib)?;
            let path = cfg.out_file(&trace_file_name(alg, n))?;
            trace.save(&path)?;
            runs.push(CalibrationRun {
                algorithm: alg,
                n_paths: n,
                curve,
                trace,
                path,
            });
        }
    }
    Ok(runs)
}

/// Wall times in microseconds of one measurement run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupRun {
    pub k_f: f64,
    pub k_r: f64,
    pub scalar_forward_us: f64,
    pub batched_forward_us: f64,
    pub scalar_reverse_us: f64,
    pub batched_reverse_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupReport {
    pub batch_width: usize,
    pub n_paths: usize,
    pub runs: Vec<SpeedupRun>,
}

impl SpeedupReport {
    pub fn k_f(&self) -> (f64, f64) {
        mean_std(&self.runs.iter().map(|r| r.k_f).collect::<Vec<_>>())
    }

    pub fn k_r(&self) -> (f64, f64) {
        mean_std(&self.runs.iter().map(|r| r.k_r).collect::<Vec<_>>())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = [
            "run",
            "batch_width",
            "n_paths",
            "k_f",
            "k_r",
            "scalar_forward_us",
            "batched_forward_us",
            "scalar_reverse_us",
            "batched_reverse_us",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    (i + 1).to_string(),
                    self.batch_width.to_string(),
                    self.n_paths.to_string(),
                    r.k_f.to_string(),
                    r.k_r.to_string(),
                    r.scalar_forward_us.to_string(),
                    r.batched_forward_us.to_string(),
                    r.scalar_reverse_us.to_string(),
                    r.batched_reverse_us.to_string(),
                ]
            })
            .collect();
        write_csv(path, &header, &rows)
    }

    pub fn read(input: impl Read) -> Result<Self> {
        let (_, rows) = read_csv(input)?;
        let first = rows.first().ok_or_else(|| Error::invalid("csv", "no measurement rows"))?;
        let runs = rows
            .iter()
            .map(|r| {
                Ok(SpeedupRun {
                    k_f: parse(&r[3])?,
                    k_r: parse(&r[4])?,
                    scalar_forward_us: parse(&r[5])?,
                    batched_forward_us: parse(&r[6])?,
                    scalar_reverse_us: parse(&r[7])?,
                    batched_reverse_us: parse(&r[8])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            batch_width: parse(&first[1])?,
            n_paths: parse(&first[2])?,
            runs,
        })
    }

    pub fn render(&self) -> String {
        let (kf, kf_sd) = self.k_f();
        let (kr, kr_sd) = self.k_r();
        let mut s = format!(
            "c = {}, {} paths, {} runs\nK_F = {kf:.3} ± {kf_sd:.3}\nK_R = {kr:.3} ± {kr_sd:.3}\n",
            self.batch_width,
            self.n_paths,
            self.runs.len()
        );
        if self.batch_width == 1 {
            s.push_str("c = 1: batched and scalar replay coincide, K_F = K_R = 1 by definition\n");
        }
        s
    }
}

/// `(forward-only, forward+reverse)` wall time over all paths, scalar replay.
fn time_scalar(tape: &Tape, params: &[f64], paths: &PathBatch, lambda: &[f64]) -> Result<(f64, f64)> {
    let mut ws = Workspace::new(tape);
    let mut grad = vec![0.0; tape.n_params()];
    let t0 = Instant::now();
    for j in 0..paths.n_paths() {
        tape.forward_into(params, paths.path(j), &mut ws)?;
        black_box(ws.values());
    }
    let f = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    for j in 0..paths.n_paths() {
        tape.forward_into(params, paths.path(j), &mut ws)?;
        tape.reverse_sweep(&mut ws, lambda, &mut grad);
    }
    black_box(&grad);
    Ok((f, t1.elapsed().as_secs_f64()))
}

fn time_batched(tape: &Tape, params: &[f64], paths: &PathBatch, lambda: &[f64], c: usize) -> Result<(f64, f64)> {
    let mut ws = BatchWorkspace::new(tape, c)?;
    let mut grad = vec![0.0; tape.n_params()];
    let chunks: Vec<_> = paths.chunks(c).collect();
    let t0 = Instant::now();
    for chunk in &chunks {
        tape.forward_batch_into(params, chunk.block(), &mut ws)?;
        black_box(ws.values());
    }
    let f = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    for chunk in &chunks {
        tape.forward_batch_into(params, chunk.block(), &mut ws)?;
        tape.reverse_batch_sweep(&mut ws, |_, i| lambda[i], |_, k, g| grad[k] += g);
    }
    black_box(&grad);
    Ok((f, t1.elapsed().as_secs_f64()))
}

/// Measures `K_F = c·T(F_v)/T(F)` and `K_R = c·T(R_v)/T(R)`, where `T` is
/// wall time over the same `n_paths` paths and reverse time is the
/// forward+reverse time minus the forward time. With `c = 1` both are 1.
pub fn measure_speedup(
    market: &MarketSpec,
    curve: &VolCurve,
    c: usize,
    n_paths: usize,
    runs: usize,
    seed: u64,
) -> Result<SpeedupReport> {
    let tape = build_model_tape(market, curve);
    let paths = PathBatch::generate(seed, n_paths, tape.n_inputs())?;
    let lambda: Vec<f64> = vec![1.0; tape.n_outputs()];
    let mut out = Vec::with_capacity(runs);
    for _ in 0..runs {
        let (sf, sfr) = time_scalar(&tape, curve.vols(), &paths, &lambda)?;
        let (bf, bfr) = if c == 1 {
            (sf, sfr)
        } else {
            time_batched(&tape, curve.vols(), &paths, &lambda, c)?
        };
        let (sr, br) = ((sfr - sf).max(1e-9), (bfr - bf).max(1e-9));
        let (k_f, k_r) = if c == 1 {
            (1.0, 1.0)
        } else {
            (c as f64 * bf / sf, c as f64 * br / sr)
        };
        out.push(SpeedupRun {
            k_f,
            k_r,
            scalar_forward_us: sf * 1e6,
            batched_forward_us: bf * 1e6,
            scalar_reverse_us: sr * 1e6,
            batched_reverse_us: br * 1e6,
        });
    }
    Ok(SpeedupReport {
        batch_width: c,
        n_paths,
        runs: out,
    })
}

pub fn cmd_measure_speedup(cfg: &RunConfig) -> Result<(SpeedupReport, PathBuf)> {
    let (market, curve) = cfg.market(fixture::table)?;
    let report = measure_speedup(&market, &curve, cfg.batch_width, cfg.nmc[0], cfg.speedup_runs, cfg.seed)?;
    let path = cfg.out_file("speedup.csv")?;
    report.save(&path)?;
    Ok((report, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(out: &Path) -> RunConfig {
        RunConfig {
            nmc: vec![2_000, 4_000],
            out: out.to_path_buf(),
            repetitions: 1,
            ..RunConfig::default()
        }
    }

    #[test]
    fn variance_table_shape_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (table, path) = cmd_variance_table(&small(dir.path())).unwrap();
        assert_eq!(table.rows.len(), 6);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 3 + 5);
        let back = VarianceTable::read(text.as_bytes()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn gradient_single_algorithm() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            algorithms: vec![Algorithm::LaggedPath],
            nmc: vec![3_000],
            ..small(dir.path())
        };
        let (table, path) = cmd_gradient(&cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        let back = GradientTable::read(std::fs::File::open(path).unwrap()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn overlay_precedence() {
        let mut cfg = RunConfig::default();
        cfg.overlay(&RunDefaults {
            seed: Some(1),
            nmc: Some(vec![10]),
            ..RunDefaults::default()
        })
        .unwrap();
        cfg.overlay(&RunDefaults {
            seed: Some(2),
            ..RunDefaults::default()
        })
        .unwrap();
        assert_eq!((cfg.seed, cfg.nmc.clone()), (2, vec![10]));
        assert!(cfg
            .overlay(&RunDefaults {
                algorithms: Some(vec![4]),
                ..RunDefaults::default()
            })
            .is_err());
        cfg.nmc = vec![1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn speedup_degenerate_width() {
        let (m, c) = fixture::table();
        let r = measure_speedup(&m, &c, 1, 1000, 2, 3).unwrap();
        assert!(r.runs.iter().all(|x| x.k_f == 1.0 && x.k_r == 1.0));
        let r = measure_speedup(&m, &c, 4, 1000, 2, 3).unwrap();
        assert!(r.runs.iter().all(|x| x.k_f.is_finite() && x.k_f > 0.0 && x.k_r > 0.0));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
