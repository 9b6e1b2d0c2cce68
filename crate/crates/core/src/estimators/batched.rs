//! The estimators on lane-parallel replay.
//!
//! Each lane reproduces the scalar per-path arithmetic, and per-lane results
//! are folded in path order. For the single-pass algorithms every lane takes
//! its residual from the preceding path in global order, so a batched run
//! returns the same numbers as the scalar one.

use std::time::Instant;

use super::{
    add_into, check_inputs, merge_counters, over_blocks, reduce_pass_two, residuals, two_pass_variance, Algorithm,
    EstimatorConfig, GradientEstimate, PassTwo, RunningMean, Sweep, Welford,
};
use crate::error::Result;
use crate::paths::PathBatch;
use crate::tape::{BatchWorkspace, ReplayCounter, Tape};
use super::variance::TermVariance;

/// Runs `algorithm` with `config.batch_width` lanes per replay.
pub fn grad_est_batched(
    algorithm: Algorithm,
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
) -> Result<GradientEstimate> {
    check_inputs(algorithm, tape, params, paths, targets, config)?;
    let start = Instant::now();
    let (sweep, counter) = match algorithm {
        Algorithm::TwoPass => two_pass(tape, params, paths, targets, config)?,
        _ => single_pass(algorithm, tape, params, paths, targets, config)?,
    };
    Ok(sweep.finish(algorithm, paths.n_paths(), config, start.elapsed(), Some(counter)))
}

fn two_pass(
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
) -> Result<(Sweep, ReplayCounter)> {
    let c = config.batch_width;
    let n = paths.n_paths();
    let (m, dim) = (tape.n_outputs(), tape.n_params());
    let stride = tape.len() * c;

    let mut cache = Vec::new();
    let first = if config.cache_forward {
        let mut ws = BatchWorkspace::new(tape, c)?;
        let mut sums = vec![0.0; m];
        let mut count = 0u64;
        cache.reserve(paths.chunks(c).len() * stride);
        for chunk in paths.chunks(c) {
            tape.forward_batch_into(params, chunk.block(), &mut ws)?;
            count += chunk.active() as u64;
            sum_lanes(tape, &ws, chunk.active(), &mut sums);
            cache.extend_from_slice(ws.values());
        }
        vec![(sums, count, ws.counter())]
    } else {
        over_blocks(n, c, config.threads, |r| {
            let mut ws = BatchWorkspace::new(tape, c)?;
            let mut sums = vec![0.0; m];
            let mut count = 0u64;
            for chunk in paths.chunks_in(c, r) {
                tape.forward_batch_into(params, chunk.block(), &mut ws)?;
                count += chunk.active() as u64;
                sum_lanes(tape, &ws, chunk.active(), &mut sums);
            }
            Ok((sums, count, ws.counter()))
        })?
    };
    let mut it = first.into_iter();
    let (mut output_sums, mut f1, mut counter) = it.next().expect("at least one block");
    for (s, k, ctr) in it {
        add_into(&mut output_sums, &s);
        f1 += k;
        counter = merge_counters(counter, ctr);
    }

    let lambda: Vec<f64> = output_sums
        .iter()
        .zip(targets)
        .map(|(s, t)| s / n as f64 - t)
        .collect();

    let parts = over_blocks(n, c, config.threads, |r| {
        let mut ws = BatchWorkspace::new(tape, c)?;
        let mut terms = vec![0.0; c * dim];
        let mut part = PassTwo {
            grad_sum: vec![0.0; dim],
            moments: Welford::new(dim),
            f_evals: 0,
            r_evals: 0,
            replay: ReplayCounter::default(),
        };
        for chunk in paths.chunks_in(c, r) {
            let active = chunk.active();
            if config.cache_forward {
                let t = chunk.first_path() / c;
                ws.load(&cache[t * stride..(t + 1) * stride]);
            } else {
                tape.forward_batch_into(params, chunk.block(), &mut ws)?;
                part.f_evals += active as u64;
            }
            terms.fill(0.0);
            tape.reverse_batch_sweep(
                &mut ws,
                |lane, i| if lane < active { lambda[i] } else { 0.0 },
                |lane, k, g| terms[lane * dim + k] += g,
            );
            part.r_evals += active as u64;
            for term in terms.chunks_exact(dim).take(active) {
                add_into(&mut part.grad_sum, term);
                part.moments.push(term);
            }
        }
        part.replay = ws.counter();
        Ok(part)
    })?;
    let total = reduce_pass_two(parts);

    Ok((
        Sweep {
            variance: two_pass_variance(&total.moments, dim),
            grad_sum: total.grad_sum,
            n_terms: n,
            output_sums,
            f_evals: f1 + total.f_evals,
            r_evals: total.r_evals,
        },
        merge_counters(counter, total.replay),
    ))
}

fn sum_lanes(tape: &Tape, ws: &BatchWorkspace, active: usize, sums: &mut [f64]) {
    for lane in 0..active {
        for (i, s) in sums.iter_mut().enumerate() {
            *s += ws.output(tape, i, lane);
        }
    }
}

fn single_pass(
    algorithm: Algorithm,
    tape: &Tape,
    params: &[f64],
    paths: &PathBatch,
    targets: &[f64],
    config: &EstimatorConfig,
) -> Result<(Sweep, ReplayCounter)> {
    let c = config.batch_width;
    let n = paths.n_paths();
    let (m, dim) = (tape.n_outputs(), tape.n_params());
    let mut ws = BatchWorkspace::new(tape, c)?;
    let mut y = vec![0.0; m];
    let mut prev = vec![0.0; m];
    let mut seeds = vec![0.0; c * m];
    let mut terms = vec![0.0; c * dim];
    let mut grad_sum = vec![0.0; dim];
    let mut running = RunningMean::new(m);
    let mut var = TermVariance::for_run(algorithm, dim, n - 1, config.variance_batches);
    let (mut f_evals, mut r_evals) = (0u64, 0u64);

    for chunk in paths.chunks(c) {
        let active = chunk.active();
        let first = chunk.first_path();
        tape.forward_batch_into(params, chunk.block(), &mut ws)?;
        f_evals += active as u64;

        seeds.fill(0.0);
        for lane in 0..active {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = ws.output(tape, i, lane);
            }
            if first + lane > 0 {
                residuals(algorithm, &prev, &running, targets, &mut seeds[lane * m..(lane + 1) * m]);
            }
            running.push(&y);
            prev.copy_from_slice(&y);
        }

        let seeded = if first == 0 { active - 1 } else { active };
        if seeded == 0 {
            continue;
        }
        terms.fill(0.0);
        tape.reverse_batch_sweep(
            &mut ws,
            |lane, i| seeds[lane * m + i],
            |lane, k, g| terms[lane * dim + k] += g,
        );
        r_evals += seeded as u64;
        let skip = active - seeded;
        for term in terms.chunks_exact(dim).take(active).skip(skip) {
            add_into(&mut grad_sum, term);
            var.push(term);
        }
    }

    Ok((
        Sweep {
            grad_sum,
            n_terms: n - 1,
            variance: var.finish(dim),
            output_sums: running.sums().to_vec(),
            f_evals,
            r_evals,
        },
        ws.counter(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::grad_est_scalar;
    use crate::model::{build_model_tape, fixture};

    #[test]
    fn matches_scalar_on_option_fixture() {
        let (spec, curve) = fixture::table();
        let tape = build_model_tape(&spec, &curve);
        let paths = PathBatch::generate(3, 1003, tape.n_inputs()).unwrap();
        let targets = spec.targets();
        for alg in Algorithm::ALL {
            let scalar = grad_est_scalar(alg, &tape, curve.vols(), &paths, &targets, &EstimatorConfig::scalar()).unwrap();
            for c in [1, 3, 8] {
                let cfg = EstimatorConfig::default().with_batch_width(c);
                let b = grad_est_batched(alg, &tape, curve.vols(), &paths, &targets, &cfg).unwrap();
                assert_eq!(b.grad, scalar.grad, "alg {alg} c {c}");
                assert_eq!(b.variance, scalar.variance);
                assert_eq!(b.expectations, scalar.expectations);
                assert_eq!((b.f_evals, b.r_evals), (scalar.f_evals, scalar.r_evals));
            }
        }
    }

    #[test]
    fn replay_counter_counts_applications() {
        let (spec, curve) = fixture::table();
        let tape = build_model_tape(&spec, &curve);
        let paths = PathBatch::generate(3, 100, tape.n_inputs()).unwrap();
        let cfg = EstimatorConfig::default().with_batch_width(8);
        let e = grad_est_batched(Algorithm::TwoPass, &tape, curve.vols(), &paths, &spec.targets(), &cfg).unwrap();
        let r = e.replay.unwrap();
        assert_eq!(r.forward_applications, 26);
        assert_eq!(r.reverse_applications, 13);
        assert_eq!(r.forward_lanes, 208);
    }
}
