use adjoint_mc::estimators::Algorithm;
use adjoint_mc::model::fixture;
use adjoint_mc::optimizer::{calibrate, lbfgs_minimize, CalibrationConfig, CalibrationTrace, LbfgsConfig, Termination};
use adjoint_mc::paths::derive_seed;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// `A = QᵀQ + I` from a seeded stream, so it is symmetric positive definite.
fn spd(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut k = 0;
    let q = DMatrix::from_fn(dim, dim, |_, _| {
        k += 1;
        (derive_seed(seed, k) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    q.transpose() * &q + DMatrix::identity(dim, dim)
}

#[test]
fn convex_quadratic_reaches_the_linear_solve_minimum() {
    let dim = 10;
    let a = spd(dim, 99);
    let b = DVector::from_fn(dim, |i, _| (i as f64 - 4.5) / 3.0);
    let f = |x: &[f64]| {
        let x = DVector::from_column_slice(x);
        let ax = &a * &x;
        (0.5 * x.dot(&ax) - b.dot(&x), (ax - &b).as_slice().to_vec())
    };
    let x_star = a.clone().cholesky().unwrap().solve(&b);
    let f_star = -0.5 * b.dot(&x_star);

    let cfg = LbfgsConfig {
        max_iter: 200,
        grad_norm_tol: 1e-10,
        ..LbfgsConfig::default()
    };
    let out = lbfgs_minimize(&mut { f }, &vec![0.0; dim], &cfg).unwrap();
    assert_eq!(out.status, Termination::GradientTolerance);
    assert!((out.value - f_star).abs() <= 1e-10 * f_star.abs().max(1.0), "{} vs {f_star}", out.value);
    for (x, e) in out.x.iter().zip(x_star.iter()) {
        assert!((x - e).abs() <= 1e-8, "{x} vs {e}");
    }
}

#[test]
fn sphere_converges_in_a_few_steps() {
    let out = lbfgs_minimize(
        &mut |x: &[f64]| (0.5 * (x[0] * x[0] + x[1] * x[1]), x.to_vec()),
        &[3.0, -4.0],
        &LbfgsConfig::default(),
    )
    .unwrap();
    assert!(out.x.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8);
    assert!(out.history.len() <= 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn accepted_values_never_increase(seed in any::<u64>(), dim in 2usize..8, memory in 1usize..10) {
        let a = spd(dim, seed);
        let f = |x: &[f64]| {
            let x = DVector::from_column_slice(x);
            let ax = &a * &x;
            let quartic: f64 = x.iter().map(|v| v.powi(4)).sum();
            let mut g = ax.clone();
            g.iter_mut().zip(x.iter()).for_each(|(g, v)| *g += 4.0 * v.powi(3));
            (0.5 * x.dot(&ax) + quartic, g.as_slice().to_vec())
        };
        let cfg = LbfgsConfig { memory, max_iter: 40, ..LbfgsConfig::default() };
        let out = lbfgs_minimize(&mut { f }, &vec![1.5; dim], &cfg).unwrap();
        prop_assert!(out.history.windows(2).all(|w| w[1].value <= w[0].value));
        prop_assert!(out.history.windows(2).all(|w| w[0].iteration < w[1].iteration));
    }
}

#[test]
fn calibration_reduces_the_loss_and_writes_a_parseable_trace() {
    let (market, start) = fixture::calibration();
    let cfg = CalibrationConfig::default().with_iterations(8);
    let (curve, trace) = calibrate(&market, &start, Algorithm::TwoPass, 50_000, 3, &cfg).unwrap();
    assert!(trace.final_loss() < 1e-2 * trace.initial_loss());
    assert!(curve.vols().iter().all(|v| (v - 0.2).abs() < 0.03), "{:?}", curve.vols());
    assert!(trace.records.windows(2).all(|w| w[0].f_evals < w[1].f_evals));

    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let back = CalibrationTrace::read_csv(&buf[..]).unwrap();
    assert_eq!(back.records, trace.records);
}

#[test]
fn calibration_rejects_too_few_paths() {
    let (market, start) = fixture::calibration();
    assert!(calibrate(&market, &start, Algorithm::LaggedPath, 1, 3, &CalibrationConfig::default()).is_err());
}
