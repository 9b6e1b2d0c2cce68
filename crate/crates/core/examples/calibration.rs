//! Recover a flat 20% volatility curve from closed-form option prices,
//! starting at 40%.
//!
//! ```text
//! cargo run --release --example calibration -- [ALG] [N_MC] [ITERATIONS]
//! ```

use adjoint_mc::estimators::Algorithm;
use adjoint_mc::model::fixture;
use adjoint_mc::optimizer::{calibrate, CalibrationConfig};

fn main() -> adjoint_mc::Result<()> {
    let mut args = std::env::args().skip(1);
    let alg: Algorithm = args.next().as_deref().unwrap_or("1").parse()?;
    let n_paths: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let iterations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let (market, start) = fixture::calibration();
    let cfg = CalibrationConfig::default().with_iterations(iterations);
    let (curve, trace) = calibrate(&market, &start, alg, n_paths, 42, &cfg)?;

    println!("{:>4} {:>14} {:>12}  knots", "iter", "loss", "grad norm");
    for r in &trace.records {
        let knots: Vec<String> = r.params.iter().map(|v| format!("{v:.5}")).collect();
        println!("{:>4} {:>14.6e} {:>12.3e}  {}", r.iteration, r.loss, r.grad_norm, knots.join(" "));
    }
    println!("status: {:?}", trace.status);
    println!("calibrated knots: {:?}", curve.vols());
    Ok(())
}
