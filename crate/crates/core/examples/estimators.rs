//! The three gradient estimators on one path set: values, standard errors,
//! replay counts and wall time.
//!
//! ```text
//! cargo run --release --example estimators -- [N_MC] [BATCH_WIDTH]
//! ```

use adjoint_mc::estimators::{estimate, Algorithm, EstimatorConfig};
use adjoint_mc::model::{build_model_tape, fixture};
use adjoint_mc::paths::PathBatch;

fn main() -> adjoint_mc::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let c: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);

    let (market, curve) = fixture::table();
    let tape = build_model_tape(&market, &curve);
    let targets = market.targets();
    let paths = PathBatch::generate(42, n, tape.n_inputs())?;
    let cfg = EstimatorConfig::default().with_batch_width(c);

    for alg in Algorithm::ALL {
        let e = estimate(alg, &tape, curve.vols(), &paths, &targets, &cfg)?;
        println!(
            "alg {alg}: F = {}, R = {}, {:.1} ms, G = {:.4}",
            e.f_evals,
            e.r_evals,
            e.elapsed.as_secs_f64() * 1e3,
            e.loss(&targets).g
        );
        for (k, (g, se)) in e.grad.iter().zip(e.std_errors()).enumerate() {
            println!("    dG/dsigma_{} = {g:>12.4} ± {se:.4}", k + 1);
        }
    }
    Ok(())
}
