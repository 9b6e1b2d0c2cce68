//! Monte-Carlo call prices on the desk fixture against the closed form.
//!
//! ```text
//! cargo run --release --example pricing -- [N_MC]
//! ```

use adjoint_mc::model::{black_scholes_call, fixture, payoffs_into, vol_at};
use adjoint_mc::paths::PathBatch;

fn main() -> adjoint_mc::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    let (market, curve) = fixture::table();
    let paths = PathBatch::generate(7, n, market.expiries().len())?;

    let m = market.len();
    let (mut sum, mut sq) = (vec![0.0; m], vec![0.0; m]);
    let mut y = vec![0.0; m];
    for j in 0..n {
        payoffs_into(&market, &curve, paths.path(j), &mut y)?;
        for i in 0..m {
            sum[i] += y[i];
            sq[i] += y[i] * y[i];
        }
    }

    println!("{:>7} {:>6} {:>12} {:>12} {:>8}", "strike", "T", "MC", "closed", "z");
    for (i, o) in market.options().iter().enumerate() {
        let mean = sum[i] / n as f64;
        let se = ((sq[i] / n as f64 - mean * mean) / (n - 1) as f64).sqrt();
        let exact = black_scholes_call(market.spot(), o.strike, vol_at(&curve, o.expiry), o.expiry);
        println!("{:>7} {:>6} {:>12.5} {:>12.5} {:>+8.2}", o.strike, o.expiry, mean, exact, (mean - exact) / se);
    }
    Ok(())
}
