//! Wall time and per-coordinate estimator variance for each algorithm.
//!
//! ```text
//! cargo run --release --example variance_table -- [N_MC ...]
//! ```

use adjoint_mc::estimators::Algorithm;
use adjoint_mc::harness::{variance_table, RunConfig};
use adjoint_mc::model::fixture;

fn main() -> adjoint_mc::Result<()> {
    let nmc: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let cfg = RunConfig {
        nmc: if nmc.is_empty() { vec![10_000, 100_000] } else { nmc },
        ..RunConfig::default()
    };
    let (market, curve) = fixture::table();
    let table = variance_table(&market, &curve, &cfg)?;
    print!("{}", table.render());

    for &n in &cfg.nmc {
        let var = |a| table.row(a, n).map(|r| r.variance.clone()).unwrap_or_default();
        let (v1, v2, v3) = (var(Algorithm::TwoPass), var(Algorithm::LaggedPath), var(Algorithm::RunningMean));
        let ratio = |v: &[f64]| v.iter().zip(&v1).map(|(a, b)| format!("{:.2}", a / b)).collect::<Vec<_>>().join(" ");
        println!("N_mc {n}: Var2/Var1 {}   Var3/Var1 {}", ratio(&v2), ratio(&v3));
    }
    Ok(())
}
