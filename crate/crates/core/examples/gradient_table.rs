//! Gradients of all three algorithms on shared paths, with their spread.
//!
//! ```text
//! cargo run --release --example gradient_table -- [N_MC]
//! ```

use adjoint_mc::harness::{gradient_table, RunConfig};
use adjoint_mc::model::fixture;

fn main() -> adjoint_mc::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let cfg = RunConfig {
        nmc: vec![n],
        ..RunConfig::default()
    };
    let (market, curve) = fixture::table();
    let table = gradient_table(&market, &curve, &cfg)?;
    print!("{}", table.render());
    let spread: Vec<String> = table.relative_spread(n).iter().map(|s| format!("{:.3}%", 100.0 * s)).collect();
    println!("per-coordinate spread: {}", spread.join(" "));
    Ok(())
}
