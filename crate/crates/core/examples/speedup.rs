//! Measure the batched-replay coefficients K_F and K_R on the desk fixture.
//!
//! ```text
//! cargo run --release --example speedup -- [BATCH_WIDTH] [N_PATHS]
//! ```

use adjoint_mc::harness::measure_speedup;
use adjoint_mc::model::fixture;

fn main() -> adjoint_mc::Result<()> {
    let mut args = std::env::args().skip(1);
    let c: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let (market, curve) = fixture::table();
    let report = measure_speedup(&market, &curve, c, n, 5, 42)?;
    print!("{}", report.render());
    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "run", "F us", "F_v us", "R us", "R_v us");
    for (i, r) in report.runs.iter().enumerate() {
        println!(
            "{:>5} {:>12.0} {:>12.0} {:>12.0} {:>12.0}",
            i + 1,
            r.scalar_forward_us,
            r.batched_forward_us,
            r.scalar_reverse_us,
            r.batched_reverse_us
        );
    }
    Ok(())
}
