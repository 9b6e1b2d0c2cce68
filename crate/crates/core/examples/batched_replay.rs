//! Replay one tape over eight lanes at once and compare with scalar replay.

use adjoint_mc::model::{build_model_tape, fixture};
use adjoint_mc::paths::PathBatch;
use adjoint_mc::tape::{AdjointSeed, BatchWorkspace};
use ndarray::Array2;

fn main() -> adjoint_mc::Result<()> {
    let (market, curve) = fixture::table();
    let tape = build_model_tape(&market, &curve);
    let c = 8;
    let paths = PathBatch::generate(3, c, tape.n_inputs())?;
    let seeds = Array2::from_elem((c, tape.n_outputs()), 1.0);

    let mut ws = BatchWorkspace::new(&tape, c)?;
    let chunk = paths.chunks(c).next().expect("one full chunk");
    let grads = tape.reverse_batch(curve.vols(), chunk.block(), seeds.view(), &mut ws)?;

    let mut identical = true;
    for lane in 0..c {
        let scalar = tape.reverse(curve.vols(), paths.path(lane), &AdjointSeed::ones(tape.n_outputs()))?;
        identical &= grads.row(lane).iter().zip(&scalar).all(|(a, b)| a.to_bits() == b.to_bits());
        println!("lane {lane}: {:?}", grads.row(lane).to_vec());
    }
    println!("bit-identical to scalar replay: {identical}");
    println!("{:?}", ws.counter());
    Ok(())
}
