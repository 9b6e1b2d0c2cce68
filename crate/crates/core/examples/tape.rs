//! Record a small program, evaluate it and pull its adjoints.

use adjoint_mc::tape::{record, AdjointSeed, TapeBuilder};

const PROGRAM: &str = "
param sigma
input w
half = const -0.5
s2 = mul sigma sigma
drift = mul half s2
shock = mul sigma w
x = add drift shock
e = exp x
k = const 1
itm = sub e k
y = max0 itm
output y
output e
";

fn main() -> adjoint_mc::Result<()> {
    let tape = record(PROGRAM)?;
    println!("{} nodes, M = {}, N = {}, m = {}", tape.len(), tape.n_params(), tape.n_inputs(), tape.n_outputs());

    let (sigma, w) = ([0.3], [0.8]);
    let y = tape.forward(&sigma, &w)?;
    println!("y = {y:?}");

    for (name, seed) in [("d y1", vec![1.0, 0.0]), ("d y2", vec![0.0, 1.0]), ("d (y1 + y2)", vec![1.0, 1.0])] {
        let grad = tape.reverse(&sigma, &w, &AdjointSeed::new(seed)?)?;
        println!("{name:>12} / d sigma = {:.10}", grad[0]);
    }

    // the same function through the builder
    let mut b = TapeBuilder::new();
    let s = b.param();
    let w_in = b.input();
    let s2 = b.mul(s, s);
    let drift = b.scale(s2, -0.5);
    let shock = b.mul(s, w_in);
    let x = b.add(drift, shock);
    let e = b.exp(x);
    b.output(e);
    let built = b.build()?;
    let g = built.reverse(&sigma, &w, &AdjointSeed::ones(1))?;
    let x: f64 = -0.5 * 0.09 + 0.3 * 0.8;
    println!("builder: {:.10}, closed form: {:.10}", g[0], x.exp() * (0.8 - 0.3));
    Ok(())
}
