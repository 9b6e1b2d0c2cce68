use adjoint_mc::tape::{record, AdjointSeed, BatchWorkspace, Op, Tape, TapeBuilder, Var};
use adjoint_mc::Error;
use ndarray::Array2;
use proptest::prelude::*;

fn call_payoff(spot: f64, strike: f64, expiry: f64) -> Tape {
    let mut b = TapeBuilder::new();
    let sigma = b.param();
    let w = b.input();
    let s2 = b.mul(sigma, sigma);
    let drift = b.scale(s2, -0.5 * expiry);
    let vol = b.scale(sigma, expiry.sqrt());
    let shock = b.mul(vol, w);
    let x = b.add(drift, shock);
    let e = b.exp(x);
    let s = b.scale(e, spot);
    let k = b.constant(strike);
    let itm = b.sub(s, k);
    let y = b.max0(itm);
    b.output(y);
    b.build().unwrap()
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-6 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[test]
fn single_product_records_three_nodes() {
    let tape = record("param a\ninput w\ny = mul a w\noutput y").unwrap();
    assert_eq!(tape.len(), 3);
    assert!(matches!(tape.ops()[2], Op::Mul(..)));
    assert_eq!(tape.forward(&[2.0], &[3.0]).unwrap(), vec![6.0]);
}

#[test]
fn payoff_program_has_a_max_node_and_two_outputs() {
    let tape = record(
        "param sigma
         input w
         s = mul sigma w
         e = exp s
         k = const 1
         d = sub e k
         y = max0 d
         output y
         output e",
    )
    .unwrap();
    assert!(tape.ops().iter().any(|op| matches!(op, Op::MaxZero(_))));
    assert_eq!(tape.output_slots().len(), 2);
}

#[test]
fn forward_examples() {
    let relu = record("param x\ny = max0 x\noutput y").unwrap();
    assert_eq!(relu.forward(&[-1.0], &[]).unwrap(), vec![0.0]);
    let call = call_payoff(100.0, 100.0, 1.0);
    assert_eq!(call.forward(&[0.2], &[0.0]).unwrap(), vec![0.0]);
}

#[test]
fn forward_reports_the_first_non_finite_node() {
    let tape = record("param x\nl = log x\ny = exp l\noutput y").unwrap();
    match tape.forward(&[-1.0], &[]) {
        Err(Error::NonFinite { node }) => assert_eq!(node, 1),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn dimension_mismatches_are_rejected() {
    let tape = call_payoff(100.0, 100.0, 1.0);
    assert!(matches!(tape.forward(&[0.2, 0.3], &[0.0]), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(tape.forward(&[0.2], &[]), Err(Error::DimensionMismatch { .. })));
    let bad_seed = AdjointSeed::new(vec![1.0, 1.0]).unwrap();
    assert!(tape.reverse(&[0.2], &[0.0], &bad_seed).is_err());
    let mut ws = BatchWorkspace::new(&tape, 4).unwrap();
    let block = Array2::zeros((3, 1));
    assert!(tape.forward_batch(&[0.2], block.view(), &mut ws).is_err());
}

#[test]
fn reverse_examples() {
    let id = record("param x\noutput x").unwrap();
    assert_eq!(id.reverse(&[5.0], &[], &AdjointSeed::ones(1)).unwrap(), vec![1.0]);
    let prod = record("param a\nparam b\ny = mul a b\noutput y").unwrap();
    assert_eq!(prod.reverse(&[2.0, 3.0], &[], &AdjointSeed::ones(1)).unwrap(), vec![3.0, 2.0]);
}

#[test]
fn call_payoff_adjoint_matches_central_difference() {
    let tape = call_payoff(100.0, 90.0, 1.0);
    let (sigma, w) = (0.2, 0.5);
    let ad = tape.reverse(&[sigma], &[w], &AdjointSeed::ones(1)).unwrap()[0];
    let fd = (tape.forward(&[sigma + 1e-6], &[w]).unwrap()[0] - tape.forward(&[sigma - 1e-6], &[w]).unwrap()[0]) / 2e-6;
    assert!(rel_err(ad, fd) <= 1e-6, "ad {ad} fd {fd}");
}

#[test]
fn batch_examples() {
    let tape = call_payoff(100.0, 95.0, 2.0);
    let mut ws = BatchWorkspace::new(&tape, 4).unwrap();
    let block = Array2::from_elem((4, 1), 0.3);
    let ys = tape.forward_batch(&[0.25], block.view(), &mut ws).unwrap();
    assert!(ys.iter().all(|&y| y == ys[[0, 0]]));

    let mut ws2 = BatchWorkspace::new(&tape, 2).unwrap();
    let block = Array2::from_elem((2, 1), 0.7);
    let seeds = Array2::from_elem((2, 1), 1.5);
    let g = tape.reverse_batch(&[0.25], block.view(), seeds.view(), &mut ws2).unwrap();
    assert_eq!(g.row(0), g.row(1));

    let zero = Array2::zeros((2, 1));
    let g = tape.reverse_batch(&[0.25], block.view(), zero.view(), &mut ws2).unwrap();
    assert!(g.iter().all(|&x| x == 0.0));
    let counter = ws2.counter();
    assert_eq!((counter.forward_applications, counter.forward_lanes), (2, 4));
}

/// Builds `op(p₀, p₁)` for a binary primitive or `op(p₀)` for a unary one.
fn primitive(build: impl Fn(&mut TapeBuilder, Var, Var) -> Var) -> Tape {
    let mut b = TapeBuilder::new();
    let a = b.param();
    let c = b.param();
    let y = build(&mut b, a, c);
    b.output(y);
    b.build().unwrap()
}

fn check_gradient(tape: &Tape, x: &[f64]) -> Result<(), TestCaseError> {
    let ad = tape.reverse(x, &[], &AdjointSeed::ones(1)).unwrap();
    for k in 0..x.len() {
        let fd = central_difference(
            |v| {
                let mut p = x.to_vec();
                p[k] = v;
                tape.forward(&p, &[]).unwrap()[0]
            },
            x[k],
        );
        prop_assert!(rel_err(ad[k], fd) <= 1e-5, "coordinate {k}: ad {} fd {fd}", ad[k]);
    }
    Ok(())
}

proptest! {
    #[test]
    fn every_primitive_matches_finite_differences(a in 0.2f64..3.0, b in 0.2f64..3.0, sign in prop::bool::ANY) {
        let a = if sign { a } else { -a };
        let x = [a, b];
        check_gradient(&primitive(|t, p, q| t.add(p, q)), &x)?;
        check_gradient(&primitive(|t, p, q| t.sub(p, q)), &x)?;
        check_gradient(&primitive(|t, p, q| t.mul(p, q)), &x)?;
        check_gradient(&primitive(|t, p, q| t.div(p, q)), &x)?;
        check_gradient(&primitive(|t, p, _| t.neg(p)), &x)?;
        check_gradient(&primitive(|t, p, _| t.exp(p)), &x)?;
        check_gradient(&primitive(|t, _, q| t.log(q)), &x)?;
        check_gradient(&primitive(|t, _, q| t.sqrt(q)), &x)?;
        check_gradient(&primitive(|t, _, q| t.powc(q, 2.5)), &x)?;
        check_gradient(&primitive(|t, p, _| t.max0(p)), &x)?;
        check_gradient(&primitive(|t, p, q| {
            let k = t.constant(0.7);
            let s = t.mul(p, k);
            t.add(s, q)
        }), &x)?;
    }

    #[test]
    fn call_payoff_gradient_away_from_the_kink(sigma in 0.05f64..0.8, w in -2.5f64..2.5, expiry in 0.5f64..5.0) {
        let tape = call_payoff(100.0, 100.0, expiry);
        let s = 100.0 * (-0.5 * sigma * sigma * expiry + sigma * expiry.sqrt() * w).exp();
        prop_assume!((s - 100.0).abs() > 0.1);
        check_sigma_gradient(&tape, sigma, w)?;
    }

    #[test]
    fn reverse_is_linear_in_the_seed(
        x in prop::collection::vec(0.3f64..2.0, 2),
        w in -1.0f64..1.0,
        l in prop::collection::vec(-2.0f64..2.0, 2),
        mu in prop::collection::vec(-2.0f64..2.0, 2),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let tape = two_output_tape();
        let r = |s: Vec<f64>| tape.reverse(&x, &[w], &AdjointSeed::new(s).unwrap()).unwrap();
        let combined = r(vec![alpha * l[0] + beta * mu[0], alpha * l[1] + beta * mu[1]]);
        let (rl, rm) = (r(l.clone()), r(mu.clone()));
        for k in 0..2 {
            let expect = alpha * rl[k] + beta * rm[k];
            let scale = (alpha * rl[k]).abs() + (beta * rm[k]).abs();
            prop_assert!((combined[k] - expect).abs() <= 1e-12 * scale.max(1e-300), "{} vs {expect}", combined[k]);
        }
    }

    #[test]
    fn batched_lanes_are_bit_identical_to_scalar(
        c in 1usize..12,
        x in prop::collection::vec(0.3f64..2.0, 2),
        rows in prop::collection::vec((-2.0f64..2.0, -1.0f64..1.0, -1.0f64..1.0), 12),
    ) {
        let tape = two_output_tape();
        let mut block = Array2::zeros((c, 1));
        let mut seeds = Array2::zeros((c, 2));
        for lane in 0..c {
            block[[lane, 0]] = rows[lane].0;
            seeds[[lane, 0]] = rows[lane].1;
            seeds[[lane, 1]] = rows[lane].2;
        }
        let mut ws = BatchWorkspace::new(&tape, c).unwrap();
        let ys = tape.forward_batch(&x, block.view(), &mut ws).unwrap();
        let gs = tape.reverse_batch(&x, block.view(), seeds.view(), &mut ws).unwrap();
        for lane in 0..c {
            let w = [rows[lane].0];
            let y = tape.forward(&x, &w).unwrap();
            let g = tape.reverse(&x, &w, &AdjointSeed::new(vec![rows[lane].1, rows[lane].2]).unwrap()).unwrap();
            prop_assert_eq!(ys.row(lane).to_vec(), y);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&gs.row(lane).to_vec()), bits(&g));
        }
    }

    #[test]
    fn replay_is_deterministic(x in prop::collection::vec(0.3f64..2.0, 2), w in -2.0f64..2.0) {
        let tape = two_output_tape();
        let seed = AdjointSeed::new(vec![0.3, -1.1]).unwrap();
        prop_assert_eq!(tape.forward(&x, &[w]).unwrap(), tape.forward(&x, &[w]).unwrap());
        prop_assert_eq!(tape.reverse(&x, &[w], &seed).unwrap(), tape.reverse(&x, &[w], &seed).unwrap());
    }
}

fn check_sigma_gradient(tape: &Tape, sigma: f64, w: f64) -> Result<(), TestCaseError> {
    let ad = tape.reverse(&[sigma], &[w], &AdjointSeed::ones(1)).unwrap()[0];
    let fd = central_difference(|s| tape.forward(&[s], &[w]).unwrap()[0], sigma);
    prop_assert!(rel_err(ad, fd) <= 1e-5, "ad {ad} fd {fd}");
    Ok(())
}

/// y₁ = (a·e^{b·w} − 1)⁺ / b, y₂ = √(a² + w²) · ln(1 + b)
fn two_output_tape() -> Tape {
    record(
        "param a
         param b
         input w
         bw = mul b w
         e = exp bw
         ae = mul a e
         one = const 1
         d = sub ae one
         r = max0 d
         y1 = div r b
         a2 = powc a 2
         w2 = mul w w
         s = add a2 w2
         q = sqrt s
         ob = add one b
         l = log ob
         y2 = mul q l
         output y1
         output y2",
    )
    .unwrap()
}
