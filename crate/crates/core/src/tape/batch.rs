//! Lane-parallel replay: one tape applied to `c` independent input rows.
//!
//! Values are stored node-major (`values[node * c + lane]`), so every op is
//! a tight loop over lanes. Each lane executes exactly the scalar
//! operation sequence, which makes lane `j` bit-identical to a scalar replay
//! of row `j`.

use ndarray::{Array2, ArrayView2};

use super::scalar::relu;
use super::plan::Partial;
use super::{Op, Tape};
use crate::error::{Error, Result};

/// Counts applications of the batched forward (`F_v`) and reverse (`R_v`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplayCounter {
    pub forward_applications: u64,
    pub reverse_applications: u64,
    /// `c` per application: the number of scalar replays each one stands for.
    pub forward_lanes: u64,
    pub reverse_lanes: u64,
}

#[derive(Debug, Clone)]
pub struct BatchWorkspace {
    width: usize,
    values: Vec<f64>,
    adjoints: Vec<f64>,
    counter: ReplayCounter,
}

impl BatchWorkspace {
    pub fn new(tape: &Tape, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::invalid("batch_width", "must be at least 1"));
        }
        Ok(Self {
            width,
            values: vec![0.0; tape.len() * width],
            adjoints: vec![0.0; tape.len() * width],
            counter: ReplayCounter::default(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn counter(&self) -> ReplayCounter {
        self.counter
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn load(&mut self, values: &[f64]) {
        self.values.copy_from_slice(values);
    }

    /// Value of output `i` in lane `lane` after the last batched forward.
    #[inline]
    pub fn output(&self, tape: &Tape, i: usize, lane: usize) -> f64 {
        self.values[tape.outputs[i].index() * self.width + lane]
    }
}

impl Tape {
    /// Applies the tape to each row of `block` (`c × N`), returning `c × m`.
    pub fn forward_batch(
        &self,
        params: &[f64],
        block: ArrayView2<'_, f64>,
        ws: &mut BatchWorkspace,
    ) -> Result<Array2<f64>> {
        self.forward_batch_into(params, block, ws)?;
        let c = ws.width;
        Ok(Array2::from_shape_fn((c, self.n_outputs()), |(lane, i)| {
            ws.output(self, i, lane)
        }))
    }

    /// Batched forward pass keeping all node values in `ws`.
    pub fn forward_batch_into(
        &self,
        params: &[f64],
        block: ArrayView2<'_, f64>,
        ws: &mut BatchWorkspace,
    ) -> Result<()> {
        let c = ws.width;
        if block.nrows() != c {
            return Err(Error::DimensionMismatch {
                what: "batch width",
                expected: c,
                got: block.nrows(),
            });
        }
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                what: "parameters",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        if block.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                what: "random inputs",
                expected: self.n_inputs(),
                got: block.ncols(),
            });
        }
        let finite = match c {
            4 => self.forward_lanes(4, params, &block, &mut ws.values),
            8 => self.forward_lanes(8, params, &block, &mut ws.values),
            16 => self.forward_lanes(16, params, &block, &mut ws.values),
            _ => self.forward_lanes(c, params, &block, &mut ws.values),
        };
        ws.counter.forward_applications += 1;
        ws.counter.forward_lanes += c as u64;
        if finite {
            Ok(())
        } else {
            let node = ws.values.iter().position(|x| !x.is_finite()).unwrap_or(0) / c;
            Err(Error::NonFinite { node })
        }
    }

    #[inline(always)]
    fn forward_lanes(&self, c: usize, params: &[f64], block: &ArrayView2<'_, f64>, values: &mut [f64]) -> bool {
        let mut finite = true;
        for (n, op) in self.ops.iter().enumerate() {
            let (done, rest) = values.split_at_mut(n * c);
            let out = &mut rest[..c];
            let lane = |v: super::Var| &done[v.index() * c..v.index() * c + c];
            match *op {
                Op::Param(k) => out.fill(params[k as usize]),
                Op::Input(k) => {
                    for (o, x) in out.iter_mut().zip(block.column(k as usize)) {
                        *o = *x;
                    }
                }
                Op::Const(x) => out.fill(x),
                Op::Add(a, b) => zip2(out, lane(a), lane(b), |x, y| x + y),
                Op::Sub(a, b) => zip2(out, lane(a), lane(b), |x, y| x - y),
                Op::Mul(a, b) => zip2(out, lane(a), lane(b), |x, y| x * y),
                Op::Div(a, b) => zip2(out, lane(a), lane(b), |x, y| x / y),
                Op::Neg(a) => map1(out, lane(a), |x| -x),
                Op::Exp(a) => map1(out, lane(a), f64::exp),
                Op::Log(a) => map1(out, lane(a), f64::ln),
                Op::Sqrt(a) => map1(out, lane(a), f64::sqrt),
                Op::PowConst(a, p) => map1(out, lane(a), |x| x.powf(p)),
                Op::MaxZero(a) => map1(out, lane(a), relu),
            }
            finite &= out.iter().fold(true, |ok, x| ok & x.is_finite());
        }
        finite
    }

    /// Lane-wise reverse sweep; `seeds` is `c × m`, the result `c × M`.
    pub fn reverse_batch(
        &self,
        params: &[f64],
        block: ArrayView2<'_, f64>,
        seeds: ArrayView2<'_, f64>,
        ws: &mut BatchWorkspace,
    ) -> Result<Array2<f64>> {
        let c = ws.width;
        if seeds.dim() != (c, self.n_outputs()) {
            return Err(Error::DimensionMismatch {
                what: "adjoint seeds",
                expected: c * self.n_outputs(),
                got: seeds.len(),
            });
        }
        self.forward_batch_into(params, block, ws)?;
        let mut grads = Array2::zeros((c, self.n_params()));
        self.reverse_batch_sweep(ws, |lane, i| seeds[[lane, i]], |lane, k, g| {
            grads[[lane, k]] += g
        });
        Ok(grads)
    }

    /// Reverse sweep over the values of the last batched forward.
    ///
    /// `seed(lane, i)` supplies `λᵢ` per lane; `emit(lane, k, g)` receives
    /// every lane's adjoint of parameter slot `k`, zeros included, once the
    /// sweep reaches it.
    pub fn reverse_batch_sweep(
        &self,
        ws: &mut BatchWorkspace,
        seed: impl Fn(usize, usize) -> f64,
        emit: impl FnMut(usize, usize, f64),
    ) {
        // constant widths let the lane loops unroll
        match ws.width {
            4 => self.sweep_lanes(4, ws, seed, emit),
            8 => self.sweep_lanes(8, ws, seed, emit),
            16 => self.sweep_lanes(16, ws, seed, emit),
            c => self.sweep_lanes(c, ws, seed, emit),
        }
        ws.counter.reverse_applications += 1;
        ws.counter.reverse_lanes += ws.width as u64;
    }

    #[inline(always)]
    fn sweep_lanes(
        &self,
        c: usize,
        ws: &mut BatchWorkspace,
        seed: impl Fn(usize, usize) -> f64,
        mut emit: impl FnMut(usize, usize, f64),
    ) {
        let v = &ws.values;
        let act = &self.active[..];
        // adjoints are all zero between sweeps; each node clears its own
        // slot once consumed, and inactive nodes are never written
        let adj = &mut ws.adjoints;
        for (i, slot) in self.outputs.iter().enumerate() {
            if !act[slot.index()] {
                continue;
            }
            let base = slot.index() * c;
            for lane in 0..c {
                adj[base + lane] += seed(lane, i);
            }
        }
        for node in &self.plan.nodes {
            let n = node.node as usize;
            let (head, tail) = adj.split_at_mut(n * c);
            let g = &tail[..c];
            if !g.iter().fold(false, |nz, &x| nz | (x != 0.0)) {
                continue;
            }
            if let Some(k) = node.param {
                for (lane, &gl) in g.iter().enumerate() {
                    emit(lane, k as usize, gl);
                }
            }
            let vals = |x: super::Var| &v[x.index() * c..x.index() * c + c];
            let own = &v[n * c..n * c + c];
            for step in &self.plan.steps[node.steps.0 as usize..node.steps.1 as usize] {
                let t = step.target;
                match step.partial {
                    Partial::One => add(head, t, c, g, g, |gl, _| gl),
                    Partial::MinusOne => add(head, t, c, g, g, |gl, _| -gl),
                    Partial::Times(x) => add(head, t, c, g, vals(x), |gl, x| gl * x),
                    Partial::Over(x) => add(head, t, c, g, vals(x), |gl, x| gl / x),
                    Partial::TimesOwn => add(head, t, c, g, own, |gl, x| gl * x),
                    Partial::Positive(x) => add(head, t, c, g, vals(x), |gl, x| gl * f64::from(u8::from(x > 0.0))),
                    Partial::Quotient(b) => {
                        let vb = vals(b);
                        guarded(head, t, c, g, |gl, l| -(gl * own[l] / vb[l]))
                    }
                    Partial::HalfOverOwn => guarded(head, t, c, g, |gl, l| gl * 0.5 / own[l]),
                    Partial::Power(x, p) => {
                        let va = vals(x);
                        guarded(head, t, c, g, |gl, l| gl * p * va[l].powf(p - 1.0))
                    }
                }
            }
            tail[..c].fill(0.0);
        }
    }
}

#[inline(always)]
fn zip2(out: &mut [f64], a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = f(x, y);
    }
}

#[inline(always)]
fn map1(out: &mut [f64], a: &[f64], f: impl Fn(f64) -> f64) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = f(x);
    }
}

/// `adj[target, lane] += d(g[lane], aux[lane])` on every lane.
///
/// Only for partials that are finite whenever the node values are: a zero
/// adjoint then contributes `±0`, which leaves the accumulator unchanged
/// because it starts at `+0` and never becomes `−0`. Lanes therefore match
/// the scalar sweep, which skips zero adjoints.
#[inline(always)]
fn add(head: &mut [f64], target: super::Var, c: usize, g: &[f64], aux: &[f64], d: impl Fn(f64, f64) -> f64) {
    let dst = &mut head[target.index() * c..target.index() * c + c];
    for ((t, &gl), &x) in dst.iter_mut().zip(g).zip(aux) {
        *t += d(gl, x);
    }
}

/// As [`add`], skipping lanes with zero adjoint, for partials that may be
/// infinite at finite node values (`sqrt` at 0, negative powers at 0).
#[inline(always)]
fn guarded(head: &mut [f64], target: super::Var, c: usize, g: &[f64], d: impl Fn(f64, usize) -> f64) {
    let dst = &mut head[target.index() * c..target.index() * c + c];
    for (l, (t, &gl)) in dst.iter_mut().zip(g).enumerate() {
        if gl != 0.0 {
            *t += d(gl, l);
        }
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};

    use super::*;
    use crate::tape::{AdjointSeed, TapeBuilder, Workspace};

    fn call_like() -> Tape {
        let mut b = TapeBuilder::new();
        let s = b.param();
        let w = b.input();
        let e = b.mul(s, w);
        let x = b.exp(e);
        let k = b.constant(1.0);
        let d = b.sub(x, k);
        let y = b.max0(d);
        b.output(y);
        let y2 = b.mul(d, s);
        b.output(y2);
        b.build().unwrap()
    }

    #[test]
    fn lanes_match_scalar_exactly() {
        let t = call_like();
        let block = array![[0.3], [-0.7], [1.9], [0.0]];
        let seeds = array![[1.0, 0.5], [2.0, -1.0], [0.0, 0.0], [3.0, 0.25]];
        let mut ws = BatchWorkspace::new(&t, 4).unwrap();
        let ys = t.forward_batch(&[0.4], block.view(), &mut ws).unwrap();
        let gs = t.reverse_batch(&[0.4], block.view(), seeds.view(), &mut ws).unwrap();
        let mut sw = Workspace::new(&t);
        for lane in 0..4 {
            let w = [block[[lane, 0]]];
            t.forward_into(&[0.4], &w, &mut sw).unwrap();
            assert_eq!(t.outputs(&sw), ys.row(lane).to_vec());
            let seed = AdjointSeed::new(seeds.row(lane).to_vec()).unwrap();
            assert_eq!(t.reverse(&[0.4], &w, &seed).unwrap(), gs.row(lane).to_vec());
        }
        assert_eq!(gs.row(2).to_vec(), vec![0.0]);
        let counter = ws.counter();
        assert_eq!(counter.forward_applications, 2);
        assert_eq!(counter.reverse_applications, 1);
        assert_eq!(counter.forward_lanes, 8);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let t = call_like();
        let mut ws = BatchWorkspace::new(&t, 4).unwrap();
        let block = Array2::<f64>::zeros((3, 1));
        assert!(matches!(
            t.forward_batch(&[0.4], block.view(), &mut ws),
            Err(Error::DimensionMismatch { what: "batch width", expected: 4, got: 3 })
        ));
        assert!(BatchWorkspace::new(&t, 0).is_err());
    }

    #[test]
    fn identical_rows_give_identical_lanes() {
        let t = call_like();
        let block = Array2::from_elem((4, 1), 0.8);
        let seeds = Array2::from_elem((4, 2), 1.5);
        let mut ws = BatchWorkspace::new(&t, 4).unwrap();
        let ys = t.forward_batch(&[0.3], block.view(), &mut ws).unwrap();
        let gs = t.reverse_batch(&[0.3], block.view(), seeds.view(), &mut ws).unwrap();
        for lane in 1..4 {
            assert_eq!(ys.row(lane), ys.row(0));
            assert_eq!(gs.row(lane), gs.row(0));
        }
    }
}
