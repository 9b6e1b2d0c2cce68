use super::{AdjointSeed, Op, Tape};
use crate::error::{Error, Result};

/// Value and adjoint buffers for scalar replay of one tape.
#[derive(Debug, Clone)]
pub struct Workspace {
    values: Vec<f64>,
    adjoints: Vec<f64>,
}

impl Workspace {
    pub fn new(tape: &Tape) -> Self {
        Self {
            values: vec![0.0; tape.len()],
            adjoints: vec![0.0; tape.len()],
        }
    }

    /// Node values of the last forward pass.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn load(&mut self, values: &[f64]) {
        self.values.copy_from_slice(values);
    }
}

impl Tape {
    /// Evaluates `y(params, inputs)`.
    pub fn forward(&self, params: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
        let mut ws = Workspace::new(self);
        self.forward_into(params, inputs, &mut ws)?;
        Ok(self.outputs(&ws))
    }

    /// Returns `Σᵢ λᵢ ∂yᵢ/∂aₖ` for every parameter slot `k`.
    pub fn reverse(&self, params: &[f64], inputs: &[f64], seed: &AdjointSeed) -> Result<Vec<f64>> {
        self.check_seed(seed.as_slice())?;
        let mut ws = Workspace::new(self);
        self.forward_into(params, inputs, &mut ws)?;
        let mut grad = vec![0.0; self.n_params()];
        self.reverse_sweep(&mut ws, seed.as_slice(), &mut grad);
        Ok(grad)
    }

    /// Forward pass storing every node value in `ws`.
    pub fn forward_into(&self, params: &[f64], inputs: &[f64], ws: &mut Workspace) -> Result<()> {
        self.check_dims(params, inputs)?;
        debug_assert_eq!(ws.values.len(), self.len());
        let v = &mut ws.values;
        let mut finite = true;
        for (n, op) in self.ops.iter().enumerate() {
            let x = match *op {
                Op::Param(k) => params[k as usize],
                Op::Input(k) => inputs[k as usize],
                Op::Const(c) => c,
                Op::Add(a, b) => v[a.index()] + v[b.index()],
                Op::Sub(a, b) => v[a.index()] - v[b.index()],
                Op::Mul(a, b) => v[a.index()] * v[b.index()],
                Op::Div(a, b) => v[a.index()] / v[b.index()],
                Op::Neg(a) => -v[a.index()],
                Op::Exp(a) => v[a.index()].exp(),
                Op::Log(a) => v[a.index()].ln(),
                Op::Sqrt(a) => v[a.index()].sqrt(),
                Op::PowConst(a, p) => v[a.index()].powf(p),
                Op::MaxZero(a) => relu(v[a.index()]),
            };
            finite &= x.is_finite();
            v[n] = x;
        }
        if finite {
            Ok(())
        } else {
            let node = v.iter().position(|x| !x.is_finite()).unwrap_or(0);
            Err(Error::NonFinite { node })
        }
    }

    /// Copies the output values of the last forward pass.
    pub fn outputs(&self, ws: &Workspace) -> Vec<f64> {
        let mut out = vec![0.0; self.n_outputs()];
        self.outputs_into(ws, &mut out);
        out
    }

    pub fn outputs_into(&self, ws: &Workspace, out: &mut [f64]) {
        for (o, slot) in out.iter_mut().zip(&self.outputs) {
            *o = ws.values[slot.index()];
        }
    }

    /// Reverse sweep over the values stored by the last [`Tape::forward_into`].
    ///
    /// Adjoints are *accumulated* into `grad`, which lets callers sum
    /// per-path contributions without a temporary.
    pub fn reverse_sweep(&self, ws: &mut Workspace, seed: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(seed.len(), self.n_outputs());
        debug_assert_eq!(grad.len(), self.n_params());
        let v = &ws.values;
        let adj = &mut ws.adjoints;
        adj.fill(0.0);
        for (slot, &l) in self.outputs.iter().zip(seed) {
            adj[slot.index()] += l;
        }
        for (n, op) in self.ops.iter().enumerate().rev() {
            let g = adj[n];
            if g == 0.0 || !self.active[n] {
                continue;
            }
            match *op {
                Op::Param(k) => grad[k as usize] += g,
                Op::Input(_) | Op::Const(_) => {}
                Op::Add(a, b) => {
                    adj[a.index()] += g;
                    adj[b.index()] += g;
                }
                Op::Sub(a, b) => {
                    adj[a.index()] += g;
                    adj[b.index()] -= g;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (v[a.index()], v[b.index()]);
                    adj[a.index()] += g * vb;
                    adj[b.index()] += g * va;
                }
                Op::Div(a, b) => {
                    let vb = v[b.index()];
                    adj[a.index()] += g / vb;
                    adj[b.index()] -= g * v[n] / vb;
                }
                Op::Neg(a) => adj[a.index()] -= g,
                Op::Exp(a) => adj[a.index()] += g * v[n],
                Op::Log(a) => adj[a.index()] += g / v[a.index()],
                Op::Sqrt(a) => adj[a.index()] += g * 0.5 / v[n],
                Op::PowConst(a, p) => adj[a.index()] += g * p * v[a.index()].powf(p - 1.0),
                Op::MaxZero(a) => {
                    if v[a.index()] > 0.0 {
                        adj[a.index()] += g;
                    }
                }
            }
        }
    }
}

#[inline(always)]
pub(super) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::TapeBuilder;

    fn product() -> Tape {
        let mut b = TapeBuilder::new();
        let a = b.param();
        let w = b.input();
        let y = b.mul(a, w);
        b.output(y);
        b.build().unwrap()
    }

    #[test]
    fn product_forward() {
        assert_eq!(product().forward(&[2.0], &[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn relu_of_negative_is_zero() {
        let mut b = TapeBuilder::new();
        let x = b.param();
        let y = b.max0(x);
        b.output(y);
        let t = b.build().unwrap();
        assert_eq!(t.forward(&[-1.0], &[]).unwrap(), vec![0.0]);
        assert_eq!(t.reverse(&[0.0], &[], &AdjointSeed::ones(1)).unwrap(), vec![0.0]);
        assert_eq!(t.reverse(&[1e-300], &[], &AdjointSeed::ones(1)).unwrap(), vec![1.0]);
    }

    #[test]
    fn identity_and_product_rule() {
        let mut b = TapeBuilder::new();
        let x = b.param();
        b.output(x);
        let id = b.build().unwrap();
        assert_eq!(id.reverse(&[4.0], &[], &AdjointSeed::ones(1)).unwrap(), vec![1.0]);

        let mut b = TapeBuilder::new();
        let x1 = b.param();
        let x2 = b.param();
        let y = b.mul(x1, x2);
        b.output(y);
        let t = b.build().unwrap();
        assert_eq!(t.reverse(&[2.0, 3.0], &[], &AdjointSeed::ones(1)).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn dimension_errors() {
        let t = product();
        assert!(matches!(
            t.forward(&[1.0, 2.0], &[3.0]),
            Err(Error::DimensionMismatch { what: "parameters", expected: 1, got: 2 })
        ));
        assert!(matches!(
            t.forward(&[1.0], &[]),
            Err(Error::DimensionMismatch { what: "random inputs", .. })
        ));
        let seed = AdjointSeed::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            t.reverse(&[1.0], &[1.0], &seed),
            Err(Error::DimensionMismatch { what: "adjoint seed", .. })
        ));
    }

    #[test]
    fn non_finite_reports_first_bad_node() {
        let mut b = TapeBuilder::new();
        let x = b.param();
        let l = b.log(x);
        let y = b.exp(l);
        b.output(y);
        let t = b.build().unwrap();
        assert!(matches!(t.forward(&[-1.0], &[]), Err(Error::NonFinite { node: 1 })));
    }

    #[test]
    fn outputs_alias_is_summed_in_seed() {
        // the same expression marked twice receives both weights
        let mut b = TapeBuilder::new();
        let x = b.param();
        let y = b.exp(x);
        b.output(y);
        b.output(y);
        let t = b.build().unwrap();
        let seed = AdjointSeed::new(vec![2.0, 3.0]).unwrap();
        let g = t.reverse(&[0.0], &[], &seed).unwrap();
        assert_eq!(g, vec![5.0]);
    }
}
