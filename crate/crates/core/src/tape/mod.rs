//! Recorded-tape reverse-mode AD.
//!
//! A [`Tape`] is a straight-line program over a closed set of primitives,
//! stored in topological order. It is built once (with [`TapeBuilder`] or
//! from a textual program via [`record`]) and is immutable afterwards, so it
//! can be shared freely between threads. All replay state lives in
//! caller-owned workspaces ([`Workspace`], [`BatchWorkspace`]).
//!
//! A reverse sweep seeded with weights `λ` over the outputs returns, for every
//! parameter slot `k`, the linear combination `Σᵢ λᵢ ∂yᵢ/∂aₖ`.

mod batch;
mod plan;
mod program;
mod scalar;

pub use batch::{BatchWorkspace, ReplayCounter};
pub use program::record;
pub use scalar::Workspace;

use crate::error::{Error, Result};

/// Handle to a node of a tape under construction or of a finished tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u32);

impl Var {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One tape node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    /// Parameter slot `k` (a differentiation target).
    Param(u32),
    /// Random-input slot `k`.
    Input(u32),
    Const(f64),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    /// `x^p` for a constant exponent `p`.
    PowConst(Var, f64),
    /// `max(x, 0)`; its derivative at `x = 0` is taken to be 0.
    MaxZero(Var),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Input(_) => "input",
            Op::Const(_) => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sqrt(_) => "sqrt",
            Op::PowConst(..) => "powc",
            Op::MaxZero(_) => "max0",
        }
    }

    fn operands(&self) -> [Option<Var>; 2] {
        match *self {
            Op::Param(_) | Op::Input(_) | Op::Const(_) => [None, None],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => [Some(a), Some(b)],
            Op::Neg(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::PowConst(a, _)
            | Op::MaxZero(a) => [Some(a), None],
        }
    }
}

/// Output weights of a reverse sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSeed(Vec<f64>);

impl AdjointSeed {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if let Some(bad) = lambdas.iter().find(|l| !l.is_finite()) {
            return Err(Error::invalid("lambda", format!("non-finite seed entry {bad}")));
        }
        Ok(Self(lambdas))
    }

    /// Unit weight on every output.
    pub fn ones(m: usize) -> Self {
        Self(vec![1.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// An immutable recorded program `y = F(a | w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    params: Vec<Var>,
    inputs: Vec<Var>,
    outputs: Vec<Var>,
    /// Nodes that depend on some parameter; only these carry adjoints.
    active: Vec<bool>,
    plan: plan::ReversePlan,
}

impl Tape {
    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Number of parameters `M`.
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Number of random inputs `N`.
    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    /// Number of outputs `m`.
    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn param_slots(&self) -> &[Var] {
        &self.params
    }

    pub fn input_slots(&self) -> &[Var] {
        &self.inputs
    }

    pub fn output_slots(&self) -> &[Var] {
        &self.outputs
    }

    /// Whether node `v` depends on a parameter.
    pub fn is_active(&self, v: Var) -> bool {
        self.active[v.index()]
    }

    fn check_dims(&self, params: &[f64], inputs: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                what: "parameters",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        if inputs.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                what: "random inputs",
                expected: self.n_inputs(),
                got: inputs.len(),
            });
        }
        Ok(())
    }

    fn check_seed(&self, seed: &[f64]) -> Result<()> {
        if seed.len() != self.n_outputs() {
            return Err(Error::DimensionMismatch {
                what: "adjoint seed",
                expected: self.n_outputs(),
                got: seed.len(),
            });
        }
        Ok(())
    }
}

/// Incremental construction of a [`Tape`].
///
/// Every method appends a node whose operands already exist, so the
/// resulting op list is topologically ordered by construction.
#[derive(Debug, Default)]
pub struct TapeBuilder {
    ops: Vec<Op>,
    params: Vec<Var>,
    inputs: Vec<Var>,
    outputs: Vec<Var>,
}

impl TapeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an arbitrary op after checking that its operands exist.
    pub fn push(&mut self, op: Op) -> Result<Var> {
        let next = self.ops.len();
        for operand in op.operands().into_iter().flatten() {
            if operand.index() >= next {
                return Err(Error::invalid(
                    "operand",
                    format!("{} at node {next} reads node {}", op.name(), operand.index()),
                ));
            }
        }
        match op {
            Op::Param(k) if k as usize != self.params.len() => {
                return Err(Error::invalid("param", "parameter slots must be declared in order"));
            }
            Op::Input(k) if k as usize != self.inputs.len() => {
                return Err(Error::invalid("input", "input slots must be declared in order"));
            }
            _ => {}
        }
        let var = Var(u32::try_from(next).expect("tape exceeds u32 nodes"));
        match op {
            Op::Param(_) => self.params.push(var),
            Op::Input(_) => self.inputs.push(var),
            _ => {}
        }
        self.ops.push(op);
        Ok(var)
    }

    fn append(&mut self, op: Op) -> Var {
        // operands come from this builder, so they always precede the new node
        self.push(op).expect("builder handles are always in range")
    }

    pub fn param(&mut self) -> Var {
        let k = self.params.len() as u32;
        self.append(Op::Param(k))
    }

    pub fn input(&mut self) -> Var {
        let k = self.inputs.len() as u32;
        self.append(Op::Input(k))
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.append(Op::Const(value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.append(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.append(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.append(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.append(Op::Div(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.append(Op::Neg(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.append(Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.append(Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.append(Op::Sqrt(a))
    }

    pub fn powc(&mut self, a: Var, p: f64) -> Var {
        self.append(Op::PowConst(a, p))
    }

    pub fn max0(&mut self, a: Var) -> Var {
        self.append(Op::MaxZero(a))
    }

    /// `a * c` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = self.constant(c);
        self.mul(a, c)
    }

    /// Marks `v` as the next output.
    ///
    /// Output slots must be disjoint from parameter and input slots and from
    /// each other; when `v` would violate that, an exact copy `v · 1` is
    /// recorded and marked instead.
    pub fn output(&mut self, v: Var) -> Var {
        let taken = matches!(self.ops[v.index()], Op::Param(_) | Op::Input(_))
            || self.outputs.contains(&v);
        let slot = if taken { self.scale(v, 1.0) } else { v };
        self.outputs.push(slot);
        slot
    }

    pub fn build(self) -> Result<Tape> {
        if self.outputs.is_empty() {
            return Err(Error::invalid("outputs", "a tape needs at least one output"));
        }
        let mut active = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let a = match *op {
                Op::Param(_) => true,
                _ => op.operands().into_iter().flatten().any(|v| active[v.index()]),
            };
            active.push(a);
        }
        let plan = plan::ReversePlan::compile(&self.ops, &active);
        Ok(Tape {
            ops: self.ops,
            params: self.params,
            inputs: self.inputs,
            outputs: self.outputs,
            active,
            plan,
        })
    }
}
