//! Reverse sweep compiled against node activity.
//!
//! Only nodes that depend on a parameter carry adjoints, so the plan lists
//! those nodes in reverse order, each with its partials into active operands
//! only. Operand order matches the scalar sweep.

use super::{Op, Var};

/// `∂node/∂target` times the node adjoint `g`, in terms of node values `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Partial {
    One,
    MinusOne,
    /// `g · v[x]`
    Times(Var),
    /// `g / v[x]`
    Over(Var),
    /// `g · v[node]`
    TimesOwn,
    /// `g` where `v[x] > 0`, else 0
    Positive(Var),
    /// `−g · v[node] / v[b]`; may be infinite at zero adjoint
    Quotient(Var),
    /// `g · 0.5 / v[node]`; may be infinite at zero adjoint
    HalfOverOwn,
    /// `g · p · v[x]^(p−1)`; may be infinite at zero adjoint
    Power(Var, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Step {
    pub target: Var,
    pub partial: Partial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PlanNode {
    pub node: u32,
    /// Parameter slot when the node is a parameter.
    pub param: Option<u32>,
    pub steps: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct ReversePlan {
    pub nodes: Vec<PlanNode>,
    pub steps: Vec<Step>,
}

impl ReversePlan {
    pub fn compile(ops: &[Op], active: &[bool]) -> Self {
        let mut plan = ReversePlan::default();
        for (n, op) in ops.iter().enumerate().rev() {
            if !active[n] {
                continue;
            }
            let start = plan.steps.len() as u32;
            let mut push = |target: Var, partial: Partial| {
                if active[target.index()] {
                    plan.steps.push(Step { target, partial });
                }
            };
            let param = match *op {
                Op::Param(k) => Some(k),
                Op::Input(_) | Op::Const(_) => None,
                Op::Add(a, b) => {
                    push(a, Partial::One);
                    push(b, Partial::One);
                    None
                }
                Op::Sub(a, b) => {
                    push(a, Partial::One);
                    push(b, Partial::MinusOne);
                    None
                }
                Op::Mul(a, b) => {
                    push(a, Partial::Times(b));
                    push(b, Partial::Times(a));
                    None
                }
                Op::Div(a, b) => {
                    push(a, Partial::Over(b));
                    push(b, Partial::Quotient(b));
                    None
                }
                Op::Neg(a) => {
                    push(a, Partial::MinusOne);
                    None
                }
                Op::Exp(a) => {
                    push(a, Partial::TimesOwn);
                    None
                }
                Op::Log(a) => {
                    push(a, Partial::Over(a));
                    None
                }
                Op::Sqrt(a) => {
                    push(a, Partial::HalfOverOwn);
                    None
                }
                Op::PowConst(a, p) => {
                    push(a, Partial::Power(a, p));
                    None
                }
                Op::MaxZero(a) => {
                    push(a, Partial::Positive(a));
                    None
                }
            };
            plan.nodes.push(PlanNode {
                node: n as u32,
                param,
                steps: (start, plan.steps.len() as u32),
            });
        }
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::TapeBuilder;

    #[test]
    fn inactive_work_is_dropped() {
        let mut b = TapeBuilder::new();
        let a = b.param();
        let w = b.input();
        let k = b.constant(2.0);
        let kw = b.mul(k, w);
        let y = b.mul(a, kw);
        b.output(y);
        let tape = b.build().unwrap();
        assert!(tape.is_active(y) && !tape.is_active(kw) && !tape.is_active(k));
        let plan = &tape.plan;
        let nodes: Vec<u32> = plan.nodes.iter().map(|p| p.node).collect();
        assert_eq!(nodes, vec![y.0, a.0]);
        assert_eq!(plan.steps, vec![Step { target: a, partial: Partial::Times(kw) }]);
        assert_eq!(plan.nodes[1].param, Some(0));
    }
}
