use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    /// Correction pairs kept.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the projected gradient norm falls to this value.
    pub grad_norm_tol: f64,
    /// Sufficient-decrease constant `c₁`.
    pub armijo: f64,
    /// Curvature constant `c₂`.
    pub curvature: f64,
    /// Also require the weak Wolfe curvature condition.
    pub wolfe: bool,
    pub max_backtracks: usize,
    /// Elementwise lower bound enforced by projection.
    pub lower_bound: Option<f64>,
    /// Length of the first trial step whenever no curvature pairs are held.
    pub initial_step: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iter: 100,
            grad_norm_tol: 1e-8,
            armijo: 1e-4,
            curvature: 0.9,
            wolfe: true,
            max_backtracks: 20,
            lower_bound: None,
            initial_step: 1.0,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::invalid("memory", "must be at least 1"));
        }
        if !(0.0 < self.armijo && self.armijo < self.curvature && self.curvature < 1.0) {
            return Err(Error::invalid(
                "line search",
                format!("need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}", self.armijo, self.curvature),
            ));
        }
        if !(self.grad_norm_tol >= 0.0) {
            return Err(Error::invalid("grad_norm_tol", "must be non-negative"));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::invalid("initial_step", "must be positive"));
        }
        if self.max_backtracks == 0 {
            return Err(Error::invalid("max_backtracks", "must be at least 1"));
        }
        Ok(())
    }
}

/// A differentiable objective.
pub trait Objective {
    /// Value and gradient at `x`.
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Called before iteration `iteration` (0 for the starting point). Return
    /// `true` if the objective changed, e.g. after drawing a fresh sample,
    /// so the current iterate has to be re-evaluated.
    fn begin_iteration(&mut self, _iteration: usize) -> Result<bool> {
        Ok(false)
    }

    /// Observes each accepted iterate, including the starting point.
    fn accepted(&mut self, _record: &IterationRecord) {}
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(self(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
    /// The objective returned NaN or infinity; the last finite iterate is kept.
    NonFiniteObjective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub status: Termination,
    pub history: Vec<IterationRecord>,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn is_finite(value: f64, grad: &[f64]) -> bool {
    value.is_finite() && grad.iter().all(|g| g.is_finite())
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimizes `objective` from `x0` with limited-memory BFGS.
///
/// Fails only if the starting point is infeasible for the objective; later
/// problems are reported through [`LbfgsOutcome::status`].
pub fn lbfgs_minimize(objective: &mut impl Objective, x0: &[f64], config: &LbfgsConfig) -> Result<LbfgsOutcome> {
    config.validate()?;
    let project = |x: &mut [f64]| {
        if let Some(lb) = config.lower_bound {
            x.iter_mut().for_each(|v| *v = v.max(lb));
        }
    };
    // Coordinates pinned at the bound with the gradient pushing outward.
    let pinned = |x: &[f64], g: &[f64], i: usize| config.lower_bound.is_some_and(|lb| x[i] <= lb && g[i] > 0.0);
    let projected_norm = |x: &[f64], g: &[f64]| {
        (0..g.len())
            .filter(|&i| !pinned(x, g, i))
            .map(|i| g[i] * g[i])
            .sum::<f64>()
            .sqrt()
    };

    let mut x = x0.to_vec();
    project(&mut x);
    objective.begin_iteration(0)?;
    let (mut f, mut g) = objective.evaluate(&x)?;
    let mut evaluations = 1;
    if !is_finite(f, &g) {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut history = Vec::new();
    let mut record = |objective: &mut dyn FnMut(&IterationRecord), iteration: usize, x: &[f64], f: f64, g: &[f64]| {
        let r = IterationRecord {
            iteration,
            value: f,
            grad_norm: projected_norm(x, g),
            x: x.to_vec(),
        };
        objective(&r);
        history.push(r);
    };
    record(&mut |r| objective.accepted(r), 0, &x, f, &g);

    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(config.memory);
    let mut status = Termination::MaxIterations;

    for k in 1..=config.max_iter {
        if projected_norm(&x, &g) <= config.grad_norm_tol {
            status = Termination::GradientTolerance;
            break;
        }

        let mut d = two_loop(&memory, &g);
        for i in 0..d.len() {
            if pinned(&x, &g, i) {
                d[i] = 0.0;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            memory.clear();
            d = g.iter().map(|v| -v).collect();
            for i in 0..d.len() {
                if pinned(&x, &g, i) {
                    d[i] = 0.0;
                }
            }
            slope = dot(&g, &d);
        }
        let mut alpha = if memory.is_empty() {
            (config.initial_step / d.iter().map(|v| v * v).sum::<f64>().sqrt()).min(1.0)
        } else {
            1.0
        };

        // Weak Wolfe bisection; without the curvature test this is plain
        // Armijo backtracking.
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut accepted = None;
        let mut armijo_only = None;
        let mut non_finite = false;
        for _ in 0..config.max_backtracks {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut trial);
            let (ft, gt) = objective.evaluate(&trial)?;
            evaluations += 1;
            if !is_finite(ft, &gt) {
                non_finite = true;
                hi = alpha;
                alpha = 0.5 * (lo + hi);
                continue;
            }
            non_finite = false;
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = config.armijo * dot(&g, &step);
            if ft > f + decrease || dot(&step, &step) == 0.0 {
                hi = alpha;
            } else if config.wolfe && dot(&gt, &d) < config.curvature * slope {
                lo = alpha;
                armijo_only = Some((trial, ft, gt, step));
            } else {
                accepted = Some((trial, ft, gt, step));
                break;
            }
            alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * alpha };
        }
        let Some((x_new, f_new, g_new, s)) = accepted.or(armijo_only) else {
            status = if non_finite {
                Termination::NonFiniteObjective
            } else {
                Termination::LineSearchFailed
            };
            break;
        };

        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == config.memory {
                memory.pop_front();
            }
            memory.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        x = x_new;
        f = f_new;
        g = g_new;

        if objective.begin_iteration(k)? {
            let (fr, gr) = objective.evaluate(&x)?;
            evaluations += 1;
            if !is_finite(fr, &gr) {
                status = Termination::NonFiniteObjective;
                break;
            }
            f = fr;
            g = gr;
        }
        record(&mut |r| objective.accepted(r), k, &x, f, &g);
    }
    if status == Termination::MaxIterations && projected_norm(&x, &g) <= config.grad_norm_tol {
        status = Termination::GradientTolerance;
    }

    Ok(LbfgsOutcome {
        x,
        value: f,
        grad: g,
        status,
        history,
        evaluations,
    })
}

/// `−H·g` for the inverse-Hessian approximation held in `memory`.
fn two_loop(memory: &VecDeque<Pair>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; memory.len()];
    for (i, p) in memory.iter().enumerate().rev() {
        let a = p.rho * dot(&p.s, &q);
        alphas[i] = a;
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
    }
    let gamma = memory.back().map_or(1.0, |p| dot(&p.s, &p.y) / dot(&p.y, &p.y));
    let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
    for (p, a) in memory.iter().zip(&alphas) {
        let b = p.rho * dot(&p.y, &r);
        r.iter_mut().zip(&p.s).for_each(|(ri, si)| *ri += si * (a - b));
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}
