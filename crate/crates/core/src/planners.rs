//! Model-based ground truth: robust relative value iteration with the exact
//! support function, and brute-force evaluation of finite kernel sets.
//!
//! Iterates are damped, `V <- (1 - tau) V + tau (T V - f(T V) e)`. Damping
//! leaves the fixed points unchanged and makes the iteration converge on
//! periodic chains, where the undamped map oscillates forever.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::greedy_policy;
use crate::mdp::{
    check_simplex, gain_and_bias, robust_optimal_operator, robust_policy_operator, span, BiasNormalization,
    OffsetFn, Policy, QFn, TabularMdp,
};
use crate::uncertainty::UncertaintyModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub offset: OffsetFn,
    pub tol: f64,
    pub max_iters: usize,
    /// Weight `tau` on the new iterate, in `(0, 1]`.
    pub damping: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            offset: OffsetFn::Mean,
            tol: 1e-9,
            max_iters: 1_000_000,
            damping: 0.5,
        }
    }
}

impl PlannerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.damping > 0.0 && self.damping <= 1.0) || self.max_iters == 0 {
            return Err(Error::InvalidConfig(format!(
                "planner needs tol > 0, damping in (0,1] and max_iters >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Converged robust policy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSolution {
    pub gain: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Largest absolute robust Bellman residual at `(gain, values)`.
    pub residual: f64,
}

/// Converged robust control.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    pub gain: f64,
    pub q: QFn,
    pub policy: Policy,
    pub iterations: usize,
    pub residual: f64,
}

fn check_model<M: UncertaintyModel + ?Sized>(mdp: &TabularMdp, model: &M) -> Result<()> {
    if model.n_states() != mdp.n_states() || model.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension("uncertainty model and MDP disagree in shape".into()));
    }
    Ok(())
}

/// Runs the damped relative iteration `x <- (1-tau) x + tau (op(x) - f(op(x)))`
/// until `span(op(x) - x) < tol`. Returns `(f(op(x)), x, iterations)`.
fn relative_iteration<F>(x0: Vec<f64>, cfg: &PlannerConfig, what: &'static str, op: F) -> Result<(f64, Vec<f64>, usize)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    cfg.offset.check(x0.len())?;
    let mut x = x0;
    let mut diff = vec![0.0; x.len()];
    let mut last = f64::INFINITY;
    for k in 0..cfg.max_iters {
        let tx = op(&x)?;
        for ((d, t), xi) in diff.iter_mut().zip(&tx).zip(&x) {
            *d = t - xi;
        }
        let fx = cfg.offset.apply(&tx);
        last = span(&diff);
        if !last.is_finite() {
            return Err(Error::Diverged { iter: k, norm: last });
        }
        if last < cfg.tol {
            return Ok((fx, x, k));
        }
        for (xi, t) in x.iter_mut().zip(&tx) {
            *xi = (1.0 - cfg.damping) * *xi + cfg.damping * (t - fx);
        }
    }
    Err(Error::NoConvergence {
        what,
        iterations: cfg.max_iters,
        residual: last,
    })
}

/// Robust gain and relative value of `policy` by damped robust RVI.
pub fn robust_rvi_eval<M: UncertaintyModel + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    model: &M,
    cfg: &PlannerConfig,
) -> Result<EvalSolution> {
    check_model(mdp, model)?;
    let (gain, values, iterations) = relative_iteration(vec![0.0; mdp.n_states()], cfg, "robust RVI evaluation", |v| {
        robust_policy_operator(mdp, policy, model, v)
    })?;
    let tv = robust_policy_operator(mdp, policy, model, &values)?;
    let residual = tv
        .iter()
        .zip(&values)
        .fold(0.0f64, |m, (t, x)| m.max((t - gain - x).abs()));
    Ok(EvalSolution {
        gain,
        values,
        iterations,
        residual,
    })
}

/// Optimal robust gain, a solution `Q` of the optimal robust Bellman equation
/// and its greedy policy, by damped robust RVI on `Q`.
pub fn robust_rvi_control<M: UncertaintyModel + ?Sized>(
    mdp: &TabularMdp,
    model: &M,
    cfg: &PlannerConfig,
) -> Result<ControlSolution> {
    check_model(mdp, model)?;
    let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
    let h = |q: &[f64]| -> Result<Vec<f64>> {
        let q = QFn::from_vec(n_states, n_actions, q.to_vec())?;
        Ok(robust_optimal_operator(mdp, model, &q)?.as_slice().to_vec())
    };
    let (gain, flat, iterations) = relative_iteration(vec![0.0; n_states * n_actions], cfg, "robust RVI control", h)?;
    let hq = h(&flat)?;
    let residual = hq
        .iter()
        .zip(&flat)
        .fold(0.0f64, |m, (t, x)| m.max((t - gain - x).abs()));
    let q = QFn::from_vec(n_states, n_actions, flat)?;
    let policy = greedy_policy(&q);
    Ok(ControlSolution {
        gain,
        q,
        policy,
        iterations,
        residual,
    })
}

/// Kernel whose row at every `(s,a)` is the model's worst-case row for `v`.
pub fn worst_case_kernel<M: UncertaintyModel + ?Sized>(mdp: &TabularMdp, model: &M, v: &[f64]) -> Result<TabularMdp> {
    check_model(mdp, model)?;
    let mut kernel = Vec::with_capacity(mdp.kernel().len());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            kernel.extend(model.worst_row(s, a, v)?);
        }
    }
    mdp.with_kernel(kernel)
}

/// Rectangular set with finitely many candidate rows per `(s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernelSet {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<Vec<f64>>>,
}

impl FiniteKernelSet {
    /// `rows[s * n_actions + a]` lists the candidate rows of pair `(s,a)`.
    pub fn new(n_states: usize, n_actions: usize, rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if rows.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "expected {} candidate lists, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        for (i, list) in rows.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::InvalidSet(format!("no candidate row for pair index {i}")));
            }
            for row in list {
                check_simplex(row, n_states)?;
            }
        }
        Ok(FiniteKernelSet {
            n_states,
            n_actions,
            rows,
        })
    }

    /// Smallest rectangular set containing every kernel in the list: each
    /// pair collects the distinct rows the kernels assign to it.
    pub fn from_kernels(kernels: &[TabularMdp]) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::InvalidSet("empty kernel list".into()))?;
        let (n_states, n_actions) = (first.n_states(), first.n_actions());
        let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_states * n_actions];
        for k in kernels {
            if k.n_states() != n_states || k.n_actions() != n_actions {
                return Err(Error::Dimension("kernels differ in shape".into()));
            }
            for s in 0..n_states {
                for a in 0..n_actions {
                    let list = &mut rows[s * n_actions + a];
                    let row = k.row(s, a);
                    if !list.iter().any(|r| r.as_slice() == row) {
                        list.push(row.to_vec());
                    }
                }
            }
        }
        Self::new(n_states, n_actions, rows)
    }

    pub fn candidates(&self, s: usize, a: usize) -> &[Vec<f64>] {
        &self.rows[s * self.n_actions + a]
    }

    fn best(&self, s: usize, a: usize, v: &[f64]) -> Result<(usize, f64)> {
        if v.len() != self.n_states {
            return Err(Error::Dimension("value function length differs from n_states".into()));
        }
        let mut best = (0, f64::INFINITY);
        for (i, row) in self.candidates(s, a).iter().enumerate() {
            let x: f64 = row.iter().zip(v).map(|(q, x)| q * x).sum();
            if x < best.1 {
                best = (i, x);
            }
        }
        Ok(best)
    }
}

impl UncertaintyModel for FiniteKernelSet {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn support(&self, s: usize, a: usize, v: &[f64]) -> Result<f64> {
        Ok(self.best(s, a, v)?.1)
    }

    fn worst_row(&self, s: usize, a: usize, v: &[f64]) -> Result<Vec<f64>> {
        let (i, _) = self.best(s, a, v)?;
        Ok(self.candidates(s, a)[i].clone())
    }
}

/// Gains of a policy under each kernel of a finite list.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteEnumeration {
    /// Minimum gain over the list.
    pub gain: f64,
    /// Indices of every kernel attaining the minimum (within `1e-12`).
    pub minimizers: Vec<usize>,
    pub gains: Vec<f64>,
}

/// Evaluates `policy` under every kernel exactly and returns the worst gain
/// together with all kernels attaining it.
pub fn finite_set_enumeration(kernels: &[TabularMdp], policy: &Policy) -> Result<FiniteEnumeration> {
    if kernels.is_empty() {
        return Err(Error::InvalidSet("empty kernel list".into()));
    }
    let gains = kernels
        .iter()
        .map(|k| gain_and_bias(k, policy, BiasNormalization::Stationary).map(|gb| gb.gain))
        .collect::<Result<Vec<_>>>()?;
    let gain = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let minimizers = gains
        .iter()
        .enumerate()
        .filter(|(_, &g)| g - gain <= 1e-12)
        .map(|(i, _)| i)
        .collect();
    Ok(FiniteEnumeration {
        gain,
        minimizers,
        gains,
    })
}
