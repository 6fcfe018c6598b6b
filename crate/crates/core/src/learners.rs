//! Model-free robust relative value iteration: TD for policy evaluation and
//! Q-learning for control. Both update every state (or state-action pair)
//! synchronously from fresh generative samples.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_h_with_values, estimate_t, MlmcConfig, SampleSource};
use crate::mdp::{sup_norm, OffsetFn, Policy, QFn};
use crate::uncertainty::UncertaintySetSpec;

/// Iterates whose sup norm exceeds this abort the run.
pub const DIVERGENCE_BOUND: f64 = 1e8;

/// Step size `alpha_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `alpha_n = c / (n + offset)`.
    RobbinsMonro { c: f64, offset: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Constant { alpha: 0.01 }
    }
}

impl StepSchedule {
    pub fn step(&self, n: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::RobbinsMonro { c, offset } => c / (n as f64 + offset),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { alpha } => alpha > 0.0 && alpha <= 1.0,
            StepSchedule::RobbinsMonro { c, offset } => c > 0.0 && offset > 0.0 && c / offset <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("step sizes must lie in (0, 1]: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    #[serde(default)]
    pub offset: OffsetFn,
    #[serde(default)]
    pub schedule: StepSchedule,
    pub n_iters: usize,
    /// Defaults to [`MlmcConfig::default_for`] the uncertainty set.
    #[serde(default)]
    pub mlmc: Option<MlmcConfig>,
    /// Store the iterate every this many iterations.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

impl LearnerConfig {
    pub fn new(n_iters: usize) -> Self {
        LearnerConfig {
            offset: OffsetFn::Mean,
            schedule: StepSchedule::default(),
            n_iters,
            mlmc: None,
            snapshot_every: None,
        }
    }

    fn resolve(&self, spec: &UncertaintySetSpec) -> Result<MlmcConfig> {
        self.schedule.validate()?;
        let mlmc = self.mlmc.unwrap_or_else(|| MlmcConfig::default_for(spec));
        mlmc.validate(spec)?;
        Ok(mlmc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub f_value: f64,
    /// Next-state samples consumed so far.
    pub cost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iter: usize,
    pub values: Vec<f64>,
}

/// Output of one learning run. Record `n` holds `f` of the `n`-th iterate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Final `V` (TD) or flattened `Q` (Q-learning).
    pub final_values: Vec<f64>,
    /// Multi-level estimates whose level hit the cap.
    pub capped_estimates: u64,
}

impl RunTrace {
    pub fn final_offset(&self) -> Option<f64> {
        self.records.last().map(|r| r.f_value)
    }

    /// CSV with header `iter,f_value,cost`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iter,f_value,cost")?;
        for r in &self.records {
            writeln!(w, "{},{},{}", r.iter, r.f_value, r.cost)?;
        }
        Ok(())
    }

    pub fn snapshots_json(&self) -> String {
        serde_json::to_string(&self.snapshots).expect("snapshots serialize")
    }
}

struct Recorder {
    trace: RunTrace,
    offset: OffsetFn,
    snapshot_every: Option<usize>,
    cost: u64,
}

impl Recorder {
    fn new(cfg: &LearnerConfig, x0: &[f64]) -> Self {
        let mut rec = Recorder {
            trace: RunTrace::default(),
            offset: cfg.offset,
            snapshot_every: cfg.snapshot_every.filter(|&k| k > 0),
            cost: 0,
        };
        rec.trace.records.reserve(cfg.n_iters + 1);
        rec.push(0, x0);
        rec
    }

    fn push(&mut self, iter: usize, x: &[f64]) {
        self.trace.records.push(TraceRecord {
            iter,
            f_value: self.offset.apply(x),
            cost: self.cost,
        });
        if let Some(k) = self.snapshot_every {
            if iter % k == 0 {
                self.trace.snapshots.push(Snapshot {
                    iter,
                    values: x.to_vec(),
                });
            }
        }
    }

    fn finish(mut self, x: Vec<f64>) -> RunTrace {
        self.trace.final_values = x;
        self.trace
    }
}

fn guard(iter: usize, x: &[f64]) -> Result<()> {
    let norm = sup_norm(x);
    if !norm.is_finite() || x.iter().any(|v| v.is_nan()) || norm > DIVERGENCE_BOUND {
        return Err(Error::Diverged {
            iter,
            norm: if x.iter().any(|v| v.is_nan()) { f64::NAN } else { norm },
        });
    }
    Ok(())
}

/// Robust RVI TD:
/// `V_{n+1}(s) = V_n(s) + alpha_n (T_hat V_n(s) - f(V_n) - V_n(s))`.
#[allow(clippy::too_many_arguments)]
pub fn robust_rvi_td<S, R>(
    source: &S,
    rewards: &[f64],
    policy: &Policy,
    spec: &UncertaintySetSpec,
    init: Option<&[f64]>,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<RunTrace>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    let mlmc = cfg.resolve(spec)?;
    spec.validate(Some(policy.n_states()))?;
    let mut v = match init {
        Some(v0) if v0.len() != policy.n_states() => {
            return Err(Error::Dimension("initial value function has the wrong length".into()))
        }
        Some(v0) => v0.to_vec(),
        None => vec![0.0; policy.n_states()],
    };
    cfg.offset.check(v.len())?;
    let mut rec = Recorder::new(cfg, &v);
    for n in 0..cfg.n_iters {
        let alpha = cfg.schedule.step(n);
        let f = cfg.offset.apply(&v);
        let t = estimate_t(source, rewards, policy, spec, &v, &mlmc, rng)?;
        for (x, target) in v.iter_mut().zip(&t.values) {
            *x += alpha * (target - f - *x);
        }
        guard(n + 1, &v)?;
        rec.cost += t.samples_used;
        rec.trace.capped_estimates += t.capped;
        rec.push(n + 1, &v);
    }
    Ok(rec.finish(v))
}

/// Robust RVI Q-learning:
/// `Q_{n+1}(s,a) = Q_n(s,a) + alpha_n (H_hat Q_n(s,a) - f(Q_n) - Q_n(s,a))`,
/// with `f` applied to `Q` as a flat vector (a reference index addresses
/// entry `s * n_actions + a`).
#[allow(clippy::too_many_arguments)]
pub fn robust_rvi_q<S, R>(
    source: &S,
    rewards: &[f64],
    n_actions: usize,
    spec: &UncertaintySetSpec,
    init: Option<&QFn>,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<RunTrace>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    let mlmc = cfg.resolve(spec)?;
    let n_states = source.n_states();
    spec.validate(Some(n_states))?;
    if rewards.len() != n_states * n_actions {
        return Err(Error::Dimension("reward table shape differs from source".into()));
    }
    let mut q = match init {
        Some(q0) if q0.n_states() != n_states || q0.n_actions() != n_actions => {
            return Err(Error::Dimension("initial Q table has the wrong shape".into()))
        }
        Some(q0) => q0.clone(),
        None => QFn::zeros(n_states, n_actions),
    };
    cfg.offset.check(n_states * n_actions)?;
    let mut rec = Recorder::new(cfg, q.as_slice());
    let mut targets = vec![0.0; n_states * n_actions];
    for n in 0..cfg.n_iters {
        let alpha = cfg.schedule.step(n);
        let f = cfg.offset.apply(q.as_slice());
        let vq = q.state_values();
        for s in 0..n_states {
            for a in 0..n_actions {
                let i = s * n_actions + a;
                let est = estimate_h_with_values(source, rewards[i], spec, &vq, s, a, &mlmc, rng)?;
                targets[i] = est.value;
                rec.cost += est.samples_used;
                rec.trace.capped_estimates += u64::from(est.capped);
            }
        }
        for (x, target) in q.as_mut_slice().iter_mut().zip(&targets) {
            *x += alpha * (target - f - *x);
        }
        guard(n + 1, q.as_slice())?;
        rec.push(n + 1, q.as_slice());
    }
    Ok(rec.finish(q.as_slice().to_vec()))
}

/// Deterministic greedy policy, ties to the lowest action index.
pub fn greedy_policy(q: &QFn) -> Policy {
    let actions: Vec<usize> = (0..q.n_states())
        .map(|s| {
            q.row(s)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (a, &x)| if x > best.1 { (a, x) } else { best })
                .0
        })
        .collect();
    Policy::deterministic(q.n_actions(), &actions).expect("greedy actions are in range")
}
