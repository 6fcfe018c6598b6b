//! Multi-seed learning experiments and exact planning.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rarl_core::estimators::NominalSampler;
use rarl_core::learners::{greedy_policy, robust_rvi_q, robust_rvi_td, LearnerConfig, RunTrace};
use rarl_core::mdp::{induced_chain, is_unichain};
use rarl_core::planners::{robust_rvi_control, robust_rvi_eval, PlannerConfig};
use rarl_core::{QFn, RectangularSet, TabularMdp};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::HarnessError;
use crate::plot::{Band, Chart, Series};
use crate::stats::{envelope, seed_rng, EnvelopeRow};

/// Runs fail as a whole once more than this share of seeds fail.
pub const MAX_FAILED_SEED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct SeedFailure {
    pub seed: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub environment: String,
    pub uncertainty: String,
    /// Exact robust gain from the planner.
    pub baseline: f64,
    /// Final `f(V_n)` per seed, `None` for failed seeds.
    pub final_offsets: Vec<Option<f64>>,
    pub final_values: Vec<Option<Vec<f64>>>,
    pub failures: Vec<SeedFailure>,
    pub capped_estimates: u64,
    #[serde(skip)]
    pub rows: Vec<EnvelopeRow>,
}

impl EvalSummary {
    pub fn successful_offsets(&self) -> Vec<f64> {
        self.final_offsets.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlSummary {
    #[serde(flatten)]
    pub eval: EvalSummary,
    pub planner_policy: Vec<usize>,
    /// Greedy policy of each seed's final `Q`, `None` for failed seeds.
    pub policies: Vec<Option<Vec<usize>>>,
    pub modal_policy: Option<Vec<usize>>,
    pub modal_count: usize,
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Run(format!("thread pool: {e}")))
}

/// Runs `job` for every seed on `jobs` threads. Results come back in seed order.
pub fn run_seeds<F>(n_seeds: usize, base_seed: u64, jobs: usize, job: F) -> Result<Vec<Result<RunTrace, String>>, HarnessError>
where
    F: Fn(&mut ChaCha8Rng) -> rarl_core::Result<RunTrace> + Sync,
{
    let pool = thread_pool(jobs)?;
    Ok(pool.install(|| {
        (0..n_seeds)
            .into_par_iter()
            .map(|k| job(&mut seed_rng(base_seed, k)).map_err(|e| e.to_string()))
            .collect()
    }))
}

fn learner_config(cfg: &ExperimentConfig) -> LearnerConfig {
    LearnerConfig {
        offset: cfg.offset,
        schedule: cfg.schedule,
        n_iters: cfg.n_iters,
        mlmc: cfg.mlmc,
        snapshot_every: None,
    }
}

fn planner_config(cfg: &ExperimentConfig) -> PlannerConfig {
    PlannerConfig {
        offset: cfg.offset,
        ..PlannerConfig::default()
    }
}

fn summarize(
    cfg: &ExperimentConfig,
    baseline: f64,
    results: &[Result<RunTrace, String>],
) -> Result<EvalSummary, HarnessError> {
    let failures: Vec<SeedFailure> = results
        .iter()
        .enumerate()
        .filter_map(|(seed, r)| r.as_ref().err().map(|e| SeedFailure { seed, error: e.clone() }))
        .collect();
    let ok: Vec<&RunTrace> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let rows = match ok.first() {
        Some(first) => {
            let iters: Vec<usize> = first.records.iter().map(|r| r.iter).collect();
            let series: Vec<Vec<f64>> = ok.iter().map(|t| t.records.iter().map(|r| r.f_value).collect()).collect();
            envelope(&iters, &series, cfg.record_every)
        }
        None => Vec::new(),
    };
    Ok(EvalSummary {
        environment: cfg.environment.name().to_string(),
        uncertainty: format!("{:?}", cfg.uncertainty),
        baseline,
        final_offsets: results.iter().map(|r| r.as_ref().ok().and_then(RunTrace::final_offset)).collect(),
        final_values: results.iter().map(|r| r.as_ref().ok().map(|t| t.final_values.clone())).collect(),
        failures,
        capped_estimates: ok.iter().map(|t| t.capped_estimates).sum(),
        rows,
    })
}

fn write_trace_csv(path: &Path, rows: &[EnvelopeRow], baseline: f64) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "mean", "p95", "p05", "baseline"])?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.mean.to_string(),
            r.p95.to_string(),
            r.p05.to_string(),
            baseline.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn trace_chart(title: &str, rows: &[EnvelopeRow], baseline: f64) -> String {
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.iter as f64, b.iter as f64),
        _ => (0.0, 1.0),
    };
    Chart {
        title,
        x_label: "iteration",
        y_label: "f(iterate)",
        band: Some(Band {
            color: "#1f77b4",
            points: rows.iter().map(|r| (r.iter as f64, r.p05, r.p95)).collect(),
        }),
        series: vec![
            Series {
                label: "mean over seeds",
                color: "#1f77b4",
                points: rows.iter().map(|r| (r.iter as f64, r.mean)).collect(),
                dashed: false,
            },
            Series {
                label: "planner gain",
                color: "#d62728",
                points: vec![(first, baseline), (last, baseline)],
                dashed: true,
            },
        ],
    }
    .render()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Run(format!("json: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_outputs(out: &Path, title: &str, summary: &EvalSummary) -> Result<(), HarnessError> {
    fs::create_dir_all(out)?;
    if !summary.rows.is_empty() {
        write_trace_csv(&out.join("trace.csv"), &summary.rows, summary.baseline)?;
        fs::write(out.join("plot.svg"), trace_chart(title, &summary.rows, summary.baseline))?;
    }
    Ok(())
}

fn check_failures(summary: &EvalSummary, n_seeds: usize) -> Result<(), HarnessError> {
    let failed = summary.failures.len();
    if failed as f64 > MAX_FAILED_SEED_FRACTION * n_seeds as f64 {
        let first = &summary.failures[0];
        return Err(HarnessError::Run(format!(
            "{failed} of {n_seeds} seeds failed (seed {}: {})",
            first.seed, first.error
        )));
    }
    Ok(())
}

fn warn_if_multichain(mdp: &TabularMdp, policy: &rarl_core::Policy) {
    if let Ok(chain) = induced_chain(mdp, policy) {
        if !is_unichain(&chain.transition) {
            eprintln!("warning: the nominal chain under this policy is not unichain");
        }
    }
}

/// Robust RVI TD over `n_seeds` seeds. Writes `trace.csv`, `plot.svg` and
/// `summary.json` under `out`.
pub fn run_eval_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<EvalSummary, HarnessError> {
    cfg.validate_for(Algorithm::Td)?;
    let mdp = cfg.environment.build()?;
    let policy = cfg.policy.build(mdp.n_states(), mdp.n_actions())?;
    cfg.uncertainty
        .validate(Some(mdp.n_states()))
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    warn_if_multichain(&mdp, &policy);
    let set = RectangularSet::new(&mdp, &cfg.uncertainty)?;
    let baseline = robust_rvi_eval(&mdp, &policy, &set, &planner_config(cfg))?.gain;

    let source = NominalSampler::new(&mdp)?;
    let lcfg = learner_config(cfg);
    let results = run_seeds(cfg.n_seeds, cfg.base_seed, jobs, |rng| {
        robust_rvi_td(&source, mdp.rewards(), &policy, &cfg.uncertainty, None, &lcfg, rng)
    })?;
    let summary = summarize(cfg, baseline, &results)?;
    write_outputs(out, &format!("robust TD on {}", summary.environment), &summary)?;
    write_json(&out.join("summary.json"), &summary)?;
    check_failures(&summary, cfg.n_seeds)?;
    Ok(summary)
}

/// Most frequent policy; ties go to the one seen first.
pub fn modal<T: PartialEq + Clone>(items: impl IntoIterator<Item = T>) -> Option<(T, usize)> {
    let mut counts: Vec<(T, usize)> = Vec::new();
    for item in items {
        match counts.iter_mut().find(|(x, _)| *x == item) {
            Some((_, c)) => *c += 1,
            None => counts.push((item, 1)),
        }
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(T, usize)>, (x, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((x, c)),
        })
}

/// Robust RVI Q-learning over `n_seeds` seeds. Writes the files of
/// [`run_eval_experiment`] plus `policy.json`.
pub fn run_control_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ControlSummary, HarnessError> {
    cfg.validate_for(Algorithm::Q)?;
    let mdp = cfg.environment.build()?;
    cfg.uncertainty
        .validate(Some(mdp.n_states()))
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let set = RectangularSet::new(&mdp, &cfg.uncertainty)?;
    let plan = robust_rvi_control(&mdp, &set, &planner_config(cfg))?;

    let source = NominalSampler::new(&mdp)?;
    let lcfg = learner_config(cfg);
    let m = mdp.n_actions();
    let results = run_seeds(cfg.n_seeds, cfg.base_seed, jobs, |rng| {
        robust_rvi_q(&source, mdp.rewards(), m, &cfg.uncertainty, None, &lcfg, rng)
    })?;
    let eval = summarize(cfg, plan.gain, &results)?;
    write_outputs(out, &format!("robust Q-learning on {}", eval.environment), &eval)?;

    let policies: Vec<Option<Vec<usize>>> = eval
        .final_values
        .iter()
        .map(|v| {
            v.as_ref().map(|q| {
                let q = QFn::from_vec(mdp.n_states(), m, q.clone()).expect("learner keeps the Q shape");
                greedy_policy(&q).actions().expect("greedy policies are deterministic")
            })
        })
        .collect();
    let (modal_policy, modal_count) = match modal(policies.iter().flatten().cloned()) {
        Some((p, c)) => (Some(p), c),
        None => (None, 0),
    };
    let summary = ControlSummary {
        eval,
        planner_policy: plan.policy.actions().expect("planner policies are deterministic"),
        policies,
        modal_policy,
        modal_count,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(
        &out.join("policy.json"),
        &serde_json::json!({
            "planner_policy": summary.planner_policy,
            "modal_policy": summary.modal_policy,
            "modal_count": summary.modal_count,
            "policies": summary.policies,
        }),
    )?;
    check_failures(&summary.eval, cfg.n_seeds)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanSummary {
    pub environment: String,
    pub uncertainty: String,
    pub policy_gain: f64,
    pub policy_values: Vec<f64>,
    pub policy_residual: f64,
    pub optimal_gain: f64,
    pub optimal_policy: Vec<usize>,
    pub optimal_q: Vec<f64>,
    pub optimal_residual: f64,
}

/// Exact robust evaluation of the configured policy and robust control.
/// Writes `plan.json`.
pub fn run_planner(cfg: &ExperimentConfig, out: &Path) -> Result<PlanSummary, HarnessError> {
    cfg.validate_for(Algorithm::Planner)?;
    let mdp = cfg.environment.build()?;
    let policy = cfg.policy.build(mdp.n_states(), mdp.n_actions())?;
    cfg.uncertainty
        .validate(Some(mdp.n_states()))
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let set = RectangularSet::new(&mdp, &cfg.uncertainty)?;
    let pcfg = planner_config(cfg);
    let ev = robust_rvi_eval(&mdp, &policy, &set, &pcfg)?;
    let ct = robust_rvi_control(&mdp, &set, &pcfg)?;
    let summary = PlanSummary {
        environment: cfg.environment.name().to_string(),
        uncertainty: format!("{:?}", cfg.uncertainty),
        policy_gain: ev.gain,
        policy_values: ev.values,
        policy_residual: ev.residual,
        optimal_gain: ct.gain,
        optimal_policy: ct.policy.actions().expect("planner policies are deterministic"),
        optimal_q: ct.q.as_slice().to_vec(),
        optimal_residual: ct.residual,
    };
    fs::create_dir_all(out)?;
    write_json(&out.join("plan.json"), &summary)?;
    Ok(summary)
}
