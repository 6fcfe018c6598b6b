//! Robust versus non-robust policies under a grid of perturbed environments.

use std::fs;
use std::path::Path;

use rarl_core::environments::{inventory, inventory_perturbed_demand, one_loop, recycling_robot};
use rarl_core::estimators::NominalSampler;
use rarl_core::learners::{greedy_policy, robust_rvi_q, LearnerConfig};
use rarl_core::mdp::{gain_vector, induced_chain};
use rarl_core::planners::{robust_rvi_control, PlannerConfig};
use rarl_core::{Policy, QFn, RectangularSet, TabularMdp, UncertaintySetSpec};
use serde::Serialize;

use crate::config::{Algorithm, EnvironmentConfig, ExperimentConfig, SweepAxis, SweepConfig, SweepTraining};
use crate::error::HarnessError;
use crate::experiments::{modal, run_seeds};
use crate::plot::{Chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub perturbation: f64,
    pub robust_gain: f64,
    pub nonrobust_gain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub robust_policy: Vec<usize>,
    pub nonrobust_policy: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

/// Long-run average reward of `policy` in `mdp` starting from `start`.
pub fn gain_from(mdp: &TabularMdp, policy: &Policy, start: usize) -> Result<f64, HarnessError> {
    if start >= mdp.n_states() {
        return Err(HarnessError::Config(format!("start state {start} out of range")));
    }
    let chain = induced_chain(mdp, policy)?;
    Ok(gain_vector(&chain)?[start])
}

fn mixture(a: &TabularMdp, b: &TabularMdp, x: f64) -> Result<TabularMdp, HarnessError> {
    let kernel = a.kernel().iter().zip(b.kernel()).map(|(p, q)| (1.0 - x) * p + x * q).collect();
    Ok(a.with_kernel(kernel)?)
}

/// The environments tested at one grid point; the reported gain is the worst.
pub fn perturbed_environments(env: &EnvironmentConfig, axis: &SweepAxis, k: usize) -> Result<(f64, Vec<TabularMdp>), HarnessError> {
    let mismatch = || {
        Err(HarnessError::Config(format!(
            "sweep axis {axis:?} does not apply to environment {}",
            env.name()
        )))
    };
    match (env, axis) {
        (EnvironmentConfig::RecyclingRobot(base), SweepAxis::Amplitude { values }) => {
            let x = values[k];
            let levels = [0.5 - x, 0.5, 0.5 + x].map(|v| v.clamp(0.0, 1.0));
            let mut mdps = Vec::with_capacity(9);
            for alpha in levels {
                for beta in levels {
                    let mut p = *base;
                    p.alpha = alpha;
                    p.beta = beta;
                    mdps.push(recycling_robot(&p)?);
                }
            }
            Ok((x, mdps))
        }
        (EnvironmentConfig::Inventory(base), SweepAxis::DemandPeak { m, values }) => {
            let mut p = base.clone();
            p.demand = inventory_perturbed_demand(base.demand.len(), *m, values[k])?;
            Ok((values[k], vec![inventory(&p)?]))
        }
        (EnvironmentConfig::Inventory(base), SweepAxis::DemandLocation { b, values }) => {
            let mut p = base.clone();
            p.demand = inventory_perturbed_demand(base.demand.len(), values[k], *b)?;
            Ok((values[k] as f64, vec![inventory(&p)?]))
        }
        (EnvironmentConfig::OneLoop, SweepAxis::Mixture { values }) => {
            let x = values[k];
            if !(0.0..=1.0).contains(&x) {
                return Err(HarnessError::Config(format!("mixture weight {x} outside [0, 1]")));
            }
            let (nominal, perturbed) = one_loop()?;
            Ok((x, vec![mixture(&nominal, &perturbed, x)?]))
        }
        _ => mismatch(),
    }
}

fn train(
    cfg: &ExperimentConfig,
    mdp: &TabularMdp,
    spec: &UncertaintySetSpec,
    training: SweepTraining,
    jobs: usize,
) -> Result<Vec<usize>, HarnessError> {
    match training {
        SweepTraining::Planner => {
            let set = RectangularSet::new(mdp, spec)?;
            let pcfg = PlannerConfig {
                offset: cfg.offset,
                ..PlannerConfig::default()
            };
            Ok(robust_rvi_control(mdp, &set, &pcfg)?.policy.actions().expect("deterministic"))
        }
        SweepTraining::QLearning => {
            let source = NominalSampler::new(mdp)?;
            let lcfg = LearnerConfig {
                offset: cfg.offset,
                schedule: cfg.schedule,
                n_iters: cfg.n_iters,
                mlmc: if spec.delta() > 0.0 { cfg.mlmc } else { None },
                snapshot_every: None,
            };
            let (n, m) = (mdp.n_states(), mdp.n_actions());
            let results = run_seeds(cfg.n_seeds, cfg.base_seed, jobs, |rng| {
                robust_rvi_q(&source, mdp.rewards(), m, spec, None, &lcfg, rng)
            })?;
            let failed = results.iter().filter(|r| r.is_err()).count();
            if failed as f64 > crate::experiments::MAX_FAILED_SEED_FRACTION * cfg.n_seeds as f64 {
                return Err(HarnessError::Run(format!("{failed} of {} training seeds failed", cfg.n_seeds)));
            }
            let policies = results.into_iter().flatten().map(|t| {
                let q = QFn::from_vec(n, m, t.final_values).expect("learner keeps the Q shape");
                greedy_policy(&q).actions().expect("deterministic")
            });
            modal(policies)
                .map(|(p, _)| p)
                .ok_or_else(|| HarnessError::Run("no training seed succeeded".into()))
        }
    }
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["perturbation", "robust_gain", "nonrobust_gain"])?;
    for r in rows {
        w.write_record([
            r.perturbation.to_string(),
            r.robust_gain.to_string(),
            r.nonrobust_gain.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains a robust policy (configured set) and a non-robust one (same
/// family at radius 0) on the nominal environment, then evaluates both
/// exactly on every grid point. Writes `sweep.csv`, `sweep.svg` and
/// `policies.json`.
pub fn run_robustness_sweep(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<SweepSummary, HarnessError> {
    cfg.validate_for(Algorithm::RobustnessSweep)?;
    let SweepConfig {
        axis,
        training,
        start_state,
    } = cfg.sweep.as_ref().expect("validated");
    let mdp = cfg.environment.build()?;
    cfg.uncertainty
        .validate(Some(mdp.n_states()))
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    // Fail on a bad grid before spending time on training.
    let grid: Vec<(f64, Vec<TabularMdp>)> = (0..axis.len())
        .map(|k| perturbed_environments(&cfg.environment, axis, k))
        .collect::<Result<_, _>>()?;

    let robust = train(cfg, &mdp, &cfg.uncertainty, *training, jobs)?;
    let nonrobust = train(cfg, &mdp, &cfg.uncertainty.with_delta(0.0), *training, jobs)?;
    let m = mdp.n_actions();
    let pi_r = Policy::deterministic(m, &robust)?;
    let pi_n = Policy::deterministic(m, &nonrobust)?;

    let worst = |pi: &Policy, mdps: &[TabularMdp]| -> Result<f64, HarnessError> {
        mdps.iter()
            .map(|e| gain_from(e, pi, *start_state))
            .try_fold(f64::INFINITY, |acc, g| g.map(|g| acc.min(g)))
    };
    let rows = grid
        .iter()
        .map(|(x, mdps)| {
            Ok(SweepRow {
                perturbation: *x,
                robust_gain: worst(&pi_r, mdps)?,
                nonrobust_gain: worst(&pi_n, mdps)?,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    fs::create_dir_all(out)?;
    write_sweep_csv(&out.join("sweep.csv"), &rows)?;
    let chart = Chart {
        title: &format!("robustness sweep on {}", cfg.environment.name()),
        x_label: "perturbation",
        y_label: "average reward",
        band: None,
        series: vec![
            Series {
                label: "robust",
                color: "#1f77b4",
                points: rows.iter().map(|r| (r.perturbation, r.robust_gain)).collect(),
                dashed: false,
            },
            Series {
                label: "non-robust",
                color: "#ff7f0e",
                points: rows.iter().map(|r| (r.perturbation, r.nonrobust_gain)).collect(),
                dashed: true,
            },
        ],
    };
    fs::write(out.join("sweep.svg"), chart.render())?;
    let summary = SweepSummary {
        robust_policy: robust,
        nonrobust_policy: nonrobust,
        rows,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Run(e.to_string()))?;
    fs::write(out.join("policies.json"), text + "\n")?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rarl_core::environments::one_loop_ids::{LEFT, RIGHT, S1};

    #[test]
    fn one_loop_gains_from_start() {
        let (nominal, perturbed) = one_loop().unwrap();
        let right = Policy::deterministic(2, &[RIGHT, RIGHT]).unwrap();
        let left = Policy::deterministic(2, &[LEFT, RIGHT]).unwrap();
        assert!((gain_from(&nominal, &right, S1).unwrap() - 1.0).abs() < 1e-12);
        assert!((gain_from(&perturbed, &right, S1).unwrap() + 0.5).abs() < 1e-12);
        assert!(gain_from(&perturbed, &left, S1).unwrap().abs() < 1e-12);
        assert!(gain_from(&nominal, &left, 5).is_err());
    }

    #[test]
    fn mixture_endpoints() {
        let (nominal, perturbed) = one_loop().unwrap();
        let env = EnvironmentConfig::OneLoop;
        let axis = SweepAxis::Mixture { values: vec![0.0, 1.0] };
        assert_eq!(perturbed_environments(&env, &axis, 0).unwrap().1[0], nominal);
        assert_eq!(perturbed_environments(&env, &axis, 1).unwrap().1[0], perturbed);
    }

    #[test]
    fn axis_must_match_environment() {
        let axis = SweepAxis::Mixture { values: vec![0.5] };
        let env = EnvironmentConfig::Inventory(Default::default());
        assert!(matches!(perturbed_environments(&env, &axis, 0), Err(HarnessError::Config(_))));
    }

    #[test]
    fn robot_amplitude_grid_has_nine_members() {
        let env = EnvironmentConfig::RecyclingRobot(Default::default());
        let axis = SweepAxis::Amplitude { values: vec![0.2] };
        assert_eq!(perturbed_environments(&env, &axis, 0).unwrap().1.len(), 9);
    }
}
