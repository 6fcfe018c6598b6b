//! Experiment configuration as read from JSON.

use std::path::Path;

use rarl_core::environments::{
    example_a, frozen_lake_4x4, garnet, inventory, one_loop, recycling_robot, InventoryParams, RobotParams,
};
use rarl_core::estimators::MlmcConfig;
use rarl_core::learners::StepSchedule;
use rarl_core::{OffsetFn, Policy, TabularMdp, UncertaintySetSpec};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", content = "params", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    Garnet {
        n_states: usize,
        n_actions: usize,
        seed: u64,
    },
    ExampleA {
        r1: f64,
        r2: f64,
        r3: f64,
    },
    RecyclingRobot(#[serde(default)] RobotParams),
    Inventory(#[serde(default)] InventoryParams),
    OneLoop,
    FrozenLake {
        #[serde(default = "default_slip")]
        slip: f64,
    },
    /// An MDP given inline.
    Mdp(TabularMdp),
}

fn default_slip() -> f64 {
    2.0 / 3.0
}

impl EnvironmentConfig {
    pub fn build(&self) -> Result<TabularMdp, HarnessError> {
        let mdp = match self {
            EnvironmentConfig::Garnet {
                n_states,
                n_actions,
                seed,
            } => garnet(*n_states, *n_actions, *seed),
            EnvironmentConfig::ExampleA { r1, r2, r3 } => example_a(*r1, *r2, *r3).map(|(m, _, _)| m),
            EnvironmentConfig::RecyclingRobot(p) => recycling_robot(p),
            EnvironmentConfig::Inventory(p) => inventory(p),
            EnvironmentConfig::OneLoop => one_loop().map(|(m, _)| m),
            EnvironmentConfig::FrozenLake { slip } => frozen_lake_4x4(*slip),
            EnvironmentConfig::Mdp(m) => Ok(m.clone()),
        };
        mdp.map_err(|e| HarnessError::Config(format!("environment: {e}")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvironmentConfig::Garnet { .. } => "garnet",
            EnvironmentConfig::ExampleA { .. } => "example_a",
            EnvironmentConfig::RecyclingRobot(_) => "recycling_robot",
            EnvironmentConfig::Inventory(_) => "inventory",
            EnvironmentConfig::OneLoop => "one_loop",
            EnvironmentConfig::FrozenLake { .. } => "frozen_lake",
            EnvironmentConfig::Mdp(_) => "mdp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Td,
    Q,
    Planner,
    SupportCheck,
    RobustnessSweep,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyConfig {
    #[default]
    Uniform,
    Deterministic(Vec<usize>),
    /// One probability row per state.
    Stochastic(Vec<Vec<f64>>),
}

impl PolicyConfig {
    pub fn build(&self, n_states: usize, n_actions: usize) -> Result<Policy, HarnessError> {
        let policy = match self {
            PolicyConfig::Uniform => Ok(Policy::uniform(n_states, n_actions)),
            PolicyConfig::Deterministic(a) => Policy::deterministic(n_actions, a),
            PolicyConfig::Stochastic(rows) => Policy::new(rows.len(), n_actions, rows.concat()),
        }
        .map_err(|e| HarnessError::Config(format!("policy: {e}")))?;
        if policy.n_states() != n_states || policy.n_actions() != n_actions {
            return Err(HarnessError::Config(format!(
                "policy shape {}x{} does not match the environment {n_states}x{n_actions}",
                policy.n_states(),
                policy.n_actions()
            )));
        }
        Ok(policy)
    }
}

/// What a robustness sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Robot: worst case over `alpha, beta` in `{0.5 - x, 0.5, 0.5 + x}`.
    Amplitude { values: Vec<f64> },
    /// Inventory: demand `U_(m,b)` with `m` fixed and `b` varying.
    DemandPeak { m: usize, values: Vec<f64> },
    /// Inventory: demand `U_(m,b)` with `b` fixed and `m` varying.
    DemandLocation { b: f64, values: Vec<usize> },
    /// One-loop: kernel `(1 - x) nominal + x perturbed`.
    Mixture { values: Vec<f64> },
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Amplitude { values } | SweepAxis::DemandPeak { values, .. } | SweepAxis::Mixture { values } => {
                values.len()
            }
            SweepAxis::DemandLocation { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTraining {
    /// Modal greedy policy of robust RVI Q-learning across seeds.
    #[default]
    QLearning,
    /// Greedy policy of the model-based planner.
    Planner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub axis: SweepAxis,
    #[serde(default)]
    pub training: SweepTraining,
    /// Gains are long-run averages from this state.
    #[serde(default)]
    pub start_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupportCheckConfig {
    pub instances: usize,
    pub n_states: usize,
    pub deltas: Vec<f64>,
    pub resolution: usize,
    pub mlmc_samples: usize,
    pub variance_samples: usize,
    /// Adds a row that compares against a wrong radius and must fail.
    pub negative_control: bool,
}

impl Default for SupportCheckConfig {
    fn default() -> Self {
        SupportCheckConfig {
            instances: 100,
            n_states: 4,
            deltas: vec![0.1, 0.3, 0.6],
            resolution: 200,
            mlmc_samples: 200_000,
            variance_samples: 20_000,
            negative_control: true,
        }
    }
}

fn default_n_seeds() -> usize {
    1
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub uncertainty: UncertaintySetSpec,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub offset: OffsetFn,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default)]
    pub n_iters: usize,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub mlmc: Option<MlmcConfig>,
    /// Keep every k-th iteration in `trace.csv`.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub support_check: Option<SupportCheckConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the fields a run of `algorithm` needs.
    pub fn validate_for(&self, algorithm: Algorithm) -> Result<(), HarnessError> {
        if let Some(declared) = self.algorithm {
            if declared != algorithm {
                return Err(HarnessError::Config(format!(
                    "config declares algorithm {declared:?} but {algorithm:?} was requested"
                )));
            }
        }
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if matches!(algorithm, Algorithm::Td | Algorithm::Q | Algorithm::RobustnessSweep) && self.n_iters == 0 {
            return bad("n_iters must be at least 1".into());
        }
        self.uncertainty
            .validate(None)
            .map_err(|e| HarnessError::Config(format!("uncertainty: {e}")))?;
        self.schedule
            .validate()
            .map_err(|e| HarnessError::Config(format!("schedule: {e}")))?;
        if let Some(m) = self.mlmc {
            m.validate(&self.uncertainty)
                .map_err(|e| HarnessError::Config(format!("mlmc: {e}")))?;
        }
        if algorithm == Algorithm::RobustnessSweep {
            match &self.sweep {
                None => return bad("robustness sweep needs a `sweep` section".into()),
                Some(s) if s.axis.is_empty() => return bad("sweep grid is empty".into()),
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GARNET: &str = r#"{
        "environment": {"id": "garnet", "params": {"n_states": 5, "n_actions": 3, "seed": 0}},
        "uncertainty": {"kind": "contamination", "delta": 0.4},
        "algorithm": "td",
        "n_iters": 100,
        "n_seeds": 2
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_json(GARNET).unwrap();
        assert_eq!(c.offset, OffsetFn::Mean);
        assert_eq!(c.schedule, StepSchedule::Constant { alpha: 0.01 });
        assert_eq!(c.policy, PolicyConfig::Uniform);
        assert_eq!(c.base_seed, 0);
        assert!(c.validate_for(Algorithm::Td).is_ok());
        assert!(c.validate_for(Algorithm::Q).is_err());
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ExperimentConfig::from_json(GARNET).unwrap();
        c.n_seeds = 0;
        assert!(matches!(c.validate_for(Algorithm::Td), Err(HarnessError::Config(_))));
        let mut c = ExperimentConfig::from_json(GARNET).unwrap();
        c.uncertainty = UncertaintySetSpec::Contamination { delta: 1.5 };
        assert!(c.validate_for(Algorithm::Td).is_err());
        assert!(ExperimentConfig::from_json("{").is_err());
    }

    #[test]
    fn environments_build() {
        let envs = [
            r#"{"id": "one_loop"}"#,
            r#"{"id": "recycling_robot", "params": {"alpha": 0.4}}"#,
            r#"{"id": "inventory", "params": {}}"#,
            r#"{"id": "frozen_lake", "params": {}}"#,
            r#"{"id": "example_a", "params": {"r1": 1, "r2": 2, "r3": 4}}"#,
        ];
        for e in envs {
            let env: EnvironmentConfig = serde_json::from_str(e).unwrap();
            assert!(env.build().unwrap().validate().is_ok(), "{e}");
        }
    }

    #[test]
    fn sweep_section_layout() {
        let s: SweepConfig = serde_json::from_str(r#"{"axis": "demand_peak", "m": 0, "values": [0.0, 0.5]}"#).unwrap();
        assert_eq!(s.axis.len(), 2);
        assert_eq!(s.training, SweepTraining::QLearning);
    }

    #[test]
    fn policy_shapes() {
        assert!(PolicyConfig::Deterministic(vec![0, 1]).build(2, 2).is_ok());
        assert!(PolicyConfig::Deterministic(vec![0, 1]).build(3, 2).is_err());
        assert!(PolicyConfig::Stochastic(vec![vec![0.5, 0.5]]).build(1, 2).is_ok());
    }
}
