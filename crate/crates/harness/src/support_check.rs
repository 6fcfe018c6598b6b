//! Self-test of the support functions and their estimators: exact values
//! against the grid oracle and closed forms, multi-level estimates against
//! exact values, and a negative control that must be caught.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rarl_core::environments::random_row;
use rarl_core::estimators::{estimate_support, MlmcConfig, NominalSampler};
use rarl_core::mdp::sup_norm;
use rarl_core::uncertainty::{support_exact, support_oracle_grid, tv_dual, tv_greedy};
use rarl_core::{TabularMdp, UncertaintySetSpec};
use serde::Serialize;

use crate::config::SupportCheckConfig;
use crate::error::HarnessError;
use crate::stats::{mean, seed_rng, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    Fail,
    /// A negative control that failed, as it should.
    ExpectedFail,
    /// A negative control that passed, which is itself a failure.
    UnexpectedPass,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::ExpectedFail => "FAIL (expected)",
            Status::UnexpectedPass => "PASS (unexpected)",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub family: String,
    pub measured: f64,
    pub tolerance: f64,
    pub status: Status,
}

impl CheckRow {
    fn new(check: &str, family: &str, measured: f64, tolerance: f64) -> Self {
        let status = if measured <= tolerance { Status::Pass } else { Status::Fail };
        CheckRow {
            check: check.into(),
            family: family.into(),
            measured,
            tolerance,
            status,
        }
    }

    fn negative_control(mut self) -> Self {
        self.status = match self.status {
            Status::Pass => Status::UnexpectedPass,
            _ => Status::ExpectedFail,
        };
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportReport {
    pub rows: Vec<CheckRow>,
}

impl SupportReport {
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| matches!(r.status, Status::Pass | Status::ExpectedFail))
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<28} {:<14} {:>12} {:>10}  status\n", "check", "family", "measured", "tolerance");
        for r in &self.rows {
            out += &format!(
                "{:<28} {:<14} {:>12.3e} {:>10.3e}  {}\n",
                r.check, r.family, r.measured, r.tolerance, r.status
            );
        }
        out
    }
}

pub fn families(delta: f64) -> Vec<UncertaintySetSpec> {
    vec![
        UncertaintySetSpec::Contamination { delta },
        UncertaintySetSpec::TotalVariation { delta },
        UncertaintySetSpec::ChiSquare { delta },
        UncertaintySetSpec::Kl { delta },
        UncertaintySetSpec::Wasserstein {
            delta,
            l: 1.0,
            metric: None,
        },
    ]
}

/// Largest `|exact - grid| / ||V||` over random instances, cycling through
/// `deltas`. `exact_delta` lets the caller corrupt the radius on the exact side.
pub fn oracle_gap<R: Rng>(
    family: usize,
    cfg: &SupportCheckConfig,
    exact_delta: impl Fn(f64) -> f64,
    rng: &mut R,
) -> Result<f64, HarnessError> {
    let mut worst: f64 = 0.0;
    for i in 0..cfg.instances {
        let delta = cfg.deltas[i % cfg.deltas.len()];
        let p = random_row(cfg.n_states, rng);
        let v: Vec<f64> = (0..cfg.n_states).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let exact = support_exact(&families(exact_delta(delta))[family], &p, &v)?.value;
        let grid = support_oracle_grid(&families(delta)[family], &p, &v, cfg.resolution)?;
        worst = worst.max((exact - grid).abs() / sup_norm(&v).max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Largest deviation of the exact value from an independent closed form:
/// the mixture formula for contamination, the dual for total variation.
pub fn closed_form_gap<R: Rng>(family: usize, cfg: &SupportCheckConfig, rng: &mut R) -> Result<f64, HarnessError> {
    let mut worst: f64 = 0.0;
    for i in 0..cfg.instances {
        let delta = cfg.deltas[i % cfg.deltas.len()];
        let p = random_row(cfg.n_states, rng);
        let v: Vec<f64> = (0..cfg.n_states).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let exact = support_exact(&families(delta)[family], &p, &v)?.value;
        let reference = match family {
            0 => {
                let pv: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
                (1.0 - delta) * pv + delta * v.iter().copied().fold(f64::INFINITY, f64::min)
            }
            1 => {
                let (greedy, _) = tv_greedy(&p, &v, delta);
                let (dual, _) = tv_dual(&p, &v, delta);
                worst = worst.max((greedy - dual).abs());
                dual
            }
            _ => unreachable!("closed forms exist for contamination and TV only"),
        };
        worst = worst.max((exact - reference).abs());
    }
    Ok(worst)
}

fn row_mdp(p: &[f64]) -> TabularMdp {
    let n = p.len();
    TabularMdp::new(n, 1, p.repeat(n), vec![0.0; n]).expect("valid row")
}

/// Draws `samples` estimates of `sigma(V)` for the row `p`.
pub fn estimator_draws<R: Rng>(
    spec: &UncertaintySetSpec,
    p: &[f64],
    v: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>, HarnessError> {
    let mdp = row_mdp(p);
    let src = NominalSampler::new(&mdp)?;
    let cfg = MlmcConfig::default_for(spec);
    (0..samples)
        .map(|_| Ok(estimate_support(&src, spec, 0, 0, v, &cfg, rng)?.value))
        .collect()
}

/// `|mean - exact|` in standard errors.
pub fn bias_in_standard_errors(draws: &[f64], exact: f64) -> f64 {
    let se = (variance(draws) / draws.len() as f64).sqrt();
    if se == 0.0 {
        return if mean(draws) == exact { 0.0 } else { f64::INFINITY };
    }
    (mean(draws) - exact).abs() / se
}

/// `max / min` over `||V||` in `{1, 10, 100}` of `Var(sigma_hat) / (1 + ||V||^2)`.
pub fn variance_proxy_ratio<R: Rng>(spec: &UncertaintySetSpec, samples: usize, rng: &mut R) -> Result<f64, HarnessError> {
    let p = [0.2, 0.3, 0.5];
    let mut proxies = Vec::new();
    for scale in [1.0, 10.0, 100.0] {
        let v = [0.0, 0.5 * scale, scale];
        let draws = estimator_draws(spec, &p, &v, samples, rng)?;
        proxies.push(variance(&draws) / (1.0 + scale * scale));
    }
    let hi = proxies.iter().copied().fold(0.0, f64::max);
    let lo = proxies.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if lo > 0.0 { hi / lo } else { f64::INFINITY })
}

pub const UNBIAS_ROW: [f64; 3] = [0.2, 0.3, 0.5];
pub const UNBIAS_VALUES: [f64; 3] = [0.0, 1.0, 2.0];
pub const UNBIAS_DELTA: f64 = 0.2;

pub fn run_support_check(cfg: &SupportCheckConfig, base_seed: u64) -> Result<SupportReport, HarnessError> {
    if cfg.instances == 0 || cfg.deltas.is_empty() || cfg.mlmc_samples < 2 || cfg.variance_samples < 2 {
        return Err(HarnessError::Config(
            "support check needs instances, deltas and at least two samples".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut stream = 0;
    let mut next_rng = || {
        stream += 1;
        seed_rng(base_seed, stream - 1)
    };
    for (k, spec) in families(0.1).iter().enumerate() {
        let gap = oracle_gap(k, cfg, |d| d, &mut next_rng())?;
        rows.push(CheckRow::new("grid oracle agreement", spec.kind(), gap, 0.02));
        if k < 2 {
            let gap = closed_form_gap(k, cfg, &mut next_rng())?;
            rows.push(CheckRow::new("closed form agreement", spec.kind(), gap, 1e-9));
        }
    }
    for spec in families(UNBIAS_DELTA).into_iter().skip(1) {
        let exact = support_exact(&spec, &UNBIAS_ROW, &UNBIAS_VALUES)?.value;
        let draws = estimator_draws(&spec, &UNBIAS_ROW, &UNBIAS_VALUES, cfg.mlmc_samples, &mut next_rng())?;
        rows.push(CheckRow::new(
            "estimator bias (SE units)",
            spec.kind(),
            bias_in_standard_errors(&draws, exact),
            3.0,
        ));
        let ratio = variance_proxy_ratio(&spec, cfg.variance_samples, &mut next_rng())?;
        rows.push(CheckRow::new("variance proxy ratio", spec.kind(), ratio, 10.0));
    }
    if cfg.negative_control {
        let gap = oracle_gap(1, cfg, |d| (d + 0.3).min(1.0), &mut next_rng())?;
        rows.push(CheckRow::new("corrupted radius (control)", "tv", gap, 0.02).negative_control());
    }
    Ok(SupportReport { rows })
}

/// Writes `support_check.csv` and `support_check.json` under `out`.
pub fn write_report(report: &SupportReport, out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("support_check.csv"))?;
    w.write_record(["check", "family", "measured", "tolerance", "status"])?;
    for r in &report.rows {
        w.write_record([
            r.check.clone(),
            r.family.clone(),
            r.measured.to_string(),
            r.tolerance.to_string(),
            r.status.to_string(),
        ])?;
    }
    w.flush()?;
    let text = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Run(e.to_string()))?;
    fs::write(out.join("support_check.json"), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SupportCheckConfig {
        SupportCheckConfig {
            instances: 6,
            n_states: 3,
            resolution: 60,
            mlmc_samples: 2_000,
            variance_samples: 500,
            ..SupportCheckConfig::default()
        }
    }

    #[test]
    fn negative_control_is_detected() {
        let cfg = small();
        let gap = oracle_gap(1, &cfg, |d| (d + 0.3).min(1.0), &mut seed_rng(1, 0)).unwrap();
        assert!(gap > 0.02, "{gap}");
    }

    #[test]
    fn statuses_combine() {
        let ok = CheckRow::new("a", "tv", 0.01, 0.02);
        let bad = CheckRow::new("b", "tv", 0.03, 0.02);
        assert_eq!(ok.status, Status::Pass);
        assert_eq!(bad.clone().negative_control().status, Status::ExpectedFail);
        assert_eq!(ok.clone().negative_control().status, Status::UnexpectedPass);
        assert!(SupportReport {
            rows: vec![ok.clone(), bad.clone().negative_control()]
        }
        .passed());
        assert!(!SupportReport { rows: vec![ok, bad] }.passed());
    }

    #[test]
    fn small_run_has_every_row() {
        let report = run_support_check(&small(), 3).unwrap();
        // 5 oracle rows, 2 closed-form rows, 4 x 2 estimator rows, 1 control.
        assert_eq!(report.rows.len(), 16);
        assert!(report.table().contains("FAIL (expected)"));
        assert!(run_support_check(&SupportCheckConfig { instances: 0, ..small() }, 0).is_err());
    }
}
