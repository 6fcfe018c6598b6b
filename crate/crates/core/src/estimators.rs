//! Sampled estimators of the support function and of the robust Bellman
//! operators, using only next-state samples from the nominal kernel.
//!
//! The contamination set has a support function linear in the nominal row,
//! so one next-state sample suffices. For the other families the support
//! function is nonlinear in the row and the plug-in estimate is biased; the
//! randomized multi-level Monte-Carlo estimator removes the bias:
//!
//! ```text
//! N ~ Geometric(psi),  P(N = n) = psi (1 - psi)^n
//! draw 2^(N+1) next states
//! sigma_hat = sigma(first) + (sigma(all) - (sigma(even) + sigma(odd)) / 2) / p_N
//! ```

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{Binomial, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, QFn, TabularMdp};
use crate::uncertainty::{support_value_unchecked, UncertaintySetSpec};

/// Generative access to the nominal kernel.
pub trait SampleSource {
    fn n_states(&self) -> usize;

    /// `count` independent next states from `P^a_s`.
    fn draw<R: Rng + ?Sized>(&self, s: usize, a: usize, count: usize, rng: &mut R) -> Result<Vec<usize>>;

    /// Visit counts of `count` independent next states. Sources may override
    /// this with a direct multinomial draw.
    fn draw_counts<R: Rng + ?Sized>(&self, s: usize, a: usize, count: u64, rng: &mut R) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.n_states()];
        for t in self.draw(s, a, count as usize, rng)? {
            counts[t] += 1;
        }
        Ok(counts)
    }
}

/// Samples next states from an MDP's nominal kernel.
#[derive(Debug, Clone)]
pub struct NominalSampler<'a> {
    mdp: &'a TabularMdp,
    tables: Vec<WeightedIndex<f64>>,
}

impl<'a> NominalSampler<'a> {
    pub fn new(mdp: &'a TabularMdp) -> Result<Self> {
        let mut tables = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let table = WeightedIndex::new(mdp.row(s, a))
                    .map_err(|e| Error::Source(format!("row ({s},{a}): {e}")))?;
                tables.push(table);
            }
        }
        Ok(NominalSampler { mdp, tables })
    }

    pub fn mdp(&self) -> &TabularMdp {
        self.mdp
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.mdp.n_states() || a >= self.mdp.n_actions() {
            return Err(Error::Source(format!("pair ({s},{a}) out of range")));
        }
        Ok(())
    }
}

impl SampleSource for NominalSampler<'_> {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn draw<R: Rng + ?Sized>(&self, s: usize, a: usize, count: usize, rng: &mut R) -> Result<Vec<usize>> {
        self.check(s, a)?;
        let table = &self.tables[s * self.mdp.n_actions() + a];
        Ok((0..count).map(|_| table.sample(rng)).collect())
    }

    /// Multinomial counts by sequential binomial splitting.
    fn draw_counts<R: Rng + ?Sized>(&self, s: usize, a: usize, count: u64, rng: &mut R) -> Result<Vec<u64>> {
        self.check(s, a)?;
        let row = self.mdp.row(s, a);
        let mut counts = vec![0u64; row.len()];
        let mut left = count;
        let mut mass = 1.0;
        for (i, &p) in row.iter().enumerate() {
            if left == 0 {
                break;
            }
            if i + 1 == row.len() || p >= mass {
                counts[i] = left;
                break;
            }
            if p > 0.0 {
                let k = Binomial::new(left, (p / mass).clamp(0.0, 1.0))
                    .map_err(|e| Error::Source(e.to_string()))?
                    .sample(rng);
                counts[i] = k;
                left -= k;
            }
            mass -= p;
        }
        Ok(counts)
    }
}

/// Level distribution and safety cap of the multi-level estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmcConfig {
    pub psi: f64,
    #[serde(default = "default_max_level")]
    pub max_level: u32,
}

fn default_max_level() -> u32 {
    20
}

/// Upper end of the admissible `psi` range for the chi-square set.
pub fn chi2_psi_bound() -> f64 {
    1.0 - std::f64::consts::FRAC_1_SQRT_2
}

impl MlmcConfig {
    pub fn default_for(spec: &UncertaintySetSpec) -> Self {
        let psi = match spec {
            UncertaintySetSpec::ChiSquare { .. } => 0.2,
            _ => 0.25,
        };
        MlmcConfig {
            psi,
            max_level: default_max_level(),
        }
    }

    /// Probability `p_n = psi (1 - psi)^n` of level `n`.
    pub fn level_probability(&self, n: u32) -> f64 {
        self.psi * (1.0 - self.psi).powi(n as i32)
    }

    /// Checks `psi` against the range in which the estimator has finite
    /// variance for the given family.
    pub fn validate(&self, spec: &UncertaintySetSpec) -> Result<()> {
        let upper = match spec {
            UncertaintySetSpec::ChiSquare { .. } => chi2_psi_bound(),
            UncertaintySetSpec::Contamination { .. } => 1.0,
            _ => 0.5,
        };
        if !(self.psi > 0.0 && self.psi < upper) {
            return Err(Error::InvalidConfig(format!(
                "psi = {} outside (0, {upper:.6}) for the {} set",
                self.psi,
                spec.kind()
            )));
        }
        if self.max_level > 40 {
            return Err(Error::InvalidConfig(format!("max_level {} exceeds 40", self.max_level)));
        }
        Ok(())
    }
}

/// One sampled support estimate and its cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOutcome {
    pub value: f64,
    /// Next-state samples consumed, `2^(level + 1)` for the multi-level
    /// estimator and 1 for the single-sample one.
    pub samples_used: u64,
    pub level: u32,
    /// The drawn level reached `max_level` and was clamped there.
    pub capped: bool,
}

/// Ingredients of one multi-level draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmcDraw {
    pub level: u32,
    pub capped: bool,
    pub first: usize,
    pub sigma_first: f64,
    pub sigma_all: f64,
    pub sigma_even: f64,
    pub sigma_odd: f64,
}

impl MlmcDraw {
    /// `Delta_N = sigma(all) - (sigma(even) + sigma(odd)) / 2`.
    pub fn correction(&self) -> f64 {
        self.sigma_all - 0.5 * (self.sigma_even + self.sigma_odd)
    }
}

/// Single-sample contamination estimate `(1 - delta) V(s') + delta min V`.
pub fn estimate_support_contamination(next_state: usize, delta: f64, v: &[f64]) -> f64 {
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    (1.0 - delta) * v[next_state] + delta * vmin
}

fn normalized(counts: &[u64], total: u64) -> Vec<f64> {
    let t = total as f64;
    counts.iter().map(|&c| c as f64 / t).collect()
}

/// Draws one level and the four empirical rows, and evaluates the support
/// function on each.
pub fn mlmc_draw<S, R>(
    source: &S,
    spec: &UncertaintySetSpec,
    s: usize,
    a: usize,
    v: &[f64],
    cfg: &MlmcConfig,
    rng: &mut R,
) -> Result<MlmcDraw>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    let raw = Geometric::new(cfg.psi)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?
        .sample(rng);
    let level = raw.min(u64::from(cfg.max_level)) as u32;
    let half = 1u64 << level;

    // Sample 1 is the first odd-indexed sample; the rest of the odd group and
    // the whole even group are independent multinomial draws.
    let first = source.draw(s, a, 1, rng)?[0];
    let mut odd = source.draw_counts(s, a, half - 1, rng)?;
    odd[first] += 1;
    let even = source.draw_counts(s, a, half, rng)?;
    let all: Vec<u64> = odd.iter().zip(&even).map(|(x, y)| x + y).collect();

    let mut point = vec![0.0; v.len()];
    point[first] = 1.0;
    Ok(MlmcDraw {
        level,
        capped: raw >= u64::from(cfg.max_level),
        first,
        sigma_first: support_value_unchecked(spec, &point, v)?,
        sigma_all: support_value_unchecked(spec, &normalized(&all, 2 * half), v)?,
        sigma_even: support_value_unchecked(spec, &normalized(&even, half), v)?,
        sigma_odd: support_value_unchecked(spec, &normalized(&odd, half), v)?,
    })
}

/// Unbiased multi-level estimate of `sigma_{P^a_s}(V)`.
pub fn mlmc_estimate_support<S, R>(
    source: &S,
    spec: &UncertaintySetSpec,
    s: usize,
    a: usize,
    v: &[f64],
    cfg: &MlmcConfig,
    rng: &mut R,
) -> Result<EstimateOutcome>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    if v.len() != source.n_states() {
        return Err(Error::Dimension("value function length differs from n_states".into()));
    }
    let draw = mlmc_draw(source, spec, s, a, v, cfg, rng)?;
    Ok(EstimateOutcome {
        value: draw.sigma_first + draw.correction() / cfg.level_probability(draw.level),
        samples_used: 2u64 << draw.level,
        level: draw.level,
        capped: draw.capped,
    })
}

/// Dispatches to the single-sample estimator when the support function is
/// linear in the nominal row, and to the multi-level one otherwise.
pub fn estimate_support<S, R>(
    source: &S,
    spec: &UncertaintySetSpec,
    s: usize,
    a: usize,
    v: &[f64],
    cfg: &MlmcConfig,
    rng: &mut R,
) -> Result<EstimateOutcome>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    if spec.is_linear() {
        let next = source.draw(s, a, 1, rng)?[0];
        let delta = match spec {
            UncertaintySetSpec::Contamination { delta } => *delta,
            _ => 0.0,
        };
        return Ok(EstimateOutcome {
            value: estimate_support_contamination(next, delta, v),
            samples_used: 1,
            level: 0,
            capped: false,
        });
    }
    mlmc_estimate_support(source, spec, s, a, v, cfg, rng)
}

/// Sampled robust operator output plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorEstimate {
    pub values: Vec<f64>,
    pub samples_used: u64,
    pub capped: u64,
}

/// `T_hat V(s) = sum_a pi(a|s) (r(s,a) + sigma_hat_{s,a}(V))`, with a fresh
/// independent estimate for every pair with `pi(a|s) > 0`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_t<S, R>(
    source: &S,
    rewards: &[f64],
    policy: &Policy,
    spec: &UncertaintySetSpec,
    v: &[f64],
    cfg: &MlmcConfig,
    rng: &mut R,
) -> Result<OperatorEstimate>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    let (n_states, n_actions) = (policy.n_states(), policy.n_actions());
    if rewards.len() != n_states * n_actions || v.len() != n_states || source.n_states() != n_states {
        return Err(Error::Dimension("rewards, policy, value function and source disagree".into()));
    }
    let mut values = vec![0.0; n_states];
    let mut samples_used = 0;
    let mut capped = 0;
    for (s, out) in values.iter_mut().enumerate() {
        for a in 0..n_actions {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            let est = estimate_support(source, spec, s, a, v, cfg, rng)?;
            *out += w * (rewards[s * n_actions + a] + est.value);
            samples_used += est.samples_used;
            capped += u64::from(est.capped);
        }
    }
    Ok(OperatorEstimate {
        values,
        samples_used,
        capped,
    })
}

/// `H_hat Q(s,a) = r(s,a) + sigma_hat_{s,a}(V_Q)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_h<S, R>(
    source: &S,
    rewards: &[f64],
    spec: &UncertaintySetSpec,
    q: &QFn,
    s: usize,
    a: usize,
    cfg: &MlmcConfig,
    rng: &mut R,
) -> Result<EstimateOutcome>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    if rewards.len() != q.n_states() * q.n_actions() || source.n_states() != q.n_states() {
        return Err(Error::Dimension("rewards, Q table and source disagree".into()));
    }
    estimate_h_with_values(source, rewards[s * q.n_actions() + a], spec, &q.state_values(), s, a, cfg, rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn estimate_h_with_values<S, R>(
    source: &S,
    reward: f64,
    spec: &UncertaintySetSpec,
    vq: &[f64],
    s: usize,
    a: usize,
    cfg: &MlmcConfig,
    rng: &mut R,
) -> Result<EstimateOutcome>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    let mut est = estimate_support(source, spec, s, a, vq, cfg, rng)?;
    est.value += reward;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point_mass_mdp() -> TabularMdp {
        // Every row sends all mass to state 2.
        let row = [0.0, 0.0, 1.0];
        TabularMdp::new(3, 1, row.repeat(3), vec![0.0; 3]).unwrap()
    }

    #[test]
    fn contamination_single_sample_edge_cases() {
        let v = [3.0, -1.0, 2.0];
        assert_eq!(estimate_support_contamination(1, 1.0, &v), -1.0);
        assert_eq!(estimate_support_contamination(2, 0.0, &v), 2.0);
    }

    #[test]
    fn identical_draws_cancel_the_correction() {
        let mdp = point_mass_mdp();
        let src = NominalSampler::new(&mdp).unwrap();
        let spec = UncertaintySetSpec::TotalVariation { delta: 0.3 };
        let v = [0.0, 1.0, 2.0];
        let cfg = MlmcConfig::default_for(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = mlmc_draw(&src, &spec, 0, 0, &v, &cfg, &mut rng).unwrap();
            assert_eq!(d.correction(), 0.0);
            let exact = crate::uncertainty::support_exact(&spec, &[0.0, 0.0, 1.0], &v).unwrap().value;
            assert_eq!(d.sigma_first, exact);
        }
    }

    #[test]
    fn level_probability_arithmetic() {
        let cfg = MlmcConfig { psi: 0.49, max_level: 20 };
        assert!((cfg.level_probability(2) - 0.49 * 0.51 * 0.51).abs() < 1e-15);
        assert!((cfg.level_probability(2) - 0.127449).abs() < 1e-6);
    }

    #[test]
    fn samples_used_matches_level() {
        let mdp = TabularMdp::new(2, 1, vec![0.5, 0.5, 0.5, 0.5], vec![0.0; 2]).unwrap();
        let src = NominalSampler::new(&mdp).unwrap();
        let spec = UncertaintySetSpec::Kl { delta: 0.2 };
        let cfg = MlmcConfig { psi: 0.4, max_level: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut saw_cap = false;
        for _ in 0..200 {
            let out = mlmc_estimate_support(&src, &spec, 0, 0, &[0.0, 1.0], &cfg, &mut rng).unwrap();
            assert_eq!(out.samples_used, 1u64 << (out.level + 1));
            assert!(out.level <= 3);
            saw_cap |= out.capped;
            assert_eq!(out.capped, out.level == 3);
        }
        assert!(saw_cap);
    }

    #[test]
    fn psi_ranges_are_enforced() {
        let tv = UncertaintySetSpec::TotalVariation { delta: 0.1 };
        let chi = UncertaintySetSpec::ChiSquare { delta: 0.1 };
        assert!(MlmcConfig { psi: 0.49, max_level: 20 }.validate(&tv).is_ok());
        assert!(MlmcConfig { psi: 0.5, max_level: 20 }.validate(&tv).is_err());
        assert!(MlmcConfig { psi: 0.29, max_level: 20 }.validate(&chi).is_ok());
        assert!(MlmcConfig { psi: 0.3, max_level: 20 }.validate(&chi).is_err());
        assert!(MlmcConfig::default_for(&chi).validate(&chi).is_ok());
        assert!(MlmcConfig::default_for(&tv).validate(&tv).is_ok());
    }

    #[test]
    fn multinomial_counts_sum_and_respect_support() {
        let mdp = TabularMdp::new(3, 1, [0.2, 0.0, 0.8].repeat(3), vec![0.0; 3]).unwrap();
        let src = NominalSampler::new(&mdp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let counts = src.draw_counts(1, 0, 100_000, &mut rng).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 100_000);
        assert_eq!(counts[1], 0);
        assert!((counts[0] as f64 / 1e5 - 0.2).abs() < 0.01);
    }

    #[test]
    fn zero_probability_actions_are_not_sampled() {
        // Action 1 is never taken, so its rewards cannot leak into T_hat.
        let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 1e9]).unwrap();
        let src = NominalSampler::new(&mdp).unwrap();
        let pi = Policy::deterministic(2, &[0]).unwrap();
        let spec = UncertaintySetSpec::TotalVariation { delta: 0.2 };
        let cfg = MlmcConfig::default_for(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let est = estimate_t(&src, mdp.rewards(), &pi, &spec, &[0.5], &cfg, &mut rng).unwrap();
        assert_eq!(est.values, vec![1.5]);
    }

    #[test]
    fn nominal_contamination_is_classic_td_target() {
        let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.25, -1.0]).unwrap();
        let src = NominalSampler::new(&mdp).unwrap();
        let pi = Policy::uniform(2, 1);
        let spec = UncertaintySetSpec::Contamination { delta: 0.0 };
        let cfg = MlmcConfig::default_for(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = estimate_t(&src, mdp.rewards(), &pi, &spec, &[3.0, 7.0], &cfg, &mut rng).unwrap();
        assert_eq!(est.values, vec![0.25 + 7.0, -1.0 + 3.0]);
        assert_eq!(est.samples_used, 2);
    }

    #[test]
    fn constant_q_has_zero_variance() {
        let mdp = TabularMdp::new(2, 2, [0.3, 0.7].repeat(4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let src = NominalSampler::new(&mdp).unwrap();
        let q = QFn::from_vec(2, 2, vec![5.0; 4]).unwrap();
        let spec = UncertaintySetSpec::ChiSquare { delta: 0.4 };
        let cfg = MlmcConfig::default_for(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let h = estimate_h(&src, mdp.rewards(), &spec, &q, 1, 0, &cfg, &mut rng).unwrap();
            assert!((h.value - 8.0).abs() < 1e-9, "{}", h.value);
        }
    }
}
