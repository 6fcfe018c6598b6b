//! Benchmark MDPs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{check_simplex, gain_and_bias, OffsetFn, Policy, TabularMdp};

/// Random MDP. Each row draws `sigma ~ U[0,100]`, entries `N(1, sigma)`
/// clipped at zero and normalized; rewards are `N(1, mu)` with
/// `mu ~ U[0,100]`. The second normal parameter is the variance.
pub fn garnet(n_states: usize, n_actions: usize, seed: u64) -> Result<TabularMdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidMdp("garnet needs at least one state and one action".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = Uniform::new_inclusive(0.0, 100.0);
    let mut kernel = Vec::with_capacity(n_states * n_actions * n_states);
    let mut reward = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states * n_actions {
        let sigma: f64 = scale.sample(&mut rng);
        let mu: f64 = scale.sample(&mut rng);
        let entries = Normal::new(1.0, sigma.sqrt()).map_err(|e| Error::InvalidMdp(e.to_string()))?;
        let row = loop {
            let raw: Vec<f64> = (0..n_states).map(|_| entries.sample(&mut rng).max(0.0)).collect();
            let total: f64 = raw.iter().sum();
            if total > 0.0 {
                break raw.into_iter().map(|x| x / total).collect::<Vec<_>>();
            }
        };
        kernel.extend(row);
        reward.push(Normal::new(1.0, mu.sqrt()).map_err(|e| Error::InvalidMdp(e.to_string()))?.sample(&mut rng));
    }
    TabularMdp::new(n_states, n_actions, kernel, reward)
}

fn deterministic_kernel(n_states: usize, next: &[usize]) -> Vec<f64> {
    let mut kernel = vec![0.0; next.len() * n_states];
    for (i, &t) in next.iter().enumerate() {
        kernel[i * n_states + t] = 1.0;
    }
    kernel
}

/// Three states, one action. `P1` sends state 0 to 1, `P2` sends it to 2;
/// under both, states 1 and 2 swap. Returns the nominal MDP (`P1`), both
/// kernels as MDPs, and the only policy.
pub fn example_a(r1: f64, r2: f64, r3: f64) -> Result<(TabularMdp, Vec<TabularMdp>, Policy)> {
    let reward = vec![r1, r2, r3];
    let p1 = TabularMdp::new(3, 1, deterministic_kernel(3, &[1, 2, 1]), reward.clone())?;
    let p2 = TabularMdp::new(3, 1, deterministic_kernel(3, &[2, 2, 1]), reward)?;
    Ok((p1.clone(), vec![p1, p2], Policy::uniform(3, 1)))
}

pub mod robot {
    pub const LOW: usize = 0;
    pub const HIGH: usize = 1;
    pub const SEARCH: usize = 0;
    pub const WAIT: usize = 1;
    pub const RECHARGE: usize = 2;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    /// Chance a search at low battery ends at low battery.
    pub alpha: f64,
    /// Chance a search at high battery ends at high battery.
    pub beta: f64,
    pub r_search: f64,
    pub r_wait: f64,
    pub rescue_penalty: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            alpha: 0.5,
            beta: 0.5,
            r_search: 2.0,
            r_wait: 1.0,
            rescue_penalty: -3.0,
        }
    }
}

/// Recycling robot with states `(low, high)` and actions
/// `(search, wait, recharge)`.
///
/// Searching at low battery keeps the level with probability `alpha`;
/// otherwise the battery dies and the robot is carried back to the charger
/// (high) at `rescue_penalty`. Searching at high battery keeps the level with
/// probability `beta` and drops to low otherwise, earning `r_search` either
/// way. Rewards are expectations over the outcome.
pub fn recycling_robot(p: &RobotParams) -> Result<TabularMdp> {
    use robot::*;
    for (name, x) in [("alpha", p.alpha), ("beta", p.beta)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidMdp(format!("{name} = {x} is not a probability")));
        }
    }
    let mut kernel = vec![0.0; 2 * 3 * 2];
    let mut reward = vec![0.0; 2 * 3];
    let idx = |s: usize, a: usize| s * 3 + a;

    kernel[idx(LOW, SEARCH) * 2 + LOW] = p.alpha;
    kernel[idx(LOW, SEARCH) * 2 + HIGH] = 1.0 - p.alpha;
    reward[idx(LOW, SEARCH)] = p.alpha * p.r_search + (1.0 - p.alpha) * p.rescue_penalty;

    kernel[idx(HIGH, SEARCH) * 2 + HIGH] = p.beta;
    kernel[idx(HIGH, SEARCH) * 2 + LOW] = 1.0 - p.beta;
    reward[idx(HIGH, SEARCH)] = p.r_search;

    for s in [LOW, HIGH] {
        kernel[idx(s, WAIT) * 2 + s] = 1.0;
        reward[idx(s, WAIT)] = p.r_wait;
        kernel[idx(s, RECHARGE) * 2 + HIGH] = 1.0;
    }
    TabularMdp::new(2, 3, kernel, reward)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InventoryParams {
    pub capacity: usize,
    pub max_order: usize,
    /// `demand[d]` is the probability of demand `d`.
    pub demand: Vec<f64>,
    pub penalty: f64,
    pub hold_rate: f64,
    pub price: f64,
    pub order_rate: f64,
}

impl Default for InventoryParams {
    fn default() -> Self {
        InventoryParams {
            capacity: 16,
            max_order: 8,
            demand: uniform_demand(17),
            penalty: -15.0,
            hold_rate: 3.0,
            price: 5.0,
            order_rate: 1.0,
        }
    }
}

pub fn uniform_demand(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Demand law concentrating extra mass `b` on `{m, m+1}` out of `n` values.
pub fn inventory_perturbed_demand(n: usize, m: usize, b: f64) -> Result<Vec<f64>> {
    if n < 2 || m + 1 >= n || !(0.0..=1.0).contains(&b) {
        return Err(Error::InvalidDistribution(format!(
            "need n >= 2, m + 1 < n and b in [0,1] (n={n}, m={m}, b={b})"
        )));
    }
    let nf = n as f64;
    let mut d = vec![(1.0 - b) / nf; n];
    let peak = 1.0 / nf + b * (nf - 2.0) / (2.0 * nf);
    d[m] = peak;
    d[m + 1] = peak;
    Ok(d)
}

/// Inventory control on stock levels `0..=capacity` with orders
/// `0..=max_order`. Next stock is `clamp(s + a - D, 0, capacity)`; the
/// reward is `-order_rate a - hold_rate (s + a)` plus `price D` when the
/// demand can be met and `penalty` otherwise, averaged over `D`.
pub fn inventory(p: &InventoryParams) -> Result<TabularMdp> {
    check_simplex(&p.demand, p.demand.len())?;
    let n_states = p.capacity + 1;
    let n_actions = p.max_order + 1;
    let mut kernel = vec![0.0; n_states * n_actions * n_states];
    let mut reward = vec![0.0; n_states * n_actions];
    for s in 0..n_states {
        for a in 0..n_actions {
            let i = s * n_actions + a;
            let stock = s + a;
            let mut r = -p.order_rate * a as f64 - p.hold_rate * stock as f64;
            for (d, &w) in p.demand.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                r += w * if d <= stock { p.price * d as f64 } else { p.penalty };
                let next = stock.saturating_sub(d).min(p.capacity);
                kernel[i * n_states + next] += w;
            }
            reward[i] = r;
        }
    }
    TabularMdp::new(n_states, n_actions, kernel, reward)
}

pub mod one_loop_ids {
    pub const S1: usize = 0;
    pub const S2: usize = 1;
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;
}

/// Two states, two actions. Nominal: left goes to `s1`, right goes to `s2`,
/// with rewards 0 (left), -2 (right from `s1`) and +1 (right from `s2`).
/// The perturbed task sends right from `s2` back to `s1`.
pub fn one_loop() -> Result<(TabularMdp, TabularMdp)> {
    let reward = vec![0.0, -2.0, 0.0, 1.0];
    let nominal = TabularMdp::new(2, 2, deterministic_kernel(2, &[0, 1, 0, 1]), reward.clone())?;
    let perturbed = TabularMdp::new(2, 2, deterministic_kernel(2, &[0, 1, 0, 0]), reward)?;
    Ok((nominal, perturbed))
}

pub const FROZEN_LAKE_MAP: [&str; 4] = ["SFFF", "FHFH", "FFFH", "HFFG"];

/// 4x4 frozen lake, actions `(left, down, right, up)`.
///
/// The intended move happens with probability `1 - slip`; each perpendicular
/// move takes `slip / 2`. Moving off the grid stays put. Entering the goal
/// pays 1. Holes and the goal send every action back to the start with
/// reward 0, so the task repeats forever. `slip = 2/3` is the usual
/// slippery lake.
pub fn frozen_lake_4x4(slip: f64) -> Result<TabularMdp> {
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::InvalidMdp(format!("slip = {slip} is not a probability")));
    }
    const N: usize = 4;
    let cell = |s: usize| FROZEN_LAKE_MAP[s / N].as_bytes()[s % N];
    let step = |s: usize, dir: usize| -> usize {
        let (r, c) = (s / N, s % N);
        match dir {
            0 => r * N + c.saturating_sub(1),
            1 => (r + 1).min(N - 1) * N + c,
            2 => r * N + (c + 1).min(N - 1),
            _ => r.saturating_sub(1) * N + c,
        }
    };
    let n_states = N * N;
    let mut kernel = vec![0.0; n_states * 4 * n_states];
    let mut reward = vec![0.0; n_states * 4];
    for s in 0..n_states {
        for a in 0..4 {
            let i = s * 4 + a;
            if matches!(cell(s), b'H' | b'G') {
                kernel[i * n_states] = 1.0;
                continue;
            }
            for (dir, w) in [((a + 3) % 4, slip / 2.0), (a, 1.0 - slip), ((a + 1) % 4, slip / 2.0)] {
                let t = step(s, dir);
                kernel[i * n_states + t] += w;
                if cell(t) == b'G' {
                    reward[i] += w;
                }
            }
        }
    }
    TabularMdp::new(n_states, 4, kernel, reward)
}

/// Exact gain of `policy` in `mdp`.
pub fn evaluate_under_perturbation(policy: &Policy, mdp: &TabularMdp) -> Result<f64> {
    Ok(gain_and_bias(mdp, policy, OffsetFn::Mean)?.gain)
}

/// Minimum exact gain of `policy` over a list of MDPs.
pub fn worst_gain(policy: &Policy, mdps: &[TabularMdp]) -> Result<f64> {
    if mdps.is_empty() {
        return Err(Error::InvalidConfig("empty perturbation list".into()));
    }
    mdps.iter()
        .map(|m| evaluate_under_perturbation(policy, m))
        .try_fold(f64::INFINITY, |acc, g| g.map(|g| acc.min(g)))
}

/// Uniformly random probability row, used by tests and the support check.
pub fn random_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{induced_chain, is_unichain, BiasNormalization};

    fn all_deterministic(n_states: usize, n_actions: usize) -> Vec<Policy> {
        let mut out = Vec::new();
        let total = n_actions.pow(n_states as u32);
        for code in 0..total {
            let mut c = code;
            let actions: Vec<usize> = (0..n_states)
                .map(|_| {
                    let a = c % n_actions;
                    c /= n_actions;
                    a
                })
                .collect();
            out.push(Policy::deterministic(n_actions, &actions).unwrap());
        }
        out
    }

    #[test]
    fn garnet_is_valid_and_seeded() {
        let a = garnet(5, 3, 7).unwrap();
        assert!(a.validate().is_ok());
        for s in 0..5 {
            for x in 0..3 {
                assert!((a.row(s, x).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        assert_eq!(a, garnet(5, 3, 7).unwrap());
        assert_ne!(a.kernel(), garnet(5, 3, 8).unwrap().kernel());
        assert!(garnet(0, 3, 1).is_err());
    }

    #[test]
    fn example_a_gains_and_biases() {
        let (_, kernels, pi) = example_a(1.0, 2.0, 4.0).unwrap();
        let b1 = gain_and_bias(&kernels[0], &pi, BiasNormalization::Stationary).unwrap();
        let b2 = gain_and_bias(&kernels[1], &pi, BiasNormalization::Stationary).unwrap();
        assert!((b1.gain - 3.0).abs() < 1e-12 && (b2.gain - 3.0).abs() < 1e-12);
        for (x, y) in b1.bias.iter().zip([-2.5, -0.5, 0.5]) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in b2.bias.iter().zip([-1.5, -0.5, 0.5]) {
            assert!((x - y).abs() < 1e-9);
        }
        let (_, kernels, pi) = example_a(1.0, 3.0, 3.0).unwrap();
        let b1 = gain_and_bias(&kernels[0], &pi, BiasNormalization::Stationary).unwrap().bias;
        let b2 = gain_and_bias(&kernels[1], &pi, BiasNormalization::Stationary).unwrap().bias;
        assert!((b1[1] - b2[1]).abs() < 1e-12 && (b1[2] - b2[2]).abs() < 1e-12);
    }

    #[test]
    fn robot_definitions() {
        use robot::*;
        let m = recycling_robot(&RobotParams::default()).unwrap();
        assert_eq!(m.row(LOW, RECHARGE), &[0.0, 1.0]);
        assert_eq!(m.reward(LOW, RECHARGE), 0.0);
        assert_eq!(m.row(HIGH, WAIT), &[0.0, 1.0]);
        assert_eq!(m.reward(HIGH, WAIT), 1.0);
        let sure = recycling_robot(&RobotParams {
            alpha: 1.0,
            ..RobotParams::default()
        })
        .unwrap();
        assert_eq!(sure.row(LOW, SEARCH), &[1.0, 0.0]);
        assert_eq!(sure.reward(LOW, SEARCH), 2.0);
        // Waiting at low while never searching at high leaves two closed
        // classes.
        for pi in all_deterministic(2, 3) {
            let actions = pi.actions().unwrap();
            let unichain = is_unichain(&induced_chain(&m, &pi).unwrap().transition);
            assert_eq!(unichain, !(actions[LOW] == WAIT && actions[HIGH] != SEARCH), "{actions:?}");
        }
    }

    #[test]
    fn inventory_rewards_and_rows() {
        let mut demand = vec![0.0; 17];
        demand[0] = 1.0;
        let m = inventory(&InventoryParams {
            demand,
            ..InventoryParams::default()
        })
        .unwrap();
        for s in 0..17 {
            assert_eq!(m.reward(s, 0), -3.0 * s as f64);
            assert_eq!(m.row(s, 0)[s], 1.0);
        }
        let m = inventory(&InventoryParams::default()).unwrap();
        assert!(m.validate().is_ok());
        // s = 2, a = 1: stock 3, demands 0..=3 sell, 13 others are penalized.
        let expected = -1.0 - 9.0 + (5.0 * (0.0 + 1.0 + 2.0 + 3.0) - 15.0 * 13.0) / 17.0;
        assert!((m.reward(2, 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn perturbed_demand_law() {
        assert_eq!(inventory_perturbed_demand(17, 3, 0.0).unwrap(), uniform_demand(17));
        for (m, b) in [(0, 0.25), (7, 0.6), (15, 1.0)] {
            let d = inventory_perturbed_demand(17, m, b).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let d = inventory_perturbed_demand(17, 4, 1.0).unwrap();
        assert!((d[4] + d[5] - 1.0).abs() < 1e-12);
        assert!(inventory_perturbed_demand(17, 16, 0.1).is_err());
    }

    #[test]
    fn one_loop_gains() {
        use one_loop_ids::*;
        let (nominal, perturbed) = one_loop().unwrap();
        let right = Policy::deterministic(2, &[RIGHT, RIGHT]).unwrap();
        let left = Policy::deterministic(2, &[LEFT, LEFT]).unwrap();
        assert!((evaluate_under_perturbation(&right, &nominal).unwrap() - 1.0).abs() < 1e-12);
        assert!((evaluate_under_perturbation(&right, &perturbed).unwrap() + 0.5).abs() < 1e-12);
        assert!(evaluate_under_perturbation(&left, &perturbed).unwrap().abs() < 1e-12);
        assert_eq!(
            worst_gain(&right, &[perturbed.clone()]).unwrap(),
            evaluate_under_perturbation(&right, &perturbed).unwrap()
        );
        // Left at s1 and right at s2 makes both states absorbing.
        for pi in all_deterministic(2, 2) {
            let unichain = is_unichain(&induced_chain(&nominal, &pi).unwrap().transition);
            assert_eq!(unichain, pi.actions() != Some(vec![LEFT, RIGHT]));
        }
    }

    #[test]
    fn frozen_lake_dynamics() {
        let m = frozen_lake_4x4(0.0).unwrap();
        assert!(m.validate().is_ok());
        // Left from the start hits the wall.
        assert_eq!(m.row(0, 0)[0], 1.0);
        assert_eq!(m.row(0, 2)[1], 1.0);
        assert_eq!(m.row(14, 2)[15], 1.0);
        assert_eq!(m.reward(14, 2), 1.0);
        assert_eq!(m.row(15, 1)[0], 1.0);
        assert_eq!(m.row(5, 3)[0], 1.0);
        let slippery = frozen_lake_4x4(2.0 / 3.0).unwrap();
        assert!(slippery.validate().is_ok());
        assert!((slippery.row(0, 1)[4] - 1.0 / 3.0).abs() < 1e-12);
        assert!((slippery.row(0, 0)[0] - 2.0 / 3.0).abs() < 1e-12);
        let pi = Policy::uniform(16, 4);
        assert!(is_unichain(&induced_chain(&slippery, &pi).unwrap().transition));
    }
}
