//! Exact tabular MDP machinery: kernels, policies, induced chains, gains,
//! relative value functions and robust Bellman residuals.
//!
//! Kernels are stored flat. Row `(s, a)` lives at
//! `kernel[(s * n_actions + a) * n_states..][..n_states]`, and rewards at
//! `reward[s * n_actions + a]`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::UncertaintyModel;

/// Tolerance for simplex rows.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Transition entries at or below this are treated as structural zeros when
/// building support graphs.
pub const SUPPORT_EPS: f64 = 1e-12;

/// Which invariant a kernel, reward table or policy broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Shape,
    NegativeEntry,
    RowSum,
    NonFinite,
}

/// First invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub state: Option<usize>,
    pub action: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl Violation {
    fn at(kind: ViolationKind, s: usize, a: usize, message: String) -> Self {
        Violation {
            kind,
            state: Some(s),
            action: Some(a),
            message,
        }
    }
}

/// Checks raw MDP parts and reports the first broken invariant.
pub fn validate(
    n_states: usize,
    n_actions: usize,
    kernel: &[f64],
    reward: &[f64],
) -> std::result::Result<(), Violation> {
    let shape = |message: String| Violation {
        kind: ViolationKind::Shape,
        state: None,
        action: None,
        message,
    };
    if n_states == 0 || n_actions == 0 {
        return Err(shape("n_states and n_actions must be positive".into()));
    }
    if kernel.len() != n_states * n_actions * n_states {
        return Err(shape(format!(
            "kernel has {} entries, expected {}",
            kernel.len(),
            n_states * n_actions * n_states
        )));
    }
    if reward.len() != n_states * n_actions {
        return Err(shape(format!(
            "reward has {} entries, expected {}",
            reward.len(),
            n_states * n_actions
        )));
    }
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = &kernel[(s * n_actions + a) * n_states..][..n_states];
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(Violation::at(
                    ViolationKind::NonFinite,
                    s,
                    a,
                    format!("non-finite entry at (s={s},a={a},s'={j})"),
                ));
            }
            if let Some(j) = row.iter().position(|&x| x < 0.0) {
                return Err(Violation::at(
                    ViolationKind::NegativeEntry,
                    s,
                    a,
                    format!("negative entry {} at (s={s},a={a},s'={j})", row[j]),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Violation::at(
                    ViolationKind::RowSum,
                    s,
                    a,
                    format!("row sum {sum} at (s={s},a={a})"),
                ));
            }
            let r = reward[s * n_actions + a];
            if !r.is_finite() {
                return Err(Violation::at(
                    ViolationKind::NonFinite,
                    s,
                    a,
                    format!("non-finite reward at (s={s},a={a})"),
                ));
            }
        }
    }
    Ok(())
}

/// Checks that `p` is a probability vector of length `n`.
pub fn check_simplex(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::Dimension(format!(
            "probability vector has length {}, expected {n}",
            p.len()
        )));
    }
    if let Some(i) = p.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "entry {i} is {}",
            p[i]
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// Finite-state, finite-action MDP with a nominal kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    kernel: Vec<f64>,
    reward: Vec<f64>,
}

/// JSON layout: `kernel` holds one row per `(s, a)` in row-major order,
/// `reward` is `n_states x n_actions`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    kernel: Vec<Vec<f64>>,
    reward: Vec<Vec<f64>>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        if doc.kernel.len() != doc.n_states * doc.n_actions {
            return Err(Error::InvalidMdp(format!(
                "expected {} kernel rows, got {}",
                doc.n_states * doc.n_actions,
                doc.kernel.len()
            )));
        }
        if doc.reward.len() != doc.n_states || doc.reward.iter().any(|r| r.len() != doc.n_actions) {
            return Err(Error::InvalidMdp(format!(
                "reward must be {} x {}",
                doc.n_states, doc.n_actions
            )));
        }
        if let Some(i) = doc.kernel.iter().position(|r| r.len() != doc.n_states) {
            return Err(Error::InvalidMdp(format!(
                "kernel row {i} has length {}, expected {}",
                doc.kernel[i].len(),
                doc.n_states
            )));
        }
        TabularMdp::new(
            doc.n_states,
            doc.n_actions,
            doc.kernel.concat(),
            doc.reward.concat(),
        )
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(m: TabularMdp) -> Self {
        MdpDocument {
            n_states: m.n_states,
            n_actions: m.n_actions,
            kernel: m.kernel.chunks(m.n_states).map(<[f64]>::to_vec).collect(),
            reward: m.reward.chunks(m.n_actions).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl TabularMdp {
    pub fn new(n_states: usize, n_actions: usize, kernel: Vec<f64>, reward: Vec<f64>) -> Result<Self> {
        validate(n_states, n_actions, &kernel, &reward).map_err(|v| Error::InvalidMdp(v.message))?;
        Ok(TabularMdp {
            n_states,
            n_actions,
            kernel,
            reward,
        })
    }

    /// Builds an MDP from nested `kernel[s][a][s']` and `reward[s][a]` tables.
    pub fn from_tables(kernel: &[Vec<Vec<f64>>], reward: &[Vec<f64>]) -> Result<Self> {
        let n_states = kernel.len();
        let n_actions = kernel.first().map_or(0, Vec::len);
        if kernel.iter().any(|k| k.len() != n_actions) || reward.len() != n_states {
            return Err(Error::Dimension("ragged kernel or reward table".into()));
        }
        let flat_kernel: Vec<f64> = kernel.iter().flatten().flatten().copied().collect();
        let flat_reward: Vec<f64> = reward.iter().flatten().copied().collect();
        Self::new(n_states, n_actions, flat_kernel, flat_reward)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        &self.kernel[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Same rewards, different kernel.
    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, kernel, self.reward.clone())
    }

    /// Re-checks the stored tables.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        validate(self.n_states, self.n_actions, &self.kernel, &self.reward)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serialization is infallible")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Stationary randomized policy, `probs[s * n_actions + a] = pi(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            check_simplex(row, n_actions)
                .map_err(|e| Error::InvalidDistribution(format!("policy row {s}: {e}")))?;
        }
        Ok(Policy {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Dimension(format!("action {a} at state {s} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Policy {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }

    /// Action chosen at each state, if the policy is deterministic.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().position(|&p| p == 1.0))
            .collect()
    }

    fn check_against(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Action-value table, `q[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFn {
    n_states: usize,
    n_actions: usize,
    q: Vec<f64>,
}

impl QFn {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QFn {
            n_states,
            n_actions,
            q: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "Q table has {} entries, expected {}",
                q.len(),
                n_states * n_actions
            )));
        }
        Ok(QFn { n_states, n_actions, q })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..][..self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.q
    }

    /// `V_Q(s) = max_a Q(s, a)`.
    pub fn state_values(&self) -> Vec<f64> {
        self.q
            .chunks(self.n_actions)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Offset functional used by relative value iteration. Both variants are
/// linear with `f(e) = 1` and Lipschitz constant 1 in the sup norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetFn {
    ReferenceState(usize),
    #[default]
    Mean,
}

impl OffsetFn {
    pub fn apply(&self, x: &[f64]) -> f64 {
        match *self {
            OffsetFn::ReferenceState(s0) => x[s0],
            OffsetFn::Mean => x.iter().sum::<f64>() / x.len() as f64,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    /// Rejects a reference index outside a vector of length `len`.
    pub fn check(&self, len: usize) -> Result<()> {
        match *self {
            OffsetFn::ReferenceState(i) if i >= len => Err(Error::InvalidConfig(format!(
                "reference index {i} out of range for length {len}"
            ))),
            _ if len == 0 => Err(Error::InvalidConfig("offset of an empty vector".into())),
            _ => Ok(()),
        }
    }
}

/// How the bias vector is pinned down in [`gain_and_bias`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasNormalization {
    /// `f(V) = 0` for an offset functional.
    Offset(OffsetFn),
    /// `mu . V = 0` with `mu` the stationary distribution (the classical bias).
    Stationary,
}

impl From<OffsetFn> for BiasNormalization {
    fn from(f: OffsetFn) -> Self {
        BiasNormalization::Offset(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainBias {
    pub gain: f64,
    pub bias: Vec<f64>,
}

/// Markov chain and reward vector induced by a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain {
    pub transition: Vec<Vec<f64>>,
    pub reward: Vec<f64>,
}

pub fn induced_chain(mdp: &TabularMdp, policy: &Policy) -> Result<InducedChain> {
    policy.check_against(mdp)?;
    let n = mdp.n_states();
    let mut transition = vec![vec![0.0; n]; n];
    let mut reward = vec![0.0; n];
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            reward[s] += w * mdp.reward(s, a);
            for (t, &p) in mdp.row(s, a).iter().enumerate() {
                transition[s][t] += w * p;
            }
        }
    }
    Ok(InducedChain { transition, reward })
}

fn check_square(p: &[Vec<f64>]) -> Result<usize> {
    let n = p.len();
    if n == 0 || p.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("transition matrix must be square and non-empty".into()));
    }
    Ok(n)
}

/// Stationary distribution by power iteration on the lazy chain
/// `(I + P) / 2`, which shares its fixed points with `P` but is aperiodic.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-12;
    const MAX_ITERS: usize = 1_000_000;
    let n = check_square(p)?;
    let mut mu = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in p.iter().enumerate() {
            let m = mu[i];
            if m == 0.0 {
                continue;
            }
            for (j, &pij) in row.iter().enumerate() {
                next[j] += m * pij;
            }
        }
        let total: f64 = next.iter().zip(&mu).map(|(a, b)| 0.5 * (a + b)).sum();
        change = 0.0;
        for (x, m) in next.iter_mut().zip(mu.iter_mut()) {
            let lazy = 0.5 * (*x + *m) / total;
            change += (lazy - *m).abs();
            *m = lazy;
        }
        if change < TOL {
            return Ok(mu);
        }
    }
    Err(Error::NoConvergence {
        what: "stationary distribution",
        iterations: MAX_ITERS,
        residual: change,
    })
}

/// Number of closed communicating classes of the support graph.
pub fn closed_class_count(p: &[Vec<f64>]) -> usize {
    let n = p.len();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for (i, row) in p.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > SUPPORT_EPS {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut comp = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for node in members {
            comp[node.index()] = c;
        }
    }
    sccs.iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|node| {
                p[node.index()]
                    .iter()
                    .enumerate()
                    .all(|(j, &x)| x <= SUPPORT_EPS || comp[j] == *c)
            })
        })
        .count()
}

/// True iff the chain has exactly one recurrent class.
pub fn is_unichain(p: &[Vec<f64>]) -> bool {
    closed_class_count(p) == 1
}

/// Gain and bias of a unichain Markov reward process.
pub fn chain_gain_and_bias(chain: &InducedChain, norm: BiasNormalization) -> Result<GainBias> {
    let n = check_square(&chain.transition)?;
    if chain.reward.len() != n {
        return Err(Error::Dimension("reward vector length differs from chain size".into()));
    }
    let closed = closed_class_count(&chain.transition);
    if closed != 1 {
        return Err(Error::Multichain { closed_classes: closed });
    }
    // Unknowns (V_0, .., V_{n-1}, g): (I - P) V + g e = r, plus one normalization row.
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = if i == j { 1.0 } else { 0.0 } - chain.transition[i][j];
        }
        a[(i, n)] = 1.0;
        b[i] = chain.reward[i];
    }
    match norm {
        BiasNormalization::Offset(OffsetFn::ReferenceState(s0)) => {
            if s0 >= n {
                return Err(Error::Dimension(format!("reference state {s0} out of range")));
            }
            a[(n, s0)] = 1.0;
        }
        BiasNormalization::Offset(OffsetFn::Mean) => {
            for j in 0..n {
                a[(n, j)] = 1.0 / n as f64;
            }
        }
        BiasNormalization::Stationary => {
            let mu = stationary_distribution(&chain.transition)?;
            for j in 0..n {
                a[(n, j)] = mu[j];
            }
        }
    }
    let x = a.lu().solve(&b).ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(GainBias {
        gain: x[n],
        bias: x.iter().take(n).copied().collect(),
    })
}

/// Gain `g` and bias `V` of `policy` under the MDP's nominal kernel, solving
/// `V = r_pi - g e + P_pi V` together with the requested normalization.
pub fn gain_and_bias(
    mdp: &TabularMdp,
    policy: &Policy,
    norm: impl Into<BiasNormalization>,
) -> Result<GainBias> {
    let chain = induced_chain(mdp, policy)?;
    chain_gain_and_bias(&chain, norm.into())
}

/// Long-run average reward from each start state. Works for multichain
/// processes: the Cesaro limit of `P` equals the limit of the lazy chain
/// `(I + P) / 2`, reached here by repeated squaring.
pub fn gain_vector(chain: &InducedChain) -> Result<Vec<f64>> {
    let n = check_square(&chain.transition)?;
    if chain.reward.len() != n {
        return Err(Error::Dimension("reward vector length differs from chain size".into()));
    }
    let mut l = DMatrix::from_fn(n, n, |i, j| {
        0.5 * (chain.transition[i][j] + if i == j { 1.0 } else { 0.0 })
    });
    for _ in 0..64 {
        let mut next = &l * &l;
        // Rounding would otherwise compound through the squarings.
        for mut row in next.row_iter_mut() {
            let total = row.sum();
            row /= total;
        }
        let change = (&next - &l).amax();
        l = next;
        if change < 1e-14 {
            break;
        }
    }
    let g = l * DVector::from_column_slice(&chain.reward);
    Ok(g.iter().copied().collect())
}

/// `max V - min V`.
pub fn span(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if v.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Sup norm.
pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Robust policy-evaluation operator `T V(s) = sum_a pi(a|s) (r(s,a) + sigma_{s,a}(V))`.
pub fn robust_policy_operator<M: UncertaintyModel + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    model: &M,
    v: &[f64],
) -> Result<Vec<f64>> {
    policy.check_against(mdp)?;
    if v.len() != mdp.n_states() {
        return Err(Error::Dimension("value function length differs from n_states".into()));
    }
    (0..mdp.n_states())
        .map(|s| {
            let mut acc = 0.0;
            for a in 0..mdp.n_actions() {
                let w = policy.prob(s, a);
                if w != 0.0 {
                    acc += w * (mdp.reward(s, a) + model.support(s, a, v)?);
                }
            }
            Ok(acc)
        })
        .collect()
}

/// Residual of the robust Bellman equation,
/// `sum_a pi(a|s) (r(s,a) - g + sigma_{s,a}(V)) - V(s)` per state.
pub fn robust_bellman_residual<M: UncertaintyModel + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    model: &M,
    g: f64,
    v: &[f64],
) -> Result<Vec<f64>> {
    let tv = robust_policy_operator(mdp, policy, model, v)?;
    Ok(tv.iter().zip(v).map(|(t, x)| t - g - x).collect())
}

/// Optimal robust operator `H Q(s,a) = r(s,a) + sigma_{s,a}(V_Q)`.
pub fn robust_optimal_operator<M: UncertaintyModel + ?Sized>(
    mdp: &TabularMdp,
    model: &M,
    q: &QFn,
) -> Result<QFn> {
    if q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension("Q table shape differs from MDP".into()));
    }
    let vq = q.state_values();
    let mut out = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            out.push(mdp.reward(s, a) + model.support(s, a, &vq)?);
        }
    }
    QFn::from_vec(mdp.n_states(), mdp.n_actions(), out)
}

/// Residual of the optimal robust Bellman equation, `r - g + sigma(V_Q) - Q`.
pub fn optimal_bellman_residual<M: UncertaintyModel + ?Sized>(
    mdp: &TabularMdp,
    model: &M,
    g: f64,
    q: &QFn,
) -> Result<Vec<f64>> {
    let hq = robust_optimal_operator(mdp, model, q)?;
    Ok(hq.as_slice().iter().zip(q.as_slice()).map(|(h, x)| h - g - x).collect())
}
