//! Support functions `sigma(V) = min_{q in P} q . V` for the five
//! `(s,a)`-rectangular ball families, their worst-case rows, and a
//! brute-force simplex-grid oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{check_simplex, sup_norm, TabularMdp};
use crate::search::{golden_max, ARG_TOL, MAX_ITERS};

/// Feasibility slack used when certifying rows and grid points.
pub const FEAS_TOL: f64 = 1e-12;

/// Lower end of the KL temperature bracket; the `alpha -> 0` limit is
/// evaluated separately.
const KL_ALPHA_MIN: f64 = 1e-8;

fn default_order() -> f64 {
    1.0
}

/// One of the five parametric uncertainty-ball families, with radius `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum UncertaintySetSpec {
    #[serde(rename = "contamination")]
    Contamination { delta: f64 },
    #[serde(rename = "tv")]
    TotalVariation { delta: f64 },
    #[serde(rename = "chi2")]
    ChiSquare { delta: f64 },
    #[serde(rename = "kl")]
    Kl { delta: f64 },
    #[serde(rename = "wasserstein")]
    Wasserstein {
        delta: f64,
        #[serde(default = "default_order")]
        l: f64,
        /// Ground metric over states; `|i - j|` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<Vec<Vec<f64>>>,
    },
}

impl UncertaintySetSpec {
    pub fn delta(&self) -> f64 {
        match *self {
            UncertaintySetSpec::Contamination { delta }
            | UncertaintySetSpec::TotalVariation { delta }
            | UncertaintySetSpec::ChiSquare { delta }
            | UncertaintySetSpec::Kl { delta }
            | UncertaintySetSpec::Wasserstein { delta, .. } => delta,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            UncertaintySetSpec::Contamination { .. } => "contamination",
            UncertaintySetSpec::TotalVariation { .. } => "tv",
            UncertaintySetSpec::ChiSquare { .. } => "chi2",
            UncertaintySetSpec::Kl { .. } => "kl",
            UncertaintySetSpec::Wasserstein { .. } => "wasserstein",
        }
    }

    /// Same family and geometry with a different radius.
    pub fn with_delta(&self, delta: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            UncertaintySetSpec::Contamination { delta: d }
            | UncertaintySetSpec::TotalVariation { delta: d }
            | UncertaintySetSpec::ChiSquare { delta: d }
            | UncertaintySetSpec::Kl { delta: d }
            | UncertaintySetSpec::Wasserstein { delta: d, .. } => *d = delta,
        }
        out
    }

    /// True when the support function is linear in the nominal row.
    pub fn is_linear(&self) -> bool {
        matches!(self, UncertaintySetSpec::Contamination { .. }) || self.delta() == 0.0
    }

    /// Checks the radius domain, and for Wasserstein the order and the
    /// metric (against `n_states` when given).
    pub fn validate(&self, n_states: Option<usize>) -> Result<()> {
        let delta = self.delta();
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidSet(format!("radius {delta} must be finite and >= 0")));
        }
        match self {
            UncertaintySetSpec::Contamination { delta } if *delta > 1.0 => {
                Err(Error::InvalidSet(format!("contamination radius {delta} exceeds 1")))
            }
            UncertaintySetSpec::Wasserstein { l, metric, .. } => {
                if !l.is_finite() || *l < 1.0 {
                    return Err(Error::InvalidSet(format!("Wasserstein order {l} must be in [1, inf)")));
                }
                if let Some(d) = metric {
                    let n = d.len();
                    if let Some(expected) = n_states {
                        if n != expected {
                            return Err(Error::InvalidSet(format!(
                                "metric is {n}x{n}, expected {expected}x{expected}"
                            )));
                        }
                    }
                    for i in 0..n {
                        if d[i].len() != n {
                            return Err(Error::InvalidSet("metric must be square".into()));
                        }
                        if d[i][i] != 0.0 {
                            return Err(Error::InvalidSet(format!("metric diagonal d({i},{i}) is nonzero")));
                        }
                        for j in 0..n {
                            if !(d[i][j] >= 0.0 && d[i][j].is_finite()) || d[i][j] != d[j][i] {
                                return Err(Error::InvalidSet(format!(
                                    "metric must be symmetric, finite and nonnegative at ({i},{j})"
                                )));
                            }
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn metric(&self, i: usize, j: usize) -> f64 {
        match self {
            UncertaintySetSpec::Wasserstein { metric: Some(d), .. } => d[i][j],
            _ => (i as f64 - j as f64).abs(),
        }
    }
}

/// Optimal dual variable of the support-function problem.
#[derive(Debug, Clone, PartialEq)]
pub enum DualVariable {
    /// KL temperature `alpha` or Wasserstein multiplier `lambda`.
    Scalar(f64),
    /// Multiplier `mu` of the nonnegativity constraints (TV, chi-square).
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportResult {
    pub value: f64,
    pub dual: Option<DualVariable>,
    /// Minimizing row; filled when it comes for free (contamination, TV).
    pub worst_row: Option<Vec<f64>>,
}

fn check_inputs(spec: &UncertaintySetSpec, p: &[f64], v: &[f64]) -> Result<()> {
    check_simplex(p, v.len())?;
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig(format!("value function entry {i} is not finite")));
    }
    spec.validate(Some(v.len()))
}

fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

fn min_on_support(p: &[f64], v: &[f64]) -> f64 {
    p.iter()
        .zip(v)
        .filter(|(pi, _)| **pi > 0.0)
        .fold(f64::INFINITY, |m, (_, x)| m.min(*x))
}

/// Exact value of `min_{q in P} q . V` for the ball around nominal row `p`.
pub fn support_exact(spec: &UncertaintySetSpec, p: &[f64], v: &[f64]) -> Result<SupportResult> {
    check_inputs(spec, p, v)?;
    support_unchecked(spec, p, v)
}

/// Support value only, skipping validation of `p`, `v` and `spec`.
pub(crate) fn support_value_unchecked(spec: &UncertaintySetSpec, p: &[f64], v: &[f64]) -> Result<f64> {
    Ok(match *spec {
        UncertaintySetSpec::Contamination { delta } => contamination_value(p, v, delta),
        UncertaintySetSpec::TotalVariation { delta } => tv_greedy(p, v, delta).0,
        _ => support_unchecked(spec, p, v)?.value,
    })
}

fn support_unchecked(spec: &UncertaintySetSpec, p: &[f64], v: &[f64]) -> Result<SupportResult> {
    match *spec {
        UncertaintySetSpec::Contamination { delta } => Ok(SupportResult {
            value: contamination_value(p, v, delta),
            dual: None,
            worst_row: Some(contamination_row(p, v, delta)),
        }),
        UncertaintySetSpec::TotalVariation { delta } => {
            let (value, row) = tv_greedy(p, v, delta);
            let (_, mu) = tv_dual(p, v, delta);
            Ok(SupportResult {
                value,
                dual: Some(DualVariable::Vector(mu)),
                worst_row: Some(row),
            })
        }
        UncertaintySetSpec::ChiSquare { delta } => {
            let (value, t) = chi2_dual(p, v, delta)?;
            let mu = v.iter().map(|x| (x - t).max(0.0)).collect();
            Ok(SupportResult {
                value,
                dual: Some(DualVariable::Vector(mu)),
                worst_row: None,
            })
        }
        UncertaintySetSpec::Kl { delta } => {
            let (value, alpha) = kl_dual(p, v, delta)?;
            Ok(SupportResult {
                value,
                dual: alpha.map(DualVariable::Scalar),
                worst_row: None,
            })
        }
        UncertaintySetSpec::Wasserstein { delta, l, .. } => {
            let cost = transport_cost(spec, v.len(), l);
            let (value, lambda) = wasserstein_dual(p, v, delta.powf(l), &cost)?;
            Ok(SupportResult {
                value,
                dual: lambda.map(DualVariable::Scalar),
                worst_row: None,
            })
        }
    }
}

/// Minimizing row of `q . V` over the ball. Exact for contamination and TV;
/// recovered from dual optimality conditions for the other families.
pub fn worst_case_row(spec: &UncertaintySetSpec, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_inputs(spec, p, v)?;
    if spec.delta() == 0.0 {
        return Ok(p.to_vec());
    }
    match *spec {
        UncertaintySetSpec::Contamination { delta } => Ok(contamination_row(p, v, delta)),
        UncertaintySetSpec::TotalVariation { delta } => Ok(tv_greedy(p, v, delta).1),
        UncertaintySetSpec::ChiSquare { delta } => {
            let (_, t) = chi2_dual(p, v, delta)?;
            Ok(chi2_row(p, v, delta, t))
        }
        UncertaintySetSpec::Kl { delta } => {
            let (_, alpha) = kl_dual(p, v, delta)?;
            Ok(kl_row(p, v, alpha))
        }
        UncertaintySetSpec::Wasserstein { delta, l, .. } => {
            let cost = transport_cost(spec, v.len(), l);
            let (_, lambda) = wasserstein_dual(p, v, delta.powf(l), &cost)?;
            Ok(wasserstein_row(p, v, delta.powf(l), &cost, lambda.unwrap_or(0.0)))
        }
    }
}

// ---------------------------------------------------------------------------
// Contamination

fn contamination_value(p: &[f64], v: &[f64], delta: f64) -> f64 {
    (1.0 - delta) * dot(p, v) + delta * v[argmin(v)]
}

fn contamination_row(p: &[f64], v: &[f64], delta: f64) -> Vec<f64> {
    let mut q: Vec<f64> = p.iter().map(|x| (1.0 - delta) * x).collect();
    q[argmin(v)] += delta;
    q
}

// ---------------------------------------------------------------------------
// Total variation

/// Greedy water-filling: move up to `delta` mass from the highest-valued
/// states onto the lowest-valued one.
pub fn tv_greedy(p: &[f64], v: &[f64], delta: f64) -> (f64, Vec<f64>) {
    let target = argmin(v);
    let mut q = p.to_vec();
    let mut budget = delta.min(1.0 - p[target]);
    let mut order: Vec<usize> = (0..v.len()).filter(|&s| s != target).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    for s in order {
        if budget <= 0.0 {
            break;
        }
        let take = q[s].min(budget);
        q[s] -= take;
        q[target] += take;
        budget -= take;
    }
    (dot(&q, v), q)
}

/// Dual objective `p . (V - mu) - delta * Span(V - mu)`.
pub fn tv_dual_objective(p: &[f64], v: &[f64], delta: f64, mu: &[f64]) -> f64 {
    let w: Vec<f64> = v.iter().zip(mu).map(|(a, b)| a - b).collect();
    dot(p, &w) - delta * crate::mdp::span(&w)
}

/// Maximizes the TV dual. The optimal multiplier clips `V` from above at a
/// level `t`, and the objective is piecewise linear in `t` with breakpoints
/// at the entries of `V`, so checking those is exact.
pub fn tv_dual(p: &[f64], v: &[f64], delta: f64) -> (f64, Vec<f64>) {
    let vmin = v[argmin(v)];
    let mut best = (f64::NEG_INFINITY, vmin);
    for &t in v {
        let obj: f64 = p.iter().zip(v).map(|(pi, x)| pi * x.min(t)).sum::<f64>() - delta * (t - vmin);
        if obj > best.0 {
            best = (obj, t);
        }
    }
    let mu = v.iter().map(|x| (x - best.1).max(0.0)).collect();
    (best.0, mu)
}

// ---------------------------------------------------------------------------
// Chi-square

fn clipped_moments(p: &[f64], v: &[f64], t: f64) -> (f64, f64) {
    let mean: f64 = p.iter().zip(v).map(|(pi, x)| pi * x.min(t)).sum();
    let var: f64 = p
        .iter()
        .zip(v)
        .map(|(pi, x)| pi * (x.min(t) - mean).powi(2))
        .sum();
    (mean, var)
}

/// Maximizes `p . W - sqrt(delta Var_p(W))` with `W = min(V, t)`. By
/// complementary slackness the optimal `mu` in the vector dual has this
/// clipped form; between consecutive support values the objective is
/// concave in `t`, so each piece is searched separately.
fn chi2_dual(p: &[f64], v: &[f64], delta: f64) -> Result<(f64, f64)> {
    let mut levels: Vec<f64> = p
        .iter()
        .zip(v)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(_, x)| *x)
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let top = *levels.last().expect("simplex row has nonempty support");
    if levels.len() == 1 || delta == 0.0 {
        return Ok((dot(p, v), top));
    }
    let objective = |t: f64| {
        let (mean, var) = clipped_moments(p, v, t);
        mean - (delta * var).sqrt()
    };
    let mut best = (levels[0], objective(levels[0]));
    for w in levels.windows(2) {
        let (t, val) = golden_max(objective, w[0], w[1], ARG_TOL, MAX_ITERS)?;
        if val > best.1 {
            best = (t, val);
        }
    }
    Ok((best.1, best.0))
}

fn chi2_row(p: &[f64], v: &[f64], delta: f64, t: f64) -> Vec<f64> {
    let (mean, var) = clipped_moments(p, v, t);
    let vmin = min_on_support(p, v);
    let scale2 = v.iter().fold(1.0f64, |m, x| m.max(x * x));
    let mut q: Vec<f64> = if var <= 1e-24 * scale2 {
        // Everything clipped: put the nominal mass of the minimizers on them.
        p.iter()
            .zip(v)
            .map(|(pi, x)| if *x == vmin { *pi } else { 0.0 })
            .collect()
    } else {
        let scale = (delta / var).sqrt();
        p.iter()
            .zip(v)
            .map(|(pi, x)| (pi * (1.0 - scale * (x.min(t) - mean))).max(0.0))
            .collect()
    };
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= total);
    q
}

/// Chi-square divergence `sum (q - p)^2 / p`; infinite if `q` leaves the
/// support of `p`.
pub fn chi2_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(pi, qi)| {
            if *pi > 0.0 {
                (pi - qi).powi(2) / pi
            } else if *qi > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum()
}

// ---------------------------------------------------------------------------
// KL

/// `-h(alpha) - vmin` with `h(alpha) = delta alpha + alpha log E_p exp(-V / alpha)`.
/// Leaving `vmin` out keeps the objective resolvable when `V` has a small spread.
fn kl_dual_objective(p: &[f64], v: &[f64], delta: f64, vmin: f64, alpha: f64) -> f64 {
    let sum: f64 = p
        .iter()
        .zip(v)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, x)| pi * (-(x - vmin) / alpha).exp())
        .sum();
    -delta * alpha - alpha * sum.ln()
}

/// Returns the support value and the optimal temperature (`None` when the
/// optimum is the `alpha -> 0` limit or `delta = 0`).
fn kl_dual(p: &[f64], v: &[f64], delta: f64) -> Result<(f64, Option<f64>)> {
    let mean = dot(p, v);
    if delta == 0.0 {
        return Ok((mean, None));
    }
    let vmin = min_on_support(p, v);
    let gap = mean - vmin;
    if gap <= 0.0 {
        return Ok((vmin, None));
    }
    // h(alpha) >= delta alpha - p.V and h(0+) = -vmin, so the minimizer
    // satisfies alpha <= (p.V - vmin) / delta.
    let alpha_max = (gap / delta).max(KL_ALPHA_MIN);
    let (alpha, excess) = golden_max(
        |a| kl_dual_objective(p, v, delta, vmin, a),
        KL_ALPHA_MIN,
        alpha_max,
        ARG_TOL,
        MAX_ITERS,
    )?;
    if excess > 0.0 {
        Ok((vmin + excess, Some(alpha)))
    } else {
        Ok((vmin, None))
    }
}

fn kl_row(p: &[f64], v: &[f64], alpha: Option<f64>) -> Vec<f64> {
    let vmin = min_on_support(p, v);
    let mut q: Vec<f64> = match alpha {
        Some(a) => p.iter().zip(v).map(|(pi, x)| pi * (-(x - vmin) / a).exp()).collect(),
        None => p
            .iter()
            .zip(v)
            .map(|(pi, x)| if *x == vmin { *pi } else { 0.0 })
            .collect(),
    };
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= total);
    q
}

/// `KL(q || p)`; infinite if `q` leaves the support of `p`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(qi, pi)| {
            if *qi <= 0.0 {
                0.0
            } else if *pi <= 0.0 {
                f64::INFINITY
            } else {
                qi * (qi / pi).ln()
            }
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Wasserstein

fn transport_cost(spec: &UncertaintySetSpec, n: usize, l: f64) -> Vec<f64> {
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = spec.metric(i, j).powf(l);
        }
    }
    cost
}

fn wasserstein_objective(p: &[f64], v: &[f64], budget: f64, cost: &[f64], lambda: f64) -> f64 {
    let n = v.len();
    let mut acc = -lambda * budget;
    for (s, &ps) in p.iter().enumerate() {
        if ps == 0.0 {
            continue;
        }
        let row = &cost[s * n..][..n];
        let inner = v
            .iter()
            .zip(row)
            .fold(f64::INFINITY, |m, (vy, c)| m.min(vy + lambda * c));
        acc += ps * inner;
    }
    acc
}

/// Concave dual over `lambda in [0, 2 ||V|| / delta^l]`; `budget = delta^l`.
fn wasserstein_dual(p: &[f64], v: &[f64], budget: f64, cost: &[f64]) -> Result<(f64, Option<f64>)> {
    if budget == 0.0 {
        return Ok((dot(p, v), None));
    }
    let hi = 2.0 * sup_norm(v) / budget;
    let (lambda, value) = golden_max(
        |lam| wasserstein_objective(p, v, budget, cost, lam),
        0.0,
        hi,
        ARG_TOL,
        MAX_ITERS,
    )?;
    Ok((value, Some(lambda)))
}

/// Transport plan that sends each source to its cheapest target at
/// multiplier `lambda`, with ties broken toward low (`prefer_far = false`)
/// or high transport cost.
fn greedy_plan(p: &[f64], v: &[f64], cost: &[f64], lambda: f64, prefer_far: bool) -> (Vec<f64>, f64) {
    let n = v.len();
    let mut q = vec![0.0; n];
    let mut spent = 0.0;
    for (s, &ps) in p.iter().enumerate() {
        if ps == 0.0 {
            continue;
        }
        let row = &cost[s * n..][..n];
        let mut best = s;
        for y in 0..n {
            let cand = v[y] + lambda * row[y];
            let cur = v[best] + lambda * row[best];
            let tie = (cand - cur).abs() <= 1e-12 * (1.0 + cur.abs());
            if (!tie && cand < cur) || (tie && (row[y] > row[best]) == prefer_far && row[y] != row[best]) {
                best = y;
            }
        }
        q[best] += ps;
        spent += ps * row[best];
    }
    (q, spent)
}

fn wasserstein_row(p: &[f64], v: &[f64], budget: f64, cost: &[f64], lambda: f64) -> Vec<f64> {
    let eta = 1e-7 * (1.0 + lambda);
    let (far, far_cost) = greedy_plan(p, v, cost, (lambda - eta).max(0.0), true);
    if far_cost <= budget {
        return far;
    }
    let (near, near_cost) = greedy_plan(p, v, cost, lambda + eta, false);
    if near_cost >= far_cost {
        return near;
    }
    let theta = ((budget - near_cost) / (far_cost - near_cost)).clamp(0.0, 1.0);
    far.iter().zip(&near).map(|(a, b)| theta * a + (1.0 - theta) * b).collect()
}

/// `W_l(p, q)^l` for the index metric `|i - j|`, via the monotone coupling.
pub fn line_wasserstein_pow(p: &[f64], q: &[f64], l: f64) -> f64 {
    let n = p.len();
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ri, mut rj) = (p[0], q[0]);
    let mut total = 0.0;
    loop {
        while ri <= 0.0 {
            i += 1;
            if i == n {
                return total;
            }
            ri = p[i];
        }
        while rj <= 0.0 {
            j += 1;
            if j == n {
                return total;
            }
            rj = q[j];
        }
        let m = ri.min(rj);
        total += m * (i as f64 - j as f64).abs().powf(l);
        ri -= m;
        rj -= m;
    }
}

// ---------------------------------------------------------------------------
// Grid oracle

/// Largest state count the grid oracle accepts.
pub const ORACLE_MAX_STATES: usize = 4;

fn uses_index_metric(spec: &UncertaintySetSpec) -> bool {
    match spec {
        UncertaintySetSpec::Wasserstein { metric: Some(d), .. } => d
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, x)| *x == (i as f64 - j as f64).abs())),
        _ => true,
    }
}

fn grid_feasible(spec: &UncertaintySetSpec, p: &[f64], q: &[f64]) -> bool {
    match *spec {
        UncertaintySetSpec::Contamination { delta } => {
            q.iter().zip(p).all(|(qi, pi)| qi - (1.0 - delta) * pi >= -FEAS_TOL)
        }
        UncertaintySetSpec::TotalVariation { delta } => {
            0.5 * q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() <= delta + FEAS_TOL
        }
        UncertaintySetSpec::ChiSquare { delta } => chi2_divergence(p, q) <= delta + FEAS_TOL,
        UncertaintySetSpec::Kl { delta } => kl_divergence(q, p) <= delta + FEAS_TOL,
        UncertaintySetSpec::Wasserstein { delta, l, .. } => {
            line_wasserstein_pow(p, q, l) <= delta.powf(l) + FEAS_TOL
        }
    }
}

fn enumerate_grid(n: usize, resolution: usize, visit: &mut dyn FnMut(&[f64])) {
    fn rec(idx: usize, left: usize, res: f64, buf: &mut Vec<f64>, visit: &mut dyn FnMut(&[f64])) {
        let n = buf.len();
        if idx == n - 1 {
            buf[idx] = left as f64 / res;
            visit(buf);
            return;
        }
        for k in 0..=left {
            buf[idx] = k as f64 / res;
            rec(idx + 1, left - k, res, buf, visit);
        }
    }
    let mut buf = vec![0.0; n];
    rec(0, resolution, resolution as f64, &mut buf, visit);
}

/// Brute-force `min q . V` over simplex grid points of step `1/resolution`
/// that lie in the set. Approaches the exact support value from above.
/// Wasserstein sets are only supported with the index metric.
pub fn support_oracle_grid(spec: &UncertaintySetSpec, p: &[f64], v: &[f64], resolution: usize) -> Result<f64> {
    check_inputs(spec, p, v)?;
    if v.len() > ORACLE_MAX_STATES {
        return Err(Error::OracleUnsupported(format!(
            "{} states exceeds the grid limit of {ORACLE_MAX_STATES}",
            v.len()
        )));
    }
    if resolution == 0 {
        return Err(Error::OracleUnsupported("resolution must be positive".into()));
    }
    if !uses_index_metric(spec) {
        return Err(Error::OracleUnsupported("grid oracle needs the |i - j| metric".into()));
    }
    let mut best = f64::INFINITY;
    enumerate_grid(v.len(), resolution, &mut |q| {
        let val = dot(q, v);
        if val < best && grid_feasible(spec, p, q) {
            best = val;
        }
    });
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::OracleUnsupported("no grid point lies inside the set".into()))
    }
}

/// Checks that `q` belongs to the ball around `p`, up to `tol`. Wasserstein
/// membership is only decidable here for the index metric.
pub fn is_feasible(spec: &UncertaintySetSpec, p: &[f64], q: &[f64], tol: f64) -> Result<bool> {
    check_simplex(q, p.len())?;
    Ok(match *spec {
        UncertaintySetSpec::Contamination { delta } => {
            q.iter().zip(p).all(|(qi, pi)| qi - (1.0 - delta) * pi >= -tol)
        }
        UncertaintySetSpec::TotalVariation { delta } => {
            0.5 * q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() <= delta + tol
        }
        UncertaintySetSpec::ChiSquare { delta } => chi2_divergence(p, q) <= delta + tol,
        UncertaintySetSpec::Kl { delta } => kl_divergence(q, p) <= delta + tol,
        UncertaintySetSpec::Wasserstein { delta, l, .. } => {
            if !uses_index_metric(spec) {
                return Err(Error::OracleUnsupported("membership check needs the |i - j| metric".into()));
            }
            line_wasserstein_pow(p, q, l) <= delta.powf(l) + tol
        }
    })
}

// ---------------------------------------------------------------------------
// Rectangular models

/// An `(s,a)`-rectangular uncertainty set, queried row by row.
pub trait UncertaintyModel {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// `sigma_{P^a_s}(V)`.
    fn support(&self, s: usize, a: usize, v: &[f64]) -> Result<f64>;
    /// A minimizer of `q . V` over `P^a_s`.
    fn worst_row(&self, s: usize, a: usize, v: &[f64]) -> Result<Vec<f64>>;
}

/// Parametric ball of one family around every nominal row of an MDP.
#[derive(Debug, Clone, Copy)]
pub struct RectangularSet<'a> {
    nominal: &'a TabularMdp,
    spec: &'a UncertaintySetSpec,
}

impl<'a> RectangularSet<'a> {
    pub fn new(nominal: &'a TabularMdp, spec: &'a UncertaintySetSpec) -> Result<Self> {
        spec.validate(Some(nominal.n_states()))?;
        Ok(RectangularSet { nominal, spec })
    }

    pub fn spec(&self) -> &UncertaintySetSpec {
        self.spec
    }

    pub fn nominal(&self) -> &TabularMdp {
        self.nominal
    }
}

impl UncertaintyModel for RectangularSet<'_> {
    fn n_states(&self) -> usize {
        self.nominal.n_states()
    }

    fn n_actions(&self) -> usize {
        self.nominal.n_actions()
    }

    fn support(&self, s: usize, a: usize, v: &[f64]) -> Result<f64> {
        if v.len() != self.nominal.n_states() {
            return Err(Error::Dimension("value function length differs from n_states".into()));
        }
        support_value_unchecked(self.spec, self.nominal.row(s, a), v)
    }

    fn worst_row(&self, s: usize, a: usize, v: &[f64]) -> Result<Vec<f64>> {
        worst_case_row(self.spec, self.nominal.row(s, a), v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: [f64; 2] = [0.5, 0.5];
    const V01: [f64; 2] = [0.0, 1.0];

    fn all_families(delta: f64) -> Vec<UncertaintySetSpec> {
        vec![
            UncertaintySetSpec::Contamination { delta: delta.min(1.0) },
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

    #[test]
    fn contamination_closed_form() {
        let spec = UncertaintySetSpec::Contamination { delta: 0.5 };
        let r = support_exact(&spec, &P, &[0.0, 2.0]).unwrap();
        assert!((r.value - 0.5).abs() < 1e-15);
        assert_eq!(r.worst_row.unwrap(), vec![0.75, 0.25]);
    }

    #[test]
    fn constant_value_function_gives_constant() {
        for spec in all_families(0.3) {
            let r = support_exact(&spec, &[0.2, 0.3, 0.5], &[1.7; 3]).unwrap();
            assert!((r.value - 1.7).abs() < 1e-12, "{spec:?}: {}", r.value);
        }
    }

    #[test]
    fn tv_example() {
        let spec = UncertaintySetSpec::TotalVariation { delta: 0.2 };
        let r = support_exact(&spec, &P, &V01).unwrap();
        assert!((r.value - 0.3).abs() < 1e-15);
        let q = worst_case_row(&spec, &P, &V01).unwrap();
        assert!((q[0] - 0.7).abs() < 1e-15 && (q[1] - 0.3).abs() < 1e-15);
        assert!((tv_dual(&P, &V01, 0.2).0 - 0.3).abs() < 1e-15);
        let grid = support_oracle_grid(&spec, &P, &V01, 200).unwrap();
        assert!((grid - 0.3).abs() < 1e-9);
    }

    #[test]
    fn chi2_example() {
        // q = (0.5 + t, 0.5 - t), 4 t^2 <= 0.5  =>  t = sqrt(2)/4, value 0.5 - sqrt(2)/4.
        let spec = UncertaintySetSpec::ChiSquare { delta: 0.5 };
        let r = support_exact(&spec, &P, &V01).unwrap();
        let expected = 0.5 - 2f64.sqrt() / 4.0;
        assert!((r.value - expected).abs() < 1e-12, "{}", r.value);
        assert!((r.value - 0.14645).abs() < 1e-5);
        let grid = support_oracle_grid(&spec, &P, &V01, 2000).unwrap();
        assert!(grid >= r.value - 1e-12 && grid - r.value < 1e-3);
    }

    #[test]
    fn chi2_row_when_radius_reaches_the_minimizer() {
        let p = [0.6168635283898479, 0.38313647161015213];
        let v = [-7.462230669595481, 0.0];
        let spec = UncertaintySetSpec::ChiSquare { delta: 0.9387586156791127 };
        let q = worst_case_row(&spec, &p, &v).unwrap();
        assert_eq!(q, vec![1.0, 0.0]);
        assert!((dot(&q, &v) - support_exact(&spec, &p, &v).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn kl_large_radius_tends_to_support_minimum() {
        let mut last = f64::INFINITY;
        for delta in [0.1, 1.0, 5.0, 50.0] {
            let v = support_exact(&UncertaintySetSpec::Kl { delta }, &P, &V01).unwrap().value;
            assert!(v <= last + 1e-12);
            last = v;
        }
        // KL ball of radius log 2 already contains the point mass on state 0.
        assert!(last.abs() < 1e-9, "{last}");
    }

    #[test]
    fn kl_ignores_states_outside_nominal_support() {
        let spec = UncertaintySetSpec::Kl { delta: 10.0 };
        let r = support_exact(&spec, &[0.0, 0.5, 0.5], &[-5.0, 0.0, 1.0]).unwrap();
        assert!(r.value.abs() < 1e-9);
    }

    #[test]
    fn wasserstein_example() {
        let spec = UncertaintySetSpec::Wasserstein {
            delta: 0.2,
            l: 1.0,
            metric: Some(vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
        };
        let r = support_exact(&spec, &P, &V01).unwrap();
        assert!((r.value - 0.3).abs() < 1e-9, "{}", r.value);
        match r.dual {
            Some(DualVariable::Scalar(lambda)) => assert!((lambda - 1.0).abs() < 1e-6),
            other => panic!("unexpected dual {other:?}"),
        }
        // Transport enumeration: moving m <= 0.2 mass from state 1 to 0 costs m.
        let enumerated = (0..=200)
            .map(|k| k as f64 / 1000.0)
            .map(|m| [0.5 + m, 0.5 - m][1] * V01[1] + (0.5 + m) * V01[0])
            .fold(f64::INFINITY, f64::min);
        assert!((enumerated - 0.3).abs() < 1e-12);
        let q = worst_case_row(&spec, &P, &V01).unwrap();
        assert!((q[0] - 0.7).abs() < 1e-6, "{q:?}");
    }

    #[test]
    fn zero_radius_is_nominal() {
        let p = [0.25, 0.5, 0.25];
        let v = [0.3, -1.0, 2.0];
        for spec in all_families(0.0) {
            let r = support_exact(&spec, &p, &v).unwrap();
            assert!((r.value - dot(&p, &v)).abs() < 1e-12, "{spec:?}");
            assert_eq!(worst_case_row(&spec, &p, &v).unwrap(), p.to_vec());
            let grid = support_oracle_grid(&spec, &p, &v, 4).unwrap();
            assert!((grid - dot(&p, &v)).abs() < 1e-12, "{spec:?}: {grid}");
        }
    }

    #[test]
    fn contamination_grid_bound() {
        let spec = UncertaintySetSpec::Contamination { delta: 0.37 };
        let v = [0.9, -0.4];
        let p = [0.31, 0.69];
        let exact = support_exact(&spec, &p, &v).unwrap().value;
        for res in [10, 50, 200] {
            let grid = support_oracle_grid(&spec, &p, &v, res).unwrap();
            assert!(grid >= exact - 1e-12);
            assert!(grid - exact <= 2.0 * sup_norm(&v) / res as f64);
        }
    }

    #[test]
    fn oracle_rejects_large_dimension() {
        let spec = UncertaintySetSpec::TotalVariation { delta: 0.1 };
        let p = [0.2; 5];
        assert!(matches!(
            support_oracle_grid(&spec, &p, &[0.0; 5], 10),
            Err(Error::OracleUnsupported(_))
        ));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let spec = UncertaintySetSpec::TotalVariation { delta: 0.1 };
        assert!(support_exact(&spec, &[0.6, 0.6], &V01).is_err());
        assert!(support_exact(&spec, &[1.0], &V01).is_err());
        let bad = UncertaintySetSpec::Wasserstein {
            delta: 0.1,
            l: 0.5,
            metric: None,
        };
        assert!(matches!(support_exact(&bad, &P, &V01), Err(Error::InvalidSet(_))));
        let asym = UncertaintySetSpec::Wasserstein {
            delta: 0.1,
            l: 1.0,
            metric: Some(vec![vec![0.0, 1.0], vec![2.0, 0.0]]),
        };
        assert!(matches!(support_exact(&asym, &P, &V01), Err(Error::InvalidSet(_))));
        assert!(UncertaintySetSpec::Contamination { delta: 1.5 }.validate(None).is_err());
    }

    #[test]
    fn spec_json_layout() {
        let spec: UncertaintySetSpec =
            serde_json::from_str(r#"{"kind":"wasserstein","delta":0.2,"l":2.0,"metric":[[0,1],[1,0]]}"#).unwrap();
        assert_eq!(
            spec,
            UncertaintySetSpec::Wasserstein {
                delta: 0.2,
                l: 2.0,
                metric: Some(vec![vec![0.0, 1.0], vec![1.0, 0.0]])
            }
        );
        let tv: UncertaintySetSpec = serde_json::from_str(r#"{"kind":"tv","delta":0.3}"#).unwrap();
        assert_eq!(tv, UncertaintySetSpec::TotalVariation { delta: 0.3 });
        let text = serde_json::to_string(&UncertaintySetSpec::ChiSquare { delta: 0.5 }).unwrap();
        assert_eq!(text, r#"{"kind":"chi2","delta":0.5}"#);
    }

    #[test]
    fn line_wasserstein_matches_hand_computation() {
        assert!((line_wasserstein_pow(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], 2.0) - 4.0).abs() < 1e-15);
        assert!((line_wasserstein_pow(&[0.5, 0.5], &[0.7, 0.3], 1.0) - 0.2).abs() < 1e-15);
        assert_eq!(line_wasserstein_pow(&[0.2, 0.8], &[0.2, 0.8], 3.0), 0.0);
    }
}
