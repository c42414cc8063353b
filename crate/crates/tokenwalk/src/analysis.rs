//! First-passage numerics for the token walk.
//!
//! Everything here is exact (dense linear algebra) rather than sampled:
//! expected hitting times from the one-step recurrence, hitting-time
//! variances from the companion linear system, return-time statistics,
//! and the concentration bounds built on them — the Chebyshev waiting
//! bound, the lost-token probability bound under per-step loss, and the
//! timeout recommendations derived from it. Matrices are solved by dense
//! LU with partial pivoting; the design envelope is desk-scale chains
//! (up to a few hundred states).
//!
//! Two timeout tuners are provided. [`tune_timeout_scan`] numerically
//! inverts the lost-token bound and is the authoritative one;
//! [`tune_timeout_closed_form`] evaluates a conservative closed formula
//! (natural logarithms) that can recommend far larger timeouts. Prefer
//! the scan.

use crate::graph::{
    averaged_transition_matrix, stationary_distribution, DynamicGraphProcess, GraphError,
    StaticGraph,
};
use nalgebra::DMatrix;
use thiserror::Error;

/// Residual tolerance enforced on every linear solve.
pub const SOLVE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("linear system for target {target} is singular")]
    SingularSystem { target: usize },
    #[error("solve residual {residual} exceeds tolerance for target {target}")]
    ResidualTooLarge { target: usize, residual: f64 },
    #[error("target {target} unreachable from node {from}; variance undefined")]
    UnreachableTarget { target: usize, from: usize },
    #[error("graph must be connected")]
    Disconnected,
    #[error(
        "return-time routes disagree at node {node}: 2m/deg gives {direct}, \
         first-step decomposition gives {decomposed}"
    )]
    ReturnRouteMismatch {
        node: usize,
        direct: f64,
        decomposed: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("token cannot be lost when the loss probability is 0; bound undefined")]
    LossFree,
    #[error("no timeout up to cap {cap} meets the confidence level (last bound {last_bound})")]
    ScanCapExceeded { cap: u64, last_bound: f64 },
}

fn check_square(p: &DMatrix<f64>) -> usize {
    assert_eq!(p.nrows(), p.ncols(), "transition matrix must be square");
    p.nrows()
}

/// For target `j`, mark the sources whose expected hitting time is
/// infinite: those that, walking with `j` absorbing, can reach a state
/// from which `j` is unreachable.
fn infinite_sources(p: &DMatrix<f64>, target: usize) -> Vec<bool> {
    let n = check_square(p);
    // Reverse reachability to the target.
    let mut reaches_target = vec![false; n];
    reaches_target[target] = true;
    let mut stack = vec![target];
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if !reaches_target[u] && p[(u, v)] > 0.0 {
                reaches_target[u] = true;
                stack.push(u);
            }
        }
    }
    // Sources that can wander (without passing through the target) into
    // a state that never reaches it.
    let mut doomed = vec![false; n];
    let mut stack = Vec::new();
    for u in 0..n {
        if !reaches_target[u] {
            doomed[u] = true;
            stack.push(u);
        }
    }
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if u != target && !doomed[u] && p[(u, v)] > 0.0 {
                doomed[u] = true;
                stack.push(u);
            }
        }
    }
    doomed[target] = false;
    doomed
}

/// Expected hitting times of a row-stochastic walk matrix.
///
/// Entry `(i, j)` solves `h_ij = 1 + sum_k p_ik h_kj` with `h_jj = 0`.
/// Sources from which the target is not surely reached are flagged with
/// `f64::INFINITY` instead of failing the whole matrix.
pub fn hitting_times(p: &DMatrix<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    let n = check_square(p);
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let column = hitting_column(p, j)?;
        for i in 0..n {
            h[(i, j)] = column[i];
        }
    }
    Ok(h)
}

fn hitting_column(p: &DMatrix<f64>, target: usize) -> Result<Vec<f64>, AnalysisError> {
    let n = check_square(p);
    let doomed = infinite_sources(p, target);
    let unknowns: Vec<usize> = (0..n).filter(|&i| i != target && !doomed[i]).collect();
    let mut column = vec![0.0; n];
    for (i, flag) in doomed.iter().enumerate() {
        if *flag {
            column[i] = f64::INFINITY;
        }
    }
    if unknowns.is_empty() {
        return Ok(column);
    }
    let k = unknowns.len();
    let mut a = DMatrix::zeros(k, k);
    let b = DMatrix::from_element(k, 1, 1.0);
    for (row, &i) in unknowns.iter().enumerate() {
        for (col, &l) in unknowns.iter().enumerate() {
            a[(row, col)] = if row == col {
                1.0 - p[(i, l)]
            } else {
                -p[(i, l)]
            };
        }
    }
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or(AnalysisError::SingularSystem { target })?;
    let residual = (&a * &x - &b).abs().max();
    if residual > SOLVE_TOL {
        return Err(AnalysisError::ResidualTooLarge { target, residual });
    }
    for (row, &i) in unknowns.iter().enumerate() {
        column[i] = x[(row, 0)];
    }
    Ok(column)
}

/// Hitting times of the walk on a dynamic graph process: stationary
/// distribution, then averaged transition matrix, then [`hitting_times`].
pub fn dynamic_hitting_times(process: &DynamicGraphProcess) -> Result<DMatrix<f64>, AnalysisError> {
    let pi = stationary_distribution(process)?;
    let avg = averaged_transition_matrix(process, &pi)?;
    hitting_times(&avg)
}

/// First-passage distribution to one target: `cdf(i, t) = P[H_ij <= t]`
/// where `H_ij >= 1` counts steps until the walk from `i` first occupies
/// `j`. For `i == j` this is the first *return* distribution.
#[derive(Debug, Clone)]
pub struct HittingDistribution {
    target: usize,
    /// cdf[t] holds the length-n vector of P[H <= t]; index 0 is all 0.
    cdf: Vec<Vec<f64>>,
}

impl HittingDistribution {
    pub fn target(&self) -> usize {
        self.target
    }

    pub fn t_max(&self) -> u64 {
        (self.cdf.len() - 1) as u64
    }

    pub fn cdf(&self, source: usize, t: u64) -> f64 {
        self.cdf[t as usize][source]
    }

    /// Worst-case (smallest) CDF value over all sources other than the
    /// target itself, clamping `t` to the computed horizon.
    pub fn min_over_sources(&self, t: u64) -> f64 {
        let t = t.min(self.t_max()) as usize;
        self.cdf[t]
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.target)
            .map(|(_, &v)| v)
            .fold(1.0, f64::min)
    }

    /// Mean of the (truncated) distribution for one source:
    /// `sum_t t * (F(t) - F(t-1))`.
    pub fn truncated_mean(&self, source: usize) -> f64 {
        let mut mean = 0.0;
        for t in 1..self.cdf.len() {
            mean += t as f64 * (self.cdf[t][source] - self.cdf[t - 1][source]);
        }
        mean
    }
}

/// Iterate the survival vector with the target absorbing:
/// `w_t(i) = sum_{k != j} p_ik w_{t-1}(k)`, `F(t) = 1 - w_t`.
pub fn hitting_distribution(p: &DMatrix<f64>, target: usize, t_max: u64) -> HittingDistribution {
    let n = check_square(p);
    assert!(target < n, "target out of range");
    assert!(t_max >= 1, "t_max must be at least 1");
    let mut survival = vec![1.0; n];
    let mut cdf = Vec::with_capacity(t_max as usize + 1);
    cdf.push(vec![0.0; n]);
    let mut next = vec![0.0; n];
    for _ in 1..=t_max {
        for (i, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..n {
                if k != target {
                    acc += p[(i, k)] * survival[k];
                }
            }
            *slot = acc;
        }
        std::mem::swap(&mut survival, &mut next);
        cdf.push(survival.iter().map(|w| (1.0 - w).clamp(0.0, 1.0)).collect());
    }
    HittingDistribution { target, cdf }
}

/// Variance of the first-passage time to `target` from every source.
///
/// Solves `M(j) V = v(j)` where row `i != j` encodes
/// `V_ij = sum_k p_ik (V_kj + (h_kj + 1)^2) - h_ij^2` and row `j` pins
/// `V_jj = 0`. The diagonal uses `p_ii - 1` so chains with self-loops
/// (averaged dynamic chains with stalls) stay correct; on simple-graph
/// walks this is the usual `-1`.
pub fn variance_hitting(
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    target: usize,
) -> Result<Vec<f64>, AnalysisError> {
    let n = check_square(p);
    for i in 0..n {
        if !h[(i, target)].is_finite() {
            return Err(AnalysisError::UnreachableTarget { target, from: i });
        }
    }
    let mut m = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, 1);
    for i in 0..n {
        if i == target {
            m[(i, i)] = 1.0;
            continue;
        }
        for l in 0..n {
            m[(i, l)] = if l == i { p[(i, l)] - 1.0 } else { p[(i, l)] };
        }
        let mut rhs = h[(i, target)] * h[(i, target)];
        for k in 0..n {
            let step = h[(k, target)] + 1.0;
            rhs -= p[(i, k)] * step * step;
        }
        v[(i, 0)] = rhs;
    }
    let x = m
        .clone()
        .lu()
        .solve(&v)
        .ok_or(AnalysisError::SingularSystem { target })?;
    let residual = (&m * &x - &v).abs().max();
    if residual > SOLVE_TOL {
        return Err(AnalysisError::ResidualTooLarge { target, residual });
    }
    Ok((0..n)
        .map(|i| {
            let val = x[(i, 0)];
            debug_assert!(val > -1e-6, "variance column went negative: {val}");
            val.max(0.0)
        })
        .collect())
}

/// All variance columns assembled into a matrix (entry `(i, j)` is
/// `V[H_ij]`).
pub fn hitting_variances(
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>, AnalysisError> {
    let n = check_square(p);
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let col = variance_hitting(p, h, j)?;
        for i in 0..n {
            out[(i, j)] = col[i];
        }
    }
    Ok(out)
}

/// Per-node first-return statistics.
#[derive(Debug, Clone)]
pub struct ReturnStats {
    /// Expected return time, 2m/deg(i).
    pub return_time: Vec<f64>,
    /// Variance of the return time.
    pub return_variance: Vec<f64>,
}

/// Return times and variances for every node of a connected graph.
///
/// The expected return time is computed twice — as `2m/deg(i)` and by
/// first-step decomposition over the hitting times — and the routes must
/// agree to 1e-9, which also cross-checks `h` against the graph.
pub fn return_stats(
    g: &StaticGraph,
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<ReturnStats, AnalysisError> {
    if !crate::graph::validate_graph(g).connected {
        return Err(AnalysisError::Disconnected);
    }
    let n = g.node_count();
    let m = g.edge_count() as f64;
    let mut return_time = Vec::with_capacity(n);
    let mut return_variance = Vec::with_capacity(n);
    for i in 0..n {
        let deg = g.degree(i) as f64;
        let direct = 2.0 * m / deg;
        let decomposed = 1.0 + g.neighbors(i).iter().map(|&k| h[(k, i)]).sum::<f64>() / deg;
        if (direct - decomposed).abs() > SOLVE_TOL * direct.max(1.0) {
            return Err(AnalysisError::ReturnRouteMismatch {
                node: i,
                direct,
                decomposed,
            });
        }
        let mut second_moment = 0.0;
        for k in 0..n {
            let step = h[(k, i)] + 1.0;
            second_moment += p[(i, k)] * (v[(k, i)] + step * step);
        }
        return_time.push(direct);
        return_variance.push((second_moment - direct * direct).max(0.0));
    }
    Ok(ReturnStats {
        return_time,
        return_variance,
    })
}

/// Return times and variances by first-step decomposition alone, for
/// arbitrary row-stochastic chains (averaged dynamic chains included)
/// where the `2m/deg` shortcut does not apply.
pub fn chain_return_stats(p: &DMatrix<f64>, h: &DMatrix<f64>, v: &DMatrix<f64>) -> ReturnStats {
    let n = check_square(p);
    let mut return_time = Vec::with_capacity(n);
    let mut return_variance = Vec::with_capacity(n);
    for i in 0..n {
        let mut mean = 1.0;
        let mut second_moment = 0.0;
        for k in 0..n {
            let step = h[(k, i)] + 1.0;
            mean += p[(i, k)] * h[(k, i)];
            second_moment += p[(i, k)] * (v[(k, i)] + step * step);
        }
        return_time.push(mean);
        return_variance.push((second_moment - mean * mean).max(0.0));
    }
    ReturnStats {
        return_time,
        return_variance,
    }
}

/// Hitting/variance matrices plus return statistics for one graph.
#[derive(Debug, Clone)]
pub struct HittingStats {
    pub hitting: DMatrix<f64>,
    pub variance: DMatrix<f64>,
    pub returns: ReturnStats,
}

impl HittingStats {
    pub fn for_graph(g: &StaticGraph) -> Result<Self, AnalysisError> {
        let p = g.walk_matrix();
        let hitting = hitting_times(&p)?;
        let variance = hitting_variances(&p, &hitting)?;
        let returns = return_stats(g, &p, &hitting, &variance)?;
        Ok(HittingStats {
            hitting,
            variance,
            returns,
        })
    }
}

/// Chebyshev lower bound on `P[H_ii < t]`: `1 - V / (t - h)^2`, clamped
/// to 0 in the vacuous regime `t <= h`.
pub fn chebyshev_return_bound(return_time: f64, return_variance: f64, t: f64) -> f64 {
    if t <= return_time {
        return 0.0;
    }
    let gap = t - return_time;
    (1.0 - return_variance / (gap * gap)).max(0.0)
}

/// Wait `h + sigma / sqrt(eps)` steps to be `1 - eps` confident the
/// token has come back.
pub fn confidence_wait_time(
    return_time: f64,
    return_variance: f64,
    epsilon: f64,
) -> Result<f64, AnalysisError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "epsilon must be in (0, 1], got {epsilon}"
        )));
    }
    Ok(return_time + return_variance.sqrt() / epsilon.sqrt())
}

/// Lower bound on the probability that the token is lost, given that a
/// node has not seen it for `t` steps, when each hop loses the token
/// with probability `p`.
///
/// Evaluates (in log space, so large `t` cannot overflow):
///
/// ```text
///     V * 2^(t+1) * (1-p)^(t+1) * (1 - (1-p)/2)
/// 1 - -----------------------------------------
///      (1-p)^(t+1) * t^2 + p * t^2 * 2^(t+1)
/// ```
pub fn lost_probability_bound(return_variance: f64, p: f64, t: u64) -> Result<f64, AnalysisError> {
    if p == 0.0 {
        return Err(AnalysisError::LossFree);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "loss probability must be in (0, 1], got {p}"
        )));
    }
    if t == 0 {
        return Err(AnalysisError::InvalidParameter(
            "elapsed steps t must be at least 1".into(),
        ));
    }
    if return_variance < 0.0 {
        return Err(AnalysisError::InvalidParameter(format!(
            "variance must be non-negative, got {return_variance}"
        )));
    }
    if p >= 1.0 || return_variance == 0.0 {
        return Ok(1.0);
    }
    let tf = t as f64;
    let steps = (t + 1) as f64;
    // ratio = V (1-p)^(t+1) ((1+p)/2) / (t^2 (((1-p)/2)^(t+1) + p))
    let ln_ratio = return_variance.ln() + steps * (1.0 - p).ln() + ((1.0 + p) / 2.0).ln()
        - 2.0 * tf.ln()
        - (((1.0 - p) / 2.0).powf(steps) + p).ln();
    Ok((1.0 - ln_ratio.exp()).max(0.0))
}

/// Smallest `t` such that [`lost_probability_bound`] reaches confidence
/// `1 - epsilon`, found by linear scan.
pub fn tune_timeout_scan(
    return_variance: f64,
    p: f64,
    epsilon: f64,
    t_cap: u64,
) -> Result<u64, AnalysisError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    let mut last = 0.0;
    for t in 1..=t_cap {
        last = lost_probability_bound(return_variance, p, t)?;
        if last >= 1.0 - epsilon {
            return Ok(t);
        }
    }
    Err(AnalysisError::ScanCapExceeded {
        cap: t_cap,
        last_bound: last,
    })
}

/// Closed-form timeout (natural logarithms):
/// `(ln(V/h^2) + ln((1-p^2)/(2p)) - ln(eps) + 2) / (-ln(1-p))`.
///
/// Conservative; [`tune_timeout_scan`] is the authoritative tuner.
pub fn tune_timeout_closed_form(
    return_variance: f64,
    return_time: f64,
    p: f64,
    epsilon: f64,
) -> Result<f64, AnalysisError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "loss probability must be strictly inside (0, 1), got {p}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    if return_variance <= 0.0 || return_time <= 0.0 {
        return Err(AnalysisError::InvalidParameter(
            "return time and variance must be positive".into(),
        ));
    }
    let numerator = (return_variance / (return_time * return_time)).ln()
        + ((1.0 - p * p) / (2.0 * p)).ln()
        - epsilon.ln()
        + 2.0;
    Ok(numerator / (-(1.0 - p).ln()))
}

/// Lower bound on the probability that a single link failure never
/// disturbs the protocol: either the failed link is not a tree link, or
/// the token re-hits the orphaned node before the next wave launch.
///
/// `(m - 2n + 2)/m` clamps to 0 on trees, where every edge may be a tree
/// edge. `f` must target the orphaned node and is evaluated at the
/// worst-case source, `ceil(T_m/2) - 1` steps out (clamped to the
/// distribution's horizon, which only makes the bound more conservative).
pub fn link_failure_survival(g: &StaticGraph, f: &HittingDistribution, t_m: u64) -> f64 {
    let n = g.node_count() as i64;
    let m = g.edge_count() as i64;
    if m == 0 {
        return 0.0;
    }
    let factor = (m - 2 * n + 2).max(0) as f64 / m as f64;
    let tau = t_m.div_ceil(2).saturating_sub(1).max(1);
    factor * f.min_over_sources(tau)
}
