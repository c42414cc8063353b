//! Monte Carlo sampling of raw token walks, without the maintenance
//! protocol on top. These are the empirical counterparts of the exact
//! quantities in [`crate::analysis`].

use crate::graph::{sample_next_graph, DynamicGraphProcess, GraphDistribution, StaticGraph};
use rand::Rng;

/// Steps a uniform random walk takes from `from` until it first occupies
/// `to` (at least one step, so `from == to` samples a return time). The
/// graph must be connected.
pub fn sample_hitting_time<R: Rng + ?Sized>(
    g: &StaticGraph,
    from: usize,
    to: usize,
    rng: &mut R,
) -> u64 {
    let mut current = from;
    let mut steps = 0u64;
    loop {
        let nbrs = g.neighbors(current);
        assert!(!nbrs.is_empty(), "walk stranded on an isolated node");
        current = nbrs[rng.random_range(0..nbrs.len())];
        steps += 1;
        if current == to {
            return steps;
        }
    }
}

/// Hitting-time sample on a dynamic graph: the topology starts in a
/// state drawn from `pi` and advances one process transition per walk
/// step. A node isolated in the current state holds the token for that
/// step.
pub fn sample_dynamic_hitting_time<R: Rng + ?Sized>(
    process: &DynamicGraphProcess,
    pi: &GraphDistribution,
    from: usize,
    to: usize,
    rng: &mut R,
) -> u64 {
    let mut state = sample_index(pi.weights(), rng);
    let mut current = from;
    let mut steps = 0u64;
    loop {
        let g = process.state(state);
        let nbrs = g.neighbors(current);
        if !nbrs.is_empty() {
            current = nbrs[rng.random_range(0..nbrs.len())];
        }
        steps += 1;
        if current == to {
            return steps;
        }
        state = sample_next_graph(process, state, rng);
    }
}

/// Outcome of a return walk subject to per-step token loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossyReturn {
    /// Step at which the walk re-entered its origin, if it did.
    pub returned_at: Option<u64>,
    /// Step at which the token disappeared, if it did.
    pub lost_at: Option<u64>,
}

/// Walk from `node` for at most `t_max` steps; each step the token is
/// first lost with probability `loss_p`, otherwise it moves. Exactly one
/// of the outcome fields is set unless the horizon ran out.
pub fn sample_return_with_loss<R: Rng + ?Sized>(
    g: &StaticGraph,
    node: usize,
    loss_p: f64,
    t_max: u64,
    rng: &mut R,
) -> LossyReturn {
    let mut current = node;
    for step in 1..=t_max {
        if loss_p > 0.0 && rng.random::<f64>() < loss_p {
            return LossyReturn {
                returned_at: None,
                lost_at: Some(step),
            };
        }
        let nbrs = g.neighbors(current);
        assert!(!nbrs.is_empty(), "walk stranded on an isolated node");
        current = nbrs[rng.random_range(0..nbrs.len())];
        if current == node {
            return LossyReturn {
                returned_at: Some(step),
                lost_at: None,
            };
        }
    }
    LossyReturn {
        returned_at: None,
        lost_at: None,
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, &w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return idx;
        }
    }
    weights.len() - 1
}

/// Sample mean and (unbiased) sample variance with their standard
/// errors, for asserting Monte Carlo agreement.
#[derive(Debug, Clone, Copy)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean.
    pub mean_se: f64,
    /// Asymptotic standard error of the sample variance,
    /// `sqrt((m4 - var^2) / n)`.
    pub variance_se: f64,
}

pub fn sample_moments(samples: &[f64]) -> SampleMoments {
    let n = samples.len();
    assert!(n >= 2, "need at least two samples");
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for &x in samples {
        let d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    let variance = m2 / (nf - 1.0);
    let m2n = m2 / nf;
    let m4n = m4 / nf;
    SampleMoments {
        count: n,
        mean,
        variance,
        mean_se: (variance / nf).sqrt(),
        variance_se: ((m4n - m2n * m2n).max(0.0) / nf).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::stationary_distribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k2_walk_is_deterministic() {
        let g = StaticGraph::new(2, &[(0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_hitting_time(&g, 0, 1, &mut rng), 1);
        assert_eq!(sample_hitting_time(&g, 0, 0, &mut rng), 2);
    }

    #[test]
    fn triangle_walk_mean_matches() {
        let g = StaticGraph::complete(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<f64> = (0..20_000)
            .map(|_| sample_hitting_time(&g, 0, 1, &mut rng) as f64)
            .collect();
        let m = sample_moments(&samples);
        assert!((m.mean - 2.0).abs() < 3.0 * m.mean_se, "mean {}", m.mean);
    }

    #[test]
    fn single_state_dynamic_equals_static_distribution() {
        let g = StaticGraph::path(3);
        let process = DynamicGraphProcess::from_static(g.clone());
        let pi = stationary_distribution(&process).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..20_000)
            .map(|_| sample_dynamic_hitting_time(&process, &pi, 0, 2, &mut rng) as f64)
            .collect();
        let m = sample_moments(&samples);
        assert!((m.mean - 4.0).abs() < 3.0 * m.mean_se, "mean {}", m.mean);
    }

    #[test]
    fn certain_loss_is_immediate() {
        let g = StaticGraph::complete(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = sample_return_with_loss(&g, 0, 1.0, 100, &mut rng);
        assert_eq!(out.lost_at, Some(1));
        assert_eq!(out.returned_at, None);

        let out = sample_return_with_loss(&g, 0, 0.0, 10_000, &mut rng);
        assert!(out.returned_at.is_some());
    }
}
