//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `cargo test --test acceptance -- --nocapture` to
//! see them). Tolerances are fixed in the assertions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use tokenwalk::analysis::{
    chebyshev_return_bound, confidence_wait_time, dynamic_hitting_times, hitting_distribution,
    hitting_times, link_failure_survival, tune_timeout_scan, variance_hitting, HittingStats,
};
use tokenwalk::graph::{validate_graph, DynamicGraphProcess, StaticGraph};
use tokenwalk::protocol::{is_spanning_tree, ProtocolParams};
use tokenwalk::sim::walks::{sample_dynamic_hitting_time, sample_hitting_time, sample_moments};
use tokenwalk::sim::{
    init_configuration, run, step_mut, FaultKind, Scenario, ScheduledFault, StabilityClass,
    TableInit, TimerInit, TokenInit,
};

/// Criterion 1: Chebyshev waiting bound and confidence wait time on the
/// worked inputs h = 5, V = 51.
#[test]
fn acceptance_01_waiting_bound_arithmetic() {
    let bound = chebyshev_return_bound(5.0, 51.0, 50.0);
    assert!(
        (bound - 0.974815).abs() <= 1e-6,
        "chebyshev bound {bound} not within 1e-6 of 0.974815"
    );
    let wait = confidence_wait_time(5.0, 51.0, 0.01).unwrap();
    assert!(
        (wait - 76.41).abs() <= 0.01,
        "confidence wait {wait} not within 0.01 of 76.41"
    );
    assert!(wait <= 77.0);
    println!("acceptance 01 (waiting-bound arithmetic): PASS — bound {bound:.6}, wait {wait:.2}");
}

/// Criterion 2: the lost-token bound scan recommends exactly 23 steps
/// for V = 51, p = 0.1, eps = 0.05.
#[test]
fn acceptance_02_timeout_scan_value() {
    let t = tune_timeout_scan(51.0, 0.1, 0.05, 10_000).unwrap();
    assert_eq!(t, 23);
    println!("acceptance 02 (timeout scan 95%): PASS — t = {t}");
}

/// Criterion 3: scan values for eps = 1% and 10%, and their distance to
/// the conservative closed-form's quoted recommendations (33 and 23).
#[test]
fn acceptance_03_scan_vs_closed_form_gap() {
    let t1 = tune_timeout_scan(51.0, 0.1, 0.01, 10_000).unwrap();
    let t10 = tune_timeout_scan(51.0, 0.1, 0.10, 10_000).unwrap();
    assert_eq!(t1, 32);
    assert_eq!(t10, 19);
    assert!((t1 as i64 - 33).abs() <= 4);
    assert!((t10 as i64 - 23).abs() <= 4);
    println!("acceptance 03 (scan vs closed-form gap): PASS — 1% -> {t1}, 10% -> {t10}");
}

/// Criterion 4: exact small-graph first-passage oracles plus the
/// 2m/deg cross-check on 200 random connected graphs.
#[test]
fn acceptance_04_small_graph_oracles() {
    let k2 = StaticGraph::new(2, &[(0, 1)]).unwrap();
    let p = k2.walk_matrix();
    let h = hitting_times(&p).unwrap();
    let v = variance_hitting(&p, &h, 1).unwrap();
    assert!((h[(0, 1)] - 1.0).abs() <= 1e-9);
    assert!(v[0].abs() <= 1e-9);

    let k3 = StaticGraph::complete(3);
    let stats = HittingStats::for_graph(&k3).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let expected = if i == j { 0.0 } else { 2.0 };
            assert!((stats.hitting[(i, j)] - expected).abs() <= 1e-9);
            assert!((stats.variance[(i, j)] - expected).abs() <= 1e-9);
        }
        assert!((stats.returns.return_time[i] - 3.0).abs() <= 1e-9);
        assert!((stats.returns.return_variance[i] - 2.0).abs() <= 1e-9);
    }

    let path3 = StaticGraph::path(3);
    let p = path3.walk_matrix();
    let h = hitting_times(&p).unwrap();
    let v = variance_hitting(&p, &h, 2).unwrap();
    assert!((h[(0, 2)] - 4.0).abs() <= 1e-9);
    assert!((v[0] - 8.0).abs() <= 1e-9);

    // Dual-route return times on 200 random connected graphs.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(2..=10);
        let g = StaticGraph::random_connected(n, rng.random_range(0..=8), &mut rng);
        if !validate_graph(&g).connected {
            continue;
        }
        let h = hitting_times(&g.walk_matrix()).unwrap();
        let m = g.edge_count() as f64;
        for i in 0..n {
            let deg = g.degree(i) as f64;
            let direct = 2.0 * m / deg;
            let decomposed = 1.0 + g.neighbors(i).iter().map(|&k| h[(k, i)]).sum::<f64>() / deg;
            assert!(
                (direct - decomposed).abs() <= 1e-9 * direct.max(1.0),
                "graph {checked} node {i}: {direct} vs {decomposed}"
            );
        }
        checked += 1;
    }
    println!("acceptance 04 (small-graph oracles): PASS — 200 random graphs cross-checked");
}

/// Criterion 5: Monte Carlo walks reproduce the exact hitting means,
/// variances (3 sigma of the estimators), and CDFs (99% DKW band).
#[test]
fn acceptance_05_monte_carlo_consistency() {
    struct Case {
        graph: StaticGraph,
        from: usize,
        to: usize,
        samples: usize,
    }
    let cases = [
        Case {
            graph: StaticGraph::complete(3),
            from: 0,
            to: 1,
            samples: 150_000,
        },
        Case {
            graph: StaticGraph::path(3),
            from: 0,
            to: 2,
            samples: 100_000,
        },
        Case {
            graph: StaticGraph::complete(3),
            from: 0,
            to: 0,
            samples: 100_000,
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(50_505);
    for (idx, case) in cases.iter().enumerate() {
        let p = case.graph.walk_matrix();
        let h = hitting_times(&p).unwrap();
        let v = variance_hitting(&p, &h, case.to).unwrap();
        let (exact_mean, exact_var) = if case.from == case.to {
            let stats = HittingStats::for_graph(&case.graph).unwrap();
            (
                stats.returns.return_time[case.from],
                stats.returns.return_variance[case.from],
            )
        } else {
            (h[(case.from, case.to)], v[case.from])
        };
        let samples: Vec<f64> = (0..case.samples)
            .map(|_| sample_hitting_time(&case.graph, case.from, case.to, &mut rng) as f64)
            .collect();
        let m = sample_moments(&samples);
        assert!(
            (m.mean - exact_mean).abs() <= 3.0 * m.mean_se,
            "case {idx}: mean {} vs exact {exact_mean} (se {})",
            m.mean,
            m.mean_se
        );
        assert!(
            (m.variance - exact_var).abs() <= 3.0 * m.variance_se,
            "case {idx}: variance {} vs exact {exact_var} (se {})",
            m.variance,
            m.variance_se
        );

        // 99% DKW band around the exact CDF.
        let t_max = 64u64;
        let f = hitting_distribution(&p, case.to, t_max);
        let band = ((2.0f64 / 0.01).ln() / (2.0 * case.samples as f64)).sqrt();
        let mut worst: f64 = 0.0;
        for t in 1..=t_max {
            let empirical =
                samples.iter().filter(|&&x| x <= t as f64).count() as f64 / case.samples as f64;
            worst = worst.max((empirical - f.cdf(case.from, t)).abs());
        }
        assert!(
            worst <= band,
            "case {idx}: CDF deviation {worst} exceeds DKW band {band}"
        );
    }
    println!("acceptance 05 (Monte Carlo consistency): PASS — 3 cases within 3-sigma and DKW");
}

fn non_bipartite_random_graph(n: usize, gen_seed: u64) -> StaticGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(gen_seed);
    loop {
        let g = StaticGraph::random_connected(n, n, &mut rng);
        let diag = validate_graph(&g);
        if diag.connected && !diag.bipartite {
            return g;
        }
    }
}

/// Timeout tuned from the graph's own return-time statistics: the
/// 99%-confidence waiting time of the worst node, floored at
/// capacity + 2.
fn tuned_timeout(g: &StaticGraph) -> u64 {
    let stats = HittingStats::for_graph(g).unwrap();
    let worst = (0..g.node_count())
        .map(|i| {
            confidence_wait_time(
                stats.returns.return_time[i],
                stats.returns.return_variance[i],
                0.01,
            )
            .unwrap()
        })
        .fold(0.0f64, f64::max);
    (worst.ceil() as u64).max(g.node_count() as u64 + 2)
}

/// Criterion 6: from 100 arbitrary initial configurations on
/// non-bipartite graphs (0-4 tokens, corrupt tables, random timers),
/// at least 99% of runs reach the legitimate class within 10^4 rounds
/// and never leave it.
#[test]
fn acceptance_06_convergence_and_closure() {
    let pool = [
        StaticGraph::complete(3),
        StaticGraph::cycle(5),
        StaticGraph::complete(5),
        non_bipartite_random_graph(8, 999),
    ];
    let timeouts: Vec<u64> = pool.iter().map(tuned_timeout).collect();
    let mut good = 0;
    let total = 100;
    for seed in 0..total {
        let g = pool[seed as usize % pool.len()].clone();
        let timeout = timeouts[seed as usize % pool.len()];
        let params = ProtocolParams::new(g.node_count(), timeout).unwrap();
        let mut scenario = Scenario::on_graph(g, params, 10_000, seed);
        scenario.faults.initial_tokens = TokenInit {
            count: (seed % 5) as usize,
            tables: TableInit::RandomCorrupt,
        };
        scenario.faults.initial_timers = TimerInit::Random;
        let metrics = run(&scenario).unwrap();
        if metrics.convergence_round.is_some() && metrics.closed_after_convergence() {
            good += 1;
        }
    }
    assert!(
        good * 100 >= total * 99,
        "only {good}/{total} runs converged and closed"
    );
    println!("acceptance 06 (convergence + closure): PASS — {good}/{total} runs");
}

/// Criterion 7: starting legitimate on static graphs with no loss, once
/// the visited union covers every node, no timeout creation occurs over
/// the next 10^5 rounds (20 seeds).
#[test]
fn acceptance_07_no_creation_after_cover() {
    let graphs = [StaticGraph::complete(3), StaticGraph::cycle(5)];
    for seed in 0..20u64 {
        let g = graphs[seed as usize % graphs.len()].clone();
        let params = ProtocolParams::new(g.node_count(), 80).unwrap();
        let scenario = Scenario::on_graph(g, params, 105_000, seed);
        let metrics = run(&scenario).unwrap();
        let cover = metrics.cover_round.expect("cover must happen");
        assert!(cover <= 5_000, "seed {seed}: cover at {cover}");
        assert_eq!(
            metrics.undue_creations_after_covered, 0,
            "seed {seed}: creation after cover"
        );
        assert_eq!(
            metrics.timeout_creations, 0,
            "seed {seed}: unexpected creation before cover"
        );
    }
    println!("acceptance 07 (no creation after cover): PASS — 20 seeds x 10^5 rounds");
}

/// Criterion 8: with refresh waves disabled, a legitimate start on a
/// 3-node graph produces an undue creation within 100 * T_m rounds in at
/// least 95% of 100 seeds.
#[test]
fn acceptance_08_impossibility_without_waves() {
    let timeout = 6u64;
    let mut fired = 0;
    let total = 100;
    for seed in 0..total {
        let g = StaticGraph::complete(3);
        let mut params = ProtocolParams::new(3, timeout).unwrap();
        params.wave_enabled = false;
        let scenario = Scenario::on_graph(g, params, 100 * timeout, seed);
        let metrics = run(&scenario).unwrap();
        if metrics.timeout_creations >= 1 {
            fired += 1;
        }
    }
    assert!(
        fired * 100 >= total * 95,
        "undue creation in only {fired}/{total} seeds"
    );
    println!("acceptance 08 (impossibility without waves): PASS — {fired}/{total} seeds");
}

/// Criterion 9: along 10^4-round static runs, every live token's table
/// restricted to its visited set stays a spanning tree of it (20 seeds).
#[test]
fn acceptance_09_spanning_tree_along_runs() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 + (seed as usize % 5);
        let g = {
            let mut gen = ChaCha8Rng::seed_from_u64(7_000 + seed);
            loop {
                let g = StaticGraph::random_connected(n, n / 2, &mut gen);
                if validate_graph(&g).connected {
                    break g;
                }
            }
        };
        let params = ProtocolParams::new(n, 4 * n as u64 + 10).unwrap();
        let mut scenario = Scenario::on_graph(g.clone(), params, 10_000, seed);
        // Half the seeds start with two fresh tokens to exercise merges.
        scenario.faults.initial_tokens = TokenInit {
            count: 1 + (seed as usize % 2),
            tables: TableInit::Fresh,
        };
        let mut config = init_configuration(&scenario, &mut rng).unwrap();
        for _ in 0..scenario.horizon {
            step_mut(&mut config, &scenario, &mut rng);
            for token in config
                .tokens_in_flight
                .iter()
                .chain(config.stalled_tokens.iter())
            {
                let visited = config
                    .visited
                    .get(&token.trace_id)
                    .cloned()
                    .unwrap_or_else(BTreeSet::new);
                assert!(
                    is_spanning_tree(&token.table, &visited, &g),
                    "seed {seed} round {}: token {} table not spanning its visited set",
                    config.round,
                    token.trace_id
                );
            }
        }
    }
    println!("acceptance 09 (spanning-tree invariant): PASS — 20 seeds x 10^4 rounds");
}

/// Criterion 10: on a two-state blinking-edge process, the averaged
/// chain's hitting times match Monte Carlo walks within 5% relative
/// error.
#[test]
fn acceptance_10_dynamic_hitting_times() {
    let triangle = StaticGraph::complete(3);
    let path = StaticGraph::path(3);
    let process =
        DynamicGraphProcess::new(vec![triangle, path], vec![vec![0.5, 0.5], vec![0.5, 0.5]])
            .unwrap();
    let h = dynamic_hitting_times(&process).unwrap();
    let pi = tokenwalk::graph::stationary_distribution(&process).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10_101);
    let walks_per_pair = 30_000;
    for from in 0..3 {
        for to in 0..3 {
            if from == to {
                continue;
            }
            let mean = (0..walks_per_pair)
                .map(|_| sample_dynamic_hitting_time(&process, &pi, from, to, &mut rng) as f64)
                .sum::<f64>()
                / walks_per_pair as f64;
            let exact = h[(from, to)];
            let rel = (mean - exact).abs() / exact;
            assert!(
                rel <= 0.05,
                "pair ({from},{to}): Monte Carlo {mean} vs exact {exact} ({rel:.3} rel)"
            );
        }
    }
    println!("acceptance 10 (dynamic hitting times): PASS — 6 pairs within 5%");
}

/// Criterion 11: under a scheduled forwarding-edge removal, every
/// blocked wave forward is preceded by the orphan's stale-link flag, and
/// the fraction of runs with no undue creation dominates the link
/// survival bound minus 3 Monte Carlo sigma.
#[test]
fn acceptance_11_local_detection_and_survival() {
    let timeout = 40u64;
    let fault_round = 60u64;
    let total = 100u64;
    let mut no_violation = 0u64;
    for seed in 0..total {
        let g = StaticGraph::complete(5);
        let params = ProtocolParams::new(5, timeout).unwrap();
        let mut scenario = Scenario::on_graph(g, params, fault_round + 10 * timeout, seed);
        scenario.faults.events = vec![ScheduledFault {
            round: fault_round,
            kind: FaultKind::RemoveTreeEdge,
        }];
        let metrics = run(&scenario).unwrap();
        assert_eq!(metrics.applied_faults.len(), 1, "seed {seed}");
        let (orphan, parent) = metrics.applied_faults[0]
            .edge
            .expect("removal reports its edge");
        let flag_round = metrics
            .local_detection_rounds
            .get(&orphan)
            .copied()
            .expect("orphan must raise its stale-link flag");
        assert_eq!(flag_round, fault_round, "seed {seed}: flag at removal");
        for &(round, from, to) in &metrics.blocked_wave_forwards {
            assert!(
                round >= fault_round,
                "seed {seed}: blocked forward before the removal"
            );
            // Only the removed edge can carry a stale entry; the blocked
            // target is the node orphaned by that entry.
            assert!(
                (from, to) == (parent, orphan) || (from, to) == (orphan, parent),
                "seed {seed}: blocked forward ({from}, {to}) off the removed edge"
            );
            let target_flag = metrics
                .local_detection_rounds
                .get(&to)
                .copied()
                .expect("blocked target must have raised its flag");
            assert!(
                target_flag <= round,
                "seed {seed}: failed propagation not preceded by the flag"
            );
        }
        if metrics.timeout_creations == 0 {
            no_violation += 1;
        }
    }
    // Survival bound on the post-removal topology (K5 minus one edge),
    // worst-case source, with the original graph's edge factor.
    let k5 = StaticGraph::complete(5);
    let mut post = k5.clone();
    assert!(post.remove_edge(0, 1));
    let f = hitting_distribution(&post.walk_matrix(), 0, 4 * timeout);
    let bound = link_failure_survival(&k5, &f, timeout);
    let fraction = no_violation as f64 / total as f64;
    let sigma = (fraction * (1.0 - fraction) / total as f64).sqrt();
    assert!(
        fraction >= bound - 3.0 * sigma,
        "no-violation fraction {fraction} below bound {bound} - 3 sigma {sigma}"
    );
    println!(
        "acceptance 11 (local detection + survival): PASS — fraction {fraction:.2} >= bound {bound:.3} - 3σ"
    );
}

/// Legitimate runs stay legitimate: once converged, the class never
/// drops (closure re-checked every round as part of criterion 6's
/// machinery; asserted here on the canonical scenario for visibility).
#[test]
fn acceptance_extra_closure_on_canonical_run() {
    let g = StaticGraph::complete(3);
    let params = ProtocolParams::new(3, 30).unwrap();
    let scenario = Scenario::on_graph(g, params, 20_000, 1);
    let metrics = run(&scenario).unwrap();
    let conv = metrics.convergence_round.expect("converges");
    for (round, class) in metrics.legitimacy_timeline.iter().enumerate() {
        if (round as u64) >= conv {
            assert_eq!(*class, StabilityClass::Legitimate, "round {round}");
        }
    }
    println!("acceptance extra (closure): PASS — legitimate from round {conv} onward");
}
