//! Exact first-passage numerics on small graphs: hitting times,
//! variances, return statistics, and the first-passage distribution.
//!
//! Run with: `cargo run --example analyze_graph`

use tokenwalk::analysis::{hitting_distribution, HittingStats};
use tokenwalk::graph::StaticGraph;

fn print_stats(name: &str, g: &StaticGraph) {
    let stats = HittingStats::for_graph(g).unwrap();
    let n = g.node_count();
    println!("{name} (n = {n}, m = {})", g.edge_count());
    println!("  expected hitting times h[i][j]:");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{:6.2}", stats.hitting[(i, j)]))
            .collect();
        println!("    {}", row.join(" "));
    }
    println!("  hitting-time variances V[i][j]:");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{:6.2}", stats.variance[(i, j)]))
            .collect();
        println!("    {}", row.join(" "));
    }
    println!("  per-node return time (= 2m/deg) and return variance:");
    for i in 0..n {
        println!(
            "    node {i}: {:.3} +- var {:.3}",
            stats.returns.return_time[i], stats.returns.return_variance[i]
        );
    }
}

fn main() {
    let triangle = StaticGraph::complete(3);
    print_stats("triangle K3", &triangle);
    println!();

    let path = StaticGraph::path(3);
    print_stats("path 0-1-2", &path);
    println!();

    // First-passage distribution on the path, target node 2: the walk
    // from node 0 needs at least two steps, and the mass accumulates
    // geometrically.
    let f = hitting_distribution(&path.walk_matrix(), 2, 24);
    println!("path 0-1-2, P[H(0 -> 2) <= t]:");
    for t in [1u64, 2, 4, 8, 16, 24] {
        println!("  t = {t:2}: {:.6}", f.cdf(0, t));
    }
    println!(
        "  truncated mean {:.4} (expected hitting time is 4)",
        f.truncated_mean(0)
    );
}
