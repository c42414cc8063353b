//! Token circulation when the topology itself is a Markov process.
//!
//! Two states over the same three nodes — a triangle and a path whose
//! third edge blinks away — switching uniformly at random each round.
//! The walk's behavior reduces to a single averaged transition matrix:
//! its hitting times predict what the round simulator actually does.
//!
//! Run with: `cargo run --example dynamic_topology`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokenwalk::analysis::dynamic_hitting_times;
use tokenwalk::graph::{
    averaged_transition_matrix, stationary_distribution, DynamicGraphProcess, StaticGraph,
};
use tokenwalk::sim::walks::sample_dynamic_hitting_time;

fn main() {
    let triangle = StaticGraph::complete(3);
    let path = StaticGraph::path(3);
    let process =
        DynamicGraphProcess::new(vec![triangle, path], vec![vec![0.5, 0.5], vec![0.5, 0.5]])
            .unwrap();

    let pi = stationary_distribution(&process).unwrap();
    println!("stationary state distribution: {:?}", pi.weights());

    let avg = averaged_transition_matrix(&process, &pi).unwrap();
    println!("averaged walk matrix:");
    for i in 0..3 {
        let row: Vec<String> = (0..3).map(|j| format!("{:5.3}", avg[(i, j)])).collect();
        println!("  {}", row.join(" "));
    }

    let h = dynamic_hitting_times(&process).unwrap();
    println!();
    println!("pair     exact   Monte Carlo (100k walks)");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (from, to) in [(0usize, 2usize), (1, 2), (0, 1)] {
        let walks = 100_000;
        let mean = (0..walks)
            .map(|_| sample_dynamic_hitting_time(&process, &pi, from, to, &mut rng) as f64)
            .sum::<f64>()
            / walks as f64;
        println!("{from} -> {to}   {:6.3}  {mean:6.3}", h[(from, to)]);
    }
}
