//! A canonical healthy run: one fresh token circulating on a triangle.
//! The token covers the graph, the refresh waves keep every timer
//! loaded, and no node ever creates a replacement token.
//!
//! Run with: `cargo run --example simulate_basic`

use tokenwalk::graph::StaticGraph;
use tokenwalk::protocol::ProtocolParams;
use tokenwalk::sim::{run_with_observer, Scenario};

fn main() {
    let g = StaticGraph::complete(3);
    let params = ProtocolParams::new(3, 12).unwrap();
    let scenario = Scenario::on_graph(g, params, 5_000, 42);

    println!("first rounds of the trace (round, class, tokens, waves):");
    let metrics = run_with_observer(&scenario, |rec| {
        if rec.round <= 12 {
            println!(
                "  {:3}  {:11}  {}  {}",
                rec.round,
                rec.class.label(),
                rec.token_count,
                rec.wave_count
            );
        }
    })
    .unwrap();

    println!();
    println!("horizon: {} rounds", metrics.rounds);
    println!("coverage complete at round {:?}", metrics.cover_round);
    println!("legitimate from round {:?}", metrics.convergence_round);
    println!(
        "legitimate residency: {:.1}% of snapshots",
        metrics.lc_fraction() * 100.0
    );
    println!("refresh waves launched: {}", metrics.wave_launches);
    println!(
        "timeout creations: {} (the waves prevented every timer expiry)",
        metrics.timeout_creations
    );
    assert_eq!(metrics.timeout_creations, 0);
}
