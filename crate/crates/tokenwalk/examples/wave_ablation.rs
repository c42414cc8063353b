//! Why the refresh wave exists: once every node has been visited, a
//! healthy token plus its waves inhibit timeouts forever. Without the
//! wave, no finite timeout value can do that — some node eventually
//! misses the token for a full timeout period and creates a duplicate.
//!
//! Nodes that were never visited are outside the guarantee in both
//! modes: before the first cover completes, a slow walk can always lose
//! the race against a short timeout.
//!
//! Run with: `cargo run --example wave_ablation`

use tokenwalk::graph::StaticGraph;
use tokenwalk::protocol::ProtocolParams;
use tokenwalk::sim::{run, Scenario};

struct Tally {
    total_creations: u64,
    creations_after_cover: u64,
    runs_with_post_cover_creation: u64,
}

fn tally(wave_enabled: bool, timeout: u64, seeds: u64) -> Tally {
    let mut out = Tally {
        total_creations: 0,
        creations_after_cover: 0,
        runs_with_post_cover_creation: 0,
    };
    for seed in 0..seeds {
        let g = StaticGraph::complete(3);
        let mut params = ProtocolParams::new(3, timeout).unwrap();
        params.wave_enabled = wave_enabled;
        let scenario = Scenario::on_graph(g, params, 100 * timeout, seed);
        let metrics = run(&scenario).unwrap();
        out.total_creations += metrics.timeout_creations;
        out.creations_after_cover += metrics.undue_creations_after_covered;
        if metrics.undue_creations_after_covered > 0 {
            out.runs_with_post_cover_creation += 1;
        }
    }
    out
}

fn main() {
    let timeout = 6;
    let seeds = 50;
    println!(
        "triangle, timeout {timeout}, horizon {} rounds, {seeds} seeds, legitimate start",
        100 * timeout
    );
    println!();

    let on = tally(true, timeout, seeds);
    println!(
        "waves on : {} creations in total, {} after full coverage ({} runs affected)",
        on.total_creations, on.creations_after_cover, on.runs_with_post_cover_creation
    );
    let off = tally(false, timeout, seeds);
    println!(
        "waves off: {} creations in total, {} after full coverage ({} runs affected)",
        off.total_creations, off.creations_after_cover, off.runs_with_post_cover_creation
    );

    assert_eq!(on.creations_after_cover, 0);
    assert!(off.runs_with_post_cover_creation > 0);
    println!();
    println!(
        "after coverage the wave makes the single-token property closed; \
         without it the walk's return-time tail defeats any fixed timeout"
    );
}
