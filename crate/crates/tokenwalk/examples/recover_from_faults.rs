//! Self-stabilization from a deliberately hostile start: several tokens
//! with corrupted tables and arbitrary timers, plus a mid-run deletion
//! of every token. The run walks down the recovery ladder each time:
//! corrupted entries wash out as the tokens visit the recorded nodes,
//! duplicates merge when they meet, a missing token is recreated by
//! timeout, and the system settles on exactly one consistent token.
//!
//! Run with: `cargo run --example recover_from_faults`

use tokenwalk::graph::StaticGraph;
use tokenwalk::protocol::ProtocolParams;
use tokenwalk::sim::{
    run_with_observer, FaultKind, Scenario, ScheduledFault, StabilityClass, TableInit, TimerInit,
    TokenInit,
};

fn main() {
    let g = StaticGraph::complete(5);
    let params = ProtocolParams::new(5, 40).unwrap();
    let mut scenario = Scenario::on_graph(g, params, 4_000, 7);
    scenario.faults.initial_tokens = TokenInit {
        count: 3,
        tables: TableInit::RandomCorrupt,
    };
    scenario.faults.initial_timers = TimerInit::Random;
    // Once stable, kill the remaining tokens to exercise the timeout path.
    scenario.faults.events = vec![ScheduledFault {
        round: 2_000,
        kind: FaultKind::DeleteToken,
    }];

    let mut last_class: Option<StabilityClass> = None;
    let metrics = run_with_observer(&scenario, |rec| {
        if last_class != Some(rec.class) {
            println!(
                "round {:5}: {:11} ({} token(s) alive)",
                rec.round,
                rec.class.label(),
                rec.token_count
            );
            last_class = Some(rec.class);
        }
    })
    .unwrap();

    println!();
    println!("merges performed: {}", metrics.merges);
    println!("timeout creations: {}", metrics.timeout_creations);
    println!("applied faults:");
    for fault in &metrics.applied_faults {
        println!("  round {:5}: {}", fault.round, fault.description);
    }
    let final_class = *metrics.legitimacy_timeline.last().unwrap();
    println!("final class: {}", final_class.label());
    assert_eq!(final_class, StabilityClass::Legitimate);
}
