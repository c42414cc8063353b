//! Topology changes under the protocol: removing a link that the token
//! tree currently uses. The node that last forwarded the token over the
//! vanished link can detect the problem locally (its recorded forward
//! neighbor is gone); the walk usually repairs the tree before the next
//! refresh wave even needs the dead link.
//!
//! Run with: `cargo run --example link_failure_detection`

use tokenwalk::analysis::{hitting_distribution, link_failure_survival};
use tokenwalk::graph::StaticGraph;
use tokenwalk::protocol::ProtocolParams;
use tokenwalk::sim::{run, FaultKind, Scenario, ScheduledFault};

fn main() {
    let timeout = 40u64;
    let fault_round = 60u64;
    let runs = 200u64;

    let mut no_violation = 0u64;
    let mut detections = 0u64;
    let mut blocked_total = 0u64;
    for seed in 0..runs {
        let g = StaticGraph::complete(5);
        let params = ProtocolParams::new(5, timeout).unwrap();
        let mut scenario = Scenario::on_graph(g, params, fault_round + 10 * timeout, seed);
        scenario.faults.events = vec![ScheduledFault {
            round: fault_round,
            kind: FaultKind::RemoveTreeEdge,
        }];
        let metrics = run(&scenario).unwrap();
        let (orphan, _) = metrics.applied_faults[0].edge.unwrap();
        if metrics.local_detection_rounds.contains_key(&orphan) {
            detections += 1;
        }
        blocked_total += metrics.blocked_wave_forwards.len() as u64;
        if metrics.timeout_creations == 0 {
            no_violation += 1;
        }
    }

    // Analytic lower bound: the link survives the removal if it was not
    // a tree link, or the token re-hits the orphan before the next wave.
    let k5 = StaticGraph::complete(5);
    let mut post = k5.clone();
    post.remove_edge(0, 1);
    let f = hitting_distribution(&post.walk_matrix(), 0, 4 * timeout);
    let bound = link_failure_survival(&k5, &f, timeout);

    println!(
        "complete graph K5, timeout {timeout}, forwarding-edge removal at round {fault_round}"
    );
    println!("runs: {runs}");
    println!("orphan raised its local flag: {detections}/{runs}");
    println!("blocked wave forwards observed in total: {blocked_total}");
    println!(
        "runs with no spurious creation: {no_violation}/{runs} = {:.2}",
        no_violation as f64 / runs as f64
    );
    println!("analytic survival lower bound: {bound:.3}");
    assert!(no_violation as f64 / runs as f64 >= bound);
}
