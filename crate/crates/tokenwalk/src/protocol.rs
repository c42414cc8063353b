//! The token-circulation state machine.
//!
//! Four node-level events drive the protocol:
//!
//! * **Token receipt** ([`receive_tokens`]): every token arriving in the
//!   same round is updated (parent table entries for this node and for
//!   each token's sender, hop counter bumped), duplicates are merged into
//!   one, a timer-refresh wave is launched down the table's induced tree
//!   when the hop counter reaches the wave threshold, and the surviving
//!   token is forwarded to a uniformly random neighbor.
//! * **Timeout** ([`create_token`]): a node whose timer ran out creates a
//!   fresh token and forwards it.
//! * **Wave relay** ([`relay_wave`]): a refresh-wave message is forwarded
//!   to the children listed in its table, after blanking the relaying
//!   node's own entry so the wave always dies out.
//! * **Clock tick** ([`tick`]): the timer decrements.
//!
//! All functions are pure: they take node state by reference and return
//! updated copies plus outgoing messages. The simulator supplies message
//! ordering and delivery.

use crate::graph::StaticGraph;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Unique per-token identity assigned by the simulator. Protocol rules
/// never read it; merging retains the identity of the first token in
/// merge order.
pub type TraceId = u64;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("timeout must exceed capacity + 1 (got timeout {timeout}, capacity {capacity})")]
    TimeoutTooSmall { timeout: u64, capacity: usize },
    #[error("parent tables have different lengths: {0} vs {1}")]
    TableLengthMismatch(usize, usize),
    #[error("tick at timer 0: the timeout rule must fire instead")]
    TickAtZero,
}

/// Protocol constants shared by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Upper bound on the number of nodes; parent tables have this
    /// length, so it must dominate every node id plus one.
    pub capacity: usize,
    /// Timeout in rounds: a node that saw neither token nor wave for
    /// this long creates a replacement token.
    pub timeout: u64,
    /// Ablation switch for experiments: when false, token receipt never
    /// launches refresh waves, so timeouts fire on pure return-time
    /// statistics alone.
    #[serde(default = "default_true")]
    pub wave_enabled: bool,
}

fn default_true() -> bool {
    true
}

impl ProtocolParams {
    pub fn new(capacity: usize, timeout: u64) -> Result<Self, ProtocolError> {
        if timeout <= capacity as u64 + 1 {
            return Err(ProtocolError::TimeoutTooSmall { timeout, capacity });
        }
        Ok(ProtocolParams {
            capacity,
            timeout,
            wave_enabled: true,
        })
    }

    /// Hop count at which the holder launches a refresh wave: the
    /// timeout minus the worst-case wave propagation time (capacity + 1).
    pub fn wave_threshold(&self) -> u64 {
        self.timeout - (self.capacity as u64 + 1)
    }
}

/// Parent table carried inside tokens and waves: entry `k` names the
/// node that `k` last forwarded the token to (or `k` itself at the
/// current root).
pub type ParentTable = Vec<Option<usize>>;

/// The circulating token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenMsg {
    pub sender: usize,
    pub recipient: usize,
    pub table: ParentTable,
    pub hop: u64,
    pub trace_id: TraceId,
}

/// A timer-refresh wave message traveling down the token's tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveMsg {
    pub sender: usize,
    pub recipient: usize,
    pub table: ParentTable,
}

/// Per-node protocol state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: usize,
    /// Rounds left before this node creates a replacement token.
    pub timer: u64,
    /// Neighbor the token was last forwarded to. If that link later
    /// disappears before the token returns, the pending refresh wave
    /// cannot reach this node — a condition the node can check locally.
    pub last_forwarded_to: Option<usize>,
    /// Identities of every token that ever visited this node
    /// (instrumentation, not protocol state).
    pub visited_by: BTreeSet<TraceId>,
}

impl NodeState {
    pub fn new(id: usize, timer: u64) -> Self {
        NodeState {
            id,
            timer,
            last_forwarded_to: None,
            visited_by: BTreeSet::new(),
        }
    }

    /// Local illegitimacy detection: the last forwarding link vanished.
    pub fn has_stale_forward_link(&self, g: &StaticGraph) -> bool {
        match self.last_forwarded_to {
            Some(j) => !g.has_edge(self.id, j),
            None => false,
        }
    }
}

/// Result of processing a round's worth of received tokens at one node.
#[derive(Debug, Clone)]
pub enum ReceiveOutcome {
    /// Normal case: one merged token forwarded, zero or more wave
    /// messages launched.
    Forwarded {
        token: TokenMsg,
        waves: Vec<WaveMsg>,
        node: NodeState,
        /// Wave targets that appear in the table but are not currently
        /// neighbors, so no message could be sent to them.
        blocked_wave_targets: Vec<usize>,
        /// Whether this receipt launched a refresh wave.
        wave_fired: bool,
    },
    /// The node has no neighbors right now: the merged token is held
    /// as-is (hop untouched) and retried next round.
    Stalled { token: TokenMsg, node: NodeState },
}

/// Token receipt. `received` must be non-empty; all tokens arriving at
/// `node` in the same round are treated as one batch.
///
/// Per received token the table gains `table[node] = node` and
/// `table[sender] = node` and the hop counter is incremented; the batch
/// is then merged pairwise in ascending `(sender, trace_id)` order, so
/// results are independent of arrival order. If the merged hop counter
/// reaches the wave threshold, a refresh wave is sent to every current
/// neighbor listed as a child in the table and the counter resets.
/// Finally the token goes to a uniformly random neighbor and the timer
/// reloads.
pub fn receive_tokens<R: Rng + ?Sized>(
    node: &NodeState,
    received: Vec<TokenMsg>,
    params: &ProtocolParams,
    neighbors: &[usize],
    rng: &mut R,
) -> ReceiveOutcome {
    assert!(
        !received.is_empty(),
        "receive_tokens needs at least one token"
    );
    let id = node.id;
    let mut updated = node.clone();
    updated.timer = params.timeout;

    if neighbors.is_empty() {
        // Stranded: hold the tokens untouched and retry next round. The
        // hop counter stays frozen so no spurious waves fire while
        // stranded. Merge is deferred to the retry.
        let mut batch = received;
        batch.sort_by_key(|t| (t.sender, t.trace_id));
        let mut token = batch.remove(0);
        token.recipient = id;
        for other in batch {
            token = merge_tokens(&token, &other).expect("tables share params.capacity length");
        }
        return ReceiveOutcome::Stalled {
            token,
            node: updated,
        };
    }

    let mut batch = received;
    let senders: Vec<usize> = batch.iter().map(|t| t.sender).collect();
    for t in &mut batch {
        t.table[id] = Some(id);
        t.table[t.sender] = Some(id);
        t.hop += 1;
    }
    batch.sort_by_key(|t| (t.sender, t.trace_id));
    let mut merged = batch.remove(0);
    for other in batch {
        merged = merge_tokens(&merged, &other).expect("tables share params.capacity length");
    }
    // Every sender just forwarded here over a live edge; those entries
    // must win over whatever older entries the merge kept.
    for sender in senders {
        merged.table[sender] = Some(id);
    }
    merged.table[id] = Some(id);

    let mut waves = Vec::new();
    let mut blocked = Vec::new();
    let mut wave_fired = false;
    if merged.hop >= params.wave_threshold() {
        if params.wave_enabled {
            wave_fired = true;
            for (k, entry) in merged.table.iter().enumerate() {
                if *entry != Some(id) || k == id {
                    continue;
                }
                if neighbors.binary_search(&k).is_ok() {
                    waves.push(WaveMsg {
                        sender: id,
                        recipient: k,
                        table: merged.table.clone(),
                    });
                } else {
                    blocked.push(k);
                }
            }
        }
        merged.hop = 0;
    }

    let destination = neighbors[rng.random_range(0..neighbors.len())];
    merged.sender = id;
    merged.recipient = destination;
    updated.last_forwarded_to = Some(destination);

    ReceiveOutcome::Forwarded {
        token: merged,
        waves,
        node: updated,
        blocked_wave_targets: blocked,
        wave_fired,
    }
}

/// Entry-wise union of two parent tables: entries of `t1` win, blanks
/// are filled from `t2`; the hop counter takes the maximum and `t1`'s
/// identity is retained.
pub fn merge_tokens(t1: &TokenMsg, t2: &TokenMsg) -> Result<TokenMsg, ProtocolError> {
    if t1.table.len() != t2.table.len() {
        return Err(ProtocolError::TableLengthMismatch(
            t1.table.len(),
            t2.table.len(),
        ));
    }
    let mut merged = t1.clone();
    for (slot, other) in merged.table.iter_mut().zip(&t2.table) {
        if slot.is_none() {
            *slot = *other;
        }
    }
    merged.hop = t1.hop.max(t2.hop);
    Ok(merged)
}

/// Result of a timeout firing at one node.
#[derive(Debug, Clone)]
pub enum TimeoutOutcome {
    Forwarded {
        token: TokenMsg,
        node: NodeState,
    },
    /// No neighbors: the fresh token is held at the node.
    Stalled {
        token: TokenMsg,
        node: NodeState,
    },
}

/// Timeout rule: requires `node.timer == 0`. Creates a fresh token
/// (blank table except the creator's own entry, hop 0) and forwards it
/// to a uniformly random neighbor.
pub fn create_token<R: Rng + ?Sized>(
    node: &NodeState,
    params: &ProtocolParams,
    neighbors: &[usize],
    trace_id: TraceId,
    rng: &mut R,
) -> TimeoutOutcome {
    debug_assert_eq!(node.timer, 0, "timeout rule fired with a live timer");
    let id = node.id;
    let mut table: ParentTable = vec![None; params.capacity];
    table[id] = Some(id);
    let mut updated = node.clone();
    updated.timer = params.timeout;

    if neighbors.is_empty() {
        return TimeoutOutcome::Stalled {
            token: TokenMsg {
                sender: id,
                recipient: id,
                table,
                hop: 0,
                trace_id,
            },
            node: updated,
        };
    }
    let destination = neighbors[rng.random_range(0..neighbors.len())];
    updated.last_forwarded_to = Some(destination);
    TimeoutOutcome::Forwarded {
        token: TokenMsg {
            sender: id,
            recipient: destination,
            table,
            hop: 0,
            trace_id,
        },
        node: updated,
    }
}

/// Wave relay: blank this node's own table entry (so the wave cannot
/// loop), forward a copy to every current neighbor listed as a child,
/// and reload the timer. `last_forwarded_to` is deliberately untouched.
///
/// Returns the outgoing messages, the updated node, and the children
/// that were unreachable because the link to them is gone.
pub fn relay_wave(
    node: &NodeState,
    wave: &WaveMsg,
    params: &ProtocolParams,
    neighbors: &[usize],
) -> (Vec<WaveMsg>, NodeState, Vec<usize>) {
    let id = node.id;
    let mut table = wave.table.clone();
    table[id] = None;
    let mut out = Vec::new();
    let mut blocked = Vec::new();
    for (k, entry) in table.iter().enumerate() {
        if *entry != Some(id) || k == id {
            continue;
        }
        if neighbors.binary_search(&k).is_ok() {
            out.push(WaveMsg {
                sender: id,
                recipient: k,
                table: table.clone(),
            });
        } else {
            blocked.push(k);
        }
    }
    let mut updated = node.clone();
    updated.timer = params.timeout;
    (out, updated, blocked)
}

/// Clock tick: decrement the timer. Calling this at timer 0 is an error;
/// the timeout rule must fire instead.
pub fn tick(node: &NodeState) -> Result<NodeState, ProtocolError> {
    if node.timer == 0 {
        return Err(ProtocolError::TickAtZero);
    }
    let mut updated = node.clone();
    updated.timer -= 1;
    Ok(updated)
}

/// Edge set induced by a parent table: `{(k, table[k])}` excluding blank
/// and self entries.
pub fn induced_tree(table: &ParentTable) -> Vec<(usize, usize)> {
    table
        .iter()
        .enumerate()
        .filter_map(|(k, entry)| match entry {
            Some(parent) if *parent != k => Some((k, *parent)),
            _ => None,
        })
        .collect()
}

/// A token is correct when every real-node table entry is either a self
/// entry or an existing edge. Entries at capacity slack indices (at or
/// beyond the node count) refer to no node and are ignored.
pub fn is_correct(token: &TokenMsg, g: &StaticGraph) -> bool {
    let n = g.node_count();
    token
        .table
        .iter()
        .enumerate()
        .take(n)
        .all(|(k, entry)| match entry {
            None => true,
            Some(parent) => *parent == k || g.has_edge(k, *parent),
        })
}

/// Whether the table, restricted to `marked`, forms a spanning tree of
/// the subgraph induced by `marked`: every used edge exists in `g`, no
/// cycles, and all marked nodes are connected.
pub fn is_spanning_tree(table: &ParentTable, marked: &BTreeSet<usize>, g: &StaticGraph) -> bool {
    if marked.is_empty() {
        return true;
    }
    let ids: Vec<usize> = marked.iter().copied().collect();
    let index_of = |node: usize| ids.binary_search(&node).ok();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut edges_used = 0usize;
    for (k, p) in induced_tree(table) {
        let (Some(ki), Some(pi)) = (index_of(k), index_of(p)) else {
            continue; // edge leaves the marked set; restriction drops it
        };
        if !g.has_edge(k, p) {
            return false;
        }
        let (rk, rp) = (find(&mut parent, ki), find(&mut parent, pi));
        if rk == rp {
            return false; // cycle
        }
        parent[rk] = rp;
        edges_used += 1;
    }
    // A tree on |marked| vertices has exactly |marked| - 1 edges, and
    // acyclicity plus that count implies connectivity.
    edges_used == ids.len() - 1
}
