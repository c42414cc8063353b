//! Simulator and numerical analysis toolkit for self-stabilizing
//! random-walk token circulation.
//!
//! A single `Token` message performs a uniform random walk over an
//! undirected graph. The token carries a parent table recording, for
//! every node it visited, the neighbor that node last forwarded it to;
//! the table induces a tree rooted at the current holder. Periodically
//! the holder broadcasts a timer-refresh wave down
//! that tree so that visited nodes never time out. Nodes that *do* time
//! out create a replacement token; duplicate tokens merge when they meet.
//! Together these mechanisms recover from arbitrary transient faults:
//! lost tokens, duplicated tokens, corrupted tables.
//!
//! The crate has four layers:
//!
//! * [`graph`] — static graphs plus Markov-evolving graph processes and
//!   their stationary structure (averaged walk matrices).
//! * [`protocol`] — the pure message-level state machine: token receipt,
//!   timeout creation, wave relay, clock ticks, token merging, and the
//!   correctness predicates over parent tables.
//! * [`sim`] — deterministic round-based execution, fault injection,
//!   per-round stability classification, and Monte Carlo walk sampling.
//! * [`analysis`] — exact first-passage numerics: hitting times and
//!   variances, return-time statistics, Chebyshev waiting bounds,
//!   lost-token probability bounds, and timeout recommendations.
//!
//! [`harness`] wires these into scenario files, traces, summaries, and
//! the `tokenwalk` command-line driver. Every run is reproducible from
//! its scenario seed; see the `examples/` directory for end-to-end tours.

pub mod analysis;
pub mod graph;
pub mod harness;
pub mod protocol;
pub mod sim;
