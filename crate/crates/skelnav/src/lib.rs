//! Grid-world object navigation with a persistent skeleton-graph memory.
//!
//! The pipeline: a deterministic simulator feeds observations into occupancy,
//! value, and object maps; known free space is thinned to a topological
//! skeleton whose endpoints and junctions anchor object memory; pluggable
//! providers score per-node target beliefs; an expected-cost visit planner
//! (greedy init plus 2-opt) orders candidate destinations; and a four-stage
//! policy drives the agent through sequential multimodal subtasks with full
//! metric reporting.

pub mod affinity;
pub mod belief;
pub mod grid;
pub mod harness;
pub mod mapping;
pub mod planner;
pub mod policy;
pub mod render;
pub mod scenario;
pub mod sim;
pub mod skeleton;
pub mod ssmg;

#[cfg(test)]
pub(crate) mod testutil;
