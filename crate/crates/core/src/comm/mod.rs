//! Simulated ranks with an in-process message bus, cached and aggregated
//! halo exchange, distribution-to-distribution copies and global reductions.

mod exchange;
mod plan;
mod runtime;

pub use exchange::{fill_boundary, fill_boundary_comps, gather_valid, global_reduce, index_mapped_copy, parallel_copy, CopySpec};
pub use plan::{build_fill_boundary, build_parallel_copy, CommPlan, OpKind, PlanCache, PlanKey, Segment};
pub use runtime::{Comm, MessageStats, PairStats, RankRuntime};
