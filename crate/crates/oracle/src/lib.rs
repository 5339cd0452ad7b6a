//! Slow, obviously-correct reference computations over an event DAG.
//!
//! Nothing here touches the ancestor bitsets, flag tables or frame records
//! kept by `lachesis-core`; every answer is recomputed from the parent
//! references alone so the two can be compared.

mod check;
mod dag;
mod dom;
mod roots;
#[cfg(test)]
mod testgen;
mod two_thirds;

pub use check::{cross_check, CheckFailure, CheckReport};
pub use dag::{bfs_ancestors, Dag};
pub use dom::{dominator_tree, DomTree, FlowNode};
pub use roots::{naive_roots, RootSets};
pub use two_thirds::two_thirds_dom_sets;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("unknown event {0}")]
    UnknownEvent(lachesis_core::EventId),
}
