pub mod chain;
pub mod consensus;
pub mod event;
pub mod export;
pub mod id;
pub mod lamport;
pub mod node;
pub mod peering;
#[cfg(test)]
mod testutil;

pub use chain::{DagError, KnownMap, OperaChain};
pub use consensus::{Consensus, ConsensusError, FlagTable, RootStatus};
pub use event::EventBlock;
pub use id::{EventId, NodeId};
pub use lamport::assign_lamport;
