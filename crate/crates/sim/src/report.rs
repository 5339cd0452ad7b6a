use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use lachesis_core::consensus::MainChainEntry;
use lachesis_core::{EventId, NodeId};

use crate::audit::Violation;
use crate::config::SimConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: NodeId,
    pub honest: bool,
    pub events: usize,
    pub pending: usize,
    pub frames: u32,
    pub closed_frames: u32,
    pub roots: usize,
    pub clothos: usize,
    pub atropos: usize,
    pub rejected: usize,
    pub finalized: usize,
    /// SHA-256 over the ordered event ids.
    pub order_digest: String,
}

/// One fork: two children of the same self-parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkRecord {
    pub creator: NodeId,
    pub pair: (EventId, EventId),
    /// The higher frame of the two branches.
    pub member_frame: u32,
    /// Lowest frame of a root whose subgraph holds both branches.
    pub first_root_frame: Option<u32>,
    /// Honest nodes holding both branches at the end of the run.
    pub holders: usize,
}

/// A node first storing both events of a sibling fork, at local frame
/// `frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub node: NodeId,
    pub creator: NodeId,
    pub pair: (EventId, EventId),
    pub frame: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Liveness {
    /// Largest gap between an event's frame and the local frame at which it
    /// was finalized, over all honest nodes.
    pub max_lag: u32,
    /// Events more than three frames below their node's top frame that are
    /// still unordered, summed over honest nodes.
    pub unfinalized_below_cutoff: usize,
    /// Deepest such event, as frames below the top frame.
    pub deepest_unfinalized: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub round: u64,
    pub frames: u32,
    pub roots: usize,
    pub clothos: usize,
    pub atropos: usize,
    pub finalized: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub hash_fn: String,
    pub config: SimConfig,
    pub ticks: u64,
    pub events_created: usize,
    pub nodes: Vec<NodeReport>,
    pub orders: BTreeMap<NodeId, Vec<EventId>>,
    pub main_chains: BTreeMap<NodeId, Vec<MainChainEntry>>,
    pub forks: Vec<ForkRecord>,
    pub detections: Vec<Detection>,
    /// Fork members an honest node marked Clotho or Atropos.
    pub fork_clothos: Vec<(NodeId, EventId)>,
    pub violations: Vec<Violation>,
    pub liveness: Liveness,
    pub stats: Vec<StatsRow>,
    pub trace_hash: String,
}

impl SimReport {
    /// Whether every honest node finalized the same order and Main-chain.
    pub fn honest_agree(&self) -> bool {
        let honest: Vec<NodeId> = self.nodes.iter().filter(|r| r.honest).map(|r| r.node).collect();
        honest
            .windows(2)
            .all(|w| self.orders[&w[0]] == self.orders[&w[1]] && self.main_chains[&w[0]] == self.main_chains[&w[1]])
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.stats {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}
