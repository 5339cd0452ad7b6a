use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::id::EventId;

/// Sort key of the final order: consensus time of the owning Atropos, then
/// the event's Lamport time, then its digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OrderKey {
    pub atropos_time: u64,
    pub lamport_ts: u64,
    pub id: EventId,
}

impl Ord for OrderKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.atropos_time, self.lamport_ts, self.id).cmp(&(other.atropos_time, other.lamport_ts, other.id))
    }
}

impl PartialOrd for OrderKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainChainEntry {
    pub frame: u32,
    pub atropos: EventId,
    pub consensus_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedEvent {
    pub position: u64,
    pub event: EventId,
    pub atropos_time: u64,
    pub lamport_ts: u64,
}
