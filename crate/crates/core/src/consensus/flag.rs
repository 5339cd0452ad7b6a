use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::id::{EventId, NodeId};

use super::ConsensusError;

/// The roots of one frame that an event reaches, keyed by root id.
///
/// Reachability is inclusive: a root's table lists the root itself.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlagTable {
    frame: u32,
    entries: BTreeMap<EventId, NodeId>,
}

impl FlagTable {
    pub fn new(frame: u32) -> Self {
        FlagTable { frame, entries: BTreeMap::new() }
    }

    /// Table of an event that opens a new frame: nothing below it belongs to
    /// that frame, so it reaches only itself.
    pub fn of_root(frame: u32, root: EventId, creator: NodeId) -> Self {
        let mut t = FlagTable::new(frame);
        t.entries.insert(root, creator);
        t
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn entries(&self) -> &BTreeMap<EventId, NodeId> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, root: &EventId) -> bool {
        self.entries.contains_key(root)
    }

    pub fn insert(&mut self, root: EventId, creator: NodeId) {
        self.entries.insert(root, creator);
    }

    /// Distinct creators among the entries. Equals `len()` unless a forked
    /// creator has two roots in the frame.
    pub fn creator_count(&self) -> usize {
        self.entries.values().collect::<BTreeSet<_>>().len()
    }
}

/// `3 * count > 2 * n`, the strict supermajority test used everywhere.
pub fn supermajority(count: usize, n: usize) -> bool {
    3 * count > 2 * n
}

/// OR-merges the parents' tables, keeping only those of the highest frame
/// among them. A parent that is a root of that frame contributes itself
/// through its own table.
pub fn compute_flag_table(parent_tables: &[Option<&FlagTable>]) -> Result<FlagTable, ConsensusError> {
    let mut tables = Vec::with_capacity(parent_tables.len());
    for t in parent_tables {
        tables.push(t.ok_or(ConsensusError::MissingParentTable)?);
    }
    let top = tables.iter().map(|t| t.frame).max().unwrap_or(0);
    let mut out = FlagTable::new(top);
    for t in tables.iter().filter(|t| t.frame == top) {
        out.entries.extend(t.entries.iter().map(|(k, v)| (*k, *v)));
    }
    Ok(out)
}

/// Leaves are always roots; any other event is a root when its table covers
/// more than two thirds of the participants.
pub fn check_root(is_leaf: bool, table: &FlagTable, n: usize) -> bool {
    is_leaf || supermajority(table.creator_count(), n)
}

/// Frame for a new event given its parents' frames.
pub fn assign_frame(parent_frames: &[u32], is_root: bool) -> u32 {
    let top = parent_frames.iter().copied().max().unwrap_or(0);
    if is_root {
        top + 1
    } else {
        top
    }
}
