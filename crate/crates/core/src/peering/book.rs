use serde::{Deserialize, Serialize};

use crate::chain::KnownMap;
use crate::event::EventBlock;
use crate::id::{EventId, NodeId};

/// Per-creator bookkeeping a node keeps about everyone else: how many events
/// each creator has made, how many edges point at each creator's top event,
/// and the highest seq seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeBook {
    height: Vec<u64>,
    in_degree: Vec<u64>,
    tops: Vec<Option<(u64, EventId)>>,
}

impl NodeBook {
    pub fn new(n: usize) -> Self {
        NodeBook { height: vec![0; n], in_degree: vec![0; n], tops: vec![None; n] }
    }

    pub fn n(&self) -> usize {
        self.height.len()
    }

    /// Records a newly inserted event.
    ///
    /// Edges into a creator's current top count towards its in-degree; the
    /// count restarts when the creator produces a new top. Increments are
    /// collected before the reset, so the self-parent edge of a new top is
    /// credited to it.
    pub fn observe(&mut self, ev: &EventBlock, creator_of: impl Fn(&EventId) -> Option<NodeId>) {
        let mut inc = vec![0u64; self.n()];
        for p in ev.parents() {
            if let Some(c) = creator_of(&p) {
                if self.tops[c.index()].is_some_and(|(_, top)| top == p) {
                    inc[c.index()] += 1;
                }
            }
        }
        let c = ev.creator().index();
        if self.tops[c].is_none_or(|(seq, _)| ev.seq() > seq) {
            self.tops[c] = Some((ev.seq(), ev.id()));
            self.height[c] = ev.seq() + 1;
            self.in_degree[c] = 0;
        }
        for (d, i) in self.in_degree.iter_mut().zip(inc) {
            *d += i;
        }
    }

    pub fn height(&self, node: NodeId) -> u64 {
        self.height[node.index()]
    }

    pub fn in_degree(&self, node: NodeId) -> u64 {
        self.in_degree[node.index()]
    }

    pub fn heights(&self) -> &[u64] {
        &self.height
    }

    pub fn in_degrees(&self) -> &[u64] {
        &self.in_degree
    }

    pub fn top(&self, node: NodeId) -> Option<EventId> {
        self.tops[node.index()].map(|(_, id)| id)
    }

    /// Highest seq per creator; creators with nothing known are absent.
    pub fn known(&self) -> KnownMap {
        self.tops.iter().enumerate().filter_map(|(c, t)| t.map(|(seq, _)| (NodeId(c as u32), seq))).collect()
    }
}
