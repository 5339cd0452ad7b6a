//! A node's local event DAG (the OPERA chain).
//!
//! Events are stored in insertion order, which is always a topological order
//! because a parent must be present before its child is accepted. Each event
//! carries a bitset of its strict ancestors (by insertion index) so ancestry
//! queries are O(1); the plain parent/child adjacency is kept alongside for
//! traversal-based checks.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use fixedbitset::FixedBitSet;

use crate::event::EventBlock;
use crate::id::{EventId, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DagError {
    #[error("event {0:?} is already stored")]
    DuplicateEvent(EventId),
    #[error("event {event:?} references missing parent {parent:?}")]
    MissingParent { event: EventId, parent: EventId },
    #[error("event {event:?} has malformed references: {reason}")]
    MalformedReferences { event: EventId, reason: String },
    #[error("unknown event {0:?}")]
    UnknownEvent(EventId),
}

/// Per-creator highest known sequence number.
pub type KnownMap = BTreeMap<NodeId, u64>;

#[derive(Debug, Clone)]
pub struct OperaChain {
    n: usize,
    k: usize,
    events: Vec<EventBlock>,
    index: HashMap<EventId, usize>,
    parents: Vec<Vec<usize>>,
    self_parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    ancestors: Vec<FixedBitSet>,
    by_creator: Vec<Vec<usize>>,
    heads: Vec<Option<usize>>,
    forked: BTreeSet<NodeId>,
}

impl OperaChain {
    /// An empty chain for `n` participants where every non-leaf event carries
    /// exactly `k` references.
    pub fn new(n: usize, k: usize) -> Self {
        OperaChain {
            n,
            k,
            events: Vec::new(),
            index: HashMap::new(),
            parents: Vec::new(),
            self_parent: Vec::new(),
            children: Vec::new(),
            ancestors: Vec::new(),
            by_creator: vec![Vec::new(); n],
            heads: vec![None; n],
            forked: BTreeSet::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &EventId) -> Option<&EventBlock> {
        self.index.get(id).map(|&i| &self.events[i])
    }

    pub fn index_of(&self, id: &EventId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn event_at(&self, idx: usize) -> &EventBlock {
        &self.events[idx]
    }

    /// Events in insertion (topological) order.
    pub fn iter(&self) -> impl Iterator<Item = &EventBlock> {
        self.events.iter()
    }

    pub fn parent_indices(&self, idx: usize) -> &[usize] {
        &self.parents[idx]
    }

    pub fn child_indices(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    /// Strict ancestors of the event at `idx`, as insertion indices.
    pub fn ancestor_bits(&self, idx: usize) -> &FixedBitSet {
        &self.ancestors[idx]
    }

    pub fn events_by(&self, creator: NodeId) -> &[usize] {
        self.by_creator.get(creator.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The creator's top event: highest seq, earliest inserted on ties.
    pub fn head(&self, creator: NodeId) -> Option<&EventBlock> {
        self.heads.get(creator.index()).copied().flatten().map(|i| &self.events[i])
    }

    pub fn heads(&self) -> Vec<Option<EventId>> {
        self.heads.iter().map(|h| h.map(|i| self.events[i].id())).collect()
    }

    /// Leaf events present in the chain (the first root set).
    pub fn leaf_set(&self) -> Vec<EventId> {
        self.events.iter().filter(|e| e.is_leaf()).map(|e| e.id()).collect()
    }

    /// Events no other event references.
    pub fn tops(&self) -> Vec<EventId> {
        (0..self.len()).filter(|&i| self.children[i].is_empty()).map(|i| self.events[i].id()).collect()
    }

    pub fn known_seqs(&self) -> KnownMap {
        self.heads.iter().enumerate().filter_map(|(c, h)| h.map(|i| (NodeId(c as u32), self.events[i].seq()))).collect()
    }

    /// Creators for which two events that are not on one self-parent chain
    /// have been seen.
    pub fn forked_creators(&self) -> &BTreeSet<NodeId> {
        &self.forked
    }

    pub fn insert(&mut self, ev: EventBlock) -> Result<usize, DagError> {
        let id = ev.id();
        if self.index.contains_key(&id) {
            return Err(DagError::DuplicateEvent(id));
        }
        let malformed = |reason: String| DagError::MalformedReferences { event: id, reason };
        if ev.creator().index() >= self.n {
            return Err(malformed(format!("creator {} out of range", ev.creator())));
        }
        match ev.self_parent() {
            None => {
                if !ev.other_parents().is_empty() || ev.seq() != 0 {
                    return Err(malformed("leaf must have seq 0 and no references".into()));
                }
            }
            Some(_) => {
                if ev.other_parents().len() + 1 != self.k {
                    return Err(malformed(format!(
                        "expected {} references, found {}",
                        self.k,
                        ev.other_parents().len() + 1
                    )));
                }
                if ev.other_parents().windows(2).any(|w| w[0] == w[1]) {
                    return Err(malformed("duplicate other-parent".into()));
                }
            }
        }
        let mut parent_idx = Vec::with_capacity(self.k);
        for p in ev.parents() {
            match self.index.get(&p) {
                Some(&i) => parent_idx.push(i),
                None => return Err(DagError::MissingParent { event: id, parent: p }),
            }
        }
        let mut peer_creators = BTreeSet::new();
        for (pos, &pi) in parent_idx.iter().enumerate() {
            let p = &self.events[pi];
            if p.lamport_ts() >= ev.lamport_ts() {
                return Err(malformed(format!("lamport {} not above parent's {}", ev.lamport_ts(), p.lamport_ts())));
            }
            if pos == 0 && ev.self_parent().is_some() {
                if p.creator() != ev.creator() || p.seq() + 1 != ev.seq() {
                    return Err(malformed("self-parent must be the creator's previous event".into()));
                }
            } else if p.creator() == ev.creator() || !peer_creators.insert(p.creator()) {
                return Err(malformed("other-parents must be tops of distinct peers".into()));
            }
        }

        let idx = self.events.len();
        let mut anc = FixedBitSet::with_capacity(idx);
        for &pi in &parent_idx {
            anc.insert(pi);
            anc.union_with(&self.ancestors[pi]);
            self.children[pi].push(idx);
        }
        let creator = ev.creator().index();
        // A creator's events form one self-chain iff each new event's seq equals
        // the number of that creator's events already stored.
        if self.by_creator[creator].len() as u64 != ev.seq() {
            self.forked.insert(ev.creator());
        }
        self.by_creator[creator].push(idx);
        match self.heads[creator] {
            Some(h) if self.events[h].seq() >= ev.seq() => {}
            _ => self.heads[creator] = Some(idx),
        }
        self.self_parent.push(ev.self_parent().map(|_| parent_idx[0]));
        self.parents.push(parent_idx);
        self.children.push(Vec::new());
        self.ancestors.push(anc);
        self.index.insert(id, idx);
        self.events.push(ev);
        Ok(idx)
    }

    fn idx(&self, id: &EventId) -> Result<usize, DagError> {
        self.index_of(id).ok_or(DagError::UnknownEvent(*id))
    }

    /// Strict happened-before: `x` is a (self-)ancestor of `y`.
    pub fn happened_before(&self, x: &EventId, y: &EventId) -> Result<bool, DagError> {
        let (xi, yi) = (self.idx(x)?, self.idx(y)?);
        Ok(self.ancestors[yi].contains(xi))
    }

    pub fn happened_before_idx(&self, x: usize, y: usize) -> bool {
        self.ancestors[y].contains(x)
    }

    pub fn concurrent(&self, x: &EventId, y: &EventId) -> Result<bool, DagError> {
        Ok(x != y && !self.happened_before(x, y)? && !self.happened_before(y, x)?)
    }

    /// `x` lies on `y`'s self-parent chain (strictly below it).
    pub fn is_self_ancestor_idx(&self, x: usize, y: usize) -> bool {
        let (ex, ey) = (&self.events[x], &self.events[y]);
        if ex.creator() != ey.creator() || ex.seq() >= ey.seq() {
            return false;
        }
        let mut cur = y;
        while let Some(sp) = self.self_parent[cur] {
            if sp == x {
                return true;
            }
            if self.events[sp].seq() <= ex.seq() {
                return false;
            }
            cur = sp;
        }
        false
    }

    pub fn is_self_ancestor(&self, x: &EventId, y: &EventId) -> Result<bool, DagError> {
        Ok(self.is_self_ancestor_idx(self.idx(x)?, self.idx(y)?))
    }

    fn is_fork_idx(&self, a: usize, b: usize) -> bool {
        a != b
            && self.events[a].creator() == self.events[b].creator()
            && !self.is_self_ancestor_idx(a, b)
            && !self.is_self_ancestor_idx(b, a)
    }

    /// All fork pairs of `creator`, each ordered `(smaller id, larger id)`.
    pub fn detect_forks(&self, creator: NodeId) -> Vec<(EventId, EventId)> {
        if !self.forked.contains(&creator) {
            return Vec::new();
        }
        let evs = self.events_by(creator);
        let mut out = Vec::new();
        for (i, &a) in evs.iter().enumerate() {
            for &b in &evs[i + 1..] {
                if self.is_fork_idx(a, b) {
                    let (x, y) = (self.events[a].id(), self.events[b].id());
                    out.push(if x < y { (x, y) } else { (y, x) });
                }
            }
        }
        out.sort();
        out
    }

    /// Whether the subgraph below `view` (inclusive) holds a fork of `creator`.
    pub fn fork_visible(&self, creator: NodeId, view: usize) -> bool {
        if !self.forked.contains(&creator) {
            return false;
        }
        let anc = &self.ancestors[view];
        let mut count = 0u64;
        let mut max_seq = None;
        for &e in self.events_by(creator) {
            if e == view || anc.contains(e) {
                count += 1;
                max_seq = max_seq.max(Some(self.events[e].seq()));
            }
        }
        max_seq.is_some_and(|m| count > m + 1)
    }

    /// Whether the subgraph below `view` (inclusive) holds an event forming a
    /// fork with `target`.
    pub fn forks_with_in_view(&self, target: usize, view: usize) -> bool {
        let creator = self.events[target].creator();
        if !self.forked.contains(&creator) {
            return false;
        }
        let anc = &self.ancestors[view];
        self.events_by(creator).iter().any(|&e| (e == view || anc.contains(e)) && self.is_fork_idx(e, target))
    }

    /// The induced subgraph of `v` and all its ancestors.
    pub fn subgraph(&self, v: &EventId) -> Result<OperaChain, DagError> {
        let vi = self.idx(v)?;
        let mut sub = OperaChain::new(self.n, self.k);
        for i in self.ancestors[vi].ones().chain(std::iter::once(vi)) {
            sub.insert(self.events[i].clone())?;
        }
        Ok(sub)
    }

    /// Ancestors of `v` (exclusive) found by walking parent edges.
    pub fn ancestors_by_walk(&self, v: &EventId) -> Result<BTreeSet<EventId>, DagError> {
        let vi = self.idx(v)?;
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<usize> = self.parents[vi].iter().copied().collect();
        while let Some(i) = queue.pop_front() {
            if seen.insert(self.events[i].id()) {
                queue.extend(self.parents[i].iter().copied());
            }
        }
        Ok(seen)
    }
}
