//! Cross-node agreement checks.
//!
//! Every honest node's view is compared against the first view that held the
//! same event, so any disagreement between two nodes surfaces as a
//! violation naming both. The [`Auditor`] does this incrementally as events
//! arrive; [`audit_views`] does it from scratch on captured snapshots.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use lachesis_core::consensus::{MainChainEntry, Update};
use lachesis_core::node::Node;
use lachesis_core::{EventId, NodeId, RootStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Same event id, different parents or ancestor count.
    ChainMismatch,
    RootMismatch,
    FlagTableMismatch,
    /// Accepted as Clotho or Atropos on one node, rejected on another.
    StatusConflict,
    TimeConflict,
    OrderDivergence,
    MainChainDivergence,
    ConsistentCut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub nodes: (NodeId, NodeId),
    pub event: Option<EventId>,
    pub detail: String,
}

/// What one node believes about one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFacts {
    pub id: EventId,
    pub parents: Vec<EventId>,
    pub ancestors: usize,
    pub frame: u32,
    pub root: bool,
    pub table: Vec<EventId>,
    pub status: Option<RootStatus>,
    pub time: Option<u64>,
}

impl EventFacts {
    pub fn capture(node: &Node, idx: usize) -> Self {
        let chain = node.chain();
        let cs = node.consensus();
        let ev = chain.event_at(idx);
        EventFacts {
            id: ev.id(),
            parents: ev.parents().collect(),
            ancestors: chain.ancestor_bits(idx).count_ones(..),
            frame: cs.frame_of(idx),
            root: cs.is_root(idx),
            table: cs.flag_table(idx).entries().keys().copied().collect(),
            status: cs.root_status(idx),
            time: cs.consensus_time(idx),
        }
    }
}

/// A node's state at one instant, in its insertion order.
#[derive(Debug, Clone)]
pub struct NodeView {
    pub node: NodeId,
    pub events: Vec<EventFacts>,
    pub order: Vec<EventId>,
    pub main_chain: Vec<MainChainEntry>,
}

impl NodeView {
    pub fn capture(node: &Node) -> Self {
        NodeView {
            node: node.id(),
            events: (0..node.chain().len()).map(|i| EventFacts::capture(node, i)).collect(),
            order: node.consensus().order().iter().map(|o| o.event).collect(),
            main_chain: node.consensus().main_chain().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Accepted,
    Rejected,
}

/// First-seen facts per event plus the longest order and Main-chain seen.
#[derive(Debug, Default)]
struct Registry {
    facts: HashMap<EventId, (NodeId, EventFacts)>,
    verdicts: HashMap<EventId, (NodeId, Verdict)>,
    times: HashMap<EventId, (NodeId, u64)>,
    order: Vec<(NodeId, EventId)>,
    main_chain: Vec<(NodeId, MainChainEntry)>,
    violations: Vec<Violation>,
}

impl Registry {
    fn flag(&mut self, kind: ViolationKind, nodes: (NodeId, NodeId), event: Option<EventId>, detail: String) {
        self.violations.push(Violation { kind, nodes, event, detail });
    }

    fn check_facts(&mut self, node: NodeId, facts: &EventFacts) {
        let Some((first, seen)) = self.facts.get(&facts.id) else {
            self.facts.insert(facts.id, (node, facts.clone()));
            self.check_status(node, facts.id, facts.status, facts.time);
            return;
        };
        let (pair, id) = ((*first, node), Some(facts.id));
        let mut found = Vec::new();
        if seen.parents != facts.parents || seen.ancestors != facts.ancestors {
            found.push((ViolationKind::ChainMismatch, format!("{} vs {} ancestors", seen.ancestors, facts.ancestors)));
        }
        if seen.frame != facts.frame || seen.root != facts.root {
            found.push((
                ViolationKind::RootMismatch,
                format!("frame {} root {} vs frame {} root {}", seen.frame, seen.root, facts.frame, facts.root),
            ));
        }
        if seen.table != facts.table {
            found.push((
                ViolationKind::FlagTableMismatch,
                format!("{} vs {} entries", seen.table.len(), facts.table.len()),
            ));
        }
        for (kind, detail) in found {
            self.flag(kind, pair, id, detail);
        }
        self.check_status(node, facts.id, facts.status, facts.time);
    }

    fn check_status(&mut self, node: NodeId, id: EventId, status: Option<RootStatus>, time: Option<u64>) {
        let verdict = match status {
            Some(RootStatus::Clotho | RootStatus::Atropos) => Some(Verdict::Accepted),
            Some(RootStatus::Rejected) => Some(Verdict::Rejected),
            _ => None,
        };
        if let Some(v) = verdict {
            match self.verdicts.get(&id) {
                Some(&(other, seen)) if seen != v => {
                    self.flag(ViolationKind::StatusConflict, (other, node), Some(id), format!("{seen:?} vs {v:?}"))
                }
                Some(_) => {}
                None => {
                    self.verdicts.insert(id, (node, v));
                }
            }
        }
        if let Some(t) = time {
            match self.times.get(&id) {
                Some(&(other, seen)) if seen != t => {
                    self.flag(ViolationKind::TimeConflict, (other, node), Some(id), format!("{seen} vs {t}"))
                }
                Some(_) => {}
                None => {
                    self.times.insert(id, (node, t));
                }
            }
        }
    }

    /// `entries` start at position `start` of the node's order.
    fn check_order(&mut self, node: NodeId, start: usize, entries: impl IntoIterator<Item = EventId>) {
        for (i, id) in (start..).zip(entries) {
            match self.order.get(i) {
                Some(&(other, seen)) if seen != id => {
                    self.flag(ViolationKind::OrderDivergence, (other, node), Some(id), format!("position {i}"));
                    return;
                }
                Some(_) => {}
                None => self.order.push((node, id)),
            }
        }
    }

    fn check_main_chain(&mut self, node: NodeId, start: usize, entries: &[MainChainEntry]) {
        for (i, e) in (start..).zip(entries) {
            match self.main_chain.get(i) {
                Some(&(other, seen)) if seen != *e => {
                    self.flag(ViolationKind::MainChainDivergence, (other, node), Some(e.atropos), format!("entry {i}"));
                    return;
                }
                Some(_) => {}
                None => self.main_chain.push((node, *e)),
            }
        }
    }
}

/// Audits captured views from scratch: agreement on every shared event,
/// order and Main-chain prefixes, and closure of each view under
/// happened-before.
pub fn audit_views(views: &[NodeView]) -> Vec<Violation> {
    let mut reg = Registry::default();
    for view in views {
        let mut local = BTreeSet::new();
        for facts in &view.events {
            if let Some(p) = facts.parents.iter().find(|p| !local.contains(*p)) {
                reg.flag(
                    ViolationKind::ConsistentCut,
                    (view.node, view.node),
                    Some(facts.id),
                    format!("parent {} is not in the cut", p.short()),
                );
            }
            local.insert(facts.id);
            reg.check_facts(view.node, facts);
        }
        reg.check_order(view.node, 0, view.order.iter().copied());
        reg.check_main_chain(view.node, 0, &view.main_chain);
    }
    reg.violations
}

/// Incremental form of [`audit_views`], fed after every change to a node.
#[derive(Debug, Default)]
pub struct Auditor {
    reg: Registry,
    cursors: HashMap<NodeId, (usize, usize, usize)>,
}

impl Auditor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks whatever `node` gained since the last call.
    pub fn observe(&mut self, node: &Node) {
        let id = node.id();
        let (events, order, main) = self.cursors.get(&id).copied().unwrap_or_default();
        let chain = node.chain();
        for idx in events..chain.len() {
            if let Some(p) = chain.parent_indices(idx).iter().find(|&&p| p >= idx) {
                self.reg.flag(
                    ViolationKind::ConsistentCut,
                    (id, id),
                    Some(chain.event_at(idx).id()),
                    format!("parent at {p} stored after its child"),
                );
            }
            let facts = EventFacts::capture(node, idx);
            self.reg.check_facts(id, &facts);
        }
        let cs = node.consensus();
        self.reg.check_order(id, order, cs.order()[order..].iter().map(|o| o.event));
        self.reg.check_main_chain(id, main, &cs.main_chain()[main..]);
        self.cursors.insert(id, (chain.len(), cs.order().len(), cs.main_chain().len()));
    }

    /// Records status changes reported by one insertion.
    pub fn record(&mut self, node: NodeId, update: &Update) {
        for id in &update.new_clotho {
            self.reg.check_status(node, *id, Some(RootStatus::Clotho), None);
        }
        for (id, t) in &update.new_atropos {
            self.reg.check_status(node, *id, Some(RootStatus::Atropos), Some(*t));
        }
        for id in &update.rejected {
            self.reg.check_status(node, *id, Some(RootStatus::Rejected), None);
        }
    }

    pub fn violations(&self) -> &[Violation] {
        &self.reg.violations
    }

    pub fn into_violations(self) -> Vec<Violation> {
        self.reg.violations
    }
}
