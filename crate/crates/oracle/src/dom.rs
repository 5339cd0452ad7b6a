use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use lachesis_core::{EventId, OperaChain};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dag::Dag;

/// A vertex of the flow graph: the pseudo top or an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowNode {
    Top,
    Event(EventId),
}

/// Dominators over the chain with a pseudo top attached above every event
/// that nothing references. Flow runs from the top down the reference edges,
/// so `d` dominates `x` when every path from the top to `x` passes `d`.
#[derive(Debug, Clone)]
pub struct DomTree {
    dag: Dag,
    /// `doms[x]`: event dominators of `x`, including `x`. The top dominates
    /// everything and is left implicit.
    doms: Vec<FixedBitSet>,
    idom: Vec<Option<usize>>,
}

pub fn dominator_tree(chain: &OperaChain) -> DomTree {
    DomTree::of_dag(Dag::from_chain(chain))
}

impl DomTree {
    pub fn of_dag(dag: Dag) -> Self {
        let len = dag.len();
        let mut full = FixedBitSet::with_capacity(len);
        full.insert_range(..);
        let mut doms = vec![full; len];
        let mut changed = true;
        while changed {
            changed = false;
            // children come later in insertion order, so walking backwards
            // settles in one pass; the loop just confirms the fixpoint
            for x in (0..len).rev() {
                let mut next = FixedBitSet::with_capacity(len);
                if !dag.children[x].is_empty() {
                    next.insert_range(..);
                    for &c in &dag.children[x] {
                        next.intersect_with(&doms[c]);
                    }
                }
                next.insert(x);
                if next != doms[x] {
                    doms[x] = next;
                    changed = true;
                }
            }
        }
        let idom = (0..len)
            .map(|x| {
                let strict = doms[x].ones().filter(|&d| d != x);
                // the immediate dominator is the strict dominator with the
                // most dominators of its own
                strict.max_by_key(|&d| doms[d].count_ones(..))
            })
            .collect();
        DomTree { dag, doms, idom }
    }

    pub fn len(&self) -> usize {
        self.dag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dag.is_empty()
    }

    fn index(&self, id: &EventId) -> usize {
        self.dag.index_of(id).unwrap_or_else(|| panic!("unknown event {id}"))
    }

    fn node(&self, i: Option<usize>) -> FlowNode {
        i.map_or(FlowNode::Top, |i| FlowNode::Event(self.dag.ids[i]))
    }

    pub fn idom(&self, x: &EventId) -> FlowNode {
        self.node(self.idom[self.index(x)])
    }

    pub fn dominates(&self, d: &EventId, x: &EventId) -> bool {
        self.doms[self.index(x)].contains(self.index(d))
    }

    pub fn strictly_dominates(&self, d: &EventId, x: &EventId) -> bool {
        d != x && self.dominates(d, x)
    }

    pub fn dominators(&self, x: &EventId) -> BTreeSet<EventId> {
        self.doms[self.index(x)].ones().map(|d| self.dag.ids[d]).collect()
    }

    /// Flow predecessors of `x`: the events referencing it, or the top.
    fn preds(&self, x: usize) -> Vec<Option<usize>> {
        if self.dag.children[x].is_empty() {
            vec![None]
        } else {
            self.dag.children[x].iter().map(|&c| Some(c)).collect()
        }
    }

    /// `d` dominates an immediate predecessor of `x` without strictly
    /// dominating `x`.
    pub fn domfront(&self, d: &EventId, x: &EventId) -> bool {
        let (di, xi) = (self.index(d), self.index(x));
        let dominates_pred = self.preds(xi).into_iter().any(|p| p.is_some_and(|p| self.doms[p].contains(di)));
        dominates_pred && !self.strictly_dominates(d, x)
    }

    pub fn dominance_frontier(&self, d: &EventId) -> BTreeSet<EventId> {
        self.dag.ids.iter().filter(|x| self.domfront(d, x)).copied().collect()
    }

    /// Walks `paths` random top-to-`x` paths for every event and returns the
    /// first event whose path misses one of its dominators.
    pub fn sample_paths<R: Rng + ?Sized>(&self, paths: usize, rng: &mut R) -> Option<EventId> {
        for x in 0..self.len() {
            for _ in 0..paths {
                let mut on_path = FixedBitSet::with_capacity(self.len());
                let mut cur = Some(x);
                while let Some(c) = cur {
                    on_path.insert(c);
                    cur = *self.preds(c).choose(rng).expect("every event has a predecessor");
                }
                if !self.doms[x].is_subset(&on_path) {
                    return Some(self.dag.ids[x]);
                }
            }
        }
        None
    }
}
