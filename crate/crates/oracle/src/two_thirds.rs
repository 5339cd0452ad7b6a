use std::collections::BTreeSet;

use lachesis_core::{EventId, NodeId, OperaChain};

use crate::dag::Dag;
use crate::dom::DomTree;

/// The 2/3-dom sets `D_0, D_1, ...` of a chain. `D_0` is the leaf set.
///
/// Each event gets a level: the highest level among its parents, or one more
/// when, inside its own subgraph, it dominates members of that level's set
/// from more than `2n/3` creators. An event joins `D_level` when its level
/// exceeds its self-parent's.
pub fn two_thirds_dom_sets(chain: &OperaChain, n: usize) -> Vec<BTreeSet<EventId>> {
    let dag = Dag::from_chain(chain);
    let mut level = vec![0usize; dag.len()];
    let mut member = vec![false; dag.len()];
    for v in 0..dag.len() {
        let Some(sp) = dag.self_parent[v] else {
            member[v] = true;
            continue;
        };
        let top = dag.parents[v].iter().map(|&p| level[p]).max().unwrap_or(0);
        let mut view = dag.ancestors(v);
        view.insert(v);
        let tree = DomTree::of_dag(dag.induced(&view));
        let me = dag.ids[v];
        let dominated: BTreeSet<NodeId> = view
            .iter()
            .filter(|&&x| member[x] && level[x] == top && tree.dominates(&me, &dag.ids[x]))
            .map(|&x| dag.creators[x])
            .collect();
        level[v] = if 3 * dominated.len() > 2 * n { top + 1 } else { top };
        member[v] = level[v] > level[sp];
    }
    let max = level.iter().copied().max().unwrap_or(0);
    let mut sets = vec![BTreeSet::new(); if dag.is_empty() { 0 } else { max + 1 }];
    for v in (0..dag.len()).filter(|&v| member[v]) {
        sets[level[v]].insert(dag.ids[v]);
    }
    sets
}
