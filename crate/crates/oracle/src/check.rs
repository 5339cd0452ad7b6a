use std::collections::BTreeSet;

use lachesis_core::consensus::OrderedEvent;
use lachesis_core::{Consensus, ConsensusError, DagError, EventBlock, EventId, NodeId, OperaChain};

use crate::dag::Dag;
use crate::roots::naive_roots;
use crate::two_thirds::two_thirds_dom_sets;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckFailure {
    #[error("chain rebuild: {0}")]
    Chain(#[from] DagError),
    #[error("consensus: {0}")]
    Consensus(#[from] ConsensusError),
    #[error("reachability: ancestors of {0} differ from breadth-first search")]
    Reachability(EventId),
    #[error("roots: frame or root flag of {0} differs from the reachability oracle")]
    Roots(EventId),
    #[error("dom sets: D_{level} differs from root set R_{}", level + 1)]
    DomSets { level: usize },
    #[error("forks: pairwise scan of creator {0} disagrees with the chain")]
    Forks(NodeId),
    #[error("order: replay in a different insertion order gives a different order")]
    Order,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub events: usize,
    pub frames: u32,
    pub forks: Vec<(EventId, EventId)>,
    pub ordered: usize,
    /// Whether the dom-set comparison ran; it is skipped on forked chains.
    pub dom_sets_checked: bool,
}

fn build(events: &[EventBlock], n: usize, k: usize, h: u32) -> Result<(OperaChain, Consensus), CheckFailure> {
    let mut chain = OperaChain::new(n, k);
    let mut cs = Consensus::new(n, h);
    for ev in events {
        let idx = chain.insert(ev.clone())?;
        cs.on_insert(&chain, idx)?;
    }
    Ok((chain, cs))
}

fn order_ids(cs: &Consensus) -> Vec<(EventId, u64)> {
    cs.order().iter().map(|o: &OrderedEvent| (o.event, o.atropos_time)).collect()
}

/// Rebuilds a chain from `events` (in log order) and checks it against every
/// oracle. Returns the first failing check.
pub fn cross_check(events: &[EventBlock], n: usize, k: usize, h: u32) -> Result<CheckReport, CheckFailure> {
    let (chain, cs) = build(events, n, k, h)?;
    let dag = Dag::from_chain(&chain);

    for v in 0..dag.len() {
        let walked: BTreeSet<usize> = dag.ancestors(v);
        let indexed: BTreeSet<usize> = chain.ancestor_bits(v).ones().collect();
        if walked != indexed {
            return Err(CheckFailure::Reachability(dag.ids[v]));
        }
    }

    let naive = naive_roots(&chain, n);
    for i in 0..chain.len() {
        let id = chain.event_at(i).id();
        let frame = naive.frame[&id];
        let root = naive.sets.get(frame as usize - 1).is_some_and(|s| s.contains(&id));
        if frame != cs.frame_of(i) || root != cs.is_root(i) {
            return Err(CheckFailure::Roots(id));
        }
    }

    let mut forks = Vec::new();
    for c in 0..n {
        let creator = NodeId(c as u32);
        let mine: Vec<usize> = (0..dag.len()).filter(|&x| dag.creators[x] == creator).collect();
        let mut pairs = Vec::new();
        for (i, &x) in mine.iter().enumerate() {
            for &y in &mine[i + 1..] {
                if !dag.self_ancestor_or_equal(x, y) && !dag.self_ancestor_or_equal(y, x) {
                    let (a, b) = (dag.ids[x], dag.ids[y]);
                    pairs.push(if a < b { (a, b) } else { (b, a) });
                }
            }
        }
        pairs.sort();
        if pairs != chain.detect_forks(creator) {
            return Err(CheckFailure::Forks(creator));
        }
        forks.extend(pairs);
    }

    let dom_sets_checked = forks.is_empty();
    if dom_sets_checked {
        let dom = two_thirds_dom_sets(&chain, n);
        for level in 0..dom.len().max(naive.sets.len()) {
            if dom.get(level) != naive.sets.get(level) {
                return Err(CheckFailure::DomSets { level });
            }
        }
    }

    // Lamport order is a valid insertion order and differs from log order
    // in general
    let mut reordered = events.to_vec();
    reordered.sort_by_key(|e| (e.lamport_ts(), e.id()));
    let (_, replay) = build(&reordered, n, k, h)?;
    if order_ids(&replay) != order_ids(&cs) || replay.main_chain() != cs.main_chain() {
        return Err(CheckFailure::Order);
    }

    Ok(CheckReport { events: chain.len(), frames: cs.max_frame(), forks, ordered: cs.order().len(), dom_sets_checked })
}
