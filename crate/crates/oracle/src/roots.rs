use std::collections::{BTreeSet, HashMap};

use lachesis_core::{EventId, NodeId, OperaChain};

use crate::dag::Dag;

/// Root sets and per-event frames, computed by plain reachability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootSets {
    /// `sets[f - 1]` holds the roots of frame `f`.
    pub sets: Vec<BTreeSet<EventId>>,
    pub frame: HashMap<EventId, u32>,
}

fn quorum(creators: &BTreeSet<NodeId>, n: usize) -> bool {
    3 * creators.len() > 2 * n
}

/// Leaves form frame 1. An event's frame is the highest frame among its
/// parents, or one more when its ancestry holds roots of that frame from
/// more than `2n/3` creators. It is a root when its frame exceeds its
/// self-parent's, unless its ancestry already contains a fork by its own
/// creator.
pub fn naive_roots(chain: &OperaChain, n: usize) -> RootSets {
    let dag = Dag::from_chain(chain);
    let mut frame = vec![0u32; dag.len()];
    let mut is_root = vec![false; dag.len()];
    for v in 0..dag.len() {
        let Some(sp) = dag.self_parent[v] else {
            frame[v] = 1;
            is_root[v] = true;
            continue;
        };
        let ancestors = dag.ancestors(v);
        let top = dag.parents[v].iter().map(|&p| frame[p]).max().unwrap_or(1);
        let mut with_self = ancestors.clone();
        with_self.insert(v);
        let eligible = !dag.has_fork_in(dag.creators[v], &with_self);
        let reached: BTreeSet<NodeId> =
            ancestors.iter().filter(|&&a| is_root[a] && frame[a] == top).map(|&a| dag.creators[a]).collect();
        frame[v] = if eligible && quorum(&reached, n) { top + 1 } else { top };
        is_root[v] = eligible && frame[v] > frame[sp];
    }
    let max = frame.iter().copied().max().unwrap_or(0);
    let mut sets = vec![BTreeSet::new(); max as usize];
    for v in (0..dag.len()).filter(|&v| is_root[v]) {
        sets[frame[v] as usize - 1].insert(dag.ids[v]);
    }
    RootSets { sets, frame: dag.ids.iter().copied().zip(frame).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testgen::{extend, leaf, random_chain};
    use lachesis_core::Consensus;

    #[test]
    fn leaves_only() {
        let mut chain = OperaChain::new(3, 2);
        for c in 0..3 {
            chain.insert(leaf(c)).unwrap();
        }
        let sets = naive_roots(&chain, 3);
        assert_eq!(sets.sets, vec![chain.leaf_set().into_iter().collect::<BTreeSet<_>>()]);
    }

    /// Five creators, three references. b1 references a1 (which saw a0, b0,
    /// c0) and c1 (which saw b0, c0, d0), so it reaches four leaves.
    #[test]
    fn root_selection_example() {
        let mut chain = OperaChain::new(5, 3);
        let leaves: Vec<EventId> = (0..5)
            .map(|c| {
                let l = leaf(c);
                chain.insert(l.clone()).unwrap();
                l.id()
            })
            .collect();
        let a1 = extend(&chain, 0, &[leaves[1], leaves[2]]);
        chain.insert(a1.clone()).unwrap();
        let c1 = extend(&chain, 2, &[leaves[1], leaves[3]]);
        chain.insert(c1.clone()).unwrap();
        let b1 = extend(&chain, 1, &[a1.id(), c1.id()]);
        chain.insert(b1.clone()).unwrap();
        let sets = naive_roots(&chain, 5);
        assert_eq!(sets.sets.len(), 2);
        assert_eq!(sets.sets[1], BTreeSet::from([b1.id()]));
        assert_eq!(sets.frame[&a1.id()], 1);
        assert_eq!(sets.frame[&b1.id()], 2);
    }

    #[test]
    fn matches_flag_table_frames() {
        for (n, seed) in [(4, 1), (5, 2), (7, 3), (10, 4)] {
            let chain = random_chain(n, 3, 250, seed);
            let mut cs = Consensus::new(n, 10);
            for i in 0..chain.len() {
                cs.on_insert(&chain, i).unwrap();
            }
            let sets = naive_roots(&chain, n);
            for (i, ev) in chain.iter().enumerate() {
                assert_eq!(sets.frame[&ev.id()], cs.frame_of(i));
            }
            for (f, set) in sets.sets.iter().enumerate() {
                let ids: BTreeSet<EventId> =
                    cs.roots_of(f as u32 + 1).iter().map(|&r| chain.event_at(r).id()).collect();
                assert_eq!(&ids, set);
            }
        }
    }
}
