use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::event::EventBlock;
use crate::testutil::{extend, leaf, random_events};

fn feed(n: usize, k: usize, events: &[EventBlock]) -> (OperaChain, Consensus) {
    let mut chain = OperaChain::new(n, k);
    let mut cs = Consensus::new(n, DEFAULT_RESELECT_PERIOD);
    for ev in events {
        let i = chain.insert(ev.clone()).unwrap();
        cs.on_insert(&chain, i).unwrap();
    }
    (chain, cs)
}

/// Every creator references every other creator's previous event, round
/// after round. Round 0 is the leaves.
fn full_rounds(n: usize, rounds: usize) -> Vec<EventBlock> {
    let mut chain = OperaChain::new(n, n);
    let mut out: Vec<EventBlock> = (0..n as u32).map(leaf).collect();
    for l in &out {
        chain.insert(l.clone()).unwrap();
    }
    for _ in 1..rounds {
        let heads: Vec<EventId> = (0..n as u32).map(|c| chain.head(NodeId(c)).unwrap().id()).collect();
        let round: Vec<EventBlock> = (0..n as u32)
            .map(|c| {
                let others: Vec<_> =
                    heads.iter().enumerate().filter(|&(j, _)| j != c as usize).map(|(_, h)| *h).collect();
                extend(&chain, c, &others, b"")
            })
            .collect();
        for ev in round {
            chain.insert(ev.clone()).unwrap();
            out.push(ev);
        }
    }
    out
}

/// A random topological order of the same events.
fn shuffled_topological(events: &[EventBlock], seed: u64) -> Vec<EventBlock> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pending: Vec<EventBlock> = events.to_vec();
    let mut have = BTreeSet::new();
    let mut out = Vec::new();
    while !pending.is_empty() {
        let (ready, rest): (Vec<_>, Vec<_>) = pending.into_iter().partition(|e| e.parents().all(|p| have.contains(&p)));
        let mut ready = ready;
        ready.shuffle(&mut rng);
        // take a random prefix so that later waves interleave with this one
        let take = 1 + (seed as usize + out.len()) % ready.len();
        let (now, later) = ready.split_at(take);
        for e in now {
            have.insert(e.id());
            out.push(e.clone());
        }
        pending = later.iter().cloned().chain(rest).collect();
    }
    out
}

struct Rig {
    chain: OperaChain,
    cs: Consensus,
}

impl Rig {
    fn with_leaves(n: usize, k: usize) -> (Rig, Vec<EventBlock>) {
        let mut rig = Rig { chain: OperaChain::new(n, k), cs: Consensus::new(n, DEFAULT_RESELECT_PERIOD) };
        let leaves: Vec<_> = (0..n as u32).map(leaf).collect();
        for l in &leaves {
            rig.add(l.clone());
        }
        (rig, leaves)
    }

    fn add(&mut self, ev: EventBlock) -> usize {
        let i = self.chain.insert(ev).unwrap();
        self.cs.on_insert(&self.chain, i).unwrap();
        i
    }

    fn extend(&mut self, creator: u32, others: &[EventId]) -> (usize, EventBlock) {
        let ev = extend(&self.chain, creator, others, b"");
        (self.add(ev.clone()), ev)
    }
}

#[test]
fn root_selection_replay() {
    // five nodes, three references per event
    let (mut rig, leaves) = Rig::with_leaves(5, 3);
    let (a1i, a1) = rig.extend(0, &[leaves[1].id(), leaves[2].id()]);
    let (c1i, c1) = rig.extend(2, &[leaves[1].id(), leaves[3].id()]);
    let expect_a1: BTreeSet<_> = [0, 1, 2].iter().map(|&i| leaves[i].id()).collect();
    assert_eq!(rig.cs.flag_table(a1i).entries().keys().copied().collect::<BTreeSet<_>>(), expect_a1);
    assert!(!rig.cs.is_root(a1i));
    assert!(!rig.cs.is_root(c1i));

    let b1 = extend(&rig.chain, 1, &[a1.id(), c1.id()], b"");
    let parents: Vec<_> = b1.parents().map(|p| Some(rig.cs.flag_table(rig.chain.index_of(&p).unwrap()))).collect();
    let merged = compute_flag_table(&parents).unwrap();
    let expect: BTreeSet<_> = [0, 1, 2, 3].iter().map(|&i| leaves[i].id()).collect();
    assert_eq!(merged.entries().keys().copied().collect::<BTreeSet<_>>(), expect);
    assert!(check_root(false, &merged, 5));
    let b1i = rig.add(b1);
    assert!(rig.cs.is_root(b1i));
    assert_eq!(rig.cs.frame_of(b1i), 2);
    assert_eq!(rig.cs.roots_of(2), &[b1i]);
}

#[test]
fn peer_in_later_frame_makes_root() {
    let (mut rig, l) = Rig::with_leaves(4, 2);
    // a climbs to frame 2 by collecting b and c one at a time
    let (a1i, _) = rig.extend(0, &[l[1].id()]);
    let (a2i, a2) = rig.extend(0, &[l[2].id()]);
    assert_eq!(rig.cs.frame_of(a1i), 1);
    assert_eq!(rig.cs.frame_of(a2i), 2);
    assert!(rig.cs.is_root(a2i));
    // b references a2 and lands in frame 2 as a root without a quorum of its own
    let (b1i, _) = rig.extend(1, &[a2.id()]);
    assert_eq!(rig.cs.frame_of(b1i), 2);
    assert!(rig.cs.is_root(b1i));
    assert_eq!(rig.cs.flag_table(b1i).len(), 2);
    // b's next event stays in frame 2 and is not a root
    let (b2i, _) = rig.extend(1, &[l[2].id()]);
    assert_eq!(rig.cs.frame_of(b2i), 2);
    assert!(!rig.cs.is_root(b2i));
}

#[test]
fn full_connectivity_makes_first_frame_atropos() {
    let events = full_rounds(5, 6);
    let mut chain = OperaChain::new(5, 5);
    let mut cs = Consensus::new(5, DEFAULT_RESELECT_PERIOD);
    let mut decided_in = BTreeMap::new();
    for ev in &events {
        let i = chain.insert(ev.clone()).unwrap();
        let up = cs.on_insert(&chain, i).unwrap();
        for (a, _) in up.new_atropos {
            decided_in.insert(a, cs.frame_of(i));
        }
    }
    assert_eq!(cs.max_frame(), 6);
    let f1 = cs.roots_of(1).to_vec();
    assert_eq!(f1.len(), 5);
    for &c in &f1 {
        assert_eq!(cs.root_status(c), Some(RootStatus::Atropos));
        // the frame-4 roots were all created at Lamport time 3
        assert_eq!(cs.consensus_time(c), Some(3));
        assert_eq!(decided_in[&chain.event_at(c).id()], 5);
        assert_eq!(cs.replay_consensus_time(&chain, &chain.event_at(c).id()), Ok(Some(3)));
    }
    for &c in cs.roots_of(2) {
        assert_eq!(cs.root_status(c), Some(RootStatus::Atropos));
    }
    for &c in cs.roots_of(3) {
        assert_eq!(cs.root_status(c), Some(RootStatus::Clotho));
    }
    assert!(cs.closed_upto() >= 1);
    assert_eq!(cs.main_chain()[..5].iter().map(|m| m.frame).collect::<Vec<_>>(), vec![1; 5]);
    // the five leaves make up the first batch, all at time 3
    assert!(cs.order()[..5].iter().all(|o| o.atropos_time == 3 && o.lamport_ts == 0));
}

#[test]
fn unanimous_candidates_fix_time_one_frame_later() {
    let events = full_rounds(4, 8);
    let (chain, cs) = feed(4, 4, &events);
    for f in 1..=cs.closed_upto() {
        for &c in cs.roots_of(f) {
            // round r sits in frame r + 1, so frame f + 3 roots carry time f + 2
            assert_eq!(cs.consensus_time(c), Some(f as u64 + 2), "{:?}", chain.event_at(c).id());
        }
    }
}

#[test]
fn flag_tables_match_reachability() {
    for seed in 0..8 {
        let (events, _) = random_events(5, 3, 200, seed);
        let (chain, cs) = feed(5, 3, &events);
        for i in 0..chain.len() {
            let f = cs.frame_of(i);
            let expect: BTreeSet<EventId> = cs
                .roots_of(f)
                .iter()
                .filter(|&&r| r == i || chain.happened_before_idx(r, i))
                .map(|&r| chain.event_at(r).id())
                .collect();
            let got: BTreeSet<EventId> = cs.flag_table(i).entries().keys().copied().collect();
            assert_eq!(got, expect, "seed {seed} event {i}");
        }
    }
}

#[test]
fn roots_reach_quorum_of_previous_frame() {
    let (events, _) = random_events(7, 3, 400, 3);
    let (chain, cs) = feed(7, 3, &events);
    for f in 2..=cs.max_frame() {
        for &r in cs.roots_of(f) {
            let reached: BTreeSet<NodeId> = cs
                .roots_of(f - 1)
                .iter()
                .filter(|&&p| chain.happened_before_idx(p, r))
                .map(|&p| chain.event_at(p).creator())
                .collect();
            assert!(supermajority(reached.len(), 7));
        }
        assert!(cs.roots_of(f).len() <= 7);
    }
}

#[test]
fn first_frame_is_the_leaf_set() {
    let (events, _) = random_events(4, 3, 50, 9);
    let (chain, cs) = feed(4, 3, &events);
    let leaves: BTreeSet<_> = chain.leaf_set().into_iter().collect();
    let r1: BTreeSet<_> = cs.roots_of(1).iter().map(|&r| chain.event_at(r).id()).collect();
    assert_eq!(leaves, r1);
}

#[test]
fn incremental_times_match_replay() {
    let (events, _) = random_events(7, 3, 600, 11);
    let (chain, cs) = feed(7, 3, &events);
    let mut checked = 0;
    for f in 1..=cs.max_frame() {
        for &c in cs.roots_of(f) {
            let id = chain.event_at(c).id();
            match cs.root_status(c) {
                Some(RootStatus::Atropos) => {
                    assert_eq!(cs.replay_consensus_time(&chain, &id).unwrap(), cs.consensus_time(c));
                    checked += 1;
                }
                Some(RootStatus::Clotho) => {}
                _ => assert_eq!(cs.replay_consensus_time(&chain, &id), Err(ConsensusError::NotClotho(id))),
            }
        }
    }
    assert!(checked > 20);
}

#[test]
fn minimum_selection_period() {
    // with h = 1 every frame past the proposal takes the minimum
    let (events, _) = random_events(5, 3, 300, 4);
    let mut chain = OperaChain::new(5, 3);
    let mut cs = Consensus::new(5, 1);
    for ev in &events {
        let i = chain.insert(ev.clone()).unwrap();
        cs.on_insert(&chain, i).unwrap();
    }
    // no agreement step ever runs, so nothing is decided
    assert!(cs.main_chain().is_empty());
    let mut cs3 = Consensus::new(5, 3);
    for i in 0..chain.len() {
        cs3.on_insert(&chain, i).unwrap();
    }
    assert!(!cs3.main_chain().is_empty());
}

#[test]
fn finalize_batch_buckets_by_time() {
    // a0 b0 c0 leaves; a1 over b0, c1 over a1; the t=4 Atropos is a1 and the
    // t=9 Atropos is c1
    let mut chain = OperaChain::new(3, 2);
    for l in (0..3).map(leaf) {
        chain.insert(l).unwrap();
    }
    let b0 = chain.head(NodeId(1)).unwrap().id();
    let a1 = extend(&chain, 0, &[b0], b"");
    let a1i = chain.insert(a1.clone()).unwrap();
    let c1 = extend(&chain, 2, &[a1.id()], b"");
    let c1i = chain.insert(c1.clone()).unwrap();
    let mut ordered = FixedBitSet::new();
    let keys = finalize_batch(&chain, &[(4, a1i), (9, c1i)], &mut ordered);
    let ids: Vec<_> = keys.iter().map(|k| (k.atropos_time, k.id)).collect();
    let mut first: Vec<_> =
        [0usize, 1, a1i].iter().map(|&i| chain.event_at(i)).map(|e| (e.lamport_ts(), e.id())).collect();
    first.sort();
    let mut expect: Vec<_> = first.into_iter().map(|(_, id)| (4, id)).collect();
    let c0 = chain.event_at(2).id();
    expect.push((9, c0));
    expect.push((9, c1.id()));
    assert_eq!(ids, expect);
    // nothing is handed out twice
    assert!(finalize_batch(&chain, &[(12, c1i)], &mut ordered).is_empty());
}

#[test]
fn single_atropos_orders_by_lamport_then_id() {
    let (_, chain) = random_events(4, 3, 40, 2);
    let top = chain.len() - 1;
    let mut ordered = FixedBitSet::new();
    let keys = finalize_batch(&chain, &[(7, top)], &mut ordered);
    let mut expect: Vec<_> = chain
        .ancestor_bits(top)
        .ones()
        .chain([top])
        .map(|i| (chain.event_at(i).lamport_ts(), chain.event_at(i).id()))
        .collect();
    expect.sort();
    assert_eq!(keys.iter().map(|k| (k.lamport_ts, k.id)).collect::<Vec<_>>(), expect);
}

#[test]
fn prune_requires_closed_frame() {
    let (events, _) = random_events(4, 3, 300, 5);
    let (chain, mut cs) = feed(4, 3, &events);
    let open = cs.closed_upto() + 1;
    assert_eq!(cs.prune_checklist(open), Err(ConsensusError::FrameNotFinalized(open)));
    assert_eq!(cs.prune_checklist(0), Err(ConsensusError::FrameNotFinalized(0)));
    let order = cs.order().to_vec();
    let main = cs.main_chain().to_vec();
    cs.prune_checklist(1).unwrap();
    assert!(cs.roots_of(1).is_empty());
    assert_eq!(cs.order(), order.as_slice());
    assert_eq!(cs.main_chain(), main.as_slice());
    let _ = chain;
}

#[test]
fn pruning_does_not_change_later_order() {
    let (events, _) = random_events(5, 3, 500, 6);
    let (_, full) = feed(5, 3, &events);
    let mut chain = OperaChain::new(5, 3);
    let mut cs = Consensus::new(5, DEFAULT_RESELECT_PERIOD);
    for ev in &events {
        let i = chain.insert(ev.clone()).unwrap();
        let up = cs.on_insert(&chain, i).unwrap();
        for f in up.closed_frames {
            cs.prune_checklist(f).unwrap();
        }
    }
    assert_eq!(cs.order(), full.order());
    assert_eq!(cs.main_chain(), full.main_chain());
}

#[test]
fn clotho_needs_strict_quorum() {
    assert!(!supermajority(3, 5));
    assert!(supermajority(4, 5));
    assert!(!supermajority(6, 9));
}

#[test]
fn split_candidates_reselect_smallest_of_the_most_common() {
    assert_eq!(reselect(&[20, 20, 31, 31, 44]), Ok(20));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn insertion_order_does_not_matter(seed in any::<u64>(), n in 4usize..8) {
        let (events, _) = random_events(n, 3, 250, seed);
        let (_, a) = feed(n, 3, &events);
        let other = shuffled_topological(&events, seed ^ 0x5eed);
        let (chain_b, b) = feed(n, 3, &other);
        prop_assert_eq!(a.closed_upto(), b.closed_upto());
        prop_assert_eq!(a.main_chain(), b.main_chain());
        prop_assert_eq!(a.order(), b.order());
        for f in 1..=a.max_frame() {
            let ra: BTreeSet<_> = a.roots_of(f).iter().map(|&r| events_id(&events, r)).collect();
            let rb: BTreeSet<_> = b.roots_of(f).iter().map(|&r| chain_b.event_at(r).id()).collect();
            prop_assert_eq!(ra, rb);
        }
    }
}

fn events_id(events: &[EventBlock], idx: usize) -> EventId {
    events[idx].id()
}
