use lachesis_core::{assign_lamport, EventBlock, EventId, NodeId, OperaChain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn leaf(c: u32) -> EventBlock {
    EventBlock::leaf(NodeId(c), vec![])
}

pub fn extend(chain: &OperaChain, creator: u32, others: &[EventId]) -> EventBlock {
    let sp = chain.head(NodeId(creator)).expect("creator has a head");
    let mut ts = vec![sp.lamport_ts()];
    ts.extend(others.iter().map(|o| chain.get(o).unwrap().lamport_ts()));
    EventBlock::new(sp.creator(), sp.seq() + 1, Some(sp.id()), others.to_vec(), assign_lamport(&ts), vec![])
}

/// Honest random gossip: a random creator extends its head with the heads of
/// `k - 1` random peers.
pub fn random_chain(n: usize, k: usize, events: usize, seed: u64) -> OperaChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain = OperaChain::new(n, k);
    for c in 0..n {
        chain.insert(leaf(c as u32)).unwrap();
    }
    while chain.len() < events {
        let me = rng.random_range(0..n);
        let peers = rand::seq::index::sample(&mut rng, n - 1, k - 1);
        let others: Vec<EventId> = peers
            .iter()
            .map(|p| if p >= me { p + 1 } else { p })
            .map(|p| chain.head(NodeId(p as u32)).unwrap().id())
            .collect();
        let ev = extend(&chain, me as u32, &others);
        chain.insert(ev).unwrap();
    }
    chain
}
