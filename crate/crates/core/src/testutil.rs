use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::OperaChain;
use crate::event::EventBlock;
use crate::id::{EventId, NodeId};
use crate::lamport::assign_lamport;

pub fn leaf(c: u32) -> EventBlock {
    EventBlock::leaf(NodeId(c), vec![])
}

/// Next event of `creator` on top of its head, referencing `others`.
pub fn extend(chain: &OperaChain, creator: u32, others: &[EventId], payload: &[u8]) -> EventBlock {
    let sp = chain.head(NodeId(creator)).expect("creator has a head");
    child_of(chain, sp, others, payload)
}

pub fn child_of(chain: &OperaChain, sp: &EventBlock, others: &[EventId], payload: &[u8]) -> EventBlock {
    let mut ts = vec![sp.lamport_ts()];
    ts.extend(others.iter().map(|o| chain.get(o).unwrap().lamport_ts()));
    EventBlock::new(sp.creator(), sp.seq() + 1, Some(sp.id()), others.to_vec(), assign_lamport(&ts), payload.to_vec())
}

/// Random honest DAG: a random creator extends its head with the heads of
/// `k - 1` random peers, until `events` events exist.
pub fn random_chain(n: usize, k: usize, events: usize, seed: u64) -> OperaChain {
    random_events(n, k, events, seed).1
}

pub fn random_events(n: usize, k: usize, events: usize, seed: u64) -> (Vec<EventBlock>, OperaChain) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = OperaChain::new(n, k);
    let mut out = Vec::new();
    for i in 0..n {
        let l = leaf(i as u32);
        c.insert(l.clone()).unwrap();
        out.push(l);
    }
    while c.len() < events {
        let me = rng.random_range(0..n);
        let mut peers: Vec<usize> = (0..n).filter(|&p| p != me).collect();
        while peers.len() > k - 1 {
            peers.swap_remove(rng.random_range(0..peers.len()));
        }
        let others: Vec<_> = peers.iter().map(|&p| c.head(NodeId(p as u32)).unwrap().id()).collect();
        let ev = extend(&c, me as u32, &others, b"");
        c.insert(ev.clone()).unwrap();
        out.push(ev);
    }
    (out, c)
}
