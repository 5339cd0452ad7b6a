use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use super::book::NodeBook;
use super::cost::{cost, Cost};
use super::PeeringError;
use crate::id::NodeId;

/// Picks `k - 1` peers with the lowest cost. Whole cost tiers are taken in
/// ascending order; the tier that does not fit entirely is sampled
/// uniformly with `rng`. Only peers whose top event is known qualify.
pub fn select_peers<R: Rng + ?Sized>(
    book: &NodeBook,
    me: NodeId,
    k: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>, PeeringError> {
    select_peers_excluding(book, me, k, &BTreeSet::new(), rng)
}

pub fn select_peers_excluding<R: Rng + ?Sized>(
    book: &NodeBook,
    me: NodeId,
    k: usize,
    excluded: &BTreeSet<NodeId>,
    rng: &mut R,
) -> Result<Vec<NodeId>, PeeringError> {
    let want = k.saturating_sub(1);
    let mut scored: Vec<(Cost, NodeId)> = (0..book.n() as u32)
        .map(NodeId)
        .filter(|&p| p != me && !excluded.contains(&p) && book.top(p).is_some())
        .map(|p| (cost(book.in_degree(p), book.height(p)), p))
        .collect();
    if scored.len() < want {
        return Err(PeeringError::InsufficientPeers { needed: want, available: scored.len() });
    }
    scored.sort();
    let mut chosen = Vec::with_capacity(want);
    let mut i = 0;
    while chosen.len() < want {
        let tier_end = scored[i..].iter().position(|(c, _)| *c != scored[i].0).map_or(scored.len(), |p| i + p);
        let tier = &scored[i..tier_end];
        let left = want - chosen.len();
        if tier.len() <= left {
            chosen.extend(tier.iter().map(|&(_, p)| p));
        } else {
            let mut picks: Vec<usize> = sample(rng, tier.len(), left).into_vec();
            picks.sort_unstable();
            chosen.extend(picks.into_iter().map(|j| tier[j].1));
        }
        i = tier_end;
    }
    chosen.sort();
    Ok(chosen)
}
