//! Peer bookkeeping, cost-based peer choice, event creation and the pull
//! sync exchange between two nodes.

mod book;
mod cost;
mod select;
mod sync;

use crate::chain::OperaChain;
use crate::event::EventBlock;
use crate::id::{EventId, NodeId};
use crate::lamport::assign_lamport;

pub use book::NodeBook;
pub use cost::{cost, Cost};
pub use select::{select_peers, select_peers_excluding};
pub use sync::{event_diff, handle_sync, SyncKind, SyncMessage, WireError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PeeringError {
    #[error("need {needed} peers, only {available} available")]
    InsufficientPeers { needed: usize, available: usize },
    #[error("{0:?} is not its creator's top event")]
    StaleTops(EventId),
    #[error("expected {expected} peer tops, got {got}")]
    WrongTopCount { expected: usize, got: usize },
}

/// Builds `me`'s next event on top of its head and the given peer tops.
/// Without a head this is the leaf, and `peer_tops` must be empty.
pub fn create_event(
    chain: &OperaChain,
    me: NodeId,
    peer_tops: &[EventId],
    payload: Vec<u8>,
) -> Result<EventBlock, PeeringError> {
    let Some(head) = chain.head(me) else {
        if !peer_tops.is_empty() {
            return Err(PeeringError::WrongTopCount { expected: 0, got: peer_tops.len() });
        }
        return Ok(EventBlock::leaf(me, payload));
    };
    if peer_tops.len() + 1 != chain.k() {
        return Err(PeeringError::WrongTopCount { expected: chain.k() - 1, got: peer_tops.len() });
    }
    for t in peer_tops {
        let top = chain.get(t).and_then(|e| chain.head(e.creator()));
        if top.is_none_or(|h| h.id() != *t) {
            return Err(PeeringError::StaleTops(*t));
        }
    }
    Ok(child_event(chain, head, peer_tops, payload))
}

/// An event extending `self_parent` with the given other parents, which
/// must all be present in `chain`. No top or fork checks are made.
pub fn child_event(chain: &OperaChain, self_parent: &EventBlock, others: &[EventId], payload: Vec<u8>) -> EventBlock {
    let mut ts = vec![self_parent.lamport_ts()];
    ts.extend(others.iter().filter_map(|o| chain.get(o)).map(|e| e.lamport_ts()));
    EventBlock::new(
        self_parent.creator(),
        self_parent.seq() + 1,
        Some(self_parent.id()),
        others.to_vec(),
        assign_lamport(&ts),
        payload,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::leaf;

    #[test]
    fn leaf_creation() {
        let chain = OperaChain::new(3, 3);
        let l = create_event(&chain, NodeId(1), &[], b"tx".to_vec()).unwrap();
        assert!(l.is_leaf());
        assert_eq!((l.seq(), l.lamport_ts()), (0, 0));
        assert_eq!(
            create_event(&chain, NodeId(1), &[EventId::ZERO], vec![]),
            Err(PeeringError::WrongTopCount { expected: 0, got: 1 })
        );
    }

    #[test]
    fn first_event_over_two_leaves() {
        let mut chain = OperaChain::new(5, 3);
        let leaves: Vec<_> = (0..5).map(leaf).collect();
        for l in &leaves {
            chain.insert(l.clone()).unwrap();
        }
        let a1 = create_event(&chain, NodeId(0), &[leaves[1].id(), leaves[2].id()], vec![]).unwrap();
        let parents: Vec<_> = a1.parents().collect();
        assert_eq!(parents[0], leaves[0].id());
        assert_eq!(parents.len(), 3);
        assert!(parents.contains(&leaves[1].id()) && parents.contains(&leaves[2].id()));
        assert_eq!((a1.seq(), a1.lamport_ts()), (1, 1));
        chain.insert(a1.clone()).unwrap();
        assert!(chain.detect_forks(NodeId(0)).is_empty());
        // a0 is no longer A's top
        let stale = create_event(&chain, NodeId(1), &[leaves[0].id(), leaves[2].id()], vec![]);
        assert_eq!(stale, Err(PeeringError::StaleTops(leaves[0].id())));
        let wrong = create_event(&chain, NodeId(1), &[a1.id()], vec![]);
        assert_eq!(wrong, Err(PeeringError::WrongTopCount { expected: 2, got: 1 }));
    }
}
