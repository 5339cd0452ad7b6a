use std::collections::{BTreeMap, BTreeSet};

use crate::chain::{DagError, OperaChain};
use crate::consensus::{Consensus, ConsensusError, Update};
use crate::event::EventBlock;
use crate::id::{EventId, NodeId};
use crate::peering::{self, NodeBook, PeeringError, SyncMessage};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NodeError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Peering(#[from] PeeringError),
}

/// Result of applying a batch of received events.
#[derive(Debug, Default)]
pub struct Received {
    pub inserted: Vec<(usize, Update)>,
    pub rejected: Vec<(EventId, DagError)>,
}

/// One participant: its chain, consensus state and peer book, plus events
/// held back until their parents arrive.
#[derive(Debug, Clone)]
pub struct Node {
    id: NodeId,
    chain: OperaChain,
    consensus: Consensus,
    book: NodeBook,
    pending: BTreeMap<EventId, EventBlock>,
}

impl Node {
    pub fn new(id: NodeId, n: usize, k: usize, h: u32) -> Self {
        Node {
            id,
            chain: OperaChain::new(n, k),
            consensus: Consensus::new(n, h),
            book: NodeBook::new(n),
            pending: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn chain(&self) -> &OperaChain {
        &self.chain
    }

    pub fn consensus(&self) -> &Consensus {
        &self.consensus
    }

    pub fn consensus_mut(&mut self) -> &mut Consensus {
        &mut self.consensus
    }

    pub fn book(&self) -> &NodeBook {
        &self.book
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Inserts one event whose parents are all present.
    pub fn insert(&mut self, ev: EventBlock) -> Result<(usize, Update), NodeError> {
        let idx = self.chain.insert(ev)?;
        let chain = &self.chain;
        self.book.observe(chain.event_at(idx), |p| chain.get(p).map(|e| e.creator()));
        let update = self.consensus.on_insert(&self.chain, idx)?;
        Ok((idx, update))
    }

    /// Applies events from a sync response. Known events are skipped, events
    /// with missing parents are held back and retried as parents arrive.
    pub fn receive(&mut self, events: Vec<EventBlock>) -> Result<Received, NodeError> {
        let mut out = Received::default();
        for ev in events {
            if self.chain.contains(&ev.id()) || self.pending.contains_key(&ev.id()) {
                continue;
            }
            self.try_insert(ev, &mut out)?;
        }
        Ok(out)
    }

    fn try_insert(&mut self, ev: EventBlock, out: &mut Received) -> Result<(), NodeError> {
        let id = ev.id();
        match self.insert(ev.clone()) {
            Ok(done) => {
                out.inserted.push(done);
                self.drain_pending(out)
            }
            Err(NodeError::Dag(DagError::MissingParent { .. })) => {
                self.pending.insert(id, ev);
                Ok(())
            }
            Err(NodeError::Dag(e)) => {
                out.rejected.push((id, e));
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn drain_pending(&mut self, out: &mut Received) -> Result<(), NodeError> {
        loop {
            let ready: Vec<EventId> = self
                .pending
                .values()
                .filter(|e| e.parents().all(|p| self.chain.contains(&p)))
                .map(|e| e.id())
                .collect();
            if ready.is_empty() {
                return Ok(());
            }
            for id in ready {
                let ev = self.pending.remove(&id).unwrap();
                match self.insert(ev) {
                    Ok(done) => out.inserted.push(done),
                    Err(NodeError::Dag(e)) => out.rejected.push((id, e)),
                    Err(e) => return Err(e),
                }
            }
        }
    }

    /// Parents of held-back events that are neither stored nor held back.
    pub fn missing(&self) -> Vec<EventId> {
        let missing: BTreeSet<EventId> = self
            .pending
            .values()
            .flat_map(|e| e.parents())
            .filter(|p| !self.chain.contains(p) && !self.pending.contains_key(p))
            .collect();
        missing.into_iter().collect()
    }

    pub fn sync_request(&self, to: NodeId) -> SyncMessage {
        SyncMessage::request(self.id, to, self.chain.known_seqs(), self.missing())
    }

    pub fn answer(&self, request: &SyncMessage) -> SyncMessage {
        peering::handle_sync(&self.chain, self.id, request)
    }

    /// Creates, stores and returns this node's next event.
    pub fn create_event(&mut self, peer_tops: &[EventId], payload: Vec<u8>) -> Result<(EventBlock, Update), NodeError> {
        let ev = peering::create_event(&self.chain, self.id, peer_tops, payload)?;
        let (_, update) = self.insert(ev.clone())?;
        Ok((ev, update))
    }
}
