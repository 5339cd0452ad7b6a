use std::collections::BTreeSet;

use integer_encoding::VarInt;
use serde::{Deserialize, Serialize};

use crate::chain::{KnownMap, OperaChain};
use crate::event::{DecodeError, EventBlock};
use crate::id::{EventId, NodeId, DIGEST_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncKind {
    Request,
    Response,
}

/// One leg of the pull exchange. A request carries the sender's known map
/// and, when the sender holds events whose parents it could not obtain, the
/// ids it is missing. A response carries the events the requester lacks in
/// topological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncMessage {
    pub kind: SyncKind,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub known: KnownMap,
    #[serde(default)]
    pub events: Vec<EventBlock>,
    #[serde(default)]
    pub wanted: Vec<EventId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message kind {0}")]
    BadKind(u8),
    #[error("value out of range")]
    Overflow,
    #[error("bad event record: {0}")]
    Event(#[from] DecodeError),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

impl SyncMessage {
    pub fn request(sender: NodeId, receiver: NodeId, known: KnownMap, wanted: Vec<EventId>) -> Self {
        SyncMessage { kind: SyncKind::Request, sender, receiver, known, events: Vec::new(), wanted }
    }

    /// Binary form: kind byte, varint sender and receiver, varint-counted
    /// `(creator, seq)` pairs in creator order, varint-counted
    /// length-prefixed event records, varint-counted raw wanted digests.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = vec![match self.kind {
            SyncKind::Request => 0,
            SyncKind::Response => 1,
        }];
        put(&mut out, self.sender.0 as u64);
        put(&mut out, self.receiver.0 as u64);
        put(&mut out, self.known.len() as u64);
        for (c, seq) in &self.known {
            put(&mut out, c.0 as u64);
            put(&mut out, *seq);
        }
        put(&mut out, self.events.len() as u64);
        for ev in &self.events {
            let rec = ev.record_encoding();
            put(&mut out, rec.len() as u64);
            out.extend_from_slice(&rec);
        }
        put(&mut out, self.wanted.len() as u64);
        for id in &self.wanted {
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader { buf: bytes };
        let kind = match r.take(1)?[0] {
            0 => SyncKind::Request,
            1 => SyncKind::Response,
            b => return Err(WireError::BadKind(b)),
        };
        let sender = NodeId(r.u32()?);
        let receiver = NodeId(r.u32()?);
        let mut known = KnownMap::new();
        for _ in 0..r.varint()? {
            let c = NodeId(r.u32()?);
            known.insert(c, r.varint()?);
        }
        let mut events = Vec::new();
        for _ in 0..r.varint()? {
            let len = usize::try_from(r.varint()?).map_err(|_| WireError::Overflow)?;
            events.push(EventBlock::decode_record(r.take(len)?)?);
        }
        let mut wanted = Vec::new();
        for _ in 0..r.varint()? {
            wanted.push(EventId(r.take(DIGEST_LEN)?.try_into().unwrap()));
        }
        if !r.buf.is_empty() {
            return Err(WireError::Trailing(r.buf.len()));
        }
        Ok(SyncMessage { kind, sender, receiver, known, events, wanted })
    }
}

fn put(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.encode_var_vec());
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn varint(&mut self) -> Result<u64, WireError> {
        let (v, used) = u64::decode_var(self.buf).ok_or(WireError::Truncated)?;
        self.buf = &self.buf[used..];
        Ok(v)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        u32::try_from(self.varint()?).map_err(|_| WireError::Overflow)
    }
}

/// Events the remote side lacks according to its known map, in the local
/// insertion order (parents first).
pub fn event_diff(chain: &OperaChain, remote_known: &KnownMap) -> Vec<EventBlock> {
    chain.iter().filter(|ev| remote_known.get(&ev.creator()).is_none_or(|&seq| ev.seq() > seq)).cloned().collect()
}

/// Answers a request: the diff against the requester's known map, plus the
/// explicitly wanted events and their ancestors. The extra events only
/// matter for forked creators, whose branches the known map cannot tell
/// apart.
pub fn handle_sync(chain: &OperaChain, me: NodeId, request: &SyncMessage) -> SyncMessage {
    let mut events = event_diff(chain, &request.known);
    if !request.wanted.is_empty() {
        let sent: BTreeSet<EventId> = events.iter().map(|e| e.id()).collect();
        let mut extra = fixedbitset::FixedBitSet::with_capacity(chain.len());
        for id in &request.wanted {
            if let Some(i) = chain.index_of(id) {
                extra.insert(i);
                extra.union_with(chain.ancestor_bits(i));
            }
        }
        let mut merged: Vec<usize> = extra.ones().collect();
        merged.extend(sent.iter().filter_map(|id| chain.index_of(id)));
        merged.sort_unstable();
        merged.dedup();
        events = merged.into_iter().map(|i| chain.event_at(i).clone()).collect();
    }
    SyncMessage {
        kind: SyncKind::Response,
        sender: me,
        receiver: request.sender,
        known: chain.known_seqs(),
        events,
        wanted: Vec::new(),
    }
}
