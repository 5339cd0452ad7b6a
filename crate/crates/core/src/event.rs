//! Event blocks and their canonical byte encodings.
//!
//! Two encodings exist. The *id encoding* is what gets hashed: every field is
//! prefixed with its length as a big-endian `u32`, in the order creator, seq,
//! self-parent digest (zero block for leaves), sorted other-parent digests,
//! Lamport timestamp, payload digest. The *record encoding* carries the full
//! event (raw payload and signature) with the same length-prefixed layout and
//! is used by event logs and the sync wire form.

use serde::{Deserialize, Serialize};

use crate::id::{digest, EventId, NodeId, DIGEST_LEN};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("record truncated")]
    Truncated,
    #[error("field {field} has invalid length {len}")]
    BadLength { field: &'static str, len: usize },
    #[error("{0} trailing bytes after record")]
    Trailing(usize),
    #[error("stored id {stored} does not match content hash {computed}")]
    IdMismatch { stored: EventId, computed: EventId },
}

/// One vertex of the event DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventBlock {
    id: EventId,
    creator: NodeId,
    self_parent: Option<EventId>,
    other_parents: Vec<EventId>,
    lamport_ts: u64,
    seq: u64,
    payload: Vec<u8>,
    signature: Vec<u8>,
}

impl EventBlock {
    /// Builds an event and derives its id. Other parents are stored sorted.
    pub fn new(
        creator: NodeId,
        seq: u64,
        self_parent: Option<EventId>,
        mut other_parents: Vec<EventId>,
        lamport_ts: u64,
        payload: Vec<u8>,
    ) -> Self {
        other_parents.sort_unstable();
        let mut ev = EventBlock {
            id: EventId::ZERO,
            creator,
            self_parent,
            other_parents,
            lamport_ts,
            seq,
            payload,
            signature: Vec::new(),
        };
        ev.id = EventId::hash_of(&ev.id_encoding());
        ev
    }

    /// A creator's first event: no references, seq 0, time 0.
    pub fn leaf(creator: NodeId, payload: Vec<u8>) -> Self {
        Self::new(creator, 0, None, Vec::new(), 0, payload)
    }

    /// Attaches an opaque signature. The signature is not part of the id.
    pub fn with_signature(mut self, signature: Vec<u8>) -> Self {
        self.signature = signature;
        self
    }

    pub fn id(&self) -> EventId {
        self.id
    }

    pub fn creator(&self) -> NodeId {
        self.creator
    }

    pub fn self_parent(&self) -> Option<EventId> {
        self.self_parent
    }

    pub fn other_parents(&self) -> &[EventId] {
        &self.other_parents
    }

    /// Self-parent first, then other parents in digest order.
    pub fn parents(&self) -> impl Iterator<Item = EventId> + '_ {
        self.self_parent.iter().copied().chain(self.other_parents.iter().copied())
    }

    pub fn lamport_ts(&self) -> u64 {
        self.lamport_ts
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn signature(&self) -> &[u8] {
        &self.signature
    }

    pub fn is_leaf(&self) -> bool {
        self.self_parent.is_none()
    }

    pub fn id_encoding(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 32 * (self.other_parents.len() + 3));
        put_field(&mut out, &self.creator.0.to_be_bytes());
        put_field(&mut out, &self.seq.to_be_bytes());
        put_field(&mut out, self.self_parent.unwrap_or(EventId::ZERO).as_bytes());
        put_field(&mut out, &self.other_parents.concat_bytes());
        put_field(&mut out, &self.lamport_ts.to_be_bytes());
        put_field(&mut out, &digest(&self.payload));
        out
    }

    pub fn record_encoding(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96 + self.payload.len() + 32 * self.other_parents.len());
        put_field(&mut out, &self.creator.0.to_be_bytes());
        put_field(&mut out, &self.seq.to_be_bytes());
        match self.self_parent {
            Some(p) => put_field(&mut out, p.as_bytes()),
            None => put_field(&mut out, &[]),
        }
        put_field(&mut out, &self.other_parents.concat_bytes());
        put_field(&mut out, &self.lamport_ts.to_be_bytes());
        put_field(&mut out, &self.payload);
        put_field(&mut out, &self.signature);
        out
    }

    pub fn decode_record(bytes: &[u8]) -> Result<EventBlock, DecodeError> {
        let mut r = FieldReader { buf: bytes };
        let creator = u32::from_be_bytes(r.fixed::<4>("creator")?);
        let seq = u64::from_be_bytes(r.fixed::<8>("seq")?);
        let sp = r.field()?;
        let self_parent = match sp.len() {
            0 => None,
            DIGEST_LEN => Some(EventId(sp.try_into().unwrap())),
            len => return Err(DecodeError::BadLength { field: "self_parent", len }),
        };
        let op = r.field()?;
        if op.len() % DIGEST_LEN != 0 {
            return Err(DecodeError::BadLength { field: "other_parents", len: op.len() });
        }
        let other_parents = op.chunks_exact(DIGEST_LEN).map(|c| EventId(c.try_into().unwrap())).collect();
        let lamport_ts = u64::from_be_bytes(r.fixed::<8>("lamport_ts")?);
        let payload = r.field()?.to_vec();
        let signature = r.field()?.to_vec();
        if !r.buf.is_empty() {
            return Err(DecodeError::Trailing(r.buf.len()));
        }
        Ok(EventBlock::new(NodeId(creator), seq, self_parent, other_parents, lamport_ts, payload)
            .with_signature(signature))
    }
}

trait ConcatBytes {
    fn concat_bytes(&self) -> Vec<u8>;
}

impl ConcatBytes for [EventId] {
    fn concat_bytes(&self) -> Vec<u8> {
        self.iter().flat_map(|id| id.0).collect()
    }
}

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct FieldReader<'a> {
    buf: &'a [u8],
}

impl<'a> FieldReader<'a> {
    fn field(&mut self) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < 4 {
            return Err(DecodeError::Truncated);
        }
        let len = u32::from_be_bytes(self.buf[..4].try_into().unwrap()) as usize;
        let rest = &self.buf[4..];
        if rest.len() < len {
            return Err(DecodeError::Truncated);
        }
        let (f, tail) = rest.split_at(len);
        self.buf = tail;
        Ok(f)
    }

    fn fixed<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], DecodeError> {
        let f = self.field()?;
        f.try_into().map_err(|_| DecodeError::BadLength { field, len: f.len() })
    }
}

/// JSON-lines debug form of an event: digests hex-encoded, payload and
/// signature hex-encoded.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct EventJson {
    pub id: EventId,
    pub creator: NodeId,
    pub self_parent: Option<EventId>,
    pub other_parents: Vec<EventId>,
    pub lamport_ts: u64,
    pub seq: u64,
    pub payload: String,
    pub signature: String,
}

impl From<&EventBlock> for EventJson {
    fn from(ev: &EventBlock) -> Self {
        EventJson {
            id: ev.id,
            creator: ev.creator,
            self_parent: ev.self_parent,
            other_parents: ev.other_parents.clone(),
            lamport_ts: ev.lamport_ts,
            seq: ev.seq,
            payload: hex::encode(&ev.payload),
            signature: hex::encode(&ev.signature),
        }
    }
}

impl TryFrom<EventJson> for EventBlock {
    type Error = DecodeError;

    fn try_from(j: EventJson) -> Result<Self, Self::Error> {
        let payload =
            hex::decode(&j.payload).map_err(|_| DecodeError::BadLength { field: "payload", len: j.payload.len() })?;
        let signature = hex::decode(&j.signature)
            .map_err(|_| DecodeError::BadLength { field: "signature", len: j.signature.len() })?;
        let ev = EventBlock::new(j.creator, j.seq, j.self_parent, j.other_parents, j.lamport_ts, payload)
            .with_signature(signature);
        if ev.id != j.id {
            return Err(DecodeError::IdMismatch { stored: j.id, computed: ev.id });
        }
        Ok(ev)
    }
}

impl Serialize for EventBlock {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        EventJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for EventBlock {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        EventJson::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}
