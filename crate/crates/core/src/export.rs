//! Event logs (binary and JSON lines) and Graphviz output.

use std::fmt::Write as _;
use std::io::{self, BufRead, Read, Write};
use std::ops::RangeInclusive;

use crate::chain::OperaChain;
use crate::consensus::{Consensus, MainChainEntry, OrderedEvent, RootStatus};
use crate::event::{DecodeError, EventBlock, EventJson};

/// Leading bytes of a binary event log.
pub const LOG_MAGIC: &[u8; 8] = b"LCHLOG01";

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not an event log (bad magic)")]
    BadMagic,
    #[error("record {index}: {source}")]
    Record { index: usize, source: DecodeError },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

/// Writes events as length-prefixed record encodings after the magic.
pub fn write_log<'a, W: Write>(mut w: W, events: impl IntoIterator<Item = &'a EventBlock>) -> io::Result<()> {
    w.write_all(LOG_MAGIC)?;
    for ev in events {
        let rec = ev.record_encoding();
        w.write_all(&(rec.len() as u32).to_be_bytes())?;
        w.write_all(&rec)?;
    }
    w.flush()
}

pub fn read_log<R: Read>(mut r: R) -> Result<Vec<EventBlock>, LogError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let rest = buf.strip_prefix(LOG_MAGIC.as_slice()).ok_or(LogError::BadMagic)?;
    let mut rest = rest;
    let mut out = Vec::new();
    while !rest.is_empty() {
        let index = out.len();
        let truncated = || LogError::Record { index, source: DecodeError::Truncated };
        let len_bytes: [u8; 4] = rest.get(..4).ok_or_else(truncated)?.try_into().unwrap();
        let len = u32::from_be_bytes(len_bytes) as usize;
        let rec = rest.get(4..4 + len).ok_or_else(truncated)?;
        out.push(EventBlock::decode_record(rec).map_err(|source| LogError::Record { index, source })?);
        rest = &rest[4 + len..];
    }
    Ok(out)
}

pub fn write_jsonl<'a, W: Write>(mut w: W, events: impl IntoIterator<Item = &'a EventBlock>) -> io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut w, &EventJson::from(ev))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<EventBlock>, LogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: EventBlock = serde_json::from_str(&line).map_err(|source| LogError::Json { line: i + 1, source })?;
        out.push(ev);
    }
    Ok(out)
}

/// Reads either log form, sniffing the magic.
pub fn read_any(bytes: &[u8]) -> Result<Vec<EventBlock>, LogError> {
    if bytes.starts_with(LOG_MAGIC) {
        read_log(bytes)
    } else {
        read_jsonl(bytes)
    }
}

pub fn write_main_chain<W: Write>(mut w: W, entries: &[MainChainEntry]) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_order<W: Write>(mut w: W, entries: &[OrderedEvent]) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

const PALETTE: [&str; 8] = ["#fbb4ae", "#b3cde3", "#ccebc5", "#decbe4", "#fed9a6", "#ffffcc", "#e5d8bd", "#fddaec"];

/// Graphviz rendering. Vertices are labelled `creator:seq`; self-parent edges
/// are solid and other-parent edges dashed. With consensus state, vertices
/// are filled by frame, roots get a bold outline, Clothos a double circle and
/// Atropos a red one. `frames` restricts output to events of those frames.
pub fn to_dot(chain: &OperaChain, consensus: Option<&Consensus>, frames: Option<RangeInclusive<u32>>) -> String {
    let mut out = String::from("digraph opera {\n  rankdir=BT;\n  node [shape=circle, style=filled, fillcolor=white, fontname=\"Helvetica\"];\n");
    let keep = |i: usize| match (&frames, consensus) {
        (Some(r), Some(cs)) => r.contains(&cs.frame_of(i)),
        (Some(r), None) => !r.is_empty(),
        (None, _) => true,
    };
    let name = |i: usize| chain.event_at(i).id().to_hex()[..16].to_string();
    for i in (0..chain.len()).filter(|&i| keep(i)) {
        let ev = chain.event_at(i);
        let mut attrs = format!("label=\"{}:{}\"", ev.creator(), ev.seq());
        if let Some(cs) = consensus {
            let f = cs.frame_of(i);
            let _ =
                write!(attrs, ", fillcolor=\"{}\", tooltip=\"frame {f}\"", PALETTE[(f as usize - 1) % PALETTE.len()]);
            if cs.is_root(i) {
                attrs.push_str(", penwidth=2");
            }
            match cs.root_status(i) {
                Some(RootStatus::Clotho) => attrs.push_str(", shape=doublecircle"),
                Some(RootStatus::Atropos) => attrs.push_str(", shape=doublecircle, color=red"),
                _ => {}
            }
        }
        let _ = writeln!(out, "  \"{}\" [{attrs}];", name(i));
    }
    for i in (0..chain.len()).filter(|&i| keep(i)) {
        let ev = chain.event_at(i);
        for (pos, &p) in chain.parent_indices(i).iter().enumerate() {
            if !keep(p) {
                continue;
            }
            let style = if pos == 0 && !ev.is_leaf() { "solid" } else { "dashed" };
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [style={style}];", name(i), name(p));
        }
    }
    out.push_str("}\n");
    out
}
