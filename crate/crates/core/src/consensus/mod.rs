//! Frames, roots, Clotho nomination, Atropos time agreement and the final
//! event order, maintained incrementally as events enter a node's chain.
//!
//! Voting works per creator. For a root `c` of frame `f`, each creator votes
//! once, through its first event whose frame is at least `f + 1`. The vote is
//! yes when that event is a root of frame `f + 1` that reaches `c` and sees no
//! fork of `c`; anything else is a no. A root with yes votes from more than
//! two thirds of the creators becomes Clotho once the node has seen frame
//! `f + 3`; a root that can no longer collect such a quorum is rejected.
//!
//! Consensus times follow the candidate-time protocol: a frame `f + 3` root
//! that sees a yes quorum of `c` proposes its own Lamport time, later roots
//! adopt the reselected value of the previous frame's roots they reach (or
//! the minimum every `h` frames), and the time is fixed once more than two
//! thirds of the creators agree. A frame is closed, and its events ordered,
//! when every root it holds is decided and enough creators have moved past
//! it that any root still unknown would be rejected.

mod atropos;
mod flag;
mod order;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::chain::OperaChain;
use crate::id::{EventId, NodeId};

pub use atropos::reselect;
pub use flag::{assign_frame, check_root, compute_flag_table, supermajority, FlagTable};
pub use order::{MainChainEntry, OrderKey, OrderedEvent};

/// Default period of minimum-selection frames.
pub const DEFAULT_RESELECT_PERIOD: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsensusError {
    #[error("a parent has no flag table")]
    MissingParentTable,
    #[error("{0:?} is not a Clotho")]
    NotClotho(EventId),
    #[error("no candidates given")]
    EmptyInput,
    #[error("frame {0} is not finalized")]
    FrameNotFinalized(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootStatus {
    Candidate,
    Clotho,
    Atropos,
    Rejected,
}

#[derive(Debug, Clone)]
struct RootRecord {
    status: RootStatus,
    yes: BTreeSet<NodeId>,
    no: BTreeSet<NodeId>,
    yes_voters: Vec<usize>,
    consensus_time: Option<u64>,
}

#[derive(Debug, Clone, Default)]
struct FrameRecord {
    roots: Vec<usize>,
    events: Vec<usize>,
    pruned: bool,
}

/// What one insertion changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Update {
    pub frame: u32,
    pub is_root: bool,
    pub new_clotho: Vec<EventId>,
    pub new_atropos: Vec<(EventId, u64)>,
    pub rejected: Vec<EventId>,
    pub closed_frames: Vec<u32>,
    pub newly_ordered: usize,
}

/// Per-node consensus state, indexed by the chain's insertion indices.
#[derive(Debug, Clone)]
pub struct Consensus {
    n: usize,
    h: u32,
    frame: Vec<u32>,
    root: Vec<bool>,
    tables: Vec<FlagTable>,
    frames: Vec<FrameRecord>,
    roots: BTreeMap<usize, RootRecord>,
    creator_max_frame: Vec<u32>,
    max_frame: u32,
    times: HashMap<(usize, usize), u64>,
    closed_upto: u32,
    ordered: FixedBitSet,
    main_chain: Vec<MainChainEntry>,
    order: Vec<OrderedEvent>,
    finalized_at: Vec<u32>,
}

impl Consensus {
    pub fn new(n: usize, h: u32) -> Self {
        assert!(h > 0, "reselection period must be positive");
        Consensus {
            n,
            h,
            frame: Vec::new(),
            root: Vec::new(),
            tables: Vec::new(),
            frames: Vec::new(),
            roots: BTreeMap::new(),
            creator_max_frame: vec![0; n],
            max_frame: 0,
            times: HashMap::new(),
            closed_upto: 0,
            ordered: FixedBitSet::new(),
            main_chain: Vec::new(),
            order: Vec::new(),
            finalized_at: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reselect_period(&self) -> u32 {
        self.h
    }

    /// Must be called once per inserted event, in insertion order.
    pub fn on_insert(&mut self, chain: &OperaChain, idx: usize) -> Result<Update, ConsensusError> {
        assert_eq!(idx, self.frame.len(), "events must be fed in insertion order");
        let ev = chain.event_at(idx);
        let (frame, is_root, table) = if ev.is_leaf() {
            (1, true, FlagTable::of_root(1, ev.id(), ev.creator()))
        } else {
            let parents = chain.parent_indices(idx);
            let parent_tables: Vec<_> = parents.iter().map(|&p| self.tables.get(p)).collect();
            let mut table = compute_flag_table(&parent_tables)?;
            let parent_frames: Vec<u32> = parents.iter().map(|&p| self.frame[p]).collect();
            // an event that already sees its own creator's fork is never a root
            let eligible = !chain.fork_visible(ev.creator(), idx);
            let promoted = eligible && check_root(false, &table, self.n);
            let frame = assign_frame(&parent_frames, promoted);
            // reaching a later frame through a peer also makes the event a root
            // of that frame: every event there already reaches a quorum of the
            // frame below
            let root = eligible && frame > self.frame[parents[0]];
            if promoted {
                table = FlagTable::of_root(frame, ev.id(), ev.creator());
            } else if root {
                table.insert(ev.id(), ev.creator());
            }
            (frame, root, table)
        };
        self.frame.push(frame);
        self.root.push(is_root);
        self.tables.push(table);
        while self.frames.len() < frame as usize {
            self.frames.push(FrameRecord::default());
        }
        self.frames[frame as usize - 1].events.push(idx);
        let creator = ev.creator();
        let cmax = &mut self.creator_max_frame[creator.index()];
        *cmax = (*cmax).max(frame);
        self.max_frame = self.max_frame.max(frame);
        self.ordered.grow(idx + 1);

        let mut update = Update { frame, is_root, ..Update::default() };
        if let Some(sp) = chain.event_at(idx).self_parent().and_then(|p| chain.index_of(&p)) {
            self.cast_votes(chain, idx, self.frame[sp], frame, is_root);
        }
        if is_root {
            self.register_root(idx, frame);
            if frame >= 4 {
                self.evaluate_times(chain, idx, frame, &mut update)?;
            }
        }
        self.refresh_statuses(chain, &mut update);
        self.close_frames(chain, &mut update);
        Ok(update)
    }

    /// Votes of a creator's event on every frame it is the first to pass.
    fn cast_votes(&mut self, chain: &OperaChain, idx: usize, self_parent_frame: u32, frame: u32, is_root: bool) {
        let creator = chain.event_at(idx).creator();
        for f in self_parent_frame.max(1)..frame {
            let Some(fr) = self.frames.get(f as usize - 1) else { continue };
            for &c in &fr.roots {
                let Some(rec) = self.roots.get_mut(&c) else { continue };
                let yes =
                    is_root && frame == f + 1 && chain.happened_before_idx(c, idx) && !chain.forks_with_in_view(c, idx);
                if yes {
                    rec.yes.insert(creator);
                    rec.yes_voters.push(idx);
                } else {
                    rec.no.insert(creator);
                }
            }
        }
    }

    fn register_root(&mut self, idx: usize, frame: u32) {
        // creators already past this frame voted without seeing this root
        let no = self
            .creator_max_frame
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m > frame)
            .map(|(c, _)| NodeId(c as u32))
            .collect();
        self.frames[frame as usize - 1].roots.push(idx);
        self.roots.insert(
            idx,
            RootRecord {
                status: RootStatus::Candidate,
                yes: BTreeSet::new(),
                no,
                yes_voters: Vec::new(),
                consensus_time: None,
            },
        );
    }

    /// Whether the yes votes for `c` cast by events below `r` form a quorum.
    fn confirms(&self, chain: &OperaChain, r: usize, c: usize) -> bool {
        let rec = &self.roots[&c];
        let creators: BTreeSet<NodeId> = rec
            .yes_voters
            .iter()
            .filter(|&&v| chain.happened_before_idx(v, r))
            .map(|&v| chain.event_at(v).creator())
            .collect();
        supermajority(creators.len(), self.n)
    }

    /// Candidate time of root `r` (frame `f + d`) for root `c` (frame `f`),
    /// and whether `r` fixes it as the consensus time. `prev` gives the times
    /// already held by roots of the previous frame.
    fn root_time(
        &self,
        chain: &OperaChain,
        r: usize,
        c: usize,
        d: u32,
        prev: impl Fn(usize) -> Option<u64>,
    ) -> Option<(u64, bool)> {
        let j = self.frame[r];
        let mut values = Vec::new();
        let mut by_value: BTreeMap<u64, BTreeSet<NodeId>> = BTreeMap::new();
        for &s in self.roots_of(j - 1) {
            if !chain.happened_before_idx(s, r) {
                continue;
            }
            if let Some(t) = prev(s) {
                values.push(t);
                by_value.entry(t).or_default().insert(chain.event_at(s).creator());
            }
        }
        if values.is_empty() {
            return self.confirms(chain, r, c).then(|| (chain.event_at(r).lamport_ts(), false));
        }
        if d.is_multiple_of(self.h) {
            return values.iter().min().map(|&t| (t, false));
        }
        let t = reselect(&values).ok()?;
        Some((t, supermajority(by_value[&t].len(), self.n)))
    }

    fn evaluate_times(
        &mut self,
        chain: &OperaChain,
        r: usize,
        j: u32,
        update: &mut Update,
    ) -> Result<(), ConsensusError> {
        for f in self.closed_upto + 1..=j - 3 {
            let candidates: Vec<usize> = self.roots_of(f).to_vec();
            for c in candidates {
                let status = self.roots[&c].status;
                if matches!(status, RootStatus::Atropos | RootStatus::Rejected) {
                    continue;
                }
                let got = self.root_time(chain, r, c, j - f, |s| self.times.get(&(s, c)).copied());
                if let Some((t, decided)) = got {
                    self.times.insert((r, c), t);
                    if decided {
                        let rec = self.roots.get_mut(&c).unwrap();
                        if rec.status == RootStatus::Candidate {
                            update.new_clotho.push(chain.event_at(c).id());
                        }
                        rec.status = RootStatus::Atropos;
                        rec.consensus_time = Some(t);
                        update.new_atropos.push((chain.event_at(c).id(), t));
                    }
                }
            }
        }
        Ok(())
    }

    fn refresh_statuses(&mut self, chain: &OperaChain, update: &mut Update) {
        for f in self.closed_upto + 1..=self.max_frame {
            for &c in &self.frames[f as usize - 1].roots {
                let Some(rec) = self.roots.get_mut(&c) else { continue };
                if rec.status != RootStatus::Candidate {
                    continue;
                }
                let no_only = rec.no.difference(&rec.yes).count();
                if supermajority(rec.yes.len(), self.n) && self.max_frame >= f + 3 {
                    rec.status = RootStatus::Clotho;
                    update.new_clotho.push(chain.event_at(c).id());
                } else if !supermajority(self.n - no_only, self.n) {
                    rec.status = RootStatus::Rejected;
                    update.rejected.push(chain.event_at(c).id());
                }
            }
        }
    }

    fn close_frames(&mut self, chain: &OperaChain, update: &mut Update) {
        loop {
            let f = self.closed_upto + 1;
            if f as usize > self.frames.len() {
                return;
            }
            let moved = self.creator_max_frame.iter().filter(|&&m| m > f).count();
            if supermajority(self.n - moved, self.n) {
                return;
            }
            let mut atropos = Vec::new();
            for &c in self.roots_of(f) {
                match self.roots.get(&c) {
                    Some(rec) if rec.status == RootStatus::Atropos => {
                        atropos.push((rec.consensus_time.unwrap(), c));
                    }
                    Some(rec) if rec.status == RootStatus::Rejected => {}
                    None => {}
                    _ => return,
                }
            }
            atropos.sort_by_key(|&(t, c)| (t, chain.event_at(c).id()));
            let batch = finalize_batch(chain, &atropos, &mut self.ordered);
            update.newly_ordered += batch.len();
            for key in batch {
                self.order.push(OrderedEvent {
                    position: self.order.len() as u64,
                    event: key.id,
                    atropos_time: key.atropos_time,
                    lamport_ts: key.lamport_ts,
                });
                self.finalized_at.push(self.max_frame);
            }
            for &(t, c) in &atropos {
                self.main_chain.push(MainChainEntry { frame: f, atropos: chain.event_at(c).id(), consensus_time: t });
            }
            let frame_of = &self.frame;
            self.times.retain(|&(_, c), _| frame_of[c] != f);
            self.closed_upto = f;
            update.closed_frames.push(f);
        }
    }

    /// Re-runs the status checks and returns roots newly marked Clotho.
    pub fn select_clotho(&mut self, chain: &OperaChain) -> Vec<EventId> {
        let mut update = Update::default();
        self.refresh_statuses(chain, &mut update);
        update.new_clotho
    }

    /// Recomputes the consensus time of Clotho `c` from scratch, frame by
    /// frame over every root now known. Used to cross-check the incremental
    /// result.
    pub fn replay_consensus_time(&self, chain: &OperaChain, c: &EventId) -> Result<Option<u64>, ConsensusError> {
        let ci = chain.index_of(c).ok_or(ConsensusError::NotClotho(*c))?;
        match self.roots.get(&ci).map(|r| r.status) {
            Some(RootStatus::Clotho | RootStatus::Atropos) => {}
            _ => return Err(ConsensusError::NotClotho(*c)),
        }
        let f = self.frame[ci];
        let mut times: HashMap<usize, u64> = HashMap::new();
        for j in f + 3..=self.max_frame {
            let mut decided = None;
            for &r in self.roots_of(j) {
                if let Some((t, done)) = self.root_time(chain, r, ci, j - f, |s| times.get(&s).copied()) {
                    times.insert(r, t);
                    if done && decided.is_none() {
                        decided = Some(t);
                    }
                }
            }
            if decided.is_some() {
                return Ok(decided);
            }
        }
        Ok(None)
    }

    /// Drops the root bookkeeping of a closed frame. The Main-chain and the
    /// order are kept.
    pub fn prune_checklist(&mut self, frame: u32) -> Result<(), ConsensusError> {
        if frame == 0 || frame > self.closed_upto {
            return Err(ConsensusError::FrameNotFinalized(frame));
        }
        let fr = &mut self.frames[frame as usize - 1];
        for c in fr.roots.drain(..) {
            self.roots.remove(&c);
        }
        fr.pruned = true;
        Ok(())
    }

    pub fn frame_of(&self, idx: usize) -> u32 {
        self.frame[idx]
    }

    pub fn is_root(&self, idx: usize) -> bool {
        self.root[idx]
    }

    pub fn flag_table(&self, idx: usize) -> &FlagTable {
        &self.tables[idx]
    }

    pub fn root_status(&self, idx: usize) -> Option<RootStatus> {
        self.roots.get(&idx).map(|r| r.status)
    }

    pub fn consensus_time(&self, idx: usize) -> Option<u64> {
        self.roots.get(&idx).and_then(|r| r.consensus_time)
    }

    /// Creators that voted yes and no on root `idx`.
    pub fn votes(&self, idx: usize) -> Option<(&BTreeSet<NodeId>, &BTreeSet<NodeId>)> {
        self.roots.get(&idx).map(|r| (&r.yes, &r.no))
    }

    pub fn candidate_time(&self, r: usize, c: usize) -> Option<u64> {
        self.times.get(&(r, c)).copied()
    }

    /// Roots of frame `f` in insertion order; empty once pruned.
    pub fn roots_of(&self, f: u32) -> &[usize] {
        match f {
            0 => &[],
            _ => self.frames.get(f as usize - 1).map_or(&[], |fr| fr.roots.as_slice()),
        }
    }

    pub fn events_of(&self, f: u32) -> &[usize] {
        match f {
            0 => &[],
            _ => self.frames.get(f as usize - 1).map_or(&[], |fr| fr.events.as_slice()),
        }
    }

    pub fn max_frame(&self) -> u32 {
        self.max_frame
    }

    /// Frames `1..=closed_upto()` are closed and ordered.
    pub fn closed_upto(&self) -> u32 {
        self.closed_upto
    }

    pub fn is_ordered(&self, idx: usize) -> bool {
        self.ordered.contains(idx)
    }

    pub fn main_chain(&self) -> &[MainChainEntry] {
        &self.main_chain
    }

    pub fn order(&self) -> &[OrderedEvent] {
        &self.order
    }

    /// Local highest frame at the moment each order entry was appended.
    pub fn finalized_at(&self) -> &[u32] {
        &self.finalized_at
    }
}

/// Assigns every not-yet-ordered ancestor (or self) of the given Atropos to
/// the first Atropos reaching it, and returns the batch in order.
/// `atropos` must be sorted by consensus time, then id.
pub fn finalize_batch(chain: &OperaChain, atropos: &[(u64, usize)], ordered: &mut FixedBitSet) -> Vec<OrderKey> {
    ordered.grow(chain.len());
    let mut batch = Vec::new();
    for &(t, a) in atropos {
        for e in chain.ancestor_bits(a).ones().chain(std::iter::once(a)) {
            if !ordered.put(e) {
                let ev = chain.event_at(e);
                batch.push(OrderKey { atropos_time: t, lamport_ts: ev.lamport_ts(), id: ev.id() });
            }
        }
    }
    batch.sort();
    batch
}

#[cfg(test)]
mod tests;
