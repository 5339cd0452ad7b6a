//! The discrete-tick scheduler and the node actors it drives.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lachesis_core::consensus::Update;
use lachesis_core::node::Node;
use lachesis_core::peering::{child_event, event_diff, select_peers_excluding, SyncMessage};
use lachesis_core::{EventBlock, EventId, NodeId};

use crate::audit::{audit_views, Auditor, NodeView};
use crate::config::{Behavior, Latency, SimConfig};
use crate::report::{Detection, StatsRow};

#[derive(Debug, Clone)]
pub enum Payload {
    /// A node's turn to start a gossip round.
    Wakeup,
    Request(SyncMessage),
    Response(SyncMessage),
    /// Unsolicited events: the initial leaf exchange and optional broadcast.
    Push(Vec<EventBlock>),
}

impl Payload {
    fn kind(&self) -> &'static str {
        match self {
            Payload::Wakeup => "wakeup",
            Payload::Request(_) => "request",
            Payload::Response(_) => "response",
            Payload::Push(_) => "push",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheduled {
    pub tick: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub seq: u64,
    pub payload: Payload,
}

impl Scheduled {
    fn key(&self) -> (u64, NodeId, NodeId, u64) {
        (self.tick, self.from, self.to, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tick: u64,
    pub kind: String,
    pub from: NodeId,
    pub to: NodeId,
    pub events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<EventId>,
}

/// The two children of one fork and the peers each was shown to.
#[derive(Debug, Clone)]
struct ForkSplit {
    kept: EventId,
    hidden: EventId,
    kept_side: BTreeSet<NodeId>,
}

#[derive(Debug, Clone)]
struct Session {
    peers: Vec<NodeId>,
    awaiting: usize,
}

#[derive(Debug, Clone)]
pub struct Actor {
    pub node: Node,
    pub behavior: Option<Behavior>,
    rng: ChaCha8Rng,
    session: Option<Session>,
    /// Engaged as a responder.
    serving: usize,
    /// The branch a forker keeps extending.
    tip: Option<EventId>,
    forks: Vec<ForkSplit>,
    tx_counter: u64,
    /// Chain length when forks were last scanned.
    scanned: usize,
    /// Sessions completed.
    rounds: u64,
    /// Failed to find idle peers since its last session.
    waiting: bool,
}

impl Actor {
    fn busy(&self) -> bool {
        self.session.is_some() || self.serving > 0
    }

    fn honest(&self) -> bool {
        self.behavior.is_none()
    }
}

/// Per-node stream: ChaCha8 keyed by SHA-256 of the run seed and node id.
pub fn node_rng(seed: u64, node: NodeId) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(node.0.to_be_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub struct World {
    pub config: SimConfig,
    pub now: u64,
    pub actors: Vec<Actor>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    pub created: usize,
    pub auditor: Auditor,
    pub snapshot_violations: Vec<crate::audit::Violation>,
    since_audit: usize,
    trace: Option<Vec<TraceEntry>>,
    trace_hash: Sha256,
    pub detections: Vec<Detection>,
    pub stats: Vec<StatsRow>,
}

impl World {
    pub fn new(config: SimConfig, keep_trace: bool) -> Self {
        let actors = (0..config.n as u32)
            .map(NodeId)
            .map(|id| Actor {
                node: Node::new(id, config.n, config.k, config.h),
                behavior: config.behavior(id),
                rng: node_rng(config.seed, id),
                session: None,
                serving: 0,
                tip: None,
                forks: Vec::new(),
                tx_counter: 0,
                scanned: 0,
                rounds: 0,
                waiting: false,
            })
            .collect();
        let mut world = World {
            config,
            now: 0,
            actors,
            queue: BinaryHeap::new(),
            next_seq: 0,
            created: 0,
            auditor: Auditor::new(),
            snapshot_violations: Vec::new(),
            since_audit: 0,
            trace: keep_trace.then(Vec::new),
            trace_hash: Sha256::new(),
            detections: Vec::new(),
            stats: Vec::new(),
        };
        world.start();
        world
    }

    /// Every non-silent node creates its leaf and shows it to everyone.
    fn start(&mut self) {
        for i in 0..self.actors.len() {
            if self.actors[i].behavior == Some(Behavior::Silent) {
                continue;
            }
            let payload = self.payload(i);
            let (leaf, update) = self.actors[i].node.create_event(&[], payload).expect("fresh node makes a leaf");
            self.actors[i].tip = Some(leaf.id());
            self.after_change(i, &[update]);
            self.note_created(i, &leaf);
            let me = NodeId(i as u32);
            for j in 0..self.actors.len() {
                if j != i {
                    self.send(me, NodeId(j as u32), Payload::Push(vec![leaf.clone()]));
                }
            }
            self.schedule(me, me, 1, Payload::Wakeup);
        }
    }

    fn max_ticks(&self) -> u64 {
        self.config.max_ticks.unwrap_or(50 * self.config.target_events as u64 + 1_000)
    }

    fn creating(&self) -> bool {
        self.created < self.config.target_events && self.now < self.max_ticks()
    }

    fn schedule(&mut self, from: NodeId, to: NodeId, tick: u64, payload: Payload) {
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { tick, from, to, seq: self.next_seq, payload }));
    }

    fn send(&mut self, from: NodeId, to: NodeId, payload: Payload) {
        let rng = &mut self.actors[from.index()].rng;
        let delay = match self.config.latency {
            Latency::Fixed { ticks } => ticks,
            Latency::Uniform { lo, hi } => rng.random_range(lo..=hi),
        };
        let tick = self.now + delay.max(1);
        self.schedule(from, to, tick, payload);
    }

    fn log(&mut self, kind: &str, from: NodeId, to: NodeId, events: usize, event: Option<EventId>) {
        let entry = TraceEntry { tick: self.now, kind: kind.to_string(), from, to, events, event };
        let line = serde_json::to_string(&entry).expect("trace entries serialize");
        self.trace_hash.update(line.as_bytes());
        self.trace_hash.update(b"\n");
        if let Some(t) = &mut self.trace {
            t.push(entry);
        }
    }

    fn payload(&mut self, i: usize) -> Vec<u8> {
        let actor = &mut self.actors[i];
        let mut out = Vec::with_capacity(8 * self.config.tx_per_event as usize);
        for _ in 0..self.config.tx_per_event {
            out.extend_from_slice(&((u64::from(actor.node.id().0) << 32) | actor.tx_counter).to_be_bytes());
            actor.tx_counter += 1;
        }
        out
    }

    fn note_created(&mut self, i: usize, ev: &EventBlock) {
        self.created += 1;
        self.since_audit += 1;
        if self.since_audit >= self.config.audit_every.unwrap_or(50) {
            self.since_audit = 0;
            self.snapshot_audit();
        }
        let me = NodeId(i as u32);
        self.log("create", me, me, 1, Some(ev.id()));
        let n = self.config.n;
        if self.created.is_multiple_of(n) {
            self.record_stats((self.created / n) as u64);
        }
    }

    fn record_stats(&mut self, round: u64) {
        let Some(a) = self.actors.iter().find(|a| a.honest()) else { return };
        let cs = a.node.consensus();
        let mut roots = 0;
        let mut clothos = 0;
        for f in 1..=cs.max_frame() {
            for &r in cs.roots_of(f) {
                roots += 1;
                if matches!(
                    cs.root_status(r),
                    Some(lachesis_core::RootStatus::Clotho | lachesis_core::RootStatus::Atropos)
                ) {
                    clothos += 1;
                }
            }
        }
        self.stats.push(StatsRow {
            round,
            frames: cs.max_frame(),
            roots,
            clothos,
            atropos: cs.main_chain().len(),
            finalized: cs.order().len(),
        });
    }

    /// Audits an honest node after it changed and notes fork detections.
    fn after_change(&mut self, i: usize, updates: &[Update]) {
        let actor = &mut self.actors[i];
        if !actor.honest() {
            return;
        }
        let id = actor.node.id();
        for u in updates {
            self.auditor.record(id, u);
        }
        self.auditor.observe(&actor.node);
        let chain = actor.node.chain();
        let frame = actor.node.consensus().max_frame();
        for idx in actor.scanned..chain.len() {
            let ev = chain.event_at(idx);
            if !chain.forked_creators().contains(&ev.creator()) {
                continue;
            }
            let Some(sp) = ev.self_parent().and_then(|sp| chain.index_of(&sp)) else { continue };
            for &sib in chain.child_indices(sp) {
                let other = chain.event_at(sib);
                if sib < idx && other.creator() == ev.creator() && other.self_parent() == ev.self_parent() {
                    let (x, y) = (ev.id(), other.id());
                    let pair = (x.min(y), x.max(y));
                    self.detections.push(Detection { node: id, creator: ev.creator(), pair, frame });
                }
            }
        }
        actor.scanned = chain.len();
    }

    pub fn snapshot_audit(&mut self) {
        let views: Vec<NodeView> =
            self.actors.iter().filter(|a| a.honest()).map(|a| NodeView::capture(&a.node)).collect();
        for v in audit_views(&views) {
            if !self.snapshot_violations.contains(&v) {
                self.snapshot_violations.push(v);
            }
        }
    }

    fn receive(&mut self, i: usize, events: Vec<EventBlock>) {
        let got = self.actors[i].node.receive(events).expect("consensus state stays valid");
        let updates: Vec<Update> = got.inserted.into_iter().map(|(_, u)| u).collect();
        if !updates.is_empty() {
            self.after_change(i, &updates);
        }
    }

    /// Delivers the earliest message. Returns false once the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(Reverse(msg)) = self.queue.pop() else { return false };
        self.now = msg.tick;
        let (from, to) = (msg.from, msg.to);
        let count = match &msg.payload {
            Payload::Response(m) | Payload::Request(m) => m.events.len(),
            Payload::Push(evs) => evs.len(),
            Payload::Wakeup => 0,
        };
        self.log(msg.payload.kind(), from, to, count, None);
        let i = to.index();
        if self.actors[i].behavior == Some(Behavior::Silent) {
            return true;
        }
        match msg.payload {
            Payload::Wakeup => self.wakeup(i),
            Payload::Request(req) => {
                let mut resp = self.actors[i].node.answer(&req);
                self.hide_branches(i, from, &mut resp.events);
                self.send(to, from, Payload::Response(resp));
            }
            Payload::Response(resp) => {
                self.receive(i, resp.events);
                // the returned known map tells the requester what to send back
                let mut back = event_diff(self.actors[i].node.chain(), &resp.known);
                self.hide_branches(i, from, &mut back);
                if !back.is_empty() {
                    self.send(to, from, Payload::Push(back));
                }
                self.actors[from.index()].serving -= 1;
                let session = self.actors[i].session.as_mut().expect("response without a session");
                session.awaiting -= 1;
                if session.awaiting == 0 {
                    let peers = self.actors[i].session.take().unwrap().peers;
                    self.actors[i].rounds += 1;
                    if self.creating() {
                        self.create(i, &peers);
                        self.schedule(to, to, self.now + 1, Payload::Wakeup);
                    }
                }
            }
            Payload::Push(events) => self.receive(i, events),
        }
        true
    }

    fn wakeup(&mut self, i: usize) {
        if !self.creating() {
            return;
        }
        let me = NodeId(i as u32);
        if self.actors[i].busy() {
            self.schedule(me, me, self.now + 1, Payload::Wakeup);
            return;
        }
        // waiters that have had fewer rounds go first and are not picked
        let rank = |a: &Actor| (a.rounds, a.node.id());
        let mine = rank(&self.actors[i]);
        let busy: BTreeSet<NodeId> =
            self.actors.iter().filter(|a| a.busy() || (a.waiting && rank(a) < mine)).map(|a| a.node.id()).collect();
        let actor = &mut self.actors[i];
        let picked = select_peers_excluding(actor.node.book(), me, self.config.k, &busy, &mut actor.rng);
        let Ok(peers) = picked else {
            // too few idle known peers: try again next tick
            actor.waiting = true;
            self.schedule(me, me, self.now + 1, Payload::Wakeup);
            return;
        };
        self.actors[i].waiting = false;
        self.actors[i].session = Some(Session { peers: peers.clone(), awaiting: peers.len() });
        for &p in &peers {
            self.actors[p.index()].serving += 1;
            let req = self.actors[i].node.sync_request(p);
            self.send(me, p, Payload::Request(req));
        }
    }

    fn create(&mut self, i: usize, peers: &[NodeId]) {
        let payload = self.payload(i);
        let node = &self.actors[i].node;
        let tops: Vec<EventId> =
            peers.iter().map(|&p| node.chain().head(p).expect("selected peers have a known top").id()).collect();
        match self.actors[i].behavior {
            None => {
                let (ev, update) = self.actors[i].node.create_event(&tops, payload).expect("tops are current");
                self.after_change(i, &[update]);
                self.note_created(i, &ev);
                if self.config.broadcast {
                    let me = NodeId(i as u32);
                    for j in 0..self.actors.len() {
                        if j != i {
                            self.send(me, NodeId(j as u32), Payload::Push(vec![ev.clone()]));
                        }
                    }
                }
            }
            Some(behavior) => self.create_byzantine(i, behavior, &tops, payload),
        }
    }

    fn create_byzantine(&mut self, i: usize, behavior: Behavior, tops: &[EventId], payload: Vec<u8>) {
        let actor = &mut self.actors[i];
        let chain = actor.node.chain();
        let tip = chain.get(&actor.tip.expect("forker has a leaf")).unwrap().clone();
        let seq = tip.seq() + 1;
        let fork_now = match behavior {
            Behavior::ForkOnce { at_seq } => seq == at_seq,
            Behavior::ForkEvery { m } => seq.is_multiple_of(m),
            Behavior::Silent => unreachable!("silent nodes never create"),
        };
        let kept = child_event(chain, &tip, tops, payload.clone());
        actor.node.insert(kept.clone()).expect("forker extends its own tip");
        actor.tip = Some(kept.id());
        self.note_created(i, &kept);
        if !fork_now {
            return;
        }
        let actor = &mut self.actors[i];
        let mut twin_payload = payload;
        twin_payload.extend_from_slice(b"fork");
        let hidden = child_event(actor.node.chain(), &tip, tops, twin_payload);
        actor.node.insert(hidden.clone()).expect("both children share a present self-parent");
        let mut others: Vec<NodeId> = (0..self.config.n as u32).map(NodeId).filter(|&p| p.index() != i).collect();
        others.shuffle(&mut actor.rng);
        let kept_side: BTreeSet<NodeId> = others[..others.len() / 2].iter().copied().collect();
        actor.forks.push(ForkSplit { kept: kept.id(), hidden: hidden.id(), kept_side: kept_side.clone() });
        self.note_created(i, &hidden);
        let me = NodeId(i as u32);
        self.log("fork", me, me, 2, Some(hidden.id()));
        for p in others {
            let child = if kept_side.contains(&p) { kept.clone() } else { hidden.clone() };
            self.send(me, p, Payload::Push(vec![child]));
        }
    }

    /// A forker shows each peer one child of every fork. Later events go to
    /// everyone, so peers that got the twin must fetch the kept child from
    /// someone else.
    fn hide_branches(&self, i: usize, to: NodeId, events: &mut Vec<EventBlock>) {
        let actor = &self.actors[i];
        if actor.forks.is_empty() {
            return;
        }
        events.retain(|ev| {
            actor.forks.iter().all(|f| if f.kept_side.contains(&to) { ev.id() != f.hidden } else { ev.id() != f.kept })
        });
    }

    /// Runs until creation stops and every message is delivered.
    pub fn run_to_quiescence(&mut self) {
        while self.step() {}
    }

    /// Honest nodes pull from each other until no one learns anything new.
    pub fn converge(&mut self) {
        let honest: Vec<usize> = (0..self.actors.len()).filter(|&i| self.actors[i].honest()).collect();
        loop {
            let mut progress = false;
            for &a in &honest {
                for &b in &honest {
                    if a == b {
                        continue;
                    }
                    let req = self.actors[a].node.sync_request(NodeId(b as u32));
                    let resp = self.actors[b].node.answer(&req);
                    let before = self.actors[a].node.chain().len();
                    let (from, to) = (NodeId(b as u32), NodeId(a as u32));
                    self.log("drain", from, to, resp.events.len(), None);
                    self.receive(a, resp.events);
                    progress |= self.actors[a].node.chain().len() > before;
                }
            }
            if !progress {
                return;
            }
        }
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn trace_hash(&self) -> String {
        hex::encode(self.trace_hash.clone().finalize())
    }

    pub fn pending(&self) -> BTreeMap<NodeId, usize> {
        self.actors.iter().map(|a| (a.node.id(), a.node.pending_len())).collect()
    }
}
