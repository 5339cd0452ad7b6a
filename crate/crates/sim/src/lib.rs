//! Deterministic multi-node simulation of the Lachesis protocol.
//!
//! Nodes gossip over reliable channels with delays measured in ticks. Each
//! round a node picks peers by cost, pulls their missing events, and creates
//! a new event on top of their tops. Byzantine nodes may stay silent or fork
//! their own chain. Every honest state change is audited for cross-node
//! agreement.

pub mod audit;
pub mod config;
pub mod report;
pub mod world;

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use lachesis_core::id::HASH_NAME;
use lachesis_core::{EventId, NodeId, OperaChain, RootStatus};

pub use audit::{audit_views, Auditor, NodeView, Violation, ViolationKind};
pub use config::{Adversary, Behavior, ConfigError, Latency, SimConfig};
pub use report::{Detection, ForkRecord, Liveness, NodeReport, SimReport, StatsRow};
pub use world::{TraceEntry, World};

/// Events more than this many frames below the top must be finalized.
pub const FINALITY_WINDOW: u32 = 3;

pub fn run(config: &SimConfig) -> Result<SimReport, ConfigError> {
    Ok(run_traced(config, false)?.0)
}

/// Like [`run`], also returning the trace when `keep_trace` is set, and the
/// final world for inspection.
pub fn run_traced(config: &SimConfig, keep_trace: bool) -> Result<(SimReport, World), ConfigError> {
    config.validate()?;
    let mut world = World::new(config.clone(), keep_trace);
    world.run_to_quiescence();
    world.converge();
    world.snapshot_audit();
    let report = build_report(&world);
    Ok((report, world))
}

fn order_digest(order: &[EventId]) -> String {
    let mut h = Sha256::new();
    for id in order {
        h.update(id.as_bytes());
    }
    hex::encode(h.finalize())
}

fn build_report(world: &World) -> SimReport {
    let honest: Vec<&lachesis_core::node::Node> =
        world.actors.iter().filter(|a| a.behavior.is_none()).map(|a| &a.node).collect();
    let mut nodes = Vec::new();
    let mut orders = BTreeMap::new();
    let mut main_chains = BTreeMap::new();
    for actor in &world.actors {
        let node = &actor.node;
        let cs = node.consensus();
        let mut counts = [0usize; 4];
        for f in 1..=cs.max_frame() {
            for &r in cs.roots_of(f) {
                counts[0] += 1;
                match cs.root_status(r) {
                    Some(RootStatus::Clotho) => counts[1] += 1,
                    Some(RootStatus::Atropos) => {
                        counts[1] += 1;
                        counts[2] += 1
                    }
                    Some(RootStatus::Rejected) => counts[3] += 1,
                    _ => {}
                }
            }
        }
        let order: Vec<EventId> = cs.order().iter().map(|o| o.event).collect();
        nodes.push(NodeReport {
            node: node.id(),
            honest: actor.behavior.is_none(),
            events: node.chain().len(),
            pending: node.pending_len(),
            frames: cs.max_frame(),
            closed_frames: cs.closed_upto(),
            roots: counts[0],
            clothos: counts[1],
            atropos: counts[2],
            rejected: counts[3],
            finalized: order.len(),
            order_digest: order_digest(&order),
        });
        orders.insert(node.id(), order);
        main_chains.insert(node.id(), cs.main_chain().to_vec());
    }

    let (forks, fork_clothos) = fork_records(&honest);
    let mut violations = world.auditor.violations().to_vec();
    for v in &world.snapshot_violations {
        if !violations.contains(v) {
            violations.push(v.clone());
        }
    }

    SimReport {
        hash_fn: HASH_NAME.to_string(),
        config: world.config.clone(),
        ticks: world.now,
        events_created: world.created,
        nodes,
        orders,
        main_chains,
        forks,
        detections: world.detections.clone(),
        fork_clothos,
        violations,
        liveness: liveness(&honest),
        stats: world.stats.clone(),
        trace_hash: world.trace_hash(),
    }
}

fn liveness(honest: &[&lachesis_core::node::Node]) -> Liveness {
    let mut out = Liveness::default();
    for node in honest {
        let cs = node.consensus();
        for (o, &at) in cs.order().iter().zip(cs.finalized_at()) {
            let idx = node.chain().index_of(&o.event).unwrap();
            out.max_lag = out.max_lag.max(at - cs.frame_of(idx));
        }
        let top = cs.max_frame();
        for idx in 0..node.chain().len() {
            let f = cs.frame_of(idx);
            if f + FINALITY_WINDOW <= top && !cs.is_ordered(idx) {
                out.unfinalized_below_cutoff += 1;
                out.deepest_unfinalized = out.deepest_unfinalized.max(top - f);
            }
        }
    }
    out
}

/// Children of one self-parent by the same creator, as insertion indices.
fn sibling_forks(chain: &OperaChain, creator: NodeId) -> Vec<Vec<usize>> {
    let mut by_parent: BTreeMap<EventId, Vec<usize>> = BTreeMap::new();
    for &i in chain.events_by(creator) {
        if let Some(sp) = chain.event_at(i).self_parent() {
            by_parent.entry(sp).or_default().push(i);
        }
    }
    by_parent.into_values().filter(|k| k.len() > 1).collect()
}

/// Sibling forks seen by the best-informed honest node, plus every sibling
/// fork event any honest node accepted as Clotho.
fn fork_records(honest: &[&lachesis_core::node::Node]) -> (Vec<ForkRecord>, Vec<(NodeId, EventId)>) {
    let Some(best) = honest.iter().max_by_key(|n| (n.chain().len(), std::cmp::Reverse(n.id()))) else {
        return (Vec::new(), Vec::new());
    };
    let chain: &OperaChain = best.chain();
    let cs = best.consensus();
    let mut records = Vec::new();
    let mut members: BTreeSet<EventId> = BTreeSet::new();
    for node in honest {
        for &c in node.chain().forked_creators() {
            for kids in sibling_forks(node.chain(), c) {
                members.extend(kids.iter().map(|&i| node.chain().event_at(i).id()));
            }
        }
    }
    for &c in chain.forked_creators() {
        for kids in sibling_forks(chain, c) {
            for (a, &x) in kids.iter().enumerate() {
                for &y in &kids[a + 1..] {
                    let first_root_frame = (1..=cs.max_frame()).find(|&f| {
                        cs.roots_of(f)
                            .iter()
                            .any(|&r| chain.happened_before_idx(x, r) && chain.happened_before_idx(y, r))
                    });
                    let (xi, yi) = (chain.event_at(x).id(), chain.event_at(y).id());
                    let holders = honest.iter().filter(|n| n.chain().contains(&xi) && n.chain().contains(&yi)).count();
                    records.push(ForkRecord {
                        creator: c,
                        pair: (xi.min(yi), xi.max(yi)),
                        member_frame: cs.frame_of(x).max(cs.frame_of(y)),
                        first_root_frame,
                        holders,
                    });
                }
            }
        }
    }
    let mut accepted = Vec::new();
    for node in honest {
        for id in &members {
            if let Some(i) = node.chain().index_of(id) {
                if matches!(node.consensus().root_status(i), Some(RootStatus::Clotho | RootStatus::Atropos)) {
                    accepted.push((node.id(), *id));
                }
            }
        }
    }
    (records, accepted)
}
