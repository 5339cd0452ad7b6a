use std::path::Path;

use serde::{Deserialize, Serialize};

use lachesis_core::NodeId;

/// One-way message delay in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Latency {
    Fixed { ticks: u64 },
    Uniform { lo: u64, hi: u64 },
}

impl Default for Latency {
    fn default() -> Self {
        Latency::Uniform { lo: 1, hi: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Never creates an event, not even a leaf.
    Silent,
    /// Forks once, when creating the event with sequence number `at_seq`.
    ForkOnce {
        #[serde(default = "default_fork_seq")]
        at_seq: u64,
    },
    /// Forks on every `m`-th own event.
    ForkEvery { m: u64 },
}

fn default_fork_seq() -> u64 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adversary {
    pub node: NodeId,
    pub behavior: Behavior,
}

/// A seeded run. Runs stop once `target_events` events exist (leaves
/// included) or the clock reaches `max_ticks`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_h")]
    pub h: u32,
    #[serde(default)]
    pub seed: u64,
    pub target_events: usize,
    #[serde(default)]
    pub max_ticks: Option<u64>,
    #[serde(default)]
    pub latency: Latency,
    #[serde(default)]
    pub adversaries: Vec<Adversary>,
    /// Synthetic transactions batched into each event.
    #[serde(default)]
    pub tx_per_event: u32,
    /// Push every new event to all nodes after creating it.
    #[serde(default)]
    pub broadcast: bool,
    #[serde(default)]
    pub allow_unsafe: bool,
    /// Created events between full snapshot audits. Defaults to 50.
    #[serde(default)]
    pub audit_every: Option<usize>,
}

fn default_h() -> u32 {
    lachesis_core::consensus::DEFAULT_RESELECT_PERIOD
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl SimConfig {
    /// An honest run with default latency.
    pub fn honest(n: usize, k: usize, target_events: usize, seed: u64) -> Self {
        SimConfig {
            n,
            k,
            h: default_h(),
            seed,
            target_events,
            max_ticks: None,
            latency: Latency::default(),
            adversaries: Vec::new(),
            tx_per_event: 0,
            broadcast: false,
            allow_unsafe: false,
            audit_every: None,
        }
    }

    /// Reads JSON, or TOML when the file name ends in `.toml`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let config: SimConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text)?
        } else {
            serde_json::from_str(&text)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n < 2 {
            return bad(format!("n = {} but at least 2 nodes are needed", self.n));
        }
        if self.k < 2 || self.k > self.n {
            return bad(format!("k = {} must lie in 2..={}", self.k, self.n));
        }
        if self.h == 0 {
            return bad("h must be positive".into());
        }
        if let Latency::Uniform { lo, hi } = self.latency {
            if lo > hi {
                return bad(format!("latency range {lo}..{hi} is empty"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.adversaries {
            if a.node.index() >= self.n {
                return bad(format!("adversary {} is not a node", a.node));
            }
            if !seen.insert(a.node) {
                return bad(format!("adversary {} listed twice", a.node));
            }
            if let Behavior::ForkEvery { m: 0 } = a.behavior {
                return bad("fork_every needs m >= 1".into());
            }
        }
        let limit = (self.n - 1) / 3;
        if self.adversaries.len() > limit && !self.allow_unsafe {
            return bad(format!(
                "{} adversaries exceed the tolerated {limit}; set allow_unsafe to run anyway",
                self.adversaries.len()
            ));
        }
        if self.audit_every == Some(0) {
            return bad("audit_every must be positive".into());
        }
        Ok(())
    }

    pub fn behavior(&self, node: NodeId) -> Option<Behavior> {
        self.adversaries.iter().find(|a| a.node == node).map(|a| a.behavior)
    }

    pub fn is_honest(&self, node: NodeId) -> bool {
        self.behavior(node).is_none()
    }

    pub fn honest_nodes(&self) -> Vec<NodeId> {
        (0..self.n as u32).map(NodeId).filter(|&v| self.is_honest(v)).collect()
    }
}
