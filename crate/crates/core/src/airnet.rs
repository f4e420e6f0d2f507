//! UAV nodes, air-to-air links, latency arithmetic and failure schedules.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

pub const DEFAULT_ALTITUDE_M: f64 = 100.0;
pub const DEFAULT_SPACING_M: (f64, f64) = (80.0, 120.0);
pub const DEFAULT_CPU_RANGE_HZ: (f64, f64) = (1e9, 2e9);
pub const DEFAULT_CYCLES_PER_SAMPLE: f64 = 6e4;

#[derive(Debug, Clone, PartialEq)]
pub struct UavNode {
    pub id: NodeId,
    pub position: [f64; 3],
    pub cpu_freq: f64,
    pub cycles_per_sample: f64,
    pub alive: bool,
}

/// Link parameters. The gain is a flat value in dB, independent of distance;
/// the noise figure is the total noise power over the allocated band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub tx_power_dbm: f64,
    pub channel_gain_db: f64,
    pub noise_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub payload_bits: u64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            tx_power_dbm: 30.0,
            channel_gain_db: -50.0,
            noise_power_dbm: -90.0,
            bandwidth_hz: 4e5,
            payload_bits: 56_000,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("channel_gain_db", self.channel_gain_db),
            ("noise_power_dbm", self.noise_power_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("channel.{name}"), "must be finite"));
            }
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::config("channel.bandwidth_hz", "must be a finite number > 0"));
        }
        if self.payload_bits == 0 {
            return Err(Error::config("channel.payload_bits", "must be > 0"));
        }
        Ok(())
    }
}

/// Undirected link, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge(NodeId, NodeId);

impl Edge {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn ends(&self) -> (NodeId, NodeId) {
        (self.0, self.1)
    }

    pub fn touches(&self, id: NodeId) -> bool {
        self.0 == id || self.1 == id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<UavNode>,
    pub edges: BTreeSet<Edge>,
    pub server_id: Option<NodeId>,
}

impl Topology {
    /// Builds and validates a topology; `edges` may list pairs in any order.
    pub fn new(
        nodes: Vec<UavNode>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        server_id: Option<NodeId>,
    ) -> Result<Self> {
        let ids: BTreeSet<NodeId> = nodes.iter().map(|n| n.id).collect();
        if ids.len() != nodes.len() {
            return Err(Error::config("topology.num_uavs", "duplicate node ids"));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::config("topology.edges", format!("self-loop on node {a}")));
            }
            if !ids.contains(&a) || !ids.contains(&b) {
                return Err(Error::config(
                    "topology.edges",
                    format!("edge ({a}, {b}) names an unknown node"),
                ));
            }
            set.insert(Edge::new(a, b));
        }
        if let Some(s) = server_id {
            if !ids.contains(&s) {
                return Err(Error::config("topology.server", format!("server {s} is not a node")));
            }
        }
        Ok(Topology {
            nodes,
            edges: set,
            server_id,
        })
    }

    pub fn node(&self, id: NodeId) -> Option<&UavNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.node(id).is_some_and(|n| n.alive)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&Edge::new(a, b))
    }

    /// Neighbors of `id` over usable edges, ascending.
    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter_map(|e| match e.ends() {
                (a, b) if a == id => Some(b),
                (a, b) if b == id => Some(a),
                _ => None,
            })
            .filter(|&n| self.is_alive(n))
            .collect()
    }

    /// Same topology restricted to edges whose both ends are in `keep`.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> Topology {
        Topology {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep.contains(&e.0) && keep.contains(&e.1))
                .copied()
                .collect(),
            server_id: self.server_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureTarget {
    Node(NodeId),
    Edge(NodeId, NodeId),
}

/// Outage over rounds `start_round..=end_round` (open-ended when `None`).
/// Rounds are counted from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FailureEvent {
    pub target: FailureTarget,
    pub start_round: usize,
    pub end_round: Option<usize>,
}

impl FailureEvent {
    pub fn covers(&self, round: usize) -> bool {
        round >= self.start_round && self.end_round.is_none_or(|end| round <= end)
    }
}

pub fn dbm_to_watt(x_dbm: f64) -> f64 {
    10f64.powf((x_dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn snr(ch: &ChannelParams) -> f64 {
    dbm_to_watt(ch.tx_power_dbm) * db_to_linear(ch.channel_gain_db) / dbm_to_watt(ch.noise_power_dbm)
}

/// Shannon capacity of one link, bits per second.
pub fn link_rate(ch: &ChannelParams) -> f64 {
    ch.bandwidth_hz * (1.0 + snr(ch)).log2()
}

pub fn tx_latency(payload_bits: u64, rate: f64) -> f64 {
    payload_bits as f64 / rate
}

pub fn compute_latency(num_samples: usize, local_epochs: usize, cycles_per_sample: f64, cpu_freq: f64) -> f64 {
    (num_samples * local_epochs) as f64 * cycles_per_sample / cpu_freq
}

/// Positions at fixed altitude along a closed polygonal ring: each step
/// turns by `2*pi/n` and has a length drawn from `spacing_m`, so every pair
/// of consecutive ids lies within that range. Positions are reporting
/// metadata only; the channel does not depend on them.
pub fn place_uavs<R: Rng + ?Sized>(n: usize, spacing_m: (f64, f64), altitude_m: f64, rng: &mut R) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(n);
    let (mut x, mut y) = (0.0, 0.0);
    for k in 0..n {
        out.push([x, y, altitude_m]);
        let step = if spacing_m.1 > spacing_m.0 {
            rng.random_range(spacing_m.0..=spacing_m.1)
        } else {
            spacing_m.0
        };
        let heading = 2.0 * PI * k as f64 / n as f64;
        x += step * heading.cos();
        y += step * heading.sin();
    }
    out
}

/// Topology as seen during `round`: failed nodes dead, failed edges and
/// every edge touching a dead node removed.
pub fn effective_topology(topology: &Topology, failures: &[FailureEvent], round: usize) -> Topology {
    let mut out = topology.clone();
    for f in failures.iter().filter(|f| f.covers(round)) {
        match f.target {
            FailureTarget::Node(id) => {
                if let Some(n) = out.nodes.iter_mut().find(|n| n.id == id) {
                    n.alive = false;
                }
            }
            FailureTarget::Edge(a, b) => {
                out.edges.remove(&Edge::new(a, b));
            }
        }
    }
    let dead: BTreeSet<NodeId> = out.nodes.iter().filter(|n| !n.alive).map(|n| n.id).collect();
    out.edges.retain(|e| !dead.contains(&e.0) && !dead.contains(&e.1));
    out
}
