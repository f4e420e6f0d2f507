//! Experiment configuration: a TOML file with the flat sections
//! `[scheme]`, `[topology]`, `[channel]`, `[training]`, `[data]` and
//! `[failures]`. Every key is optional; omitted keys take the defaults of
//! the reference UAV setup. Unknown keys are rejected.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::airnet::{
    ChannelParams, FailureEvent, FailureTarget, NodeId, DEFAULT_ALTITUDE_M, DEFAULT_CPU_RANGE_HZ,
    DEFAULT_CYCLES_PER_SAMPLE, DEFAULT_SPACING_M,
};
use crate::datagen::DataConfig;
use crate::error::{Error, Result};
use crate::model::{MlpArchitecture, TrainingConfig};
use crate::protocol::{AccessMode, MixingRule, Scheme, SendMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: Scheme,
    pub max_rounds: usize,
    pub seed: u64,
    pub access_mode: AccessMode,
    pub mixing: MixingRule,
    pub send_mode: SendMode,
    /// Start every decentralized UAV from the same initial model.
    pub shared_init: bool,
    /// Stop early once the average loss settles; unset runs the full budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_epsilon: Option<f64>,
    pub convergence_window: usize,
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            kind: Scheme::Dfl,
            max_rounds: 60,
            seed: 1,
            access_mode: AccessMode::default(),
            mixing: MixingRule::default(),
            send_mode: SendMode::default(),
            shared_init: false,
            convergence_epsilon: None,
            convergence_window: 5,
        }
    }
}

/// Node ids are `1..=num_uavs`. `server = 0` means no parameter server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub num_uavs: u32,
    pub server: NodeId,
    pub edges: Vec<[NodeId; 2]>,
    /// Explicit per-node CPU frequencies; empty draws them from `cpu_range_hz`.
    pub cpu_freq_hz: Vec<f64>,
    pub cpu_range_hz: [f64; 2],
    pub cycles_per_sample: f64,
    pub altitude_m: f64,
    pub spacing_m: [f64; 2],
}

/// Six UAVs. UAV 1 is the parameter server, linked to everyone; UAVs 2-6
/// share a ring of direct links plus the chord 2-4.
pub fn default_edges() -> Vec<[NodeId; 2]> {
    let mut e: Vec<[NodeId; 2]> = (2..=6).map(|k| [1, k]).collect();
    e.extend([[2, 3], [3, 4], [4, 5], [5, 6], [2, 6], [2, 4]]);
    e
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection {
            num_uavs: 6,
            server: 1,
            edges: default_edges(),
            cpu_freq_hz: Vec::new(),
            cpu_range_hz: [DEFAULT_CPU_RANGE_HZ.0, DEFAULT_CPU_RANGE_HZ.1],
            cycles_per_sample: DEFAULT_CYCLES_PER_SAMPLE,
            altitude_m: DEFAULT_ALTITUDE_M,
            spacing_m: [DEFAULT_SPACING_M.0, DEFAULT_SPACING_M.1],
        }
    }
}

impl TopologySection {
    pub fn server_id(&self) -> Option<NodeId> {
        (self.server != 0).then_some(self.server)
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        (1..=self.num_uavs).collect()
    }

    /// Data-holding UAVs: every node except the server.
    pub fn participants(&self) -> Vec<NodeId> {
        self.node_ids()
            .into_iter()
            .filter(|&id| Some(id) != self.server_id())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        TrainingSection {
            learning_rate: t.learning_rate,
            local_epochs: t.local_epochs,
            batch_size: t.batch_size,
            hidden_dims: MlpArchitecture::default().hidden_dims,
        }
    }
}

/// One outage: exactly one of `node` or `edge`, from round `start`
/// (0-based) through `end` inclusive, or forever when `end` is unset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<[NodeId; 2]>,
    pub start: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureSection {
    pub events: Vec<FailureSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeSection,
    pub topology: TopologySection,
    pub channel: ChannelParams,
    pub training: TrainingSection,
    pub data: DataConfig,
    pub failures: FailureSection,
}

impl ExperimentConfig {
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme.kind = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scheme.seed = seed;
        self
    }

    pub fn architecture(&self) -> MlpArchitecture {
        MlpArchitecture {
            input_dim: self.data.input_dim,
            hidden_dims: self.training.hidden_dims.clone(),
            num_classes: self.data.num_classes,
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.training.learning_rate,
            local_epochs: self.training.local_epochs,
            batch_size: self.training.batch_size,
        }
    }

    pub fn failure_events(&self) -> Vec<FailureEvent> {
        self.failures
            .events
            .iter()
            .filter_map(|f| {
                let target = match (f.node, f.edge) {
                    (Some(n), None) => FailureTarget::Node(n),
                    (None, Some([a, b])) => FailureTarget::Edge(a, b),
                    _ => return None,
                };
                Some(FailureEvent {
                    target,
                    start_round: f.start,
                    end_round: f.end,
                })
            })
            .collect()
    }

    /// Checks every cross-field invariant. Errors carry a dotted field path
    /// but no line number.
    pub fn validate(&self) -> Result<()> {
        let s = &self.scheme;
        if s.kind == Scheme::Fedavg && self.topology.server_id().is_none() {
            return Err(Error::config(
                "topology.server",
                "fedavg needs a server node (server = 0 disables it)",
            ));
        }
        if let Some(eps) = s.convergence_epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::config(
                    "scheme.convergence_epsilon",
                    "must be a finite number > 0",
                ));
            }
        }
        if s.convergence_window == 0 {
            return Err(Error::config("scheme.convergence_window", "must be >= 1"));
        }

        let t = &self.topology;
        if t.num_uavs == 0 {
            return Err(Error::config("topology.num_uavs", "must be >= 1"));
        }
        if t.server > t.num_uavs {
            return Err(Error::config(
                "topology.server",
                format!("no node {} among 1..={}", t.server, t.num_uavs),
            ));
        }
        if t.participants().is_empty() {
            return Err(Error::config("topology.num_uavs", "no UAV left to hold data"));
        }
        let ids: BTreeSet<NodeId> = t.node_ids().into_iter().collect();
        for &[a, b] in &t.edges {
            if a == b {
                return Err(Error::config("topology.edges", format!("self-loop on node {a}")));
            }
            if !ids.contains(&a) || !ids.contains(&b) {
                return Err(Error::config(
                    "topology.edges",
                    format!("edge [{a}, {b}] names an unknown node"),
                ));
            }
        }
        if !t.cpu_freq_hz.is_empty() {
            if t.cpu_freq_hz.len() != t.num_uavs as usize {
                return Err(Error::config(
                    "topology.cpu_freq_hz",
                    format!("expected {} entries, got {}", t.num_uavs, t.cpu_freq_hz.len()),
                ));
            }
            if t.cpu_freq_hz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                return Err(Error::config(
                    "topology.cpu_freq_hz",
                    "frequencies must be finite and > 0",
                ));
            }
        }
        let [lo, hi] = t.cpu_range_hz;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::config("topology.cpu_range_hz", "need 0 < low <= high"));
        }
        if !(t.cycles_per_sample.is_finite() && t.cycles_per_sample > 0.0) {
            return Err(Error::config("topology.cycles_per_sample", "must be > 0"));
        }
        if !t.altitude_m.is_finite() {
            return Err(Error::config("topology.altitude_m", "must be finite"));
        }
        let [lo, hi] = t.spacing_m;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(Error::config("topology.spacing_m", "need 0 <= low <= high"));
        }

        self.channel.validate()?;

        let tr = self.training_config();
        tr.validate()?;
        if tr.learning_rate == 0.0 && tr.local_epochs > 0 {
            log::warn!("training.learning_rate is 0: local training will not move the models");
        }
        self.architecture().validate().map_err(|e| match e {
            Error::Config { path, message, .. } if path == "training.input_dim" => {
                Error::config("data.input_dim", message)
            }
            other => other,
        })?;

        let d = &self.data;
        if d.samples_per_class == 0 {
            return Err(Error::config("data.samples_per_class", "must be >= 1"));
        }
        if !(d.spread.is_finite() && d.spread > 0.0) {
            return Err(Error::config("data.spread", "must be a finite number > 0"));
        }
        if d.samples_per_uav == 0 {
            return Err(Error::config("data.samples_per_uav", "must be >= 1"));
        }
        if d.shards_per_uav == 0 || d.shards_per_uav > d.samples_per_uav {
            return Err(Error::config("data.shards_per_uav", "must be in [1, samples_per_uav]"));
        }
        let need = t.participants().len() * d.samples_per_uav;
        let have = d.num_classes * d.samples_per_class;
        if need > have {
            return Err(Error::config(
                "data.samples_per_uav",
                format!("{need} samples needed but the dataset holds {have}"),
            ));
        }

        for (i, f) in self.failures.events.iter().enumerate() {
            let path = format!("failures.events[{i}]");
            match (f.node, f.edge) {
                (Some(n), None) if ids.contains(&n) => {}
                (Some(n), None) => return Err(Error::config(path, format!("unknown node {n}"))),
                (None, Some([a, b])) if ids.contains(&a) && ids.contains(&b) && a != b => {}
                (None, Some([a, b])) => return Err(Error::config(path, format!("invalid edge [{a}, {b}]"))),
                _ => return Err(Error::config(path, "set exactly one of `node` or `edge`")),
            }
            if f.end.is_some_and(|e| e < f.start) {
                return Err(Error::config(path, "end must be >= start"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

/// Parses and validates config text. Errors carry the offending field path
/// and, where it can be located, the 1-based line.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let path = line.map(|l| path_at_line(text, l)).unwrap_or_default();
        Error::Config {
            path,
            line,
            message: e.message().trim().to_string(),
        }
    })?;
    cfg.validate().map_err(|e| match e {
        Error::Config { path, message, .. } => Error::Config {
            line: locate(text, &path),
            path,
            message,
        },
        other => other,
    })?;
    Ok(cfg)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn section_header(line: &str) -> Option<&str> {
    let l = line.trim();
    l.strip_prefix('[')
        .and_then(|r| r.split(']').next())
        .map(str::trim)
        .filter(|_| !l.starts_with("[["))
}

fn key_of(line: &str) -> Option<&str> {
    let l = line.trim();
    if l.starts_with('#') || l.starts_with('[') {
        return None;
    }
    l.split_once('=').map(|(k, _)| k.trim().trim_matches('"'))
}

/// Dotted path of whatever sits on `line` (section plus key).
fn path_at_line(text: &str, line: usize) -> String {
    let mut section = String::new();
    for l in text.lines().take(line) {
        if let Some(h) = section_header(l) {
            section = h.to_string();
        }
    }
    let key = text.lines().nth(line - 1).and_then(key_of);
    match (section.is_empty(), key) {
        (false, Some(k)) => format!("{section}.{k}"),
        (true, Some(k)) => k.to_string(),
        (_, None) => section,
    }
}

/// Line on which the dotted `path` is defined, if it appears in the text.
fn locate(text: &str, path: &str) -> Option<usize> {
    let (section, key) = path.split_once('.')?;
    let key = key.split(['[', '.']).next().unwrap_or(key);
    let mut current = "";
    let mut header_line = None;
    for (n, l) in text.lines().enumerate() {
        if let Some(h) = section_header(l) {
            current = h;
            if h == section {
                header_line = Some(n + 1);
            }
            continue;
        }
        if current == section && key_of(l) == Some(key) {
            return Some(n + 1);
        }
    }
    header_line
}
