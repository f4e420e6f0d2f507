//! Round-synchronous engines for decentralized FL (neighbor aggregation,
//! local SGD, broadcast) and the centralized FedAvg baseline.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::airnet::{compute_latency, link_rate, place_uavs, tx_latency, ChannelParams, NodeId, Topology, UavNode};
use crate::config::ExperimentConfig;
use crate::datagen::{gen_synthetic, partition_noniid};
use crate::error::{Error, Result};
use crate::model::{eval_loss, init_params, local_train, MlpArchitecture, ParamVector, Sample, TrainingConfig};
use crate::seeds::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Dfl,
    Fedavg,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Dfl => "dfl",
            Scheme::Fedavg => "fedavg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingRule {
    /// `1/(deg+1)` for self and every alive neighbor.
    #[default]
    #[serde(alias = "uniform_self_inclusive")]
    Uniform,
    /// Proportional to shard size.
    DataWeighted,
    /// `1/(1+max(deg_i, deg_j))` per neighbor, remainder on self.
    Metropolis,
}

/// Medium access for the transmissions a node receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    /// Parallel receptions, each sender on its own band.
    Fdma,
    /// Receptions serialized in time slots.
    #[default]
    Tdma,
}

/// How a UAV ships its updated model to its neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SendMode {
    /// One wireless transmission heard by every neighbor.
    #[default]
    Broadcast,
    /// One transmission per neighbor.
    Unicast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetStatus {
    Running,
    Converged,
    Halted,
}

/// A participant in an aggregation: its weights, shard size and current
/// alive degree.
#[derive(Debug, Clone, Copy)]
pub struct Peer<'a> {
    pub params: &'a ParamVector,
    pub shard_size: usize,
    pub degree: usize,
}

/// Convex-combination coefficients for `own` followed by `neighbors`.
pub fn mixing_weights(rule: MixingRule, own: &Peer<'_>, neighbors: &[Peer<'_>]) -> Vec<f64> {
    match rule {
        MixingRule::Uniform => vec![1.0 / (neighbors.len() + 1) as f64; neighbors.len() + 1],
        MixingRule::DataWeighted => {
            let total: usize = own.shard_size + neighbors.iter().map(|p| p.shard_size).sum::<usize>();
            if total == 0 {
                return mixing_weights(MixingRule::Uniform, own, neighbors);
            }
            std::iter::once(own)
                .chain(neighbors)
                .map(|p| p.shard_size as f64 / total as f64)
                .collect()
        }
        MixingRule::Metropolis => {
            let mut w: Vec<f64> = Vec::with_capacity(neighbors.len() + 1);
            w.push(0.0);
            w.extend(neighbors.iter().map(|p| 1.0 / (1 + own.degree.max(p.degree)) as f64));
            w[0] = 1.0 - w[1..].iter().sum::<f64>();
            w
        }
    }
}

/// Weighted average of `own` and `neighbors`, summed in that order.
pub fn aggregate(own: Peer<'_>, neighbors: &[Peer<'_>], rule: MixingRule) -> Result<ParamVector> {
    let len = own.params.len();
    if let Some(bad) = neighbors.iter().find(|p| p.params.len() != len) {
        return Err(Error::Protocol(format!(
            "parameter length mismatch: own {len}, neighbor {}",
            bad.params.len()
        )));
    }
    if neighbors.is_empty() {
        return Ok(own.params.clone());
    }
    let weights = mixing_weights(rule, &own, neighbors);
    let mut out = ParamVector::zeros(len);
    for (peer, w) in std::iter::once(&own).chain(neighbors).zip(weights) {
        out.axpy(w, peer.params);
    }
    Ok(out)
}

/// Per-UAV latency components of one round, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LatencyBreakdown {
    pub recv: f64,
    pub compute: f64,
    pub send: f64,
}

impl LatencyBreakdown {
    pub fn total(&self) -> f64 {
        self.recv + self.compute + self.send
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    /// Number of completed rounds, counting this one.
    pub round: usize,
    pub scheme: Scheme,
    /// Loss of each UAV's model on its own shard; `None` for dead UAVs.
    pub losses: Vec<Option<f64>>,
    pub latencies: Vec<Option<LatencyBreakdown>>,
    pub round_latency: f64,
}

impl RoundReport {
    pub fn avg_loss(&self) -> f64 {
        mean_alive(&self.losses)
    }
}

pub(crate) fn mean_alive(losses: &[Option<f64>]) -> f64 {
    let alive: Vec<f64> = losses.iter().flatten().copied().collect();
    if alive.is_empty() {
        f64::NAN
    } else {
        alive.iter().sum::<f64>() / alive.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundOutcome {
    Completed(RoundReport),
    Halted,
}

/// Everything the fleet carries from round to round. Vectors are indexed
/// like `uav_ids`, which is ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetState {
    pub round: usize,
    pub arch: MlpArchitecture,
    pub uav_ids: Vec<NodeId>,
    pub params: Vec<ParamVector>,
    pub shards: Vec<Vec<Sample>>,
    /// Private shuffle stream of each UAV.
    pub streams: Vec<SimRng>,
    pub status: FleetStatus,
    /// Global model, FedAvg only.
    pub global: Option<ParamVector>,
    /// Aggregated model each UAV trained from in the last round.
    pub last_aggregates: Vec<Option<ParamVector>>,
}

impl FleetState {
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.uav_ids.binary_search(&id).ok()
    }

    /// Loss of every UAV's current model on its own shard.
    pub fn losses(&self, topo: &Topology) -> Vec<Option<f64>> {
        self.uav_ids
            .iter()
            .enumerate()
            .map(|(k, &id)| {
                topo.is_alive(id)
                    .then(|| eval_loss(&self.arch, &self.params[k], &self.shards[k]))
            })
            .collect()
    }

    /// Coordinate-wise mean of all UAV models.
    pub fn mean_params(&self) -> ParamVector {
        let mut out = ParamVector::zeros(self.arch.param_count());
        let w = 1.0 / self.params.len() as f64;
        for p in &self.params {
            out.axpy(w, p);
        }
        out
    }

    /// Largest L-infinity distance between any two UAV models.
    pub fn max_pairwise_distance(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.params.iter().enumerate() {
            for b in &self.params[i + 1..] {
                d = d.max(a.linf_distance(b));
            }
        }
        d
    }
}

/// Per-round settings shared by both engines.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub topology: &'a Topology,
    pub channel: &'a ChannelParams,
    pub training: &'a TrainingConfig,
    pub mixing: MixingRule,
    pub access: AccessMode,
    pub send: SendMode,
}

fn ensure_running(state: &FleetState) -> Result<()> {
    if state.status != FleetStatus::Running {
        return Err(Error::Protocol(format!(
            "round requested on a {:?} fleet",
            state.status
        )));
    }
    Ok(())
}

fn node_compute(topo: &Topology, id: NodeId, samples: usize, epochs: usize) -> f64 {
    topo.node(id)
        .map(|n| compute_latency(samples, epochs, n.cycles_per_sample, n.cpu_freq))
        .unwrap_or(0.0)
}

/// Reception time for `senders` simultaneous incoming models.
fn reception(access: AccessMode, senders: usize, tx: f64) -> f64 {
    match (access, senders) {
        (_, 0) => 0.0,
        (AccessMode::Fdma, _) => tx,
        (AccessMode::Tdma, k) => k as f64 * tx,
    }
}

/// One decentralized round.
///
/// Every alive UAV collects its alive neighbors' round-t weights,
/// aggregates them with its own, trains locally from the aggregate and
/// broadcasts the result. Aggregates are all computed from round-t weights
/// before anyone installs round-t+1 weights. Only UAVs holding data take
/// part; a designated server node, if any, is not a participant.
pub fn dfl_round(state: &mut FleetState, ctx: &RoundContext<'_>) -> Result<RoundOutcome> {
    ensure_running(state)?;
    let topo = ctx.topology;
    let members: BTreeSet<NodeId> = state.uav_ids.iter().copied().filter(|&id| topo.is_alive(id)).collect();
    if members.is_empty() {
        state.status = FleetStatus::Halted;
        return Ok(RoundOutcome::Halted);
    }

    let graph = topo.induced(&members);
    let neighbors: Vec<Vec<NodeId>> = state.uav_ids.iter().map(|&id| graph.neighbors(id)).collect();
    let degree = |id: NodeId| state.index_of(id).map_or(0, |k| neighbors[k].len());

    let mut aggregates: Vec<Option<ParamVector>> = vec![None; state.uav_ids.len()];
    for (k, &id) in state.uav_ids.iter().enumerate() {
        if !members.contains(&id) {
            continue;
        }
        let own = Peer {
            params: &state.params[k],
            shard_size: state.shards[k].len(),
            degree: neighbors[k].len(),
        };
        let peers: Vec<Peer<'_>> = neighbors[k]
            .iter()
            .filter_map(|&n| state.index_of(n))
            .map(|j| Peer {
                params: &state.params[j],
                shard_size: state.shards[j].len(),
                degree: degree(state.uav_ids[j]),
            })
            .collect();
        aggregates[k] = Some(aggregate(own, &peers, ctx.mixing)?);
    }

    let tx = tx_latency(ctx.channel.payload_bits, link_rate(ctx.channel));
    let epochs = ctx.training.local_epochs;
    let mut losses = vec![None; state.uav_ids.len()];
    let mut latencies = vec![None; state.uav_ids.len()];
    for (k, &id) in state.uav_ids.iter().enumerate() {
        let Some(agg) = &aggregates[k] else { continue };
        let (trained, _) = local_train(&state.arch, agg, &state.shards[k], ctx.training, &mut state.streams[k])?;
        state.params[k] = trained;
        losses[k] = Some(eval_loss(&state.arch, &state.params[k], &state.shards[k]));

        let deg = neighbors[k].len();
        let send = match (ctx.send, deg) {
            (_, 0) => 0.0,
            (SendMode::Broadcast, _) => tx,
            (SendMode::Unicast, d) => d as f64 * tx,
        };
        latencies[k] = Some(LatencyBreakdown {
            recv: reception(ctx.access, deg, tx),
            compute: node_compute(topo, id, state.shards[k].len(), epochs),
            send,
        });
    }

    let round_latency = latencies
        .iter()
        .flatten()
        .map(LatencyBreakdown::total)
        .fold(0.0, f64::max);
    state.last_aggregates = aggregates;
    state.round += 1;
    Ok(RoundOutcome::Completed(RoundReport {
        round: state.round,
        scheme: Scheme::Dfl,
        losses,
        latencies,
        round_latency,
    }))
}

/// One FedAvg round with the topology's server as parameter server.
///
/// Reachable workers train from the global model and upload; the server
/// forms the shard-size-weighted average and broadcasts it back. A dead
/// server, or one with no reachable worker, halts the fleet without
/// executing the round.
pub fn fedavg_round(state: &mut FleetState, ctx: &RoundContext<'_>) -> Result<RoundOutcome> {
    ensure_running(state)?;
    let topo = ctx.topology;
    let server = topo
        .server_id
        .ok_or_else(|| Error::Protocol("FedAvg needs a server node".into()))?;
    let global = state
        .global
        .clone()
        .ok_or_else(|| Error::Protocol("FedAvg fleet has no global model".into()))?;

    let workers: Vec<usize> = state
        .uav_ids
        .iter()
        .enumerate()
        .filter(|&(_, &id)| topo.is_alive(id) && topo.has_edge(server, id))
        .map(|(k, _)| k)
        .collect();
    if !topo.is_alive(server) || workers.is_empty() {
        state.status = FleetStatus::Halted;
        return Ok(RoundOutcome::Halted);
    }

    let mut trained = Vec::with_capacity(workers.len());
    for &k in &workers {
        let (w, _) = local_train(
            &state.arch,
            &global,
            &state.shards[k],
            ctx.training,
            &mut state.streams[k],
        )?;
        trained.push(w);
    }
    let total: usize = workers.iter().map(|&k| state.shards[k].len()).sum();
    let mut next = ParamVector::zeros(global.len());
    for (w, &k) in trained.iter().zip(&workers) {
        next.axpy(state.shards[k].len() as f64 / total as f64, w);
    }
    let mut aggregates = vec![None; state.uav_ids.len()];
    for &k in &workers {
        state.params[k] = next.clone();
        aggregates[k] = Some(next.clone());
    }
    state.global = Some(next);

    let tx = tx_latency(ctx.channel.payload_bits, link_rate(ctx.channel));
    let epochs = ctx.training.local_epochs;
    let mut latencies = vec![None; state.uav_ids.len()];
    let mut slowest: f64 = 0.0;
    for &k in &workers {
        let compute = node_compute(topo, state.uav_ids[k], state.shards[k].len(), epochs);
        slowest = slowest.max(compute);
        latencies[k] = Some(LatencyBreakdown {
            recv: tx,
            compute,
            send: tx,
        });
    }
    let upload = reception(ctx.access, workers.len(), tx);
    let round_latency = slowest + upload + tx;

    state.last_aggregates = aggregates;
    state.round += 1;
    Ok(RoundOutcome::Completed(RoundReport {
        round: state.round,
        scheme: Scheme::Fedavg,
        losses: state.losses(topo),
        latencies,
        round_latency,
    }))
}

/// Fleet plus the static network it flies in.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub topology: Topology,
    pub state: FleetState,
}

/// Coordinator setup: places the UAVs, draws CPU speeds, generates and
/// partitions the data, and hands out initial models. Every random draw
/// comes from a named sub-stream of the master seed.
///
/// Decentralized UAVs draw independent initial models unless
/// `shared_init` is set; FedAvg (and `shared_init`) use the draw of the
/// lowest-id participant for everyone.
pub fn coordinator_init(config: &ExperimentConfig) -> Result<Deployment> {
    config.validate()?;
    let seed = config.scheme.seed;
    let t = &config.topology;
    let ids = t.node_ids();

    let positions = place_uavs(
        ids.len(),
        (t.spacing_m[0], t.spacing_m[1]),
        t.altitude_m,
        &mut seeds::stream(seed, seeds::PLACEMENT, 0),
    );
    let nodes: Vec<UavNode> =
        ids.iter()
            .zip(positions)
            .enumerate()
            .map(|(k, (&id, position))| {
                let cpu_freq = match t.cpu_freq_hz.get(k) {
                    Some(&f) => f,
                    None if t.cpu_range_hz[1] > t.cpu_range_hz[0] => seeds::stream(seed, seeds::CPU, u64::from(id))
                        .random_range(t.cpu_range_hz[0]..=t.cpu_range_hz[1]),
                    None => t.cpu_range_hz[0],
                };
                UavNode {
                    id,
                    position,
                    cpu_freq,
                    cycles_per_sample: t.cycles_per_sample,
                    alive: true,
                }
            })
            .collect();
    let topology = Topology::new(nodes, t.edges.iter().map(|&[a, b]| (a, b)), t.server_id())?;

    let d = &config.data;
    let dataset = gen_synthetic(
        d.num_classes,
        d.input_dim,
        d.samples_per_class,
        d.spread,
        &mut seeds::stream(seed, seeds::DATA, 0),
    )?;
    let uav_ids = t.participants();
    let assignment = partition_noniid(
        &dataset,
        uav_ids.len(),
        d.shards_per_uav,
        d.samples_per_uav,
        &mut seeds::stream(seed, seeds::PARTITION, 0),
    )?;
    let shards = assignment.materialize(&dataset);

    let arch = config.architecture();
    let draws: Vec<ParamVector> = uav_ids
        .iter()
        .map(|&id| init_params(&arch, &mut seeds::stream(seed, seeds::INIT, u64::from(id))))
        .collect();
    let shared = config.scheme.kind == Scheme::Fedavg || config.scheme.shared_init;
    let params = if shared {
        vec![draws[0].clone(); draws.len()]
    } else {
        draws
    };
    let global = (config.scheme.kind == Scheme::Fedavg).then(|| params[0].clone());

    let state = FleetState {
        round: 0,
        arch,
        streams: uav_ids
            .iter()
            .map(|&id| seeds::stream(seed, seeds::SHUFFLE, u64::from(id)))
            .collect(),
        last_aggregates: vec![None; uav_ids.len()],
        uav_ids,
        params,
        shards,
        status: FleetStatus::Running,
        global,
    };
    Ok(Deployment { topology, state })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceVerdict {
    Continue,
    Converged,
    BudgetExhausted,
}

/// Converged once the last `window` successive changes of the average loss
/// are all below `epsilon`; out of budget once `max_rounds` entries exist.
pub fn check_convergence(loss_history: &[f64], epsilon: f64, window: usize, max_rounds: usize) -> ConvergenceVerdict {
    let window = window.max(1);
    if loss_history.len() > window {
        let tail = &loss_history[loss_history.len() - window - 1..];
        let worst = tail.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
        if worst < epsilon {
            return ConvergenceVerdict::Converged;
        }
    }
    if loss_history.len() >= max_rounds {
        ConvergenceVerdict::BudgetExhausted
    } else {
        ConvergenceVerdict::Continue
    }
}
