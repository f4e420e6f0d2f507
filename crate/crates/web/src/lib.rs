//! Browser bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers or strings and returns a JSON or SVG
//! string, so the same functions are exercised by native tests.

use serde_json::json;
use uavfl_core::airnet::{link_rate, snr, tx_latency, ChannelParams};
use uavfl_core::config::{parse_config_str, ExperimentConfig};
use uavfl_core::harness::{compare, Simulation};
use uavfl_core::protocol::{MixingRule, Scheme};
use uavfl_core::report::{self, Series};
use wasm_bindgen::prelude::*;

/// Default experiment config as TOML, to seed the page's editor.
#[wasm_bindgen]
pub fn default_config() -> String {
    ExperimentConfig::default().to_toml()
}

/// Runs DFL and FedAvg on the given TOML config. Returns JSON with the
/// three comparison charts and the summary numbers.
#[wasm_bindgen]
pub fn compare_schemes(config_toml: &str) -> Result<String, String> {
    let cfg = parse_config_str(config_toml).map_err(|e| e.to_string())?;
    let (a, b, summary) =
        compare(&cfg.clone().with_scheme(Scheme::Dfl), &cfg.with_scheme(Scheme::Fedavg)).map_err(|e| e.to_string())?;
    let out = json!({
        "avg_loss_svg": report::compare_loss_svg(&a, &b),
        "individual_svg": report::compare_individual_svg(&summary),
        "latency_svg": report::compare_latency_svg(&a, &b),
        "rounds": [a.rows.len(), b.rows.len()],
        "status": [a.status.as_str(), b.status.as_str()],
        "final_avg_loss": [a.final_avg_loss(), b.final_avg_loss()],
        "avg_loss_gap": summary.avg_loss_gap,
        "max_individual_gap": summary.max_individual_gap,
        "latency_delta_s": summary.latency_delta_s,
        "csv": report::compare_csv(&summary),
    });
    Ok(out.to_string())
}

/// SNR, Shannon rate and per-model transmission time of one A2A link.
#[wasm_bindgen]
pub fn link_budget(
    tx_power_dbm: f64,
    channel_gain_db: f64,
    noise_power_dbm: f64,
    bandwidth_hz: f64,
    payload_bits: f64,
) -> Result<String, String> {
    if !(payload_bits.is_finite() && payload_bits >= 1.0) {
        return Err("payload must be at least one bit".into());
    }
    let ch = ChannelParams {
        tx_power_dbm,
        channel_gain_db,
        noise_power_dbm,
        bandwidth_hz,
        payload_bits: payload_bits as u64,
    };
    ch.validate().map_err(|e| e.to_string())?;
    let rate = link_rate(&ch);
    Ok(json!({
        "snr": snr(&ch),
        "snr_db": 10.0 * snr(&ch).log10(),
        "rate_bps": rate,
        "tx_latency_ms": tx_latency(ch.payload_bits, rate) * 1e3,
    })
    .to_string())
}

fn graph_edges(shape: &str, n: u32) -> Result<Vec<[u32; 2]>, String> {
    let edges = match shape {
        "ring" => (1..=n)
            .map(|k| [k, k % n + 1])
            .filter(|[a, b]| a < b || n > 2)
            .collect(),
        "line" => (1..n).map(|k| [k, k + 1]).collect(),
        "star" => (2..=n).map(|k| [1, k]).collect(),
        "complete" => (1..=n).flat_map(|a| (a + 1..=n).map(move |b| [a, b])).collect(),
        other => return Err(format!("unknown graph shape {other:?}")),
    };
    Ok(edges)
}

fn mixing_rule(name: &str) -> Result<MixingRule, String> {
    match name {
        "uniform" => Ok(MixingRule::Uniform),
        "metropolis" => Ok(MixingRule::Metropolis),
        "data_weighted" => Ok(MixingRule::DataWeighted),
        other => Err(format!("unknown mixing rule {other:?}")),
    }
}

/// Pure gossip (no local training) on a small graph. Returns an SVG of the
/// log10 spread between UAV models per round.
#[wasm_bindgen]
pub fn gossip_consensus(shape: &str, num_uavs: u32, rounds: u32, mixing: &str, seed: u64) -> Result<String, String> {
    if !(2..=20).contains(&num_uavs) {
        return Err("num_uavs must be between 2 and 20".into());
    }
    if rounds == 0 || rounds > 2000 {
        return Err("rounds must be between 1 and 2000".into());
    }
    let mut cfg = ExperimentConfig::default().with_seed(seed);
    cfg.topology.num_uavs = num_uavs;
    cfg.topology.server = 0;
    cfg.topology.edges = graph_edges(shape, num_uavs)?;
    cfg.scheme.mixing = mixing_rule(mixing)?;
    cfg.training.local_epochs = 0;
    let d = &cfg.data;
    cfg.data.samples_per_uav = d.num_classes * d.samples_per_class / num_uavs as usize;

    let mut sim = Simulation::new(&cfg).map_err(|e| e.to_string())?;
    let mut points = vec![(0.0, sim.state().max_pairwise_distance().log10())];
    for t in 1..=rounds {
        sim.step().map_err(|e| e.to_string())?;
        let spread = sim.state().max_pairwise_distance().max(1e-300);
        points.push((f64::from(t), spread.log10()));
    }
    let title = format!("Gossip on a {num_uavs}-UAV {shape}, {mixing} mixing");
    Ok(report::line_chart(
        &title,
        "round",
        "log10 max pairwise distance",
        &[Series { name: "spread", points }],
        false,
    ))
}
