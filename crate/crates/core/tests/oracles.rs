//! Checks against small, independently written reference computations.

#![allow(clippy::needless_range_loop)]

use rand::Rng;
use uavfl_core::airnet::{link_rate, ChannelParams};
use uavfl_core::config::ExperimentConfig;
use uavfl_core::datagen::{gen_synthetic, partition_noniid};
use uavfl_core::harness::Simulation;
use uavfl_core::model::{forward, init_params, MlpArchitecture, ParamVector};
use uavfl_core::protocol::{MixingRule, Scheme};
use uavfl_core::seeds::stream;

/// Plain nested-loop forward pass for one hidden layer.
fn scalar_forward(d: usize, h: usize, c: usize, p: &[f64], x: &[f64]) -> Vec<f64> {
    let w1 = |o: usize, i: usize| p[o * d + i];
    let b1 = |o: usize| p[h * d + o];
    let off = h * d + h;
    let w2 = |o: usize, i: usize| p[off + o * h + i];
    let b2 = |o: usize| p[off + c * h + o];
    let mut hidden = vec![0.0; h];
    for o in 0..h {
        let mut z = b1(o);
        for i in 0..d {
            z += w1(o, i) * x[i];
        }
        hidden[o] = if z > 0.0 { z } else { 0.0 };
    }
    let mut logits = vec![0.0; c];
    for o in 0..c {
        let mut z = b2(o);
        for i in 0..h {
            z += w2(o, i) * hidden[i];
        }
        logits[o] = z;
    }
    let m = logits.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn forward_matches_scalar_reference() {
    let mut rng = stream(3, "oracle", 0);
    for (d, h, c) in [(16, 79, 5), (3, 4, 2), (7, 1, 6)] {
        let arch = MlpArchitecture::new(d, vec![h], c).unwrap();
        for _ in 0..20 {
            let p = init_params(&arch, &mut rng);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let got = forward(&arch, &p, &x).unwrap();
            let want = scalar_forward(d, h, c, &p.0, &x);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn reference_architecture_has_56_kbit_of_weights() {
    let arch = MlpArchitecture::default();
    assert_eq!(arch.param_count(), 16 * 79 + 79 + 79 * 5 + 5);
    assert_eq!(arch.param_count() * 32, 55_776);
    assert_eq!(ChannelParams::default().payload_bits, 56_000);
}

#[test]
fn link_rate_matches_hand_computation() {
    let ch = ChannelParams {
        tx_power_dbm: 20.0,
        channel_gain_db: -60.0,
        noise_power_dbm: -100.0,
        bandwidth_hz: 1e6,
        ..ChannelParams::default()
    };
    // 0.1 W * 1e-6 / 1e-13 W = 1e6.
    let want = 1e6 * (1.0f64 + 1e6).log2();
    assert!((link_rate(&ch) / want - 1.0).abs() < 1e-12);
}

#[test]
fn partition_labels_match_brute_force_enumeration() {
    for (seed, per_class, uavs, shards, per_uav) in [
        (1, 25, 5, 2, 25),
        (2, 10, 4, 2, 10),
        (3, 30, 3, 3, 20),
        (4, 12, 5, 4, 12),
        (5, 8, 2, 1, 8),
    ] {
        let data = gen_synthetic(5, 4, per_class, 0.5, &mut stream(seed, "data", 0)).unwrap();
        let part = partition_noniid(&data, uavs, shards, per_uav, &mut stream(seed, "partition", 0)).unwrap();

        // Every label-sorted prefix sample, counted by label.
        let mut labels: Vec<usize> = data.samples.iter().map(|s| s.label).collect();
        labels.sort_unstable();
        let mut want = vec![0usize; 5];
        for &l in &labels[..uavs * per_uav] {
            want[l] += 1;
        }
        let mut got = vec![0usize; 5];
        for shard in &part.shards {
            assert_eq!(shard.len(), per_uav);
            for &i in shard {
                got[data.samples[i].label] += 1;
            }
        }
        assert_eq!(got, want, "seed {seed}");

        // A UAV built from `shards` contiguous label runs sees at most
        // shards + (labels straddled inside runs) classes.
        for shard in &part.shards {
            let mut ls: Vec<usize> = shard.iter().map(|&i| data.samples[i].label).collect();
            ls.sort_unstable();
            ls.dedup();
            let max_span = shards * (per_uav.div_ceil(shards).div_ceil(per_class) + 1);
            assert!(ls.len() <= max_span.min(5));
        }
    }
}

/// Row-stochastic uniform mixing matrix of an undirected graph on `0..n`.
fn uniform_matrix(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    (0..n)
        .map(|i| {
            let deg = adj[i].iter().filter(|&&x| x).count();
            (0..n)
                .map(|j| {
                    if i == j || adj[i][j] {
                        1.0 / (deg + 1) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn gossip_equals_repeated_matrix_application() {
    let mut cfg = ExperimentConfig::default();
    cfg.topology.num_uavs = 5;
    cfg.topology.server = 0;
    cfg.topology.edges = vec![[1, 2], [2, 3], [3, 4], [4, 5], [1, 3]];
    cfg.training.local_epochs = 0;
    cfg.scheme.mixing = MixingRule::Uniform;
    let mut sim = Simulation::new(&cfg).unwrap();

    let w = uniform_matrix(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]);
    let mut x: Vec<Vec<f64>> = sim.state().params.iter().map(|p| p.0.clone()).collect();
    for _ in 0..15 {
        sim.step().unwrap();
        x = (0..5)
            .map(|i| {
                (0..x[0].len())
                    .map(|c| (0..5).map(|j| w[i][j] * x[j][c]).sum())
                    .collect()
            })
            .collect();
        for (p, want) in sim.state().params.iter().zip(&x) {
            assert!(p.linf_distance(&ParamVector(want.clone())) < 1e-12);
        }
    }
}

#[test]
fn metropolis_gossip_preserves_the_mean_on_irregular_graphs() {
    let mut cfg = ExperimentConfig::default();
    cfg.topology.num_uavs = 5;
    cfg.topology.server = 0;
    cfg.topology.edges = vec![[1, 2], [1, 3], [1, 4], [1, 5], [2, 3]];
    cfg.training.local_epochs = 0;
    cfg.scheme.mixing = MixingRule::Metropolis;
    let mut sim = Simulation::new(&cfg).unwrap();
    let mean0 = sim.state().mean_params();
    for _ in 0..300 {
        sim.step().unwrap();
    }
    assert!(sim.state().mean_params().linf_distance(&mean0) < 1e-9);
    assert!(sim.state().max_pairwise_distance() < 1e-6);
}

#[test]
fn fedavg_global_is_the_mean_of_locally_trained_workers() {
    let cfg = ExperimentConfig::default().with_scheme(Scheme::Fedavg);
    let mut sim = Simulation::new(&cfg).unwrap();
    let start = sim.state().global.clone().unwrap();
    let shards = sim.state().shards.clone();
    let mut streams = sim.state().streams.clone();
    let training = cfg.training_config();
    let arch = cfg.architecture();
    let mut want = ParamVector::zeros(start.len());
    let total: usize = shards.iter().map(Vec::len).sum();
    for (shard, rng) in shards.iter().zip(streams.iter_mut()) {
        let (w, _) = uavfl_core::model::local_train(&arch, &start, shard, &training, rng).unwrap();
        want.axpy(shard.len() as f64 / total as f64, &w);
    }
    sim.step().unwrap();
    assert!(sim.state().global.as_ref().unwrap().linf_distance(&want) < 1e-15);
}
