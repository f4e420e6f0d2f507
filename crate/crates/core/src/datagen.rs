//! Synthetic Gaussian-blob data and label-sorted non-IID sharding.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::model::eval_loss;
use crate::model::Sample;

/// Distance of every class center from the origin.
pub const CENTER_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardAssignment {
    pub shards: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    pub spread: f64,
    pub samples_per_uav: usize,
    pub shards_per_uav: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            num_classes: 5,
            input_dim: 16,
            samples_per_class: 25,
            spread: 0.6,
            samples_per_uav: 25,
            shards_per_uav: 2,
        }
    }
}

/// Unit-norm center direction of class `c` in `dim` dimensions.
///
/// Classes below `dim` get rows of the orthonormal DCT-II basis, so the
/// centers are mutually orthogonal; beyond that the cosine gets a class
/// dependent phase and directions start to overlap.
pub fn class_direction(c: usize, dim: usize) -> Vec<f64> {
    let phase = if c < dim { 0.0 } else { c as f64 };
    let v: Vec<f64> = (0..dim)
        .map(|j| (PI / dim as f64 * (j as f64 + 0.5) * c as f64 + phase).cos())
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; dim];
        e[c % dim] = 1.0;
        return e;
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Isotropic Gaussian blobs around fixed class centers, `n_per_class`
/// samples per class, emitted class by class.
pub fn gen_synthetic<R: Rng + ?Sized>(
    num_classes: usize,
    input_dim: usize,
    n_per_class: usize,
    spread: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if num_classes == 0 {
        return Err(Error::config("data.num_classes", "must be >= 1"));
    }
    if input_dim == 0 {
        return Err(Error::config("data.input_dim", "must be >= 1"));
    }
    if n_per_class == 0 {
        return Err(Error::config("data.samples_per_class", "must be >= 1"));
    }
    if !(spread.is_finite() && spread > 0.0) {
        return Err(Error::config("data.spread", "must be a finite number > 0"));
    }
    let noise = Normal::new(0.0, spread).map_err(|e| Error::config("data.spread", e.to_string()))?;
    let mut samples = Vec::with_capacity(num_classes * n_per_class);
    for c in 0..num_classes {
        let center: Vec<f64> = class_direction(c, input_dim)
            .into_iter()
            .map(|x| CENTER_RADIUS * x)
            .collect();
        for _ in 0..n_per_class {
            let features = center.iter().map(|m| m + noise.sample(rng)).collect();
            samples.push(Sample { features, label: c });
        }
    }
    Ok(Dataset { samples, num_classes })
}

/// Label-sorted sharding.
///
/// The first `num_uavs * samples_per_uav` indices in label order are cut into
/// `num_uavs * shards_per_uav` contiguous shards. When `shards_per_uav` does
/// not divide `samples_per_uav`, shard sizes alternate between the floor and
/// the ceiling by slot (slot `k` of every UAV has the same size), and shards
/// are dealt slot by slot so every UAV still ends up with exactly
/// `samples_per_uav` samples.
pub fn partition_noniid<R: Rng + ?Sized>(
    dataset: &Dataset,
    num_uavs: usize,
    shards_per_uav: usize,
    samples_per_uav: usize,
    rng: &mut R,
) -> Result<ShardAssignment> {
    if num_uavs == 0 {
        return Err(Error::config("topology.num_uavs", "no UAV holds data"));
    }
    if shards_per_uav == 0 || shards_per_uav > samples_per_uav {
        return Err(Error::config(
            "data.shards_per_uav",
            format!("must be in [1, samples_per_uav = {samples_per_uav}]"),
        ));
    }
    let needed = num_uavs * samples_per_uav;
    if needed > dataset.samples.len() {
        return Err(Error::config(
            "data.samples_per_uav",
            format!(
                "{num_uavs} UAVs x {samples_per_uav} samples exceeds the dataset size {}",
                dataset.samples.len()
            ),
        ));
    }

    let mut sorted: Vec<usize> = (0..dataset.samples.len()).collect();
    sorted.sort_by_key(|&i| dataset.samples[i].label);
    sorted.truncate(needed);

    let base = samples_per_uav / shards_per_uav;
    let extra = samples_per_uav % shards_per_uav;
    let slot_size = |slot: usize| base + usize::from(slot < extra);

    // by_slot[s] = contiguous shards of slot s, in cut order.
    let mut by_slot: Vec<Vec<&[usize]>> = vec![Vec::with_capacity(num_uavs); shards_per_uav];
    let mut start = 0;
    for k in 0..num_uavs * shards_per_uav {
        let slot = k % shards_per_uav;
        let end = start + slot_size(slot);
        by_slot[slot].push(&sorted[start..end]);
        start = end;
    }

    let mut shards = vec![Vec::with_capacity(samples_per_uav); num_uavs];
    if extra == 0 {
        let mut all: Vec<&[usize]> = by_slot.into_iter().flatten().collect();
        all.shuffle(rng);
        for (k, piece) in all.into_iter().enumerate() {
            shards[k / shards_per_uav].extend_from_slice(piece);
        }
    } else {
        for mut pieces in by_slot {
            pieces.shuffle(rng);
            for (uav, piece) in pieces.into_iter().enumerate() {
                shards[uav].extend_from_slice(piece);
            }
        }
    }
    Ok(ShardAssignment { shards })
}

impl ShardAssignment {
    pub fn materialize(&self, dataset: &Dataset) -> Vec<Vec<Sample>> {
        self.shards
            .iter()
            .map(|idx| idx.iter().map(|&i| dataset.samples[i].clone()).collect())
            .collect()
    }

    pub fn distinct_labels(&self, dataset: &Dataset) -> Vec<usize> {
        self.shards
            .iter()
            .map(|idx| {
                let mut labels: Vec<usize> = idx.iter().map(|&i| dataset.samples[i].label).collect();
                labels.sort_unstable();
                labels.dedup();
                labels.len()
            })
            .collect()
    }
}

/// One sample per line: comma-separated features, then the integer label.
pub fn to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    for s in &dataset.samples {
        for f in &s.features {
            let _ = write!(out, "{f},");
        }
        let _ = writeln!(out, "{}", s.label);
    }
    out
}

pub fn from_csv(text: &str, num_classes: usize) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut width = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Config {
            path: "dataset".into(),
            line: Some(n + 1),
            message: msg,
        };
        let fields: Vec<&str> = line.split(',').collect();
        let (label, feats) = fields.split_last().ok_or_else(|| bad("empty row".into()))?;
        let label: usize = label.trim().parse().map_err(|_| bad(format!("bad label {label:?}")))?;
        if label >= num_classes {
            return Err(bad(format!("label {label} >= num_classes {num_classes}")));
        }
        let features = feats
            .iter()
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad("non-finite or malformed feature".into()))?;
        if *width.get_or_insert(features.len()) != features.len() {
            return Err(bad("inconsistent feature count".into()));
        }
        samples.push(Sample { features, label });
    }
    Ok(Dataset { samples, num_classes })
}
