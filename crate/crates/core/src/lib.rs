//! Deterministic simulator of federated learning over UAV networks.
//!
//! Two protocols run on the same fleet, data and channel model:
//!
//! * decentralized FL, where every UAV aggregates its own and its one-hop
//!   neighbors' weights, trains locally and broadcasts the result, with no
//!   parameter server;
//! * centralized FedAvg, where one UAV serves as parameter server.
//!
//! Each round is barrier-synchronized and priced with a Shannon-rate link
//! model plus a cycles-per-sample compute model. Failures of nodes or links
//! can be scheduled per round.
//!
//! ```
//! use uavfl_core::{config::ExperimentConfig, harness::run_experiment};
//!
//! let mut cfg = ExperimentConfig::default();
//! cfg.scheme.max_rounds = 2;
//! let table = run_experiment(&cfg).unwrap();
//! assert_eq!(table.rows.len(), 2);
//! ```

pub mod airnet;
pub mod config;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod model;
pub mod protocol;
pub mod report;
pub mod seeds;

pub use error::{Error, Result};
