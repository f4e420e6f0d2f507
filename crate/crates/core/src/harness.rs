//! Experiment orchestration: config in, per-round metrics out.

use serde::Serialize;

use crate::airnet::{effective_topology, FailureEvent, NodeId, Topology};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::TrainingConfig;
use crate::protocol::{
    check_convergence, coordinator_init, dfl_round, fedavg_round, mean_alive, ConvergenceVerdict, FleetState,
    FleetStatus, RoundContext, RoundOutcome, RoundReport, Scheme,
};

/// Resolution of recorded round latencies, 2^-40 s (about 0.9 ps).
///
/// Latencies on this grid add and subtract without rounding error while the
/// running total stays below 2^13 s, so cumulative columns are exact sums.
pub const LATENCY_QUANTUM_S: f64 = 1.0 / (1u64 << 40) as f64;

pub fn quantize_latency(seconds: f64) -> f64 {
    (seconds / LATENCY_QUANTUM_S).round() * LATENCY_QUANTUM_S
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Converged,
    Halted,
    BudgetExhausted,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Converged => "converged",
            RunStatus::Halted => "halted",
            RunStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    /// Completed rounds, starting at 1.
    pub round: usize,
    pub losses: Vec<Option<f64>>,
    pub avg_loss: f64,
    pub round_latency_s: f64,
    pub cumulative_latency_s: f64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub scheme: Scheme,
    pub uav_ids: Vec<NodeId>,
    /// Losses of the initial models, before any round.
    pub initial_losses: Vec<Option<f64>>,
    pub initial_avg_loss: f64,
    pub rows: Vec<MetricsRow>,
    pub status: RunStatus,
}

impl MetricsTable {
    pub fn final_avg_loss(&self) -> f64 {
        self.rows.last().map_or(self.initial_avg_loss, |r| r.avg_loss)
    }

    pub fn final_losses(&self) -> &[Option<f64>] {
        self.rows.last().map_or(&self.initial_losses, |r| &r.losses)
    }
}

/// Step-by-step driver for one experiment. [`run_experiment`] is the
/// usual entry point; this type exposes the fleet between rounds.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ExperimentConfig,
    topology: Topology,
    failures: Vec<FailureEvent>,
    training: TrainingConfig,
    state: FleetState,
}

impl Simulation {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let deployment = coordinator_init(config)?;
        Ok(Simulation {
            config: config.clone(),
            topology: deployment.topology,
            failures: config.failure_events(),
            training: config.training_config(),
            state: deployment.state,
        })
    }

    pub fn state(&self) -> &FleetState {
        &self.state
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Topology in force during 0-based round `round`.
    pub fn topology_at(&self, round: usize) -> Topology {
        effective_topology(&self.topology, &self.failures, round)
    }

    /// Runs the next round under the failures active for it.
    pub fn step(&mut self) -> Result<RoundOutcome> {
        let topo = self.topology_at(self.state.round);
        let ctx = RoundContext {
            topology: &topo,
            channel: &self.config.channel,
            training: &self.training,
            mixing: self.config.scheme.mixing,
            access: self.config.scheme.access_mode,
            send: self.config.scheme.send_mode,
        };
        match self.config.scheme.kind {
            Scheme::Dfl => dfl_round(&mut self.state, &ctx),
            Scheme::Fedavg => fedavg_round(&mut self.state, &ctx),
        }
    }
}

/// Runs the configured scheme until the round budget runs out, the average
/// loss settles (when a convergence threshold is set) or the fleet halts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsTable> {
    let mut sim = Simulation::new(config)?;
    let initial_losses = sim.state.losses(&sim.topology_at(0));
    let mut table = MetricsTable {
        scheme: config.scheme.kind,
        uav_ids: sim.state.uav_ids.clone(),
        initial_avg_loss: mean_alive(&initial_losses),
        initial_losses,
        rows: Vec::with_capacity(config.scheme.max_rounds),
        status: RunStatus::Running,
    };
    let max_rounds = config.scheme.max_rounds;
    let mut history: Vec<f64> = Vec::new();
    let mut cumulative = 0.0;

    table.status = loop {
        if history.len() >= max_rounds {
            break RunStatus::BudgetExhausted;
        }
        let report: RoundReport = match sim.step()? {
            RoundOutcome::Completed(r) => r,
            RoundOutcome::Halted => {
                log::info!(
                    "{} halted before round {}",
                    config.scheme.kind.as_str(),
                    history.len() + 1
                );
                break RunStatus::Halted;
            }
        };
        let round_latency = quantize_latency(report.round_latency);
        cumulative += round_latency;
        let avg_loss = report.avg_loss();
        log::debug!(
            "{} round {}: avg loss {avg_loss:.6}, round latency {:.6} s",
            config.scheme.kind.as_str(),
            report.round,
            report.round_latency
        );
        history.push(avg_loss);
        table.rows.push(MetricsRow {
            round: report.round,
            losses: report.losses,
            avg_loss,
            round_latency_s: round_latency,
            cumulative_latency_s: cumulative,
            status: RunStatus::Running,
        });
        if let Some(eps) = config.scheme.convergence_epsilon {
            if check_convergence(&history, eps, config.scheme.convergence_window, max_rounds)
                == ConvergenceVerdict::Converged
            {
                sim.state.status = FleetStatus::Converged;
                break RunStatus::Converged;
            }
        }
    };
    if let Some(last) = table.rows.last_mut() {
        last.status = table.status;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonPoint {
    pub round: usize,
    pub avg_loss_a: f64,
    pub avg_loss_b: f64,
    pub cumulative_latency_a_s: f64,
    pub cumulative_latency_b_s: f64,
}

/// Side-by-side view of two runs; every gap is `a - b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub scheme_a: Scheme,
    pub scheme_b: Scheme,
    pub uav_ids: Vec<NodeId>,
    pub points: Vec<ComparisonPoint>,
    pub final_losses_a: Vec<Option<f64>>,
    pub final_losses_b: Vec<Option<f64>>,
    pub avg_loss_gap: f64,
    /// Largest absolute per-UAV difference of the final losses.
    pub max_individual_gap: f64,
    pub latency_delta_s: f64,
}

/// Compares two finished runs over the rounds both completed.
pub fn summarize(a: &MetricsTable, b: &MetricsTable) -> Result<ComparisonSummary> {
    if a.uav_ids != b.uav_ids {
        return Err(Error::Comparison("the two runs train different UAV sets".into()));
    }
    let n = a.rows.len().min(b.rows.len());
    let points: Vec<ComparisonPoint> = a.rows[..n]
        .iter()
        .zip(&b.rows[..n])
        .map(|(ra, rb)| ComparisonPoint {
            round: ra.round,
            avg_loss_a: ra.avg_loss,
            avg_loss_b: rb.avg_loss,
            cumulative_latency_a_s: ra.cumulative_latency_s,
            cumulative_latency_b_s: rb.cumulative_latency_s,
        })
        .collect();
    let (final_a, final_b) = if n == 0 {
        (a.initial_losses.clone(), b.initial_losses.clone())
    } else {
        (a.rows[n - 1].losses.clone(), b.rows[n - 1].losses.clone())
    };
    let max_individual_gap = final_a
        .iter()
        .zip(&final_b)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs()))
        .fold(0.0, f64::max);
    let (avg_loss_gap, latency_delta_s) = match points.last() {
        Some(p) => (
            p.avg_loss_a - p.avg_loss_b,
            p.cumulative_latency_a_s - p.cumulative_latency_b_s,
        ),
        None => (a.initial_avg_loss - b.initial_avg_loss, 0.0),
    };
    Ok(ComparisonSummary {
        scheme_a: a.scheme,
        scheme_b: b.scheme,
        uav_ids: a.uav_ids.clone(),
        points,
        final_losses_a: final_a,
        final_losses_b: final_b,
        avg_loss_gap,
        max_individual_gap,
        latency_delta_s,
    })
}

/// Runs both configs and summarizes them. They must share the round budget.
pub fn compare(
    config_a: &ExperimentConfig,
    config_b: &ExperimentConfig,
) -> Result<(MetricsTable, MetricsTable, ComparisonSummary)> {
    if config_a.scheme.max_rounds != config_b.scheme.max_rounds {
        return Err(Error::Comparison(format!(
            "round budgets differ: {} vs {}",
            config_a.scheme.max_rounds, config_b.scheme.max_rounds
        )));
    }
    let a = run_experiment(config_a)?;
    let b = run_experiment(config_b)?;
    let summary = summarize(&a, &b)?;
    Ok((a, b, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FailureSpec;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scheme.max_rounds = 4;
        cfg
    }

    #[test]
    fn zero_rounds_gives_an_empty_table() {
        let mut cfg = small();
        cfg.scheme.max_rounds = 0;
        let t = run_experiment(&cfg).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.status, RunStatus::BudgetExhausted);
        assert!(t.initial_avg_loss.is_finite());
    }

    #[test]
    fn rows_and_bookkeeping() {
        let t = run_experiment(&small()).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.status, RunStatus::BudgetExhausted);
        assert_eq!(t.rows[3].status, RunStatus::BudgetExhausted);
        assert!(t.rows[..3].iter().all(|r| r.status == RunStatus::Running));
        let mut prev = 0.0;
        for (k, r) in t.rows.iter().enumerate() {
            assert_eq!(r.round, k + 1);
            assert_eq!(r.cumulative_latency_s - prev, r.round_latency_s);
            prev = r.cumulative_latency_s;
        }
    }

    #[test]
    fn convergence_stops_early() {
        let mut cfg = small();
        cfg.scheme.max_rounds = 30;
        cfg.training.local_epochs = 0;
        cfg.scheme.shared_init = true;
        cfg.scheme.convergence_epsilon = Some(1e-9);
        cfg.scheme.convergence_window = 2;
        let t = run_experiment(&cfg).unwrap();
        assert_eq!(t.status, RunStatus::Converged);
        // Two successive differences need three rounds.
        assert_eq!(t.rows.len(), 3);
    }

    #[test]
    fn fedavg_halts_on_server_loss() {
        let mut cfg = small().with_scheme(Scheme::Fedavg);
        cfg.failures.events.push(FailureSpec {
            node: Some(1),
            edge: None,
            start: 2,
            end: None,
        });
        let t = run_experiment(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.status, RunStatus::Halted);
        assert_eq!(t.rows[1].status, RunStatus::Halted);
    }

    #[test]
    fn compare_rejects_different_budgets() {
        let mut b = small();
        b.scheme.max_rounds = 5;
        assert!(matches!(compare(&small(), &b), Err(Error::Comparison(_))));
    }

    #[test]
    fn self_comparison_has_zero_gaps() {
        let (_, _, s) = compare(&small(), &small()).unwrap();
        assert_eq!(s.avg_loss_gap, 0.0);
        assert_eq!(s.max_individual_gap, 0.0);
        assert_eq!(s.latency_delta_s, 0.0);
        assert_eq!(s.points.len(), 4);
    }
}
