//! The reactor study: fixed and randomly varying control horizons, batched
//! over seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{closed_loop_cost, trajectory_alpha, AnalysisError, PerformanceReport, DEFAULT_EPSILON};
use crate::dynamics::{CstrModel, PlantModel};
use crate::mpc::{cells_in, fixed_schedule, mpc_closed_loop, ClosedLoopRun, MpcError, OcpSpec};
use crate::par::{map_indices, Execution};

pub const CSTR_INITIAL_STATE: [f64; 2] = [0.35, 370.0];
pub const CSTR_PREDICTION_HORIZON: f64 = 0.3;
/// Simulated time; the reactor reaches its practical equilibrium region
/// after about one second.
pub const CSTR_DURATION: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("invalid horizon range [{lo}, {hi}]")]
    Range { lo: f64, hi: f64 },
}

/// Control horizons drawn uniformly from the grid multiples in `[lo, hi]`
/// until `duration` is covered.
pub fn random_schedule<R: Rng>(
    rng: &mut R,
    lo: f64,
    hi: f64,
    sampling: f64,
    duration: f64,
) -> Result<Vec<f64>, ExperimentError> {
    let (Some(a), Some(b)) = (cells_in(lo, sampling), cells_in(hi, sampling)) else {
        return Err(ExperimentError::Range { lo, hi });
    };
    if a == 0 || b < a {
        return Err(ExperimentError::Range { lo, hi });
    }
    let mut schedule = Vec::new();
    let mut cells = 0usize;
    let total = cells_in(duration, sampling).unwrap_or_else(|| (duration / sampling).ceil() as usize);
    while cells < total {
        let k = rng.random_range(a..=b);
        schedule.push(k as f64 * sampling);
        cells += k;
    }
    Ok(schedule)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub schedule: Vec<f64>,
    pub run: ClosedLoopRun,
    pub report: PerformanceReport,
    /// Quadrature of the stage cost over `[0, duration]`.
    pub truncated_cost: f64,
}

/// Summary row of one run, as written by batch commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub global_alpha: f64,
    pub truncated_cost: f64,
    pub final_state: Vec<f64>,
    pub steps: usize,
    pub error: Option<String>,
}

/// Closed-loop study of a plant from a fixed initial state.
#[derive(Clone)]
pub struct Experiment<M> {
    pub model: M,
    pub spec: OcpSpec,
    pub x0: Vec<f64>,
    pub duration: f64,
    pub epsilon: f64,
}

impl Experiment<CstrModel> {
    pub fn cstr() -> Self {
        Self {
            model: CstrModel::default(),
            spec: OcpSpec::cstr(CSTR_PREDICTION_HORIZON).expect("valid reactor problem"),
            x0: CSTR_INITIAL_STATE.to_vec(),
            duration: CSTR_DURATION,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl<M: PlantModel> Experiment<M> {
    pub fn run_schedule(&self, schedule: Vec<f64>) -> Result<RunOutcome, ExperimentError> {
        let run = mpc_closed_loop(&self.model, &self.spec, &self.x0, &schedule, self.duration)?;
        let report = trajectory_alpha(&run, &self.spec, self.epsilon)?;
        let truncated_cost =
            closed_loop_cost(&run.trajectory, &run.applied, self.spec.stage_cost.as_ref(), self.duration);
        Ok(RunOutcome { schedule, run, report, truncated_cost })
    }

    pub fn fixed(&self, delta: f64) -> Result<RunOutcome, ExperimentError> {
        self.run_schedule(fixed_schedule(delta, self.duration))
    }

    pub fn random(&self, seed: u64, lo: f64, hi: f64) -> Result<RunOutcome, ExperimentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = random_schedule(&mut rng, lo, hi, self.spec.control_sampling, self.duration)?;
        self.run_schedule(schedule)
    }

    /// Fixed-horizon runs for each entry of `deltas`.
    pub fn sweep(&self, deltas: &[f64], execution: Execution) -> Vec<Result<RunOutcome, ExperimentError>>
    where
        M: Sync,
    {
        map_indices(execution, deltas.len(), |i| self.fixed(deltas[i]))
    }

    /// `runs` random-horizon runs; run `i` uses seed `seed + i`.
    pub fn random_batch(
        &self,
        seed: u64,
        runs: usize,
        lo: f64,
        hi: f64,
        execution: Execution,
    ) -> Vec<Result<RunOutcome, ExperimentError>>
    where
        M: Sync,
    {
        map_indices(execution, runs, |i| self.random(seed.wrapping_add(i as u64), lo, hi))
    }
}

impl RunSummary {
    pub fn new(run: usize, seed: u64, outcome: &Result<RunOutcome, ExperimentError>) -> Self {
        match outcome {
            Ok(o) => Self {
                run,
                seed,
                global_alpha: o.report.global_alpha,
                truncated_cost: o.truncated_cost,
                final_state: o.run.terminal_state.clone(),
                steps: o.run.steps.len(),
                error: None,
            },
            Err(e) => Self {
                run,
                seed,
                global_alpha: f64::NAN,
                truncated_cost: f64::NAN,
                final_state: Vec::new(),
                steps: 0,
                error: Some(e.to_string()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_schedules_use_grid_multiples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_schedule(&mut rng, 0.1, 0.3, 0.01, 1.0).unwrap();
        assert!(s.iter().sum::<f64>() >= 1.0 - 1e-12);
        for d in &s {
            let k = cells_in(*d, 0.01).unwrap();
            assert!((10..=30).contains(&k));
        }
        let mut again = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_schedule(&mut again, 0.1, 0.3, 0.01, 1.0).unwrap(), s);
        assert!(random_schedule(&mut rng, 0.3, 0.1, 0.01, 1.0).is_err());
        assert!(random_schedule(&mut rng, 0.105, 0.3, 0.01, 1.0).is_err());
    }
}
