//! A-posteriori performance measurement along closed-loop runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{integrate_with, CostTerms, IntegratorOptions, PlantModel, StageCost, StepMode, Trajectory};
use crate::mpc::{solve_ocp, ClosedLoopRun, MpcError, OcpSpec};
use crate::network::NcsTrace;
use crate::signal::{grid_index, ControlSignal};

/// Default stage-cost truncation level.
pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("step {step} has no converged value function")]
    MissingValue { step: usize },
    #[error("run has no complete step")]
    Empty,
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

/// `(V_n - V_next) / (stage_integral - epsilon)`, or 1 when the
/// denominator is not positive.
pub fn local_alpha(v_n: f64, v_next: f64, stage_integral: f64, epsilon: f64) -> f64 {
    let den = stage_integral - epsilon;
    if den > 0.0 {
        (v_n - v_next) / den
    } else {
        1.0
    }
}

/// Data of one receding-horizon step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepData {
    pub time: f64,
    pub delta: f64,
    pub value: f64,
    pub next_value: f64,
    pub stage_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAlpha {
    pub n: usize,
    #[serde(flatten)]
    pub data: StepData,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub steps: Vec<StepAlpha>,
    pub local_alphas: Vec<f64>,
    pub global_alpha: f64,
    /// Sum of the per-step stage integrals.
    pub closed_loop_cost: f64,
    /// Steps violating the relaxed decrease condition at the checked level.
    pub lyapunov_violations: Vec<usize>,
    pub epsilon_truncation: f64,
}

impl PerformanceReport {
    /// Local and global indices for `steps`. With `Some((alpha_bar, slack))`
    /// the decrease condition is checked at that level.
    pub fn from_steps(steps: &[StepData], epsilon: f64, alpha_bar: Option<(f64, f64)>) -> Self {
        let local: Vec<f64> = steps
            .iter()
            .map(|s| local_alpha(s.value, s.next_value, s.stage_integral, epsilon))
            .collect();
        let global = local.iter().copied().fold(f64::INFINITY, f64::min);
        let violations = match alpha_bar {
            Some((a, slack)) => lyapunov_check(steps, a, slack),
            None => Vec::new(),
        };
        Self {
            steps: steps
                .iter()
                .zip(&local)
                .enumerate()
                .map(|(n, (d, a))| StepAlpha { n, data: *d, alpha: *a })
                .collect(),
            global_alpha: global,
            local_alphas: local,
            closed_loop_cost: steps.iter().map(|s| s.stage_integral).sum(),
            lyapunov_violations: violations,
            epsilon_truncation: epsilon,
        }
    }
}

/// Step data of a plain closed-loop run.
pub fn run_steps(run: &ClosedLoopRun) -> Result<Vec<StepData>, AnalysisError> {
    if run.steps.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = run.steps.len();
    for (i, s) in run.steps.iter().enumerate() {
        if !s.converged || !s.value.is_finite() {
            return Err(AnalysisError::MissingValue { step: i });
        }
    }
    if !run.terminal_converged || !run.terminal_value.is_finite() {
        return Err(AnalysisError::MissingValue { step: n });
    }
    let values = run.values();
    Ok(run
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| StepData {
            time: s.time,
            delta: s.delta,
            value: values[i],
            next_value: values[i + 1],
            stage_integral: s.stage_integral,
        })
        .collect())
}

/// Local/global indices of a plain closed-loop run, with the Lyapunov
/// check done at the measured global level.
pub fn trajectory_alpha(run: &ClosedLoopRun, spec: &OcpSpec, epsilon: f64) -> Result<PerformanceReport, AnalysisError> {
    let steps = run_steps(run)?;
    let mut report = PerformanceReport::from_steps(&steps, epsilon, None);
    if report.global_alpha > 0.0 {
        report.lyapunov_violations =
            lyapunov_check(&steps, report.global_alpha.min(1.0), lyapunov_slack(spec));
    }
    Ok(report)
}

/// Slack used when comparing value functions: ten integration tolerances.
pub fn lyapunov_slack(spec: &OcpSpec) -> f64 {
    10.0 * spec.integration_tolerance
}

/// Steps with `V_next > V_n - alpha_bar * stage_integral + slack`.
pub fn lyapunov_check(steps: &[StepData], alpha_bar: f64, slack: f64) -> Vec<usize> {
    steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.next_value > s.value - alpha_bar * s.stage_integral + slack)
        .map(|(i, _)| i)
        .collect()
}

/// Step data of a networked run. The value function is recomputed at the
/// plant state of every activation, warm started from the piece applied
/// there, and the stage cost is integrated along the applied input.
pub fn network_steps(model: &dyn PlantModel, spec: &OcpSpec, trace: &NcsTrace) -> Result<Vec<StepData>, AnalysisError> {
    let active: Vec<_> = trace.activated().filter(|a| a.actual_state.is_some()).collect();
    if active.len() < 2 {
        return Err(AnalysisError::Empty);
    }
    let cells = spec.num_cells();
    let pad = model.equilibrium_input();
    let mut values = Vec::with_capacity(active.len());
    for (i, a) in active.iter().enumerate() {
        let mut warm = a.control.values().to_vec();
        warm.truncate(cells * pad.len());
        while warm.len() < cells * pad.len() {
            warm.extend_from_slice(pad);
        }
        let warm = ControlSignal::new(0.0, spec.control_sampling, pad.len(), warm).map_err(MpcError::from)?;
        let sol = solve_ocp(model, spec, a.actual_state.as_ref().unwrap(), Some(&warm))?;
        if !sol.converged || !sol.value.is_finite() {
            return Err(AnalysisError::MissingValue { step: i });
        }
        values.push(sol.value);
    }
    let mut steps = Vec::with_capacity(active.len() - 1);
    for (i, w) in active.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let out = integrate_with(
            model,
            a.actual_state.as_ref().unwrap(),
            &trace.applied,
            a.sigma,
            b.sigma,
            StepMode::Adaptive(IntegratorOptions::with_tolerance(spec.integration_tolerance)),
            Some(CostTerms { stage_cost: spec.stage_cost.as_ref(), track_violation: false }),
            false,
        )
        .map_err(MpcError::from)?;
        steps.push(StepData {
            time: a.sigma,
            delta: b.sigma - a.sigma,
            value: values[i],
            next_value: values[i + 1],
            stage_integral: out.stage_integral,
        });
    }
    Ok(steps)
}

pub fn network_alpha(
    model: &dyn PlantModel,
    spec: &OcpSpec,
    trace: &NcsTrace,
    epsilon: f64,
) -> Result<PerformanceReport, AnalysisError> {
    let steps = network_steps(model, spec, trace)?;
    let mut report = PerformanceReport::from_steps(&steps, epsilon, None);
    if report.global_alpha > 0.0 {
        report.lyapunov_violations =
            lyapunov_check(&steps, report.global_alpha.min(1.0), lyapunov_slack(spec));
    }
    Ok(report)
}

// Five-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// `int_0^t_end l(x(t), u(t)) dt` by Gauss-Legendre quadrature on every
/// sample interval of `trajectory`, split at the control switches.
pub fn closed_loop_cost(
    trajectory: &Trajectory,
    controls: &ControlSignal,
    stage_cost: &dyn StageCost,
    t_end: f64,
) -> f64 {
    let times = trajectory.sample_times();
    let t_end = t_end.min(trajectory.end_time());
    let mut total = 0.0;
    for w in times.windows(2) {
        let a = w[0];
        let b = w[1].min(t_end);
        if b <= a {
            break;
        }
        let mut edges = vec![a];
        edges.extend(controls.breakpoints(a, b));
        edges.push(b);
        for e in edges.windows(2) {
            let (lo, hi) = (e[0], e[1]);
            let k = grid_index(lo, controls.start_time(), controls.sampling()).max(0) as usize;
            let u = controls.cell(k.min(controls.num_cells().saturating_sub(1)));
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            total += half
                * GL_NODES
                    .iter()
                    .zip(&GL_WEIGHTS)
                    .map(|(x, wt)| wt * stage_cost.evaluate(&trajectory.dense_eval(mid + half * x), u))
                    .sum::<f64>();
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CstrModel, QuadraticCost};
    use crate::mpc::{fixed_schedule, mpc_closed_loop};

    #[test]
    fn local_alpha_examples() {
        assert_eq!(local_alpha(10.0, 7.0, 4.0, 0.0), 0.75);
        assert_eq!(local_alpha(5.0, 6.0, 2.0, 0.0), -0.5);
        assert_eq!(local_alpha(5.0, 6.0, 1e-13, 1e-12), 1.0);
        assert_eq!(local_alpha(5.0, 4.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn frozen_trajectory() {
        let steps = vec![StepData { time: 0.0, delta: 0.1, value: 0.0, next_value: 0.0, stage_integral: 0.0 }; 4];
        let r = PerformanceReport::from_steps(&steps, DEFAULT_EPSILON, Some((1.0, 1e-5)));
        assert_eq!(r.global_alpha, 1.0);
        assert!(r.local_alphas.iter().all(|a| *a == 1.0));
        assert!(r.lyapunov_violations.is_empty());
        assert_eq!(r.closed_loop_cost, 0.0);
    }

    #[test]
    fn lyapunov_check_levels() {
        let steps = vec![
            StepData { time: 0.0, delta: 0.1, value: 10.0, next_value: 7.0, stage_integral: 4.0 },
            StepData { time: 0.1, delta: 0.1, value: 7.0, next_value: 5.0, stage_integral: 2.5 },
        ];
        assert!(lyapunov_check(&steps, 0.7, 0.0).is_empty());
        assert_eq!(lyapunov_check(&steps, 1.0, 0.0), vec![0, 1]);
        assert_eq!(lyapunov_check(&steps, 0.78, 0.0), vec![0]);
    }

    #[test]
    fn quadrature_matches_integrated_cost() {
        let m = CstrModel::default();
        let spec = OcpSpec::cstr(0.3).unwrap();
        let run = mpc_closed_loop(&m, &spec, &[0.35, 370.0], &fixed_schedule(0.1, 0.3), 0.3).unwrap();
        let quad = closed_loop_cost(&run.trajectory, &run.applied, &QuadraticCost::cstr(), 0.3);
        let ode: f64 = run.steps.iter().map(|s| s.stage_integral).sum();
        assert!((quad - ode).abs() <= 1e-4 * ode, "{quad} vs {ode}");
        assert_eq!(closed_loop_cost(&run.trajectory, &run.applied, &QuadraticCost::cstr(), 0.0), 0.0);
        let report = trajectory_alpha(&run, &spec, DEFAULT_EPSILON).unwrap();
        assert_eq!(report.global_alpha, report.local_alphas.iter().copied().fold(f64::INFINITY, f64::min));
        assert!(report.lyapunov_violations.is_empty());
    }
}
