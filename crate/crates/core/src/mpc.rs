//! Finite-horizon optimal control by direct single shooting, and the
//! receding-horizon loop built on it.
//!
//! Controls are piecewise constant on the grid `control_sampling`. The
//! optimiser sees the cost computed with a fixed number of Dormand–Prince
//! steps per control cell; the reported predicted trajectory and all plant
//! simulation use adaptive integration at `integration_tolerance`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    integrate_with, CostTerms, Dopri5, DynamicsError, IntegratorOptions, Limits, PlantModel,
    QuadraticCost, StageCost, StepMode, Trajectory,
};
use crate::optimize::{minimize_box, Objective, OptimizerOptions};
use crate::signal::{ControlSignal, SignalError, GRID_SNAP};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("invalid horizon schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("MPC step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<MpcError>,
    },
}

/// Optimal control problem data shared by every MPC step.
#[derive(Clone)]
pub struct OcpSpec {
    pub prediction_horizon: f64,
    pub control_sampling: f64,
    pub stage_cost: Arc<dyn StageCost>,
    /// Weight on the integrated squared state-constraint violation.
    pub state_penalty_weight: f64,
    /// Projected-gradient tolerance of the optimiser.
    pub optimizer_tolerance: f64,
    pub max_iterations: usize,
    /// Fixed integration steps per control cell inside the optimiser.
    pub shooting_substeps: usize,
    /// Tolerance of adaptive integration (plant and predictions).
    pub integration_tolerance: f64,
}

impl fmt::Debug for OcpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcpSpec")
            .field("prediction_horizon", &self.prediction_horizon)
            .field("control_sampling", &self.control_sampling)
            .field("state_penalty_weight", &self.state_penalty_weight)
            .field("optimizer_tolerance", &self.optimizer_tolerance)
            .field("max_iterations", &self.max_iterations)
            .field("shooting_substeps", &self.shooting_substeps)
            .field("integration_tolerance", &self.integration_tolerance)
            .finish_non_exhaustive()
    }
}

impl OcpSpec {
    pub fn new(
        prediction_horizon: f64,
        control_sampling: f64,
        stage_cost: Arc<dyn StageCost>,
    ) -> Result<Self, MpcError> {
        let spec = Self {
            prediction_horizon,
            control_sampling,
            stage_cost,
            state_penalty_weight: 1e6,
            optimizer_tolerance: 1e-7,
            max_iterations: 1000,
            shooting_substeps: 2,
            integration_tolerance: 1e-6,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reactor problem: sampling 0.01 and the reactor running cost.
    pub fn cstr(prediction_horizon: f64) -> Result<Self, MpcError> {
        Self::new(prediction_horizon, 0.01, Arc::new(QuadraticCost::cstr()))
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: String| Err(MpcError::InvalidSpec(m));
        if !(self.control_sampling > 0.0 && self.control_sampling.is_finite()) {
            return bad(format!("control sampling {} must be positive", self.control_sampling));
        }
        if !(self.prediction_horizon > 0.0 && self.prediction_horizon.is_finite()) {
            return bad(format!("prediction horizon {} must be positive", self.prediction_horizon));
        }
        if cells_in(self.prediction_horizon, self.control_sampling).is_none() {
            return bad(format!(
                "prediction horizon {} is not a multiple of the sampling {}",
                self.prediction_horizon, self.control_sampling
            ));
        }
        if !(self.optimizer_tolerance > 0.0) || !(self.integration_tolerance > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.state_penalty_weight >= 0.0) {
            return bad("state penalty weight must be nonnegative".into());
        }
        if self.shooting_substeps == 0 {
            return bad("at least one shooting substep per cell is required".into());
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        cells_in(self.prediction_horizon, self.control_sampling).unwrap_or(0)
    }

    /// Number of grid cells in a control horizon, if `delta` lies on the grid.
    pub fn cells_for(&self, delta: f64) -> Option<usize> {
        cells_in(delta, self.control_sampling)
    }

    fn integrator_options(&self) -> IntegratorOptions {
        IntegratorOptions::with_tolerance(self.integration_tolerance)
    }
}

/// `span / step` when it is a nonnegative integer up to grid rounding.
pub fn cells_in(span: f64, step: f64) -> Option<usize> {
    let r = span / step;
    let k = r.round();
    (k >= 0.0 && (r - k).abs() <= GRID_SNAP * k.max(1.0) * 1e3).then_some(k as usize)
}

/// `J_T(x0, u)`: stage cost integral plus the state-constraint penalty,
/// integrated adaptively over `[start, start + T]` of `u`.
pub fn cost_functional(
    model: &dyn PlantModel,
    spec: &OcpSpec,
    x0: &[f64],
    u: &ControlSignal,
) -> Result<f64, MpcError> {
    let t0 = u.start_time();
    let out = integrate_with(
        model,
        x0,
        u,
        t0,
        t0 + spec.prediction_horizon,
        StepMode::Adaptive(spec.integrator_options()),
        Some(CostTerms { stage_cost: spec.stage_cost.as_ref(), track_violation: true }),
        false,
    )?;
    Ok(out.stage_integral + spec.state_penalty_weight * out.violation_integral)
}

/// The objective the optimiser minimises: [`cost_functional`] with
/// `shooting_substeps` fixed steps per cell.
pub fn discretized_cost(
    model: &dyn PlantModel,
    spec: &OcpSpec,
    x0: &[f64],
    u: &ControlSignal,
) -> Result<f64, MpcError> {
    let t0 = u.start_time();
    let out = integrate_with(
        model,
        x0,
        u,
        t0,
        t0 + spec.prediction_horizon,
        StepMode::Fixed { substeps: spec.shooting_substeps },
        Some(CostTerms { stage_cost: spec.stage_cost.as_ref(), track_violation: true }),
        false,
    )?;
    Ok(out.stage_integral + spec.state_penalty_weight * out.violation_integral)
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    /// Optimal control on `[0, T)`.
    pub control: ControlSignal,
    /// `V_T(x0)`.
    pub value: f64,
    pub predicted_trajectory: Trajectory,
    pub converged: bool,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
}

/// Single-shooting objective with prefix reuse for finite differences.
struct Shooting<'a> {
    model: &'a dyn PlantModel,
    spec: &'a OcpSpec,
    cells: usize,
    input_dim: usize,
    solver: Dopri5,
    /// Augmented states at the cell boundaries of the gradient base point.
    prefix: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl<'a> Shooting<'a> {
    fn new(model: &'a dyn PlantModel, spec: &'a OcpSpec, x0: &'a [f64]) -> Self {
        let n = model.state_dim();
        let cells = spec.num_cells();
        let mut y0 = vec![0.0; n + 2];
        y0[..n].copy_from_slice(x0);
        Self {
            model,
            spec,

            cells,
            input_dim: model.input_dim(),
            solver: Dopri5::new(n + 2),
            prefix: vec![y0; cells + 1],
            scratch: vec![0.0; n + 2],
        }
    }

    fn terms(&self) -> CostTerms<'a> {
        CostTerms { stage_cost: self.spec.stage_cost.as_ref(), track_violation: true }
    }

    fn advance(&mut self, y: &mut [f64], u: &[f64]) -> Result<(), DynamicsError> {
        let mut rhs = crate::dynamics::augmented_rhs(self.model, Some(self.terms()), u);
        self.solver.solve_fixed(
            &mut rhs,
            0.0,
            self.spec.control_sampling,
            y,
            self.spec.shooting_substeps,
            None,
        )
    }

    fn total(&self, y: &[f64]) -> f64 {
        let n = self.model.state_dim();
        y[n] + self.spec.state_penalty_weight * y[n + 1]
    }

    /// Cost of `u` continuing from the stored boundary state of cell `from`.
    fn cost_from(&mut self, from: usize, u: &[f64]) -> Result<f64, DynamicsError> {
        let mut y = std::mem::take(&mut self.scratch);
        y.copy_from_slice(&self.prefix[from]);
        let m = self.input_dim;
        let mut result = Ok(());
        for k in from..self.cells {
            result = self.advance(&mut y, &u[k * m..(k + 1) * m]);
            if result.is_err() {
                break;
            }
        }
        let value = self.total(&y);
        self.scratch = y;
        result.map(|_| value)
    }

    fn fill_prefix(&mut self, u: &[f64]) -> Result<f64, DynamicsError> {
        let m = self.input_dim;
        let mut y = self.prefix[0].clone();
        for k in 0..self.cells {
            self.advance(&mut y, &u[k * m..(k + 1) * m])?;
            self.prefix[k + 1].copy_from_slice(&y);
        }
        Ok(self.total(&y))
    }
}

/// Failures inside the vector field at trial points are treated as an
/// infinite cost so the line search backs off.
fn soften(r: Result<f64, DynamicsError>) -> Result<f64, DynamicsError> {
    match r {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) | Err(DynamicsError::Domain(_)) | Err(DynamicsError::NonFinite(_)) => {
            Ok(f64::INFINITY)
        }
        Err(e) => Err(e),
    }
}

impl Objective for Shooting<'_> {
    type Error = DynamicsError;

    fn value(&mut self, u: &[f64]) -> Result<f64, DynamicsError> {
        soften(self.cost_from(0, u))
    }

    fn gradient(&mut self, u: &[f64], _value: f64, grad: &mut [f64]) -> Result<(), DynamicsError> {
        self.fill_prefix(u)?;
        let mut work = u.to_vec();
        for j in 0..u.len() {
            let cell = j / self.input_dim;
            let h = 1e-6 * u[j].abs().max(1.0);
            work[j] = u[j] + h;
            let plus = self.cost_from(cell, &work)?;
            work[j] = u[j] - h;
            let minus = self.cost_from(cell, &work)?;
            work[j] = u[j];
            grad[j] = (plus - minus) / (2.0 * h);
        }
        Ok(())
    }
}

/// Minimises the discretised cost over box-constrained piecewise-constant
/// controls on `[0, T)`. Without a warm start the search begins at the
/// equilibrium input.
pub fn solve_ocp(
    model: &dyn PlantModel,
    spec: &OcpSpec,
    x0: &[f64],
    warm_start: Option<&ControlSignal>,
) -> Result<OcpSolution, MpcError> {
    spec.validate()?;
    if x0.len() != model.state_dim() {
        return Err(DynamicsError::Dimension(format!(
            "initial state has {} entries, model expects {}",
            x0.len(),
            model.state_dim()
        ))
        .into());
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite(0.0).into());
    }
    let cells = spec.num_cells();
    let m = model.input_dim();
    let initial: Vec<f64> = match warm_start {
        Some(w) => {
            if w.input_dim() != m || w.num_cells() != cells {
                return Err(MpcError::InvalidSpec(format!(
                    "warm start has {} cells of dimension {}, expected {cells} of dimension {m}",
                    w.num_cells(),
                    w.input_dim()
                )));
            }
            w.values().to_vec()
        }
        None => model.equilibrium_input().repeat(cells),
    };
    let bounds: Vec<Limits> = model.input_constraints().repeat(cells);
    let options = OptimizerOptions {
        tolerance: spec.optimizer_tolerance,
        max_iterations: spec.max_iterations,
        ..OptimizerOptions::default()
    };
    let mut problem = Shooting::new(model, spec, x0);
    let min = minimize_box(&mut problem, &initial, &bounds, &options)?;
    if !min.value.is_finite() {
        return Err(DynamicsError::NonFinite(0.0).into());
    }
    let control = ControlSignal::new(0.0, spec.control_sampling, m, min.x)?;
    let predicted = integrate_with(
        model,
        x0,
        &control,
        0.0,
        spec.prediction_horizon,
        StepMode::Adaptive(spec.integrator_options()),
        None,
        true,
    )?;
    log::debug!(
        "ocp solved: V = {:.6e}, {} iterations, |pg| = {:.2e}",
        min.value,
        min.iterations,
        min.projected_gradient_norm
    );
    Ok(OcpSolution {
        control,
        value: min.value,
        predicted_trajectory: predicted.trajectory.expect("recorded"),
        converged: min.converged,
        iterations: min.iterations,
        projected_gradient_norm: min.projected_gradient_norm,
    })
}

/// One receding-horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub time: f64,
    pub state: Vec<f64>,
    /// `V_T` at `state`.
    pub value: f64,
    pub delta: f64,
    /// `int l` over the applied piece `[time, time + delta)`.
    pub stage_integral: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub steps: Vec<StepRecord>,
    pub trajectory: Trajectory,
    /// Concatenation of the applied control pieces.
    pub applied: ControlSignal,
    pub terminal_state: Vec<f64>,
    /// `V_T` at the terminal state, closing the last decrease step.
    pub terminal_value: f64,
    pub terminal_converged: bool,
}

impl ClosedLoopRun {
    pub fn end_time(&self) -> f64 {
        self.trajectory.end_time()
    }

    /// `V_T` at every step boundary including the terminal one.
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.steps.iter().map(|s| s.value).collect();
        v.push(self.terminal_value);
        v
    }
}

/// Constant control horizon covering `duration`.
pub fn fixed_schedule(delta: f64, duration: f64) -> Vec<f64> {
    let n = (duration / delta - GRID_SNAP).ceil().max(1.0) as usize;
    vec![delta; n]
}

/// Checks that every entry is a positive grid multiple not above `T`;
/// returns the cell counts.
pub fn schedule_cells(spec: &OcpSpec, schedule: &[f64]) -> Result<Vec<usize>, MpcError> {
    schedule
        .iter()
        .enumerate()
        .map(|(i, &d)| match spec.cells_for(d) {
            Some(c) if c >= 1 && c <= spec.num_cells() => Ok(c),
            _ => Err(MpcError::Schedule(format!(
                "entry {i}: control horizon {d} must be a positive multiple of {} not exceeding {}",
                spec.control_sampling, spec.prediction_horizon
            ))),
        })
        .collect()
}

/// Receding-horizon loop: solve at the current state, apply the first
/// `delta_i` of the optimal control, shift. Stops once `duration` is
/// covered; the last applied piece may extend past it.
pub fn mpc_closed_loop(
    model: &dyn PlantModel,
    spec: &OcpSpec,
    x0: &[f64],
    horizon_schedule: &[f64],
    duration: f64,
) -> Result<ClosedLoopRun, MpcError> {
    spec.validate()?;
    let cells = schedule_cells(spec, horizon_schedule)?;
    let total: f64 = horizon_schedule.iter().sum();
    if total < duration * (1.0 - 1e-12) {
        return Err(MpcError::Schedule(format!(
            "schedule covers {total}, shorter than the duration {duration}"
        )));
    }
    let m = model.input_dim();
    let tau = spec.control_sampling;
    let mut state = x0.to_vec();
    let mut trajectory = Trajectory::new(0.0, x0);
    let mut applied = ControlSignal::new(0.0, tau, m, Vec::new())?;
    let mut steps = Vec::new();
    let mut warm: Option<ControlSignal> = None;
    let mut elapsed_cells = 0usize;
    let pad = model.equilibrium_input().to_vec();

    for (index, (&delta, &c)) in horizon_schedule.iter().zip(&cells).enumerate() {
        let time = elapsed_cells as f64 * tau;
        if time >= duration - GRID_SNAP {
            break;
        }
        let wrap = |e: MpcError| MpcError::Step { index, source: Box::new(e) };
        let sol = solve_ocp(model, spec, &state, warm.as_ref()).map_err(wrap)?;
        if !sol.converged {
            log::warn!("step {index}: optimiser stopped at |pg| = {:.3e}", sol.projected_gradient_norm);
        }
        let piece = sol.control.slice_cells(0, c).with_start_time(time);
        let out = integrate_with(
            model,
            &state,
            &piece,
            time,
            time + c as f64 * tau,
            StepMode::Adaptive(spec.integrator_options()),
            Some(CostTerms { stage_cost: spec.stage_cost.as_ref(), track_violation: false }),
            true,
        )
        .map_err(|e| wrap(e.into()))?;
        steps.push(StepRecord {
            index,
            time,
            state: state.clone(),
            value: sol.value,
            delta,
            stage_integral: out.stage_integral,
            converged: sol.converged,
            iterations: sol.iterations,
        });
        trajectory.extend(out.trajectory.as_ref().expect("recorded"));
        applied.append(&piece)?;
        state = out.final_state;
        elapsed_cells += c;
        warm = Some(sol.control.shifted(c, &pad));
    }

    let terminal = solve_ocp(model, spec, &state, warm.as_ref())
        .map_err(|e| MpcError::Step { index: steps.len(), source: Box::new(e) })?;
    Ok(ClosedLoopRun {
        steps,
        trajectory,
        applied,
        terminal_state: state,
        terminal_value: terminal.value,
        terminal_converged: terminal.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CstrModel, FnModel};

    struct XuCost;
    impl StageCost for XuCost {
        fn evaluate(&self, x: &[f64], u: &[f64]) -> f64 {
            x[0] * x[0] + u[0] * u[0]
        }
    }

    fn scalar_spec(t: f64) -> OcpSpec {
        OcpSpec::new(t, 0.1, Arc::new(XuCost)).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(OcpSpec::cstr(0.3).is_ok());
        assert!(OcpSpec::cstr(0.305).is_err());
        assert!(OcpSpec::new(0.3, 0.0, Arc::new(XuCost)).is_err());
        assert_eq!(OcpSpec::cstr(0.3).unwrap().num_cells(), 30);
        assert_eq!(cells_in(0.3, 0.01), Some(30));
        assert_eq!(cells_in(0.1 + 0.2, 0.1), Some(3));
    }

    #[test]
    fn cost_of_constant_integrand() {
        let m = FnModel::new(|_x, _u, dx| dx[0] = 0.0, vec![0.0], vec![0.0]);
        let spec = OcpSpec::new(2.0, 0.1, Arc::new(XuCost)).unwrap();
        let u = ControlSignal::constant(0.0, 0.1, &[0.0], 20);
        let j = cost_functional(&m, &spec, &[1.0], &u).unwrap();
        assert!((j - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_horizon_costs_nothing() {
        let m = CstrModel::default();
        let mut spec = OcpSpec::cstr(0.3).unwrap();
        spec.prediction_horizon = 0.0;
        let u = ControlSignal::constant(0.0, 0.01, &[300.0], 0);
        assert_eq!(cost_functional(&m, &spec, &[0.35, 370.0], &u).unwrap(), 0.0);
    }

    #[test]
    fn cstr_equilibrium_cost_is_small() {
        let m = CstrModel::default();
        let spec = OcpSpec::cstr(0.3).unwrap();
        let u = ControlSignal::constant(0.0, 0.01, &[300.0], 30);
        assert!(cost_functional(&m, &spec, &[0.5, 350.0], &u).unwrap() <= 1e-3);
        let sol = solve_ocp(&m, &spec, &[0.5, 350.0], None).unwrap();
        assert!(sol.value <= 1e-3, "{}", sol.value);
    }

    #[test]
    fn integrator_origin_is_optimal() {
        let m = FnModel::new(|_x, u, dx| dx[0] = u[0], vec![0.0], vec![0.0]);
        let sol = solve_ocp(&m, &scalar_spec(1.0), &[0.0], None).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.value, 0.0);
        assert!(sol.control.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_lq_solution() {
        // x' = u from x0 = 1: optimum is a decreasing control, cheaper than u = 0.
        let m = FnModel::new(|_x, u, dx| dx[0] = u[0], vec![0.0], vec![0.0])
            .with_input_constraints(vec![Limits::new(-5.0, 5.0)]);
        let spec = scalar_spec(1.0);
        let sol = solve_ocp(&m, &spec, &[1.0], None).unwrap();
        assert!(sol.converged, "{:?}", sol.projected_gradient_norm);
        let zero = ControlSignal::constant(0.0, 0.1, &[0.0], 10);
        assert!(sol.value < cost_functional(&m, &spec, &[1.0], &zero).unwrap());
        // Continuous-time optimum of x^2 + u^2 over [0, 1] is tanh(1).
        assert!((sol.value - 1f64.tanh()).abs() < 2e-2, "{}", sol.value);
        assert!(sol.control.values().iter().all(|u| *u < 0.0));
        assert!((cost_functional(&m, &spec, &[1.0], &sol.control).unwrap() - sol.value).abs() < 1e-6);
    }

    #[test]
    fn warm_start_shape_is_checked() {
        let m = CstrModel::default();
        let spec = OcpSpec::cstr(0.3).unwrap();
        let w = ControlSignal::constant(0.0, 0.01, &[300.0], 10);
        assert!(matches!(
            solve_ocp(&m, &spec, &[0.35, 370.0], Some(&w)),
            Err(MpcError::InvalidSpec(_))
        ));
    }

    #[test]
    fn schedules() {
        let spec = OcpSpec::cstr(0.3).unwrap();
        assert_eq!(fixed_schedule(0.1, 1.0).len(), 10);
        assert_eq!(fixed_schedule(0.3, 1.0).len(), 4);
        assert_eq!(schedule_cells(&spec, &[0.1, 0.2, 0.3]).unwrap(), vec![10, 20, 30]);
        assert!(schedule_cells(&spec, &[0.4]).is_err());
        assert!(schedule_cells(&spec, &[0.015]).is_err());
        let m = CstrModel::default();
        assert!(matches!(
            mpc_closed_loop(&m, &spec, &[0.5, 350.0], &[0.1], 1.0),
            Err(MpcError::Schedule(_))
        ));
    }

    #[test]
    fn scalar_closed_loop() {
        let m = FnModel::new(|x, u, dx| dx[0] = x[0] + u[0], vec![0.0], vec![0.0]);
        let spec = scalar_spec(1.0);
        let run = mpc_closed_loop(&m, &spec, &[1.0], &fixed_schedule(0.2, 2.0), 2.0).unwrap();
        assert_eq!(run.steps.len(), 10);
        assert!((run.end_time() - 2.0).abs() < 1e-12);
        assert!(run.terminal_state[0].abs() < 0.5, "{:?}", run.terminal_state);
        let v = run.values();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }
}
