//! Dormand–Prince 5(4) integration for piecewise-constant inputs.
//!
//! Integration is always restarted at control switch times, so a step never
//! straddles an input discontinuity. Two modes are offered: adaptive step
//! size control with mixed absolute/relative tolerance, and a fixed number of
//! steps per control cell. The fixed mode makes the end state a smooth
//! function of the control values, which finite-difference gradients need.

use serde::{Deserialize, Serialize};

use super::{DynamicsError, PlantModel, StageCost, Trajectory};
use crate::signal::ControlSignal;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl IntegratorOptions {
    /// Same absolute and relative tolerance.
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 1_000_000,
        }
    }
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self::with_tolerance(1e-6)
    }
}

/// How each control cell is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    Adaptive(IntegratorOptions),
    /// Fixed number of Dormand–Prince steps per control cell.
    Fixed { substeps: usize },
}

/// Stage buffers for one system dimension.
pub struct Dopri5 {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

impl Dopri5 {
    pub fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            y_new: vec![0.0; dim],
            err: vec![0.0; dim],
        }
    }

    fn dim(&self) -> usize {
        self.tmp.len()
    }

    /// One step from `y` with `k[0] = f(y)` already set. Leaves the 5th order
    /// solution in `y_new`, `f(y_new)` in `k[6]` and the error estimate in `err`.
    fn step<F>(&mut self, rhs: &mut F, y: &[f64], h: f64) -> Result<(), DynamicsError>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<(), DynamicsError>,
    {
        let n = self.dim();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(tmp, k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(tmp, k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(tmp, k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(tmp, k5)?;
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(tmp, k6)?;
        for i in 0..n {
            self.y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(&self.y_new, k7)?;
        for i in 0..n {
            self.err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        Ok(())
    }

    fn error_norm(&self, y: &[f64], opts: &IntegratorOptions) -> f64 {
        let n = self.dim();
        let sum: f64 = (0..n)
            .map(|i| {
                let sc = opts.atol + opts.rtol * y[i].abs().max(self.y_new[i].abs());
                let e = self.err[i] / sc;
                e * e
            })
            .sum();
        (sum / n as f64).sqrt()
    }

    /// Starting step size estimate (Hairer, Nørsett & Wanner, II.4).
    fn initial_step<F>(
        &mut self,
        rhs: &mut F,
        y: &[f64],
        span: f64,
        opts: &IntegratorOptions,
    ) -> Result<f64, DynamicsError>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<(), DynamicsError>,
    {
        let n = self.dim();
        let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
        let norm = |v: &[f64]| {
            (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / n as f64).sqrt()
        };
        let d0 = norm(y);
        let d1 = norm(&self.k[0]);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for ((t, a), b) in self.tmp.iter_mut().zip(y).zip(&self.k[0]) {
            *t = a + h0 * b;
        }
        let mut f1 = vec![0.0; n];
        rhs(&self.tmp, &mut f1)?;
        let diff: Vec<f64> = f1.iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    /// Adaptive integration of an autonomous system over `[t0, t1]`.
    ///
    /// `h` carries the proposed step size between calls; pass `0.0` to let
    /// the solver choose. Accepted steps are appended to `record`.
    pub fn solve_adaptive<F>(
        &mut self,
        rhs: &mut F,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        h: &mut f64,
        opts: &IntegratorOptions,
        mut record: Option<&mut Trajectory>,
    ) -> Result<usize, DynamicsError>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<(), DynamicsError>,
    {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(0);
        }
        rhs(y, &mut self.k[0])?;
        if !(*h > 0.0) {
            *h = self.initial_step(rhs, y, span, opts)?;
        }
        let mut t = t0;
        let mut steps = 0usize;
        loop {
            let remaining = t1 - t;
            let last = *h >= remaining * (1.0 - 1e-12);
            let h_try = if last { remaining } else { *h };
            self.step(rhs, y, h_try)?;
            let err = self.error_norm(y, opts);
            if !err.is_finite() {
                return Err(DynamicsError::NonFinite(t + h_try));
            }
            let scale = if err == 0.0 {
                MAX_SCALE
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
            };
            if err <= 1.0 {
                let t_new = if last { t1 } else { t + h_try };
                if let Some(tr) = record.as_deref_mut() {
                    tr.push_segment(&self.k[0], t_new, &self.y_new, &self.k[6]);
                }
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                t = t_new;
                // A step shortened to hit t1 should not shrink the next proposal.
                *h = if last { (*h).max(h_try * scale) } else { h_try * scale };
                steps += 1;
                if last {
                    return Ok(steps);
                }
            } else {
                *h = h_try * scale.min(1.0);
                if *h < 1e-14 * t.abs().max(1.0) {
                    return Err(DynamicsError::StepSizeUnderflow { t, h: *h });
                }
            }
            if steps >= opts.max_steps {
                return Err(DynamicsError::MaxSteps(opts.max_steps));
            }
        }
    }

    /// `substeps` equal Dormand–Prince steps over `[t0, t1]` (5th order
    /// solution, no error control).
    pub fn solve_fixed<F>(
        &mut self,
        rhs: &mut F,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        substeps: usize,
        mut record: Option<&mut Trajectory>,
    ) -> Result<(), DynamicsError>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<(), DynamicsError>,
    {
        let span = t1 - t0;
        if span <= 0.0 || substeps == 0 {
            return Ok(());
        }
        let h = span / substeps as f64;
        rhs(y, &mut self.k[0])?;
        for s in 0..substeps {
            self.step(rhs, y, h)?;
            if self.y_new.iter().any(|v| !v.is_finite()) {
                return Err(DynamicsError::NonFinite(t0 + (s + 1) as f64 * h));
            }
            if let Some(tr) = record.as_deref_mut() {
                let t_new = if s + 1 == substeps { t1 } else { t0 + (s + 1) as f64 * h };
                tr.push_segment(&self.k[0], t_new, &self.y_new, &self.k[6]);
            }
            y.copy_from_slice(&self.y_new);
            self.k.swap(0, 6);
        }
        Ok(())
    }
}

/// Running integrals accumulated alongside the state.
#[derive(Clone, Copy)]
pub struct CostTerms<'a> {
    pub stage_cost: &'a dyn StageCost,
    /// Adds `sum_i dist(x_i, X_i)^2` as a second integral.
    pub track_violation: bool,
}

/// Result of [`integrate_with`].
#[derive(Debug, Clone)]
pub struct Integration {
    pub final_state: Vec<f64>,
    /// `int l(x, u) dt`, zero when no cost was requested.
    pub stage_integral: f64,
    /// `int sum_i dist(x_i, X_i)^2 dt`.
    pub violation_integral: f64,
    pub trajectory: Option<Trajectory>,
    pub steps: usize,
}

/// Augmented right-hand side `(f(x, u), l(x, u), violation^2)`.
pub(crate) fn augmented_rhs<'a>(
    model: &'a dyn PlantModel,
    terms: Option<CostTerms<'a>>,
    u: &'a [f64],
) -> impl FnMut(&[f64], &mut [f64]) -> Result<(), DynamicsError> + 'a {
    let n = model.state_dim();
    move |y: &[f64], dy: &mut [f64]| {
        model.vector_field(&y[..n], u, &mut dy[..n])?;
        if let Some(terms) = terms {
            dy[n] = terms.stage_cost.evaluate(&y[..n], u);
            if terms.track_violation {
                dy[n + 1] = model
                    .state_constraints()
                    .iter()
                    .zip(&y[..n])
                    .map(|(l, v)| {
                        let d = l.violation(*v);
                        d * d
                    })
                    .sum();
            }
        }
        Ok(())
    }
}

/// Integrates `model` from `x0` at `t0` to `t1` under the piecewise-constant
/// input `u`, optionally accumulating the stage cost and constraint
/// violation.
pub fn integrate_with(
    model: &dyn PlantModel,
    x0: &[f64],
    u: &ControlSignal,
    t0: f64,
    t1: f64,
    mode: StepMode,
    terms: Option<CostTerms<'_>>,
    record: bool,
) -> Result<Integration, DynamicsError> {
    let n = model.state_dim();
    if x0.len() != n {
        return Err(DynamicsError::Dimension(format!(
            "initial state has {} entries, model expects {n}",
            x0.len()
        )));
    }
    if u.input_dim() != model.input_dim() {
        return Err(DynamicsError::Dimension(format!(
            "control has dimension {}, model expects {}",
            u.input_dim(),
            model.input_dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite(t0));
    }
    let extra = match terms {
        Some(t) if t.track_violation => 2,
        Some(_) => 1,
        None => 0,
    };
    let mut y = vec![0.0; n + extra];
    y[..n].copy_from_slice(x0);
    let mut trajectory = record.then(|| Trajectory::new(t0, x0));
    let mut steps = 0;
    if t1 > t0 {
        if !u.covers(t0, t1) {
            return Err(crate::signal::SignalError::OutOfRange {
                t: if t0 < u.start_time() { t0 } else { t1 },
                start: u.start_time(),
                end: u.end_time(),
            }
            .into());
        }
        let mut solver = Dopri5::new(n + extra);
        let mut h = 0.0;
        let mut edges = vec![t0];
        edges.extend(u.breakpoints(t0, t1));
        edges.push(t1);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let input = u.at(a)?;
            let mut rhs = augmented_rhs(model, terms, input);
            match mode {
                StepMode::Adaptive(opts) => {
                    steps += solver.solve_adaptive(
                        &mut rhs,
                        a,
                        b,
                        &mut y,
                        &mut h,
                        &opts,
                        trajectory.as_mut(),
                    )?;
                }
                StepMode::Fixed { substeps } => {
                    solver.solve_fixed(&mut rhs, a, b, &mut y, substeps, trajectory.as_mut())?;
                    steps += substeps;
                }
            }
        }
    }
    Ok(Integration {
        final_state: y[..n].to_vec(),
        stage_integral: if extra > 0 { y[n] } else { 0.0 },
        violation_integral: if extra > 1 { y[n + 1] } else { 0.0 },
        trajectory,
        steps,
    })
}

/// Adaptive solution `x(t; x0, u)` on `[t0, t1]` with both tolerances set
/// to `tol`.
pub fn integrate(
    model: &dyn PlantModel,
    x0: &[f64],
    u: &ControlSignal,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Trajectory, DynamicsError> {
    let out = integrate_with(
        model,
        x0,
        u,
        t0,
        t1,
        StepMode::Adaptive(IntegratorOptions::with_tolerance(tol)),
        None,
        true,
    )?;
    Ok(out.trajectory.expect("recorded"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CstrModel, FnModel};

    fn decay() -> impl PlantModel {
        FnModel::new(|x, _u, dx| dx[0] = -x[0], vec![0.0], vec![0.0])
    }

    #[test]
    fn scalar_decay() {
        let m = decay();
        let u = ControlSignal::constant(0.0, 0.1, &[0.0], 10);
        let tr = integrate(&m, &[1.0], &u, 0.0, 1.0, 1e-6).unwrap();
        assert!((tr.final_state()[0] - (-1.0f64).exp()).abs() <= 1e-6);
        // dense output between samples
        let mid = tr.dense_eval(0.55)[0];
        assert!((mid - (-0.55f64).exp()).abs() <= 1e-6);
    }

    #[test]
    fn empty_span_returns_initial_state() {
        let m = decay();
        let u = ControlSignal::constant(0.0, 0.1, &[0.0], 10);
        let tr = integrate(&m, &[1.0], &u, 0.3, 0.3, 1e-6).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.final_state(), &[1.0]);
    }

    #[test]
    fn fixed_step_is_high_order() {
        let m = decay();
        let u = ControlSignal::constant(0.0, 1.0, &[0.0], 1);
        let exact = (-1.0f64).exp();
        let err = |n: usize| {
            let out = integrate_with(&m, &[1.0], &u, 0.0, 1.0, StepMode::Fixed { substeps: n }, None, false)
                .unwrap();
            (out.final_state[0] - exact).abs()
        };
        for n in [2, 4, 8] {
            assert!(err(n) / err(2 * n) >= 16.0, "n = {n}: {} {}", err(n), err(2 * n));
        }
    }

    #[test]
    fn restarts_at_switch_times() {
        // x' = u with u switching between +1 and -1 is integrated exactly.
        let m = FnModel::new(|_x, u, dx| dx[0] = u[0], vec![0.0], vec![0.0]);
        let u = ControlSignal::new(0.0, 0.25, 1, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let tr = integrate(&m, &[0.0], &u, 0.0, 1.0, 1e-9).unwrap();
        assert!(tr.final_state()[0].abs() < 1e-14);
        assert!((tr.dense_eval(0.25)[0] - 0.25).abs() < 1e-14);
        assert!(tr.sample_times().iter().any(|&t| (t - 0.5).abs() < 1e-15));
    }

    #[test]
    fn cstr_holds_near_equilibrium() {
        let m = CstrModel::default();
        let u = ControlSignal::constant(0.0, 0.01, &[300.0], 100);
        let tr = integrate(&m, &[0.5, 350.0], &u, 0.0, 1.0, 1e-6).unwrap();
        let x = tr.final_state();
        let dist = ((x[0] - 0.5).powi(2) + (x[1] - 350.0).powi(2)).sqrt();
        assert!(dist <= 0.05, "{dist}");
    }

    #[test]
    fn reports_signal_gaps() {
        let m = decay();
        let u = ControlSignal::constant(0.0, 0.1, &[0.0], 3);
        assert!(integrate(&m, &[1.0], &u, 0.0, 0.5, 1e-6).is_err());
    }

    #[test]
    fn domain_errors_propagate() {
        let m = CstrModel::default();
        let u = ControlSignal::constant(0.0, 0.1, &[300.0], 3);
        assert!(matches!(
            integrate(&m, &[0.5, -1.0], &u, 0.0, 0.3, 1e-6),
            Err(DynamicsError::Domain(_))
        ));
    }

    #[test]
    fn augmented_cost_integral() {
        // x' = 0, l = x^2 + u^2, x0 = 1, u = 0 over [0, 2] gives 2.
        let m = FnModel::new(|_x, _u, dx| dx[0] = 0.0, vec![0.0], vec![0.0]);
        let cost = crate::dynamics::QuadraticCost {
            x_ref: vec![0.0],
            u_ref: vec![0.0],
            state_weights: vec![1.0],
            input_weights: vec![1.0],
            input_limits: None,
        };
        let u = ControlSignal::constant(0.0, 0.5, &[0.0], 4);
        let terms = CostTerms { stage_cost: &cost, track_violation: true };
        let out = integrate_with(&m, &[1.0], &u, 0.0, 2.0, StepMode::Fixed { substeps: 1 }, Some(terms), false)
            .unwrap();
        assert!((out.stage_integral - 2.0).abs() < 1e-14);
        assert_eq!(out.violation_integral, 0.0);
    }
}
