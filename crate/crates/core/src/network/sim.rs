use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{actuator_lookup, BufferEntry, ControlBuffer};
use super::{NetworkConfig, NetworkError};
use crate::dynamics::{integrate_with, CostTerms, IntegratorOptions, PlantModel, StepMode, Trajectory};
use crate::mpc::{cells_in, solve_ocp, OcpSpec};
use crate::signal::{grid_ceil, grid_index, ControlSignal, GRID_SNAP};

/// `t_s + tau_sc + tau_c_max + tau_ca_max`.
pub fn compute_activation_time(t_s: f64, tau_sc: f64, cfg: &NetworkConfig) -> f64 {
    t_s + tau_sc + cfg.tau_c_max + cfg.tau_ca_max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Computation plus transmission exceeded the imposed bounds.
    BoundExceeded,
    /// Random channel loss.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketFate {
    Kept,
    Lost(DropReason),
}

/// Fate of a control packet. A uniform number is drawn on every call so
/// that the random stream does not depend on the delays.
pub fn dropout_rule<R: Rng>(tau_c: f64, tau_ca: f64, cfg: &NetworkConfig, rng: &mut R) -> PacketFate {
    let draw: f64 = rng.random();
    if tau_c + tau_ca > cfg.tau_c_max + cfg.tau_ca_max {
        PacketFate::Lost(DropReason::BoundExceeded)
    } else if draw < cfg.dropout_probability {
        PacketFate::Lost(DropReason::Random)
    } else {
        PacketFate::Kept
    }
}

/// State at `sigma` obtained by integrating from the measurement `x_ts`
/// under the controls recorded in the controller buffer.
pub fn predict_state(
    model: &dyn PlantModel,
    buffer: &ControlBuffer,
    x_ts: &[f64],
    t_s: f64,
    sigma: f64,
    control_sampling: f64,
    tolerance: f64,
) -> Result<Vec<f64>, NetworkError> {
    if sigma <= t_s + GRID_SNAP * t_s.abs().max(1.0) {
        return Ok(x_ts.to_vec());
    }
    let history = buffer.history(t_s, sigma, control_sampling)?;
    let out = integrate_with(
        model,
        x_ts,
        &history,
        t_s,
        sigma,
        StepMode::Adaptive(IntegratorOptions::with_tolerance(tolerance)),
        None,
        false,
    )?;
    Ok(out.final_state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PacketKind {
    Measurement { measured_at: f64, state: Vec<f64> },
    Control { sigma: f64, length: f64, tau_c: f64, tau_ca: f64, fate: PacketFate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub sent_at: f64,
    /// `None` when the packet was lost.
    pub arrives_at: Option<f64>,
    #[serde(flatten)]
    pub kind: PacketKind,
}

/// One control piece computed by the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    pub sigma: f64,
    pub measured_at: f64,
    pub predicted_state: Vec<f64>,
    /// Plant state at `sigma`, once the simulation reached it.
    pub actual_state: Option<Vec<f64>>,
    /// `V_T` at the predicted state.
    pub value: f64,
    pub converged: bool,
    /// Input the controller assumed on `[measured_at, sigma)`.
    pub assumed_history: ControlSignal,
    /// Transmitted piece on `[sigma, sigma + Delta)`.
    pub control: ControlSignal,
    pub fate: PacketFate,
    /// Whether the actuator switched to this piece at `sigma`.
    pub activated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    SensorSample { state: Vec<f64>, tau_sc: f64 },
    MeasurementArrival { measured_at: f64 },
    ComputationStart { measured_at: f64, sigma: f64, predicted_state: Vec<f64>, value: f64 },
    ComputationSkipped { measured_at: f64, reason: String },
    ControlSent { sigma: f64, tau_c: f64, tau_ca: f64, fate: PacketFate },
    ControlArrival { sigma: f64 },
    Activation { sigma: f64, applied: bool, state: Vec<f64> },
    Starvation { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub time: f64,
    /// Tie-break rank at equal times: arrivals, activations, samples,
    /// computation completions.
    pub rank: u8,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcsTrace {
    pub config: NetworkConfig,
    pub duration: f64,
    pub control_sampling: f64,
    pub events: Vec<LoggedEvent>,
    pub packets: Vec<Packet>,
    pub activations: Vec<ActivationRecord>,
    pub trajectory: Trajectory,
    /// Input applied by the actuator, on the control grid from time 0.
    pub applied: ControlSignal,
    pub starvation: Option<f64>,
}

impl NcsTrace {
    pub fn activated(&self) -> impl Iterator<Item = &ActivationRecord> {
        self.activations.iter().filter(|a| a.activated)
    }

    /// `sigma_{i+1} - sigma_i` over consecutive activations.
    pub fn realized_horizons(&self) -> Vec<f64> {
        let sigmas: Vec<f64> = self.activated().map(|a| a.sigma).collect();
        sigmas.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// One JSON object per line.
    pub fn write_event_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

enum Event {
    SensorSample,
    MeasurementArrival { t_s: f64, state: Vec<f64> },
    ComputationComplete { record: usize, tau_c: f64 },
    ControlArrival { record: usize },
    Activation { record: usize },
}

impl Event {
    fn rank(&self) -> u8 {
        match self {
            Event::MeasurementArrival { .. } | Event::ControlArrival { .. } => 0,
            Event::Activation { .. } => 1,
            Event::SensorSample => 2,
            Event::ComputationComplete { .. } => 3,
        }
    }
}

struct Pending {
    time: f64,
    rank: u8,
    seq: u64,
    event: Event,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // Reversed so that the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.rank.cmp(&self.rank))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Simulation<'a> {
    model: &'a dyn PlantModel,
    spec: &'a OcpSpec,
    cfg: &'a NetworkConfig,
    duration: f64,
    tau: f64,
    rng: ChaCha8Rng,
    draws: [usize; 3],
    queue: BinaryHeap<Pending>,
    seq: u64,
    events: Vec<LoggedEvent>,
    packets: Vec<Packet>,
    activations: Vec<ActivationRecord>,
    actuator: ControlBuffer,
    controller: ControlBuffer,
    plant_t: f64,
    plant_x: Vec<f64>,
    trajectory: Trajectory,
    applied: ControlSignal,
    samples: usize,
    latest: Option<(f64, Vec<f64>)>,
    last_processed: f64,
    busy: bool,
    last_sigma: f64,
    warm: (f64, ControlSignal),
}

impl<'a> Simulation<'a> {
    fn push(&mut self, time: f64, event: Event) {
        let rank = event.rank();
        self.seq += 1;
        self.queue.push(Pending { time, rank, seq: self.seq, event });
    }

    fn log(&mut self, time: f64, rank: u8, kind: EventKind) {
        self.events.push(LoggedEvent { time, rank, kind });
    }

    fn delay(&mut self, channel: usize) -> f64 {
        let model = match channel {
            0 => &self.cfg.delay_sc,
            1 => &self.cfg.delay_c,
            _ => &self.cfg.delay_ca,
        };
        let v = model.sample(self.draws[channel], &mut self.rng);
        self.draws[channel] += 1;
        v
    }

    fn snap(&self, t: f64) -> f64 {
        GRID_SNAP * t.abs().max(1.0)
    }

    /// Moves the plant to `t` under the actuator's input, one grid cell at
    /// a time.
    fn advance(&mut self, t: f64) -> Result<(), NetworkError> {
        let start = self.plant_t;
        let mut reached = start;
        let mut starved = None;
        while reached < t - self.snap(t) {
            match actuator_lookup(&self.actuator, reached) {
                Ok(u) => {
                    let cell = ControlSignal::constant(reached, self.tau, &u, 1);
                    self.applied.append(&cell).expect("cells continue the grid");
                    reached = self.applied.end_time();
                }
                Err(e) => {
                    starved = Some(e);
                    break;
                }
            }
        }
        if reached > start {
            let out = integrate_with(
                self.model,
                &self.plant_x,
                &self.applied,
                start,
                reached,
                StepMode::Adaptive(IntegratorOptions::with_tolerance(self.spec.integration_tolerance)),
                Some(CostTerms { stage_cost: self.spec.stage_cost.as_ref(), track_violation: false }),
                true,
            )?;
            self.trajectory.extend(out.trajectory.as_ref().expect("recorded"));
            self.plant_x = out.final_state;
            self.plant_t = reached;
        }
        match starved {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn start_computation(&mut self, now: f64, rank: u8) -> Result<(), NetworkError> {
        let Some((t_s, x)) = self.latest.clone() else { return Ok(()) };
        if self.busy || t_s <= self.last_processed {
            return Ok(());
        }
        self.last_processed = t_s;
        let raw = compute_activation_time(t_s, now - t_s, self.cfg);
        let sigma = grid_ceil(raw, 0.0, self.tau).max(self.last_sigma + self.tau);
        let sigma = self.tau * grid_index(sigma, 0.0, self.tau) as f64;
        if sigma >= self.duration - self.snap(self.duration) {
            self.log(now, rank, EventKind::ComputationSkipped {
                measured_at: t_s,
                reason: format!("activation time {sigma} is past the end of the run"),
            });
            return Ok(());
        }
        let assumed = match self.controller.history(t_s, sigma, self.tau) {
            Ok(h) => h,
            Err(e) => {
                self.log(now, rank, EventKind::ComputationSkipped { measured_at: t_s, reason: e.to_string() });
                return Ok(());
            }
        };
        let predicted = predict_state(
            self.model,
            &self.controller,
            &x,
            t_s,
            sigma,
            self.tau,
            self.spec.integration_tolerance,
        )?;
        let (warm_sigma, warm) = &self.warm;
        let shift = cells_in(sigma - warm_sigma, self.tau).unwrap_or(usize::MAX);
        let warm = warm.shifted(shift, self.model.equilibrium_input());
        let sol = solve_ocp(self.model, self.spec, &predicted, Some(&warm))?;
        let cells = cells_in(self.cfg.transmitted_length, self.tau).expect("validated");
        let control = sol.control.slice_cells(0, cells).with_start_time(sigma);
        self.log(now, rank, EventKind::ComputationStart {
            measured_at: t_s,
            sigma,
            predicted_state: predicted.clone(),
            value: sol.value,
        });
        self.warm = (sigma, sol.control.clone());
        self.last_sigma = sigma;
        self.activations.push(ActivationRecord {
            sigma,
            measured_at: t_s,
            predicted_state: predicted,
            actual_state: None,
            value: sol.value,
            converged: sol.converged,
            assumed_history: assumed,
            control,
            fate: PacketFate::Kept,
            activated: false,
        });
        let tau_c = self.delay(1);
        self.busy = true;
        let record = self.activations.len() - 1;
        self.push(now + tau_c, Event::ComputationComplete { record, tau_c });
        Ok(())
    }

    fn handle(&mut self, time: f64, rank: u8, event: Event) -> Result<(), NetworkError> {
        match event {
            Event::SensorSample => {
                self.advance(time)?;
                let tau_sc = self.delay(0);
                let state = self.plant_x.clone();
                self.log(time, rank, EventKind::SensorSample { state: state.clone(), tau_sc });
                self.packets.push(Packet {
                    sent_at: time,
                    arrives_at: Some(time + tau_sc),
                    kind: PacketKind::Measurement { measured_at: time, state: state.clone() },
                });
                self.push(time + tau_sc, Event::MeasurementArrival { t_s: time, state });
                self.samples += 1;
                let next = (self.samples + 1) as f64 * self.cfg.controller_sampling;
                if next < self.duration - self.snap(self.duration) {
                    self.push(next, Event::SensorSample);
                }
            }
            Event::MeasurementArrival { t_s, state } => {
                self.log(time, rank, EventKind::MeasurementArrival { measured_at: t_s });
                if self.latest.as_ref().is_none_or(|(t, _)| t_s > *t) {
                    self.latest = Some((t_s, state));
                }
                self.start_computation(time, rank)?;
            }
            Event::ComputationComplete { record, tau_c } => {
                let tau_ca = self.delay(2);
                let fate = dropout_rule(tau_c, tau_ca, self.cfg, &mut self.rng);
                let rec = &mut self.activations[record];
                rec.fate = fate;
                let (sigma, entry) = (
                    rec.sigma,
                    BufferEntry { sigma: rec.sigma, measured_at: rec.measured_at, control: rec.control.clone() },
                );
                self.log(time, rank, EventKind::ControlSent { sigma, tau_c, tau_ca, fate });
                let arrives_at = (fate == PacketFate::Kept).then_some(time + tau_ca);
                self.packets.push(Packet {
                    sent_at: time,
                    arrives_at,
                    kind: PacketKind::Control {
                        sigma,
                        length: self.cfg.transmitted_length,
                        tau_c,
                        tau_ca,
                        fate,
                    },
                });
                self.controller.insert(entry);
                if let Some(a) = arrives_at {
                    self.push(a, Event::ControlArrival { record });
                }
                self.push(sigma, Event::Activation { record });
                self.busy = false;
                self.start_computation(time, rank)?;
            }
            Event::ControlArrival { record } => {
                let rec = &self.activations[record];
                let entry = BufferEntry { sigma: rec.sigma, measured_at: rec.measured_at, control: rec.control.clone() };
                let sigma = rec.sigma;
                self.actuator.insert(entry);
                self.log(time, rank, EventKind::ControlArrival { sigma });
            }
            Event::Activation { record } => {
                self.advance(time)?;
                let applied = self.activations[record].fate == PacketFate::Kept;
                let state = self.plant_x.clone();
                let rec = &mut self.activations[record];
                rec.activated = applied;
                rec.actual_state = Some(state.clone());
                let sigma = rec.sigma;
                self.log(time, rank, EventKind::Activation { sigma, applied, state });
            }
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), NetworkError> {
        while let Some(p) = self.queue.pop() {
            if p.time >= self.duration - self.snap(self.duration) {
                break;
            }
            self.handle(p.time, p.rank, p.event)?;
        }
        self.advance(self.duration)
    }

    fn into_trace(self, starvation: Option<f64>) -> NcsTrace {
        NcsTrace {
            config: self.cfg.clone(),
            duration: self.duration,
            control_sampling: self.tau,
            events: self.events,
            packets: self.packets,
            activations: self.activations,
            trajectory: self.trajectory,
            applied: self.applied,
            starvation,
        }
    }
}

/// Simulates the networked loop on `[0, duration]`.
///
/// At time 0 both buffers hold the optimal control for `x0` over the full
/// prediction horizon; the sensor first samples at `controller_sampling`.
/// On starvation the partial trace is returned inside the error.
pub fn run_ncs_simulation(
    model: &dyn PlantModel,
    spec: &OcpSpec,
    cfg: &NetworkConfig,
    x0: &[f64],
    duration: f64,
) -> Result<NcsTrace, NetworkError> {
    spec.validate()?;
    cfg.validate(spec)?;
    let tau = spec.control_sampling;
    if !(duration > 0.0) || cells_in(duration, tau).is_none() {
        return Err(NetworkError::Config(format!(
            "duration {duration} must be a positive multiple of the control grid {tau}"
        )));
    }
    let sol = solve_ocp(model, spec, x0, None)?;
    let preload = BufferEntry { sigma: 0.0, measured_at: 0.0, control: sol.control.clone() };
    let mut sim = Simulation {
        model,
        spec,
        cfg,
        duration,
        tau,
        rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
        draws: [0; 3],
        queue: BinaryHeap::new(),
        seq: 0,
        events: Vec::new(),
        packets: Vec::new(),
        activations: vec![ActivationRecord {
            sigma: 0.0,
            measured_at: 0.0,
            predicted_state: x0.to_vec(),
            actual_state: Some(x0.to_vec()),
            value: sol.value,
            converged: sol.converged,
            assumed_history: ControlSignal::new(0.0, tau, model.input_dim(), Vec::new())?,
            control: sol.control.clone(),
            fate: PacketFate::Kept,
            activated: true,
        }],
        actuator: ControlBuffer::new(),
        controller: ControlBuffer::new(),
        plant_t: 0.0,
        plant_x: x0.to_vec(),
        trajectory: Trajectory::new(0.0, x0),
        applied: ControlSignal::new(0.0, tau, model.input_dim(), Vec::new())?,
        samples: 0,
        latest: None,
        last_processed: 0.0,
        busy: false,
        last_sigma: 0.0,
        warm: (0.0, sol.control),
    };
    sim.actuator.insert(preload.clone());
    sim.controller.insert(preload);
    sim.log(0.0, 1, EventKind::Activation { sigma: 0.0, applied: true, state: x0.to_vec() });
    if cfg.controller_sampling < duration - GRID_SNAP {
        sim.push(cfg.controller_sampling, Event::SensorSample);
    }
    match sim.run() {
        Ok(()) => Ok(sim.into_trace(None)),
        Err(NetworkError::Starvation { time, context, .. }) => {
            log::warn!("actuator starved at t = {time}: {context}");
            sim.log(time, 1, EventKind::Starvation { detail: context.clone() });
            let trace = sim.into_trace(Some(time));
            Err(NetworkError::Starvation { time, context, trace: Some(Box::new(trace)) })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub passed: bool,
    /// Number of activated pieces whose assumed history was compared.
    pub checked_activations: usize,
    pub first_violation: Option<Violation>,
}

/// Checks that (i) every activated piece was computed from exactly the
/// input the actuator applied between measurement and activation, and
/// (ii) the actuator always had a covering piece, by replaying the
/// activations against the applied input.
pub fn prediction_consistency_check(trace: &NcsTrace) -> ConsistencyReport {
    let tau = trace.control_sampling;
    let applied = &trace.applied;
    let mut violations: Vec<Violation> = Vec::new();
    let mut checked = 0;

    for rec in trace.activated() {
        checked += 1;
        let from = grid_index(rec.measured_at, 0.0, tau).max(0) as usize;
        let to = grid_index(rec.sigma, 0.0, tau).max(0) as usize;
        let actual = applied.slice_cells(from, to);
        if actual.num_cells() != to - from || actual.values() != rec.assumed_history.values() {
            let k = actual
                .values()
                .iter()
                .zip(rec.assumed_history.values())
                .position(|(a, b)| a != b)
                .unwrap_or(actual.values().len().min(rec.assumed_history.values().len()))
                / applied.input_dim().max(1);
            violations.push(Violation {
                time: (from + k) as f64 * tau,
                detail: format!(
                    "piece activated at {} assumed a different input on [{}, {})",
                    rec.sigma, rec.measured_at, rec.sigma
                ),
            });
        }
    }

    let active: Vec<&ActivationRecord> = trace.activated().collect();
    let mut idx = 0;
    for k in 0..applied.num_cells() {
        let t = applied.cell_start(k);
        while idx + 1 < active.len() && active[idx + 1].sigma <= t + GRID_SNAP * t.abs().max(1.0) {
            idx += 1;
        }
        let Some(rec) = active.get(idx).filter(|r| r.sigma <= t + GRID_SNAP) else {
            violations.push(Violation { time: t, detail: "no activated piece".into() });
            break;
        };
        match rec.control.at(t) {
            Ok(u) if u == applied.cell(k) => {}
            Ok(_) => {
                violations.push(Violation {
                    time: t,
                    detail: format!("applied input differs from the piece activated at {}", rec.sigma),
                });
                break;
            }
            Err(_) => {
                violations.push(Violation {
                    time: t,
                    detail: format!("piece activated at {} ended at {}", rec.sigma, rec.control.end_time()),
                });
                break;
            }
        }
    }
    if let Some(t) = trace.starvation {
        violations.push(Violation { time: t, detail: "actuator starved".into() });
    }

    let first = violations.into_iter().min_by(|a, b| a.time.total_cmp(&b.time));
    ConsistencyReport { passed: first.is_none(), checked_activations: checked, first_violation: first }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CstrModel;
    use crate::network::DelayModel;

    fn cfg() -> NetworkConfig {
        NetworkConfig {
            delay_sc: DelayModel::Uniform { lo: 0.0, hi: 0.02 },
            delay_c: DelayModel::Uniform { lo: 0.0, hi: 0.02 },
            delay_ca: DelayModel::Uniform { lo: 0.0, hi: 0.02 },
            tau_c_max: 0.02,
            tau_ca_max: 0.02,
            dropout_probability: 0.0,
            controller_sampling: 0.05,
            transmitted_length: 0.3,
            rng_seed: 11,
        }
    }

    #[test]
    fn activation_time_examples() {
        let mut c = cfg();
        assert!((compute_activation_time(0.0, 0.01, &c) - 0.05).abs() < 1e-15);
        c.tau_c_max = 0.03;
        c.tau_ca_max = 0.015;
        assert!((compute_activation_time(1.0, 0.005, &c) - 1.05).abs() < 1e-15);
        let z = NetworkConfig::ideal(0.1, 0.3);
        assert_eq!(compute_activation_time(0.7, 0.0, &z), 0.7);
    }

    #[test]
    fn dropout_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = cfg();
        assert_eq!(dropout_rule(0.03, 0.03, &c, &mut rng), PacketFate::Lost(DropReason::BoundExceeded));
        assert_eq!(dropout_rule(0.01, 0.01, &c, &mut rng), PacketFate::Kept);
        let mut always = c.clone();
        always.dropout_probability = 1.0;
        for _ in 0..100 {
            assert_ne!(dropout_rule(0.0, 0.0, &always, &mut rng), PacketFate::Kept);
        }
    }

    #[test]
    fn prediction_without_gap() {
        let m = CstrModel::default();
        let b = ControlBuffer::new();
        assert_eq!(predict_state(&m, &b, &[0.4, 360.0], 0.2, 0.2, 0.01, 1e-6).unwrap(), vec![0.4, 360.0]);
        assert!(matches!(
            predict_state(&m, &b, &[0.4, 360.0], 0.2, 0.25, 0.01, 1e-6),
            Err(NetworkError::CoverageGap { .. })
        ));
    }

    #[test]
    fn event_order_is_deterministic() {
        let mut heap = BinaryHeap::new();
        for (seq, (time, rank)) in [(0.1, 3u8), (0.1, 0), (0.05, 2), (0.1, 1), (0.1, 0)].into_iter().enumerate() {
            heap.push(Pending { time, rank, seq: seq as u64, event: Event::SensorSample });
        }
        let order: Vec<(f64, u8, u64)> =
            std::iter::from_fn(|| heap.pop()).map(|p| (p.time, p.rank, p.seq)).collect();
        assert_eq!(order, vec![(0.05, 2, 2), (0.1, 0, 1), (0.1, 0, 4), (0.1, 1, 3), (0.1, 3, 0)]);
    }

    #[test]
    fn delayed_run_is_consistent() {
        let m = CstrModel::default();
        let spec = OcpSpec::cstr(0.3).unwrap();
        let trace = run_ncs_simulation(&m, &spec, &cfg(), &[0.35, 370.0], 0.5).unwrap();
        let report = prediction_consistency_check(&trace);
        assert!(report.passed, "{report:?}");
        assert!(report.checked_activations > 3);
        for d in trace.realized_horizons() {
            assert!(d > 0.0 && d <= 0.3 + 1e-12);
        }
        for a in trace.activated() {
            let actual = a.actual_state.as_ref().unwrap();
            for (p, x) in a.predicted_state.iter().zip(actual) {
                assert!((p - x).abs() <= 1e-5 * (1.0 + x.abs()), "{p} vs {x}");
            }
        }
    }
}
