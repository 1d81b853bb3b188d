//! Discrete-event simulation of a sensor, controller and actuator connected
//! through delaying and lossy channels.
//!
//! Packets are time stamped. The controller predicts the state at the
//! activation time `sigma = t_s + tau_sc + tau_c_max + tau_ca_max` (rounded
//! up to the control grid) with the controls it has already sent, and the
//! actuator applies the most recent buffered control whose support covers
//! the current time.

mod buffer;
mod config;
mod sim;

pub use buffer::{actuator_lookup, BufferEntry, ControlBuffer};
pub use config::{DelayModel, NetworkConfig};
pub use sim::{
    compute_activation_time, dropout_rule, predict_state, prediction_consistency_check,
    run_ncs_simulation, ActivationRecord, ConsistencyReport, DropReason, EventKind, LoggedEvent,
    NcsTrace, Packet, PacketKind, PacketFate, Violation,
};

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::mpc::MpcError;
use crate::signal::SignalError;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("no buffered control covers t = {time}: {context}")]
    Starvation {
        time: f64,
        context: String,
        /// Trace up to the starvation time.
        trace: Option<Box<NcsTrace>>,
    },
    #[error("controller buffer does not cover [{from}, {to})")]
    CoverageGap { from: f64, to: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
}
