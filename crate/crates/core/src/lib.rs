//! Stability and performance bounds for continuous-time nonlinear MPC with
//! time-varying control horizons, together with the machinery to check them
//! on closed-loop and networked simulations.

pub mod analysis;
pub mod bounds;
pub mod dynamics;
pub mod experiment;
pub mod io;
pub mod mpc;
pub mod network;
pub mod optimize;
pub mod par;
pub mod signal;
