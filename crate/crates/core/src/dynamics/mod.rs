//! Plant models, stage costs and numerical integration.

mod cost;
mod cstr;
mod integrator;
mod trajectory;

pub use cost::{cstr_stage_cost, QuadraticCost, StageCost};
pub use cstr::{cstr_vector_field, CstrModel, CstrParameters};
pub use integrator::{
    integrate, integrate_with, CostTerms, Dopri5, Integration, IntegratorOptions, StepMode,
};
pub use trajectory::Trajectory;
pub(crate) use integrator::augmented_rhs;

use thiserror::Error;

use crate::signal::SignalError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("vector field undefined: {0}")]
    Domain(String),
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("integration exceeded {0} steps")]
    MaxSteps(usize),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Lower/upper limit of one coordinate; infinite values mean unbounded.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Limits {
    pub lower: f64,
    pub upper: f64,
}

impl Limits {
    pub const UNBOUNDED: Limits = Limits {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        assert!(lower <= upper, "empty limits [{lower}, {upper}]");
        Self { lower, upper }
    }

    pub fn project(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }

    /// Distance of `v` to the admissible interval.
    pub fn violation(&self, v: f64) -> f64 {
        if v < self.lower {
            self.lower - v
        } else if v > self.upper {
            v - self.upper
        } else {
            0.0
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// A control-affine or general nonlinear plant `x' = f(x, u)` with box
/// constraints and a target equilibrium `(x*, u*)`.
pub trait PlantModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn vector_field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<(), DynamicsError>;
    fn state_constraints(&self) -> &[Limits];
    fn input_constraints(&self) -> &[Limits];
    fn equilibrium_state(&self) -> &[f64];
    fn equilibrium_input(&self) -> &[f64];
}

/// `|f(x*, u*)|_2`; infinite when the vector field is undefined there.
pub fn equilibrium_residual(model: &dyn PlantModel) -> f64 {
    let mut dx = vec![0.0; model.state_dim()];
    match model.vector_field(model.equilibrium_state(), model.equilibrium_input(), &mut dx) {
        Ok(()) => dx.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Err(_) => f64::INFINITY,
    }
}

/// Plant built from a closure, mostly for small test systems.
pub struct FnModel<F> {
    f: F,
    state_constraints: Vec<Limits>,
    input_constraints: Vec<Limits>,
    x_eq: Vec<f64>,
    u_eq: Vec<f64>,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    /// Unconstrained model with the given equilibrium.
    pub fn new(f: F, x_eq: Vec<f64>, u_eq: Vec<f64>) -> Self {
        Self {
            f,
            state_constraints: vec![Limits::UNBOUNDED; x_eq.len()],
            input_constraints: vec![Limits::UNBOUNDED; u_eq.len()],
            x_eq,
            u_eq,
        }
    }

    pub fn with_input_constraints(mut self, limits: Vec<Limits>) -> Self {
        assert_eq!(limits.len(), self.u_eq.len());
        self.input_constraints = limits;
        self
    }

    pub fn with_state_constraints(mut self, limits: Vec<Limits>) -> Self {
        assert_eq!(limits.len(), self.x_eq.len());
        self.state_constraints = limits;
        self
    }
}

impl<F> PlantModel for FnModel<F>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.x_eq.len()
    }
    fn input_dim(&self) -> usize {
        self.u_eq.len()
    }
    fn vector_field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<(), DynamicsError> {
        (self.f)(x, u, dx);
        Ok(())
    }
    fn state_constraints(&self) -> &[Limits] {
        &self.state_constraints
    }
    fn input_constraints(&self) -> &[Limits] {
        &self.input_constraints
    }
    fn equilibrium_state(&self) -> &[f64] {
        &self.x_eq
    }
    fn equilibrium_input(&self) -> &[f64] {
        &self.u_eq
    }
}
