//! Continuously stirred tank reactor with an exothermic reaction `A -> B`.
//!
//! States are the concentration of `A` (mol/m^3) and the reactor temperature
//! (K); the input is the cooling jacket temperature (K).

use serde::{Deserialize, Serialize};

use super::{DynamicsError, Limits, PlantModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CstrParameters {
    /// Flow rate, m^3/s.
    pub q: f64,
    /// Reactor volume, m^3.
    pub volume: f64,
    /// Pre-exponential factor, 1/s.
    pub k0: f64,
    /// Activation energy over the gas constant, K.
    pub ea: f64,
    /// Heat of reaction, J/mol.
    pub h: f64,
    /// Mixture density, kg/m^3.
    pub rho: f64,
    /// Mixture heat capacity, J/(kg K).
    pub c: f64,
    /// Heat transfer coefficient, W/K.
    pub alpha_ht: f64,
    /// Feed concentration, mol/m^3.
    pub x1f: f64,
    /// Feed temperature, K.
    pub x2f: f64,
}

impl Default for CstrParameters {
    fn default() -> Self {
        Self {
            q: 100.0,
            volume: 100.0,
            k0: 7.2e10,
            ea: 8750.0,
            h: 5e4,
            rho: 1000.0,
            c: 0.239,
            alpha_ht: 5e4,
            x1f: 1.0,
            x2f: 350.0,
        }
    }
}

impl CstrParameters {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all = [
            self.q,
            self.volume,
            self.k0,
            self.ea,
            self.h,
            self.rho,
            self.c,
            self.alpha_ht,
            self.x1f,
            self.x2f,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(DynamicsError::Domain(
                "CSTR parameters must be finite and positive".into(),
            ))
        }
    }
}

/// Right-hand side of the reactor balance equations.
pub fn cstr_vector_field(x: [f64; 2], u: f64, p: &CstrParameters) -> Result<[f64; 2], DynamicsError> {
    let [x1, x2] = x;
    if !(x2 > 0.0) {
        return Err(DynamicsError::Domain(format!(
            "reactor temperature must be positive, got {x2}"
        )));
    }
    let flow = p.q / p.volume;
    let reaction = p.k0 * x1 * (-p.ea / x2).exp();
    let dx1 = flow * (p.x1f - x1) - reaction;
    let dx2 = flow * (p.x2f - x2)
        + p.h / (p.rho * p.c) * reaction
        + p.alpha_ht / (p.volume * p.rho * p.c) * (u - x2);
    Ok([dx1, dx2])
}

#[derive(Debug, Clone)]
pub struct CstrModel {
    pub params: CstrParameters,
    state_constraints: [Limits; 2],
    input_constraints: [Limits; 1],
    x_eq: [f64; 2],
    u_eq: [f64; 1],
}

impl Default for CstrModel {
    /// Reference setup: `x* = (0.5, 350)`, `u* = 300`,
    /// `X = [0, 1] x [0, inf)`, `U = [250, 450]`.
    fn default() -> Self {
        Self {
            params: CstrParameters::default(),
            state_constraints: [Limits::new(0.0, 1.0), Limits::new(0.0, f64::INFINITY)],
            input_constraints: [Limits::new(250.0, 450.0)],
            x_eq: [0.5, 350.0],
            u_eq: [300.0],
        }
    }
}

impl CstrModel {
    pub fn new(params: CstrParameters) -> Result<Self, DynamicsError> {
        params.validate()?;
        Ok(Self {
            params,
            ..Self::default()
        })
    }

    pub fn with_equilibrium(mut self, x: [f64; 2], u: f64) -> Self {
        self.x_eq = x;
        self.u_eq = [u];
        self
    }
}

impl PlantModel for CstrModel {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn vector_field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<(), DynamicsError> {
        let d = cstr_vector_field([x[0], x[1]], u[0], &self.params)?;
        dx[0] = d[0];
        dx[1] = d[1];
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
