use serde::{Deserialize, Serialize};

use super::Limits;

/// Running cost `l(x, u) >= 0` with `l(x*, u*) = 0`.
pub trait StageCost: Send + Sync {
    fn evaluate(&self, x: &[f64], u: &[f64]) -> f64;

    /// `l*(x) = min_u l(x, u)` over the admissible inputs, when known.
    fn min_over_inputs(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Diagonal quadratic cost around a reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub x_ref: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub state_weights: Vec<f64>,
    pub input_weights: Vec<f64>,
    #[serde(default)]
    pub input_limits: Option<Vec<Limits>>,
}

impl QuadraticCost {
    /// `(x2*/x1*)^2 (x1 - x1*)^2 + (x2 - x2*)^2 + 1e-3 (u - u*)^2`, which
    /// weights both reactor states equally relative to their setpoints.
    pub fn cstr() -> Self {
        let (x1s, x2s, us) = (0.5, 350.0, 300.0);
        Self {
            x_ref: vec![x1s, x2s],
            u_ref: vec![us],
            state_weights: vec![(x2s / x1s) * (x2s / x1s), 1.0],
            input_weights: vec![1e-3],
            input_limits: Some(vec![Limits::new(250.0, 450.0)]),
        }
    }

    fn state_part(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.x_ref)
            .zip(&self.state_weights)
            .map(|((xi, ri), wi)| wi * (xi - ri) * (xi - ri))
            .sum()
    }
}

impl StageCost for QuadraticCost {
    fn evaluate(&self, x: &[f64], u: &[f64]) -> f64 {
        let input: f64 = u
            .iter()
            .zip(&self.u_ref)
            .zip(&self.input_weights)
            .map(|((ui, ri), wi)| wi * (ui - ri) * (ui - ri))
            .sum();
        self.state_part(x) + input
    }

    fn min_over_inputs(&self, x: &[f64]) -> Option<f64> {
        let input: f64 = match &self.input_limits {
            Some(limits) => self
                .u_ref
                .iter()
                .zip(limits)
                .zip(&self.input_weights)
                .map(|((r, l), w)| {
                    let d = l.violation(*r);
                    w * d * d
                })
                .sum(),
            None => 0.0,
        };
        Some(self.state_part(x) + input)
    }
}

/// The reactor running cost evaluated at a single point.
pub fn cstr_stage_cost(x: [f64; 2], u: f64) -> f64 {
    let w = (350.0f64 / 0.5).powi(2);
    w * (x[0] - 0.5).powi(2) + (x[1] - 350.0).powi(2) + 1e-3 * (u - 300.0).powi(2)
}
