//! Box-constrained minimisation by projected limited-memory quasi-Newton
//! steps.
//!
//! Each iteration freezes the variables sitting on a bound with the gradient
//! pushing outward, builds an L-BFGS direction on the remaining ones and
//! runs an Armijo backtracking search along the projected path
//! `P(x + t d)`. Termination is on the projected-gradient norm
//! `|P(x - g) - x|_inf`.

use std::collections::VecDeque;

use crate::dynamics::Limits;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Stop once the projected-gradient norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of stored correction pairs.
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iterations: 500,
            memory: 10,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Objective with a gradient.
pub trait Objective {
    type Error;

    fn value(&mut self, x: &[f64]) -> Result<f64, Self::Error>;

    /// Writes the gradient at `x` into `grad`; `value` is `f(x)`.
    fn gradient(&mut self, x: &[f64], value: f64, grad: &mut [f64]) -> Result<(), Self::Error>;
}

fn project(x: &mut [f64], bounds: &[Limits]) {
    for (v, b) in x.iter_mut().zip(bounds) {
        *v = b.project(*v);
    }
}

pub fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &[Limits]) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((xi, gi), b)| (b.project(xi - gi) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Variables held at a bound because the gradient points out of the box.
fn active_set(x: &[f64], g: &[f64], bounds: &[Limits]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((xi, gi), b)| {
            let tol = 1e-12 * (1.0 + xi.abs());
            (*xi <= b.lower + tol && *gi > 0.0) || (*xi >= b.upper - tol && *gi < 0.0)
        })
        .collect()
}

/// Two-loop recursion restricted to the free variables.
fn lbfgs_direction(g: &[f64], free: &[bool], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter().zip(free).map(|(x, f)| if *f { *x } else { 0.0 }).collect()
    };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let s = mask(s);
        let a = rho * dot(&s, &q);
        for ((qi, yi), f) in q.iter_mut().zip(y).zip(free) {
            if *f {
                *qi -= a * yi;
            }
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let (s, y) = (mask(s), mask(y));
        let yy = dot(&y, &y);
        if yy > 0.0 {
            let gamma = dot(&s, &y) / yy;
            if gamma > 0.0 {
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let y = mask(y);
        let b = rho * dot(&y, &q);
        for ((qi, si), f) in q.iter_mut().zip(s).zip(free) {
            if *f {
                *qi += (a - b) * si;
            }
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimises `objective` over the box `bounds` starting from `x0`
/// (projected onto the box first).
pub fn minimize_box<O: Objective>(
    objective: &mut O,
    x0: &[f64],
    bounds: &[Limits],
    options: &OptimizerOptions,
) -> Result<Minimum, O::Error> {
    let n = x0.len();
    assert_eq!(bounds.len(), n, "one bound per variable");
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let mut f = objective.value(&x)?;
    let mut g = vec![0.0; n];
    objective.gradient(&x, f, &mut g)?;
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut pg = projected_gradient_norm(&x, &g, bounds);

    // Length of a steepest-descent step: a tenth of the narrowest finite box width.
    let first_step = bounds
        .iter()
        .map(|b| b.upper - b.lower)
        .filter(|w| w.is_finite())
        .fold(f64::INFINITY, f64::min);
    let first_step = if first_step.is_finite() { 0.1 * first_step } else { 1.0 };

    let mut iterations = 0;
    let mut x_trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    while pg > options.tolerance && iterations < options.max_iterations {
        iterations += 1;
        let free: Vec<bool> = active_set(&x, &g, bounds).iter().map(|a| !a).collect();
        let mut d = lbfgs_direction(&g, &free, &history);
        let mut slope = dot(&g, &d);
        if history.is_empty() || !(slope < 0.0) {
            history.clear();
            let gmax = g
                .iter()
                .zip(&free)
                .filter(|(_, f)| **f)
                .fold(0.0f64, |m, (v, _)| m.max(v.abs()));
            let scale = if gmax > 0.0 { first_step / gmax } else { 0.0 };
            d = g
                .iter()
                .zip(&free)
                .map(|(gi, f)| if *f { -scale * gi } else { 0.0 })
                .collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                break;
            }
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut f_trial = f;
        for _ in 0..options.max_backtracks {
            for i in 0..n {
                x_trial[i] = x[i] + step * d[i];
            }
            project(&mut x_trial, bounds);
            f_trial = objective.value(&x_trial)?;
            evaluations += 1;
            let decrease: f64 = g.iter().zip(&x_trial).zip(&x).map(|((gi, a), b)| gi * (a - b)).sum();
            if f_trial.is_finite() && f_trial <= f + options.armijo * decrease.min(0.0) && decrease < 0.0 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if history.is_empty() {
                // Even a short steepest-descent step makes no progress: the
                // iterate sits at the resolution limit of the objective.
                break;
            }
            history.clear();
            continue;
        }

        objective.gradient(&x_trial, f_trial, &mut g_new)?;
        let s: Vec<f64> = x_trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == options.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x.copy_from_slice(&x_trial);
        g.copy_from_slice(&g_new);
        f = f_trial;
        pg = projected_gradient_norm(&x, &g, bounds);
    }

    Ok(Minimum {
        x,
        value: f,
        projected_gradient_norm: pg,
        iterations,
        evaluations,
        converged: pg <= options.tolerance,
    })
}
