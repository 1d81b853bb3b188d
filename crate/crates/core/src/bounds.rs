//! Closed-form performance bounds for MPC under exponential controllability.
//!
//! The central quantity is the performance index `alpha(T, delta)` obtained
//! from an overshoot `C` and decay rate `mu` of the stage cost. All routines
//! here are pure functions on value types.
//!
//! Expressions of the form `(e^{a} - 1)^{1/C}` are evaluated through their
//! logarithms, `ln(e^{a} - 1)`, so that ratios of such terms reduce to
//! `expm1` of a log-difference. This keeps the evaluation accurate for very
//! small and very large `mu * T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("overshoot must satisfy C >= 1, got {0}")]
    Overshoot(f64),
    #[error("decay rate must be positive, got {0}")]
    DecayRate(f64),
    #[error("control horizon {delta} must lie strictly inside (0, {horizon})")]
    ControlHorizon { delta: f64, horizon: f64 },
    #[error("prediction horizon must be positive, got {0}")]
    PredictionHorizon(f64),
    #[error("invalid refinement: {0}")]
    Refinement(String),
    #[error("degenerate denominator in discrete bound at index {index}")]
    DegenerateDenominator { index: usize },
    #[error("lower bound undefined: bracketed factor {0} is not positive")]
    Undefined(f64),
    #[error("minimal control horizon {delta_min} must lie in (0, {half}]")]
    MinimalHorizon { delta_min: f64, half: f64 },
    #[error("target performance {0} is not attainable (must lie in (0, 1))")]
    Unattainable(f64),
    #[error("invalid range: {0}")]
    Range(String),
}

pub type Result<T> = std::result::Result<T, BoundsError>;

fn finite(v: f64, name: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(BoundsError::NonFinite(name))
    }
}

/// Overshoot `C` and decay rate `mu` of the exponential controllability
/// condition `l(x_u(t), u(t)) <= C e^{-mu t} l*(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityParams {
    overshoot: f64,
    decay_rate: f64,
}

impl ControllabilityParams {
    pub fn new(overshoot: f64, decay_rate: f64) -> Result<Self> {
        finite(overshoot, "overshoot")?;
        finite(decay_rate, "decay_rate")?;
        if overshoot < 1.0 {
            return Err(BoundsError::Overshoot(overshoot));
        }
        if decay_rate <= 0.0 {
            return Err(BoundsError::DecayRate(decay_rate));
        }
        Ok(Self {
            overshoot,
            decay_rate,
        })
    }

    pub fn overshoot(&self) -> f64 {
        self.overshoot
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }
}

/// Prediction horizon `T` and control horizon `delta` with `0 < delta < T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonPair {
    prediction_horizon: f64,
    control_horizon: f64,
}

impl HorizonPair {
    pub fn new(prediction_horizon: f64, control_horizon: f64) -> Result<Self> {
        finite(prediction_horizon, "prediction_horizon")?;
        finite(control_horizon, "control_horizon")?;
        if prediction_horizon <= 0.0 {
            return Err(BoundsError::PredictionHorizon(prediction_horizon));
        }
        if !(control_horizon > 0.0 && control_horizon < prediction_horizon) {
            return Err(BoundsError::ControlHorizon {
                delta: control_horizon,
                horizon: prediction_horizon,
            });
        }
        Ok(Self {
            prediction_horizon,
            control_horizon,
        })
    }

    pub fn prediction_horizon(&self) -> f64 {
        self.prediction_horizon
    }

    pub fn control_horizon(&self) -> f64 {
        self.control_horizon
    }

    /// The pair `(T, T - delta)`.
    pub fn mirrored(&self) -> Self {
        Self {
            prediction_horizon: self.prediction_horizon,
            control_horizon: self.prediction_horizon - self.control_horizon,
        }
    }
}

/// Discretisation used by the iterative-refinement counterpart of the bound:
/// `T = N tau`, `delta = m tau`, refined `k` times by halving `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementSpec {
    pub base_step: f64,
    pub num_steps: usize,
    pub control_steps: usize,
    pub refinement_level: u32,
}

impl RefinementSpec {
    pub fn new(
        base_step: f64,
        num_steps: usize,
        control_steps: usize,
        refinement_level: u32,
    ) -> Result<Self> {
        let spec = Self {
            base_step,
            num_steps,
            control_steps,
            refinement_level,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        finite(self.base_step, "base_step")?;
        if self.base_step <= 0.0 {
            return Err(BoundsError::Refinement(format!(
                "base step must be positive, got {}",
                self.base_step
            )));
        }
        if self.control_steps == 0 || 2 * self.control_steps > self.num_steps {
            return Err(BoundsError::Refinement(format!(
                "need 1 <= m <= N/2, got m = {}, N = {}",
                self.control_steps, self.num_steps
            )));
        }
        if self.refinement_level > 24 {
            return Err(BoundsError::Refinement(format!(
                "refinement level {} is too large",
                self.refinement_level
            )));
        }
        Ok(())
    }

    /// Continuous horizon pair `(N tau, m tau)` this refinement approximates.
    pub fn horizon(&self) -> Result<HorizonPair> {
        HorizonPair::new(
            self.num_steps as f64 * self.base_step,
            self.control_steps as f64 * self.base_step,
        )
    }

    pub fn at_level(&self, refinement_level: u32) -> Self {
        Self {
            refinement_level,
            ..*self
        }
    }
}

/// `ln(e^a - 1)` for `a > 0`.
fn ln_expm1(a: f64) -> f64 {
    if a > 36.0 {
        a + (-(-a).exp()).ln_1p()
    } else {
        a.exp_m1().ln()
    }
}

/// Performance index `alpha_{T,delta}` for a fixed control horizon.
///
/// With `E(s) = (e^{mu s} - 1)^{1/C}` the index is
/// `1 - E(d)/(E(T) - E(d)) * E(T-d)/(E(T) - E(T-d))`.
/// The result never exceeds one and may be negative, in which case no
/// stability guarantee follows.
pub fn alpha_continuous(params: &ControllabilityParams, horizon: &HorizonPair) -> f64 {
    let mu = params.decay_rate;
    let c = params.overshoot;
    let t = horizon.prediction_horizon;
    let d = horizon.control_horizon;
    let log_t = ln_expm1(mu * t);
    // E(s)/(E(T) - E(s)) = 1 / expm1((ln(e^{mu T}-1) - ln(e^{mu s}-1)) / C)
    let first = ((log_t - ln_expm1(mu * d)) / c).exp_m1();
    let second = ((log_t - ln_expm1(mu * (t - d))) / c).exp_m1();
    1.0 - 1.0 / (first * second)
}

/// Weights `gamma_i^k = C * sum_{n<i} q^n` with `q = e^{-mu tau 2^{-k}}`,
/// returned for `i = 1..=length`.
pub fn gamma_sequence(
    params: &ControllabilityParams,
    base_step: f64,
    level: u32,
    length: usize,
) -> Result<Vec<f64>> {
    finite(base_step, "base_step")?;
    if base_step <= 0.0 {
        return Err(BoundsError::Refinement(format!(
            "base step must be positive, got {base_step}"
        )));
    }
    if length == 0 {
        return Err(BoundsError::Refinement("length must be at least 1".into()));
    }
    let rate = params.decay_rate * base_step * (-(level as f64)).exp2();
    let denom = (-rate).exp_m1();
    Ok((1..=length)
        .map(|i| {
            if denom == 0.0 {
                params.overshoot * i as f64
            } else {
                params.overshoot * ((-rate * i as f64).exp_m1() / denom)
            }
        })
        .collect())
}

/// `ln prod_{i in range} (1 - 1/gamma_i)`, i.e. the log of
/// `prod (gamma_i - 1) / prod gamma_i`.
fn log_product_ratio(gamma: &[f64], from: usize, to: usize) -> Result<f64> {
    let mut acc = 0.0;
    for i in from..=to {
        let g = gamma[i - 1];
        if g - 1.0 <= 0.0 {
            return Err(BoundsError::DegenerateDenominator { index: i });
        }
        acc += (-1.0 / g).ln_1p();
    }
    Ok(acc)
}

/// Discrete refinement counterpart of [`alpha_continuous`].
///
/// With `N_k = 2^k N`, `m_k = 2^k m` and `P(a..b) = prod (gamma_i - 1)/prod gamma_i`
/// the bound is `1 - P1/(1 - P1) * P2/(1 - P2)` where `P1 = P(m_k+1..N_k)` and
/// `P2 = P(N_k-m_k+1..N_k)`. Products are accumulated as sums of logarithms.
pub fn alpha_discrete(params: &ControllabilityParams, spec: &RefinementSpec) -> Result<f64> {
    spec.validate()?;
    let scale = 1usize << spec.refinement_level;
    let n_k = scale * spec.num_steps;
    let m_k = scale * spec.control_steps;
    let gamma = gamma_sequence(params, spec.base_step, spec.refinement_level, n_k)?;

    let log_p1 = log_product_ratio(&gamma, m_k + 1, n_k)?;
    let log_p2 = log_product_ratio(&gamma, n_k - m_k + 1, n_k)?;
    // 1 - P = -expm1(ln P); both must stay positive.
    let one_minus_p1 = -log_p1.exp_m1();
    let one_minus_p2 = -log_p2.exp_m1();
    if one_minus_p1 <= 0.0 {
        return Err(BoundsError::DegenerateDenominator { index: m_k + 1 });
    }
    if one_minus_p2 <= 0.0 {
        return Err(BoundsError::DegenerateDenominator {
            index: n_k - m_k + 1,
        });
    }
    let ratio = (log_p1 + log_p2 - one_minus_p1.ln() - one_minus_p2.ln()).exp();
    Ok(1.0 - ratio)
}

/// Guaranteed performance for every control horizon in
/// `[delta_min, T - delta_min]`, which by symmetry and monotonicity of the
/// index equals the value at `delta_min`.
pub fn guaranteed_alpha_varying(
    params: &ControllabilityParams,
    prediction_horizon: f64,
    delta_min: f64,
) -> Result<f64> {
    finite(prediction_horizon, "prediction_horizon")?;
    finite(delta_min, "delta_min")?;
    if prediction_horizon <= 0.0 {
        return Err(BoundsError::PredictionHorizon(prediction_horizon));
    }
    let half = prediction_horizon / 2.0;
    if !(delta_min > 0.0 && delta_min <= half) {
        return Err(BoundsError::MinimalHorizon { delta_min, half });
    }
    let horizon = HorizonPair::new(prediction_horizon, delta_min)?;
    Ok(alpha_continuous(params, &horizon))
}

/// Lower bound `1 - ([(e^{mu(T-d)})^{1/C} - 1][(e^{mu d})^{1/C} - 1])^{-1}`,
/// which tends to one as the decay rate grows.
pub fn decay_rate_lower_bound(
    params: &ControllabilityParams,
    horizon: &HorizonPair,
) -> Result<f64> {
    let mu_c = params.decay_rate / params.overshoot;
    let a = (mu_c * (horizon.prediction_horizon - horizon.control_horizon)).exp_m1();
    let b = (mu_c * horizon.control_horizon).exp_m1();
    for factor in [a, b] {
        if !(factor > 0.0) {
            return Err(BoundsError::Undefined(factor));
        }
    }
    Ok(1.0 - 1.0 / (a * b))
}

/// `1 - e^{-mu T}`: the index cannot exceed this for any overshoot.
pub fn overshoot_upper_bound(params: &ControllabilityParams, prediction_horizon: f64) -> f64 {
    -(-params.decay_rate * prediction_horizon).exp_m1()
}

/// Closed interval used for parameter sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(BoundsError::Range(format!("[{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `n >= 2` equally spaced points including both ends.
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (n - 1) as f64;
        (0..n)
            .map(|i| if i + 1 == n { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

/// Evaluation of the index on a `(C, sigma)` grid with `mu = -ln(sigma)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionGrid {
    pub prediction_horizon: f64,
    pub control_horizon: f64,
    pub overshoots: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Row-major: `alpha[i * sigmas.len() + j]` belongs to `(overshoots[i], sigmas[j])`.
    pub alpha: Vec<f64>,
}

impl RegionGrid {
    pub fn alpha_at(&self, i: usize, j: usize) -> f64 {
        self.alpha[i * self.sigmas.len() + j]
    }

    pub fn is_stable(&self, i: usize, j: usize) -> bool {
        self.alpha_at(i, j) >= 0.0
    }

    /// All `(C, sigma)` pairs with a nonnegative index.
    pub fn stable_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (i, &c) in self.overshoots.iter().enumerate() {
            for (j, &s) in self.sigmas.iter().enumerate() {
                if self.is_stable(i, j) {
                    out.push((c, s));
                }
            }
        }
        out
    }
}

/// Sweeps the `(C, sigma)` plane and reports where `alpha_{T,delta} >= 0`.
pub fn stability_region(
    prediction_horizon: f64,
    control_horizon: f64,
    overshoot_range: Interval,
    sigma_range: Interval,
    grid: usize,
    execution: Execution,
) -> Result<RegionGrid> {
    if grid < 2 {
        return Err(BoundsError::Range(format!("grid must be >= 2, got {grid}")));
    }
    if overshoot_range.lo < 1.0 {
        return Err(BoundsError::Overshoot(overshoot_range.lo));
    }
    if !(sigma_range.lo > 0.0 && sigma_range.hi < 1.0) {
        return Err(BoundsError::Range(format!(
            "sigma range [{}, {}] must lie inside (0, 1)",
            sigma_range.lo, sigma_range.hi
        )));
    }
    let horizon = HorizonPair::new(prediction_horizon, control_horizon)?;
    let overshoots = overshoot_range.linspace(grid);
    let sigmas = sigma_range.linspace(grid);
    let cols = sigmas.len();
    let alpha = par::map_indices(execution, overshoots.len() * cols, |idx| {
        let c = overshoots[idx / cols];
        let mu = -sigmas[idx % cols].ln();
        // Grid values were validated above, so construction cannot fail.
        let params = ControllabilityParams { overshoot: c, decay_rate: mu };
        alpha_continuous(&params, &horizon)
    });
    Ok(RegionGrid {
        prediction_horizon,
        control_horizon,
        overshoots,
        sigmas,
        alpha,
    })
}

/// Smallest prediction horizon `T` with `alpha(T, fraction * T) >= target`,
/// located by bracketing and bisection to a relative tolerance of `1e-9`.
pub fn minimal_prediction_horizon(
    params: &ControllabilityParams,
    delta_fraction: f64,
    alpha_target: f64,
) -> Result<f64> {
    finite(delta_fraction, "delta_fraction")?;
    finite(alpha_target, "alpha_target")?;
    if !(delta_fraction > 0.0 && delta_fraction <= 0.5) {
        return Err(BoundsError::Range(format!(
            "delta fraction {delta_fraction} must lie in (0, 1/2]"
        )));
    }
    if !(alpha_target > 0.0 && alpha_target < 1.0) {
        return Err(BoundsError::Unattainable(alpha_target));
    }
    let eval = |t: f64| {
        let horizon = HorizonPair {
            prediction_horizon: t,
            control_horizon: delta_fraction * t,
        };
        alpha_continuous(params, &horizon)
    };

    // Bracket: grow from the horizon where the upper bound alone reaches the
    // target (no smaller T can work since alpha <= 1 - e^{-mu T}).
    let mut lo = -(-alpha_target).ln_1p() / params.decay_rate;
    if eval(lo) >= alpha_target {
        return Ok(lo);
    }
    let mut hi = lo * 2.0;
    let limit = 1e8 / params.decay_rate;
    while !(eval(hi) >= alpha_target) {
        lo = hi;
        hi *= 2.0;
        if hi > limit {
            return Err(BoundsError::Unattainable(alpha_target));
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if eval(mid) >= alpha_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(c: f64, mu: f64) -> ControllabilityParams {
        ControllabilityParams::new(c, mu).unwrap()
    }

    fn h(t: f64, d: f64) -> HorizonPair {
        HorizonPair::new(t, d).unwrap()
    }

    #[test]
    fn closed_form_for_unit_overshoot() {
        let e1 = 1.0 - (-1.0f64).exp();
        assert_abs_diff_eq!(alpha_continuous(&p(1.0, 1.0), &h(1.0, 0.5)), e1, epsilon = 1e-14);
        assert_abs_diff_eq!(alpha_continuous(&p(1.0, 1.0), &h(1.0, 0.5)), 0.63212, epsilon = 1e-5);
        let e2 = 1.0 - (-2.0f64).exp();
        assert_abs_diff_eq!(alpha_continuous(&p(1.0, 2.0), &h(1.0, 0.3)), e2, epsilon = 1e-14);
        assert_abs_diff_eq!(e2, 0.86466, epsilon = 1e-5);
    }

    // Frozen from a 50-digit mpmath evaluation of the textbook expression.
    #[test]
    fn matches_high_precision_reference() {
        let cases = [
            ((2.0, 1.0, 1.0, 0.5), -1.5397292163356757323),
            ((2.0, 1.0, 1.0, 0.25), -1.8512619075443262804),
            ((5.0, 1.0, 1.0, 0.5), -20.615886987598160097),
            ((3.0, 2.0, 0.7, 0.2), -4.6409523973441149368),
            ((2.0, 2.0, 1.0, 0.2), -0.41529166221160557312),
            ((1.5, 0.3, 4.0, 1.0), -0.091915703384067694899),
        ];
        for ((c, mu, t, d), want) in cases {
            let got = alpha_continuous(&p(c, mu), &h(t, d));
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn symmetric_in_control_horizon() {
        let params = p(2.5, 1.3);
        let a = alpha_continuous(&params, &h(1.7, 0.4));
        let b = alpha_continuous(&params, &h(1.7, 1.7 - 0.4));
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn no_overflow_for_large_rates() {
        let a = alpha_continuous(&p(3.0, 500.0), &h(10.0, 2.0));
        assert!(a.is_finite() && a <= 1.0 && a > 0.99);
        let a = alpha_continuous(&p(1.0, 1e-6), &h(1.0, 0.5));
        assert_abs_diff_eq!(a, -(-1e-6f64).exp_m1(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_invalid_horizons() {
        assert!(HorizonPair::new(1.0, 0.0).is_err());
        assert!(HorizonPair::new(1.0, 1.0).is_err());
        assert!(HorizonPair::new(1.0, 1.5).is_err());
        assert!(HorizonPair::new(f64::NAN, 0.5).is_err());
        assert!(HorizonPair::new(1.0, f64::INFINITY).is_err());
        assert!(ControllabilityParams::new(0.9, 1.0).is_err());
        assert!(ControllabilityParams::new(1.0, 0.0).is_err());
        assert!(ControllabilityParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn gamma_partial_sums() {
        let g = gamma_sequence(&p(2.0, std::f64::consts::LN_2), 1.0, 0, 3).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[2], 3.5, epsilon = 1e-14);

        let g = gamma_sequence(&p(1.0, 0.7), 0.3, 4, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);

        let g = gamma_sequence(&p(3.0, 1e3), 1.0, 0, 2).unwrap();
        assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 3.0, epsilon = 1e-12);

        assert!(gamma_sequence(&p(1.0, 1.0), 0.0, 0, 3).is_err());
        assert!(gamma_sequence(&p(1.0, 1.0), 1.0, 0, 0).is_err());
    }

    #[test]
    fn gamma_refinement_halves_the_ratio_exponent() {
        // q at level k is sigma^{2^-k}; the second weight is C (1 + q).
        let params = p(1.5, 0.8);
        let tau = 0.25;
        for k in 0..6 {
            let g = gamma_sequence(&params, tau, k, 2).unwrap();
            let q = (-0.8 * tau).exp().powf((-(k as f64)).exp2());
            assert_abs_diff_eq!(g[1], 1.5 * (1.0 + q), epsilon = 1e-13);
        }
    }

    // Frozen from mpmath with direct (non-log) products.
    #[test]
    fn discrete_bound_matches_reference() {
        let params = p(2.0, 1.0);
        let want = [
            -2.1346458921620654534,
            -1.9204014980388933911,
            -1.8198299325577764154,
            -1.7711492521311478516,
            -1.747205828844722434,
        ];
        for (k, w) in want.iter().enumerate() {
            let spec = RefinementSpec::new(0.1, 10, 3, k as u32).unwrap();
            let got = alpha_discrete(&params, &spec).unwrap();
            assert_abs_diff_eq!(got, *w, epsilon = 1e-11);
        }
    }

    #[test]
    fn discrete_bound_monotone_and_convergent() {
        let params = p(2.0, 1.0);
        let spec = RefinementSpec::new(0.1, 10, 3, 0).unwrap();
        let cont = alpha_continuous(&params, &spec.horizon().unwrap());
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=12 {
            let a = alpha_discrete(&params, &spec.at_level(k)).unwrap();
            assert!(a >= prev);
            assert!(a <= cont + 1e-12);
            prev = a;
        }
        assert!((prev - cont).abs() <= 1e-3);
    }

    #[test]
    fn discrete_bound_rejects_bad_refinements() {
        assert!(RefinementSpec::new(0.1, 10, 6, 0).is_err());
        assert!(RefinementSpec::new(0.1, 10, 0, 0).is_err());
        assert!(RefinementSpec::new(-0.1, 10, 2, 0).is_err());
    }

    #[test]
    fn varying_guarantee() {
        let e1 = 1.0 - (-1.0f64).exp();
        assert_abs_diff_eq!(
            guaranteed_alpha_varying(&p(1.0, 1.0), 1.0, 0.1).unwrap(),
            e1,
            epsilon = 1e-12
        );
        let params = p(2.0, 3.0);
        assert_eq!(
            guaranteed_alpha_varying(&params, 1.0, 0.5).unwrap(),
            alpha_continuous(&params, &h(1.0, 0.5))
        );
        assert!(guaranteed_alpha_varying(&params, 1.0, 0.6).is_err());
        assert!(guaranteed_alpha_varying(&params, 1.0, 0.0).is_err());
    }

    #[test]
    fn varying_guarantee_is_grid_minimum() {
        let params = p(2.0, 2.0);
        let g = guaranteed_alpha_varying(&params, 1.0, 0.2).unwrap();
        let grid_min = Interval::new(0.2, 0.8)
            .unwrap()
            .linspace(1000)
            .into_iter()
            .map(|d| alpha_continuous(&params, &h(1.0, d)))
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(g, grid_min, epsilon = 1e-12);
    }

    #[test]
    fn decay_lower_bound_values() {
        let lb = decay_rate_lower_bound(&p(2.0, 1.0), &h(1.0, 0.5)).unwrap();
        assert_abs_diff_eq!(lb, -11.396114774680854943, epsilon = 1e-12);
        assert!(alpha_continuous(&p(2.0, 1.0), &h(1.0, 0.5)) >= lb);
        let lb = decay_rate_lower_bound(&p(1.0, 60.0), &h(1.0, 0.5)).unwrap();
        assert!(lb > 1.0 - 1e-20 - 1e-12);
    }

    #[test]
    fn upper_bound_values() {
        assert_abs_diff_eq!(
            overshoot_upper_bound(&p(3.0, 1.0), 1.0),
            0.6321205588285577,
            epsilon = 1e-15
        );
        let a = alpha_continuous(&p(5.0, 1.0), &h(1.0, 0.5));
        assert!(a < overshoot_upper_bound(&p(5.0, 1.0), 1.0));
    }

    #[test]
    fn region_examples() {
        let r = stability_region(
            1.0,
            0.5,
            Interval::new(1.0, 40.0).unwrap(),
            Interval::new(0.01, 0.99).unwrap(),
            30,
            Execution::Sequential,
        )
        .unwrap();
        for j in 0..r.sigmas.len() {
            assert!(r.is_stable(0, j));
        }
        assert!(!r.is_stable(r.overshoots.len() - 1, r.sigmas.len() - 1));
        assert!(stability_region(1.0, 0.5, Interval::new(1.0, 2.0).unwrap(), Interval::new(0.0, 0.5).unwrap(), 5, Execution::Sequential).is_err());
        assert!(stability_region(1.0, 0.5, Interval::new(1.0, 2.0).unwrap(), Interval::new(0.1, 0.5).unwrap(), 1, Execution::Sequential).is_err());
    }

    #[test]
    fn minimal_horizon_closed_form() {
        let t = minimal_prediction_horizon(&p(1.0, 1.0), 0.5, 1.0 - (-2.0f64).exp()).unwrap();
        assert!((t - 2.0).abs() <= 1e-8);
        assert!(minimal_prediction_horizon(&p(1.0, 1.0), 0.5, 1.0).is_err());
        assert!(minimal_prediction_horizon(&p(1.0, 1.0), 0.6, 0.5).is_err());
        let tiny = minimal_prediction_horizon(&p(1.0, 1.0), 0.5, 1e-6).unwrap();
        assert!(tiny < 1e-5);
    }

    #[test]
    fn minimal_horizon_against_grid_scan() {
        let params = p(2.0, 1.0);
        let t = minimal_prediction_horizon(&params, 0.5, 0.5).unwrap();
        // Oracle: first point of a fine scan that meets the target.
        let scan = Interval::new(0.01, 20.0).unwrap().linspace(10_000);
        let spacing = scan[1] - scan[0];
        let first = scan
            .into_iter()
            .find(|&tt| alpha_continuous(&params, &h(tt, 0.5 * tt)) >= 0.5)
            .unwrap();
        assert!(t <= first && first - t <= spacing, "{t} vs {first}");
    }
}
