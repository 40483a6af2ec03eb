//! Coefficients of the coupled Jacobi diffusion / logistic source-rate system.
//!
//! The demand process lives on `[0, 1]`:
//!
//! ```text
//! dX = (Y - X) dt + sigma * sqrt(X (1 - X)) dB
//! dY = R Y (1 - Y / (1 - delta)) dt
//! ```
//!
//! `X` is absorbed at 1 once it reaches the upper boundary. `Y` starts above
//! the carrying capacity `1 - delta` (by default at `1 + delta`) and decays
//! towards it along a logistic curve whose speed is set by `R`.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Parameters of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Volatility of the demand process.
    pub sigma: f64,
    /// Speed `R` of the logistic decay of the source rate.
    pub rate: f64,
    /// Half-width `delta` of the source-rate transition `1 + delta -> 1 - delta`.
    pub delta: f64,
    /// Initial demand, strictly inside `(0, 1)`.
    pub x0: f64,
    /// Initial source rate.
    pub y0: f64,
}

impl ModelParams {
    /// Builds parameters with the default initial source rate `y0 = 1 + delta`.
    pub fn new(sigma: f64, rate: f64, delta: f64, x0: f64) -> Self {
        Self {
            sigma,
            rate,
            delta,
            x0,
            y0: 1.0 + delta,
        }
    }

    /// Stable equilibrium of the source rate, `1 - delta`.
    pub fn carrying_capacity(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    /// Changes `R` without touching `y0`.
    pub fn with_rate(self, rate: f64) -> Self {
        Self { rate, ..self }
    }

    pub fn validate(self) -> Result<Self, ParamError> {
        validate(self)
    }
}

impl Default for ModelParams {
    /// `sigma = 0.2`, `R = 0.1`, `delta = 0.5`, `x0 = 0.1`, `y0 = 1.5`.
    fn default() -> Self {
        Self::new(0.2, 0.1, 0.5, 0.1)
    }
}

/// Checks every parameter-domain constraint and hands the parameters back.
pub fn validate(params: ModelParams) -> Result<ModelParams, ParamError> {
    let ModelParams {
        sigma,
        rate,
        delta,
        x0,
        y0,
    } = params;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ParamError::new("sigma", sigma, "must be finite and >= 0"));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(ParamError::new("R", rate, "must be finite and > 0"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ParamError::new("delta", delta, "must lie in the open interval (0, 1)"));
    }
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(ParamError::new("x0", x0, "must lie in the open interval (0, 1)"));
    }
    if !y0.is_finite() {
        return Err(ParamError::new("y0", y0, "must be finite"));
    }
    Ok(params)
}

/// Attainability of the endpoints of `[0, 1]` for a Jacobi diffusion with a
/// frozen source level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryClassification {
    pub lower_attainable: bool,
    pub upper_attainable: bool,
    /// Neither endpoint is reached: the process stays in the open interval.
    pub confined: bool,
}

/// Feller test for `dX = (r - X) dt + sigma sqrt(X (1 - X)) dB`.
///
/// The lower endpoint is attainable iff `2 r < sigma^2`, the upper one iff
/// `2 (1 - r) < sigma^2`. Equality counts as not attainable.
pub fn feller_classify(source_level: f64, sigma: f64) -> BoundaryClassification {
    let s2 = sigma * sigma;
    let lower_attainable = 2.0 * source_level < s2;
    let upper_attainable = 2.0 * (1.0 - source_level) < s2;
    BoundaryClassification {
        lower_attainable,
        upper_attainable,
        confined: !lower_attainable && !upper_attainable,
    }
}

/// Mean-reverting drift of the demand process.
#[inline]
pub fn drift(x: f64, y: f64) -> f64 {
    y - x
}

/// `sigma * sqrt(x (1 - x))`, with the radicand clamped at zero so that
/// states slightly outside `[0, 1]` give a zero amplitude instead of NaN.
#[inline]
pub fn diffusion_amplitude(x: f64, sigma: f64) -> f64 {
    sigma * (x * (1.0 - x)).max(0.0).sqrt()
}

/// Logistic right-hand side `R y (1 - y / (1 - delta))`.
#[inline]
pub fn source_rhs(y: f64, rate: f64, delta: f64) -> f64 {
    rate * y * (1.0 - y / (1.0 - delta))
}

/// Closed-form solution of the logistic source-rate equation,
/// `K y0 / (y0 + (K - y0) exp(-R t))` with `K = 1 - delta`.
pub fn source_exact(t: f64, rate: f64, delta: f64, y0: f64) -> f64 {
    let k = 1.0 - delta;
    k * y0 / (y0 + (k - y0) * (-rate * t).exp())
}
