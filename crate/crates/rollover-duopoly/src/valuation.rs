//! Distributions of the per-unit data valuation across the user population.
//!
//! A user of type theta values a unit of delivered data at theta money units.
//! The pricing layer only ever needs the density `h`, the cdf `H`, the upper
//! support end, and the failure-rate gap `(1 - H) / h`; all pricing threshold
//! equations are well posed when the failure rate `h / (1 - H)` is
//! non-decreasing (IFR), which [`ValuationDistribution::verify_ifr`] checks
//! numerically.

use crate::numerics::{bracketed_root, SolveError};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ValuationError {
    #[error("distribution parameter out of range: {0}")]
    BadParameter(String),
    #[error("density is zero at interior point {theta}")]
    ZeroDensity { theta: f64 },
    #[error("quantile solve for the truncation point failed: {0}")]
    Quantile(#[from] SolveError),
}

/// Family tag for a constructed distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Uniform,
    TruncatedGamma,
}

#[derive(Debug, Clone)]
enum Inner {
    Uniform,
    TruncatedGamma {
        gamma: Gamma,
        /// Untruncated cdf mass below the truncation point; divides both the
        /// density and the cdf so that the truncated cdf reaches 1 exactly.
        mass: f64,
    },
}

/// A valuation distribution on `[0, theta_max]`.
#[derive(Debug, Clone)]
pub struct ValuationDistribution {
    family: Family,
    theta_max: f64,
    inner: Inner,
}

/// Uniform valuations on `[0, theta_max]`.
pub fn make_uniform(theta_max: f64) -> Result<ValuationDistribution, ValuationError> {
    if !theta_max.is_finite() || theta_max <= 0.0 {
        return Err(ValuationError::BadParameter(format!(
            "theta_max must be positive, got {theta_max}"
        )));
    }
    Ok(ValuationDistribution {
        family: Family::Uniform,
        theta_max,
        inner: Inner::Uniform,
    })
}

/// Gamma valuations with the given shape and scale, truncated at the
/// `trunc_quantile` point of the untruncated distribution and renormalized.
///
/// The truncation quantile must sit in `(0.99, 1)`: the truncation is meant
/// to bound the support, not to reshape the distribution.
pub fn make_truncated_gamma(
    shape: f64,
    scale: f64,
    trunc_quantile: f64,
) -> Result<ValuationDistribution, ValuationError> {
    if !shape.is_finite() || shape <= 0.0 || !scale.is_finite() || scale <= 0.0 {
        return Err(ValuationError::BadParameter(format!(
            "gamma shape and scale must be positive, got shape={shape}, scale={scale}"
        )));
    }
    if !(trunc_quantile > 0.99 && trunc_quantile < 1.0) {
        return Err(ValuationError::BadParameter(format!(
            "trunc_quantile must lie in (0.99, 1), got {trunc_quantile}"
        )));
    }
    let gamma = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| ValuationError::BadParameter(e.to_string()))?;
    // Bracket the quantile from above by doubling, then solve for it.
    let mut hi = scale * (shape + 10.0 * shape.sqrt() + 10.0);
    for _ in 0..128 {
        if gamma.cdf(hi) >= trunc_quantile {
            break;
        }
        hi *= 2.0;
    }
    let theta_max = bracketed_root(|x| gamma.cdf(x) - trunc_quantile, 0.0, hi, 1e-12 * hi)?;
    let mass = gamma.cdf(theta_max);
    if !(mass > 0.0) {
        return Err(ValuationError::BadParameter(
            "truncation point carries no probability mass".into(),
        ));
    }
    Ok(ValuationDistribution {
        family: Family::TruncatedGamma,
        theta_max,
        inner: Inner::TruncatedGamma { gamma, mass },
    })
}

impl ValuationDistribution {
    pub fn family(&self) -> Family {
        self.family
    }

    /// Upper end of the valuation support.
    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    /// Density `h(theta)`; zero outside `[0, theta_max]`.
    pub fn pdf(&self, theta: f64) -> f64 {
        if theta < 0.0 || theta > self.theta_max {
            return 0.0;
        }
        match &self.inner {
            Inner::Uniform => 1.0 / self.theta_max,
            Inner::TruncatedGamma { gamma, mass } => {
                if theta == 0.0 {
                    // The gamma density at the origin is either 0 (shape > 1)
                    // or unbounded (shape < 1); clamp to 0 so that evaluation
                    // stays finite at the support boundary.
                    0.0
                } else {
                    gamma.pdf(theta) / mass
                }
            }
        }
    }

    /// Cdf `H(theta)`; clamped to 0 below the support and 1 above it.
    pub fn cdf(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        if theta >= self.theta_max {
            return 1.0;
        }
        match &self.inner {
            Inner::Uniform => theta / self.theta_max,
            Inner::TruncatedGamma { gamma, mass } => (gamma.cdf(theta) / mass).min(1.0),
        }
    }

    /// The gap `(1 - H(theta)) / h(theta)` between a type and the market it
    /// would leave unserved, used by every pricing threshold equation.
    pub fn failure_rate_gap(&self, theta: f64) -> Result<f64, ValuationError> {
        let h = self.pdf(theta);
        if h <= 0.0 {
            return Err(ValuationError::ZeroDensity { theta });
        }
        Ok((1.0 - self.cdf(theta)) / h)
    }

    /// Checks numerically that the failure rate `h / (1 - H)` is
    /// non-decreasing across `grid` interior points (slack `1e-9`, applied
    /// relative to the local magnitude so that the steep climb near the top
    /// of the support does not trip on rounding).
    pub fn verify_ifr(&self, grid: usize) -> bool {
        let grid = grid.max(2);
        let mut prev: Option<f64> = None;
        for i in 0..grid {
            let theta = self.theta_max * (i as f64 + 0.5) / grid as f64;
            let tail = 1.0 - self.cdf(theta);
            if tail <= 1e-12 {
                break;
            }
            let rate = self.pdf(theta) / tail;
            if let Some(p) = prev {
                if rate < p * (1.0 - 1e-9) - 1e-9 {
                    return false;
                }
            }
            prev = Some(rate);
        }
        true
    }
}
