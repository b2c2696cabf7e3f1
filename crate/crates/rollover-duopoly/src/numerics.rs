//! Scalar root finding and fixed-point iteration for the equilibrium solvers.
//!
//! Every implicit equation in the engine is monotone or single-crossing over
//! a known interval, so a guarded bracketing method is all that is needed.
//! Determinism matters more than raw speed here: identical inputs must give
//! bit-identical outputs across runs and thread counts.

use thiserror::Error;

/// Default interval-width tolerance for [`bracketed_root`], in the units of
/// the unknown.
pub const DEFAULT_ROOT_TOL: f64 = 1e-10;

/// Default cap on best-response iterations in [`fixed_point_pair`].
pub const DEFAULT_MAX_FIXED_POINT_ITERS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("no sign change over [{lo}, {hi}]: f(lo)={f_lo:e}, f(hi)={f_hi:e}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("function evaluated to a non-finite value at {at}")]
    NonFinite { at: f64 },
    #[error("invalid bracket [{lo}, {hi}]")]
    InvalidBracket { lo: f64, hi: f64 },
    #[error("fixed-point iteration did not converge in {max_iter} iterations (last step {last_step:e})")]
    NoConvergence { max_iter: usize, last_step: f64 },
}

/// Finds a root of `f` inside `[lo, hi]`, which must bracket a sign change.
///
/// Bisection interleaved with secant steps: the secant proposal is accepted
/// only when it falls safely inside the current bracket, and every other
/// iteration bisects outright so the bracket width provably halves. Endpoints
/// that are exact roots are returned immediately. The returned point is the
/// bracket midpoint once the width drops below `tol`.
pub fn bracketed_root(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, SolveError> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(SolveError::InvalidBracket { lo, hi });
    }
    let tol = tol.max(f64::EPSILON * (1.0 + lo.abs().max(hi.abs())));
    let mut lo = lo;
    let mut hi = hi;
    let mut f_lo = f(lo);
    if !f_lo.is_finite() {
        return Err(SolveError::NonFinite { at: lo });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let mut f_hi = f(hi);
    if !f_hi.is_finite() {
        return Err(SolveError::NonFinite { at: hi });
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(SolveError::NoSignChange { lo, hi, f_lo, f_hi });
    }

    let mut take_secant = true;
    for _ in 0..256 {
        if hi - lo <= tol {
            break;
        }
        let mut x = 0.5 * (lo + hi);
        if take_secant {
            let secant = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            let guard = 0.01 * (hi - lo);
            if secant.is_finite() && secant > lo + guard && secant < hi - guard {
                x = secant;
            }
        }
        take_secant = !take_secant;
        let fx = f(x);
        if !fx.is_finite() {
            return Err(SolveError::NonFinite { at: x });
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
            f_hi = fx;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Result of a converged two-dimensional fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFixedPoint {
    pub point: (f64, f64),
    pub iterations: usize,
}

/// Iterates `map` from `init` until the sup-norm step falls below `tol`.
///
/// Plain simultaneous iteration; callers that need a guaranteed answer when
/// the map is not contracting should fall back to a bracketed root of the
/// composed map.
pub fn fixed_point_pair(
    map: impl Fn((f64, f64)) -> (f64, f64),
    init: (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<PairFixedPoint, SolveError> {
    let mut cur = init;
    let mut last_step = f64::INFINITY;
    for it in 1..=max_iter {
        let next = map(cur);
        if !next.0.is_finite() || !next.1.is_finite() {
            return Err(SolveError::NonFinite { at: cur.0 });
        }
        last_step = (next.0 - cur.0).abs().max((next.1 - cur.1).abs());
        cur = next;
        if last_step <= tol {
            return Ok(PairFixedPoint {
                point: cur,
                iterations: it,
            });
        }
    }
    Err(SolveError::NoConvergence {
        max_iter,
        last_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root_matches_reference() {
        // x^3 - 2x - 5 has a single real root near 2.0945514815423265.
        let root = bracketed_root(|x| x * x * x - 2.0 * x - 5.0, 2.0, 3.0, 1e-12).unwrap();
        assert!((root - 2.094_551_481_542_326_5).abs() < 1e-9);
    }

    #[test]
    fn linear_threshold_equation() {
        let root = bracketed_root(|s| s - (1.0 - s) - 0.2, 0.0, 1.0, 1e-10).unwrap();
        assert!((root - 0.6).abs() < 1e-9);
    }

    #[test]
    fn exact_endpoint_is_returned() {
        let root = bracketed_root(|x| x - 1.0, 1.0, 2.0, 1e-10).unwrap();
        assert_eq!(root, 1.0);
    }

    #[test]
    fn rejects_bracket_without_sign_change() {
        let err = bracketed_root(|x| x * x + 1.0, -1.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, SolveError::NoSignChange { .. }));
    }

    #[test]
    fn rejects_non_finite_values() {
        let err = bracketed_root(|x| 1.0 / x, -1.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, SolveError::NonFinite { .. }));
    }

    #[test]
    fn rejects_reversed_bracket() {
        let err = bracketed_root(|x| x, 1.0, 0.0, 1e-10).unwrap_err();
        assert!(matches!(err, SolveError::InvalidBracket { .. }));
    }

    #[test]
    fn contraction_pair_converges() {
        // x = y/2 + 1/10, y = x/2 + 1/5 has the unique solution (4/15, 1/3).
        let fp = fixed_point_pair(
            |(x, y)| (0.5 * y + 0.1, 0.5 * x + 0.2),
            (0.0, 0.0),
            1e-12,
            10_000,
        )
        .unwrap();
        assert!((fp.point.0 - 4.0 / 15.0).abs() < 1e-9);
        assert!((fp.point.1 - 1.0 / 3.0).abs() < 1e-9);
        assert!(fp.iterations >= 1);
    }

    #[test]
    fn divergent_pair_reports_failure() {
        let err = fixed_point_pair(|(x, y)| (2.0 * y + 1.0, 2.0 * x + 1.0), (1.0, 1.0), 1e-12, 50)
            .unwrap_err();
        assert!(matches!(err, SolveError::NoConvergence { .. }));
    }
}
