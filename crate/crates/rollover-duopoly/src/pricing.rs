//! Pricing stage: each operator chooses its threshold user type to maximize
//! profit given the other's choice.
//!
//! Because per-subscriber profit depends on prices only through the
//! threshold σ, the pricing game collapses to a two-dimensional game in
//! `(σ₁, σ₂)`. Operator 1 is always the canonical stronger side (`ξ ≤ 1`).
//! Each operator's best response has four branches (give up, share the
//! market, push the rival out, or act as an unthreatened monopolist), with
//! the branch boundaries given by three cutoffs on the rival's threshold.
//! The equilibrium lands in one of five regimes depending on the cost-QoS
//! ratios `(ψ₁, ψ₂)`; all but the coexistence regime have closed forms.
//!
//! All functions here assume the valuation distribution has a non-decreasing
//! failure rate (see [`crate::valuation::ValuationDistribution::verify_ifr`]),
//! which makes every implicit equation below single-crossing.

use crate::demand::RolloverProfile;
use crate::market::{operator_profits, partition, MarketError, MarketPartition, OperatorProfile};
use crate::numerics::{bracketed_root, fixed_point_pair, SolveError};
use crate::valuation::ValuationDistribution;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("operators must be ordered with the stronger first (xi = {xi})")]
    NotCanonical { xi: f64 },
    #[error(
        "candidate ({sigma1}, {sigma2}) in regime {regime:?} is not a mutual best response \
         (responses {br1}, {br2})"
    )]
    NotBestResponse {
        regime: Regime,
        sigma1: f64,
        sigma2: f64,
        br1: f64,
        br2: f64,
    },
}

/// Cutoffs on the rival's threshold that switch an operator's best-response
/// branch: below `winning` the rival has already won every user the operator
/// could serve profitably; between `losing` and `no_influence` the operator
/// prices the rival out; above `no_influence` the rival is irrelevant.
#[derive(Debug, Clone, Copy)]
pub struct ResponseCutoffs {
    pub winning: f64,
    pub losing: f64,
    pub no_influence: f64,
}

/// Which of the five pricing-game outcomes the cost pair falls into, plus
/// the two tie-breaking outcomes for exactly equal strengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Operator 2 gives up; operator 1 prices as an unthreatened monopolist.
    FirstStrongMonopoly,
    /// Operator 2 competes in vain; operator 1 must price down to `ψ₂`.
    FirstWeakMonopoly,
    /// Both operators serve a positive share.
    Coexistence,
    /// Operator 1 competes in vain; operator 2 prices it out.
    SecondWeakMonopoly,
    /// Operator 1 gives up; operator 2 prices as an unthreatened monopolist.
    SecondStrongMonopoly,
    /// Equal strengths: operator 1 wins the whole market on price.
    BertrandFirst,
    /// Equal strengths: operator 2 wins the whole market on price.
    BertrandSecond,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::FirstStrongMonopoly => "first-strong-monopoly",
            Regime::FirstWeakMonopoly => "first-weak-monopoly",
            Regime::Coexistence => "coexistence",
            Regime::SecondWeakMonopoly => "second-weak-monopoly",
            Regime::SecondStrongMonopoly => "second-strong-monopoly",
            Regime::BertrandFirst => "bertrand-first",
            Regime::BertrandSecond => "bertrand-second",
        }
    }

    /// The same regime with the operator indices exchanged.
    pub fn swap_operators(self) -> Regime {
        match self {
            Regime::FirstStrongMonopoly => Regime::SecondStrongMonopoly,
            Regime::FirstWeakMonopoly => Regime::SecondWeakMonopoly,
            Regime::Coexistence => Regime::Coexistence,
            Regime::SecondWeakMonopoly => Regime::FirstWeakMonopoly,
            Regime::SecondStrongMonopoly => Regime::FirstStrongMonopoly,
            Regime::BertrandFirst => Regime::BertrandSecond,
            Regime::BertrandSecond => Regime::BertrandFirst,
        }
    }
}

/// Outcome of the pricing stage.
#[derive(Debug, Clone)]
pub struct PricingEquilibrium {
    pub regime: Regime,
    pub sigma: (f64, f64),
    pub partition: MarketPartition,
    pub profits: (f64, f64),
    pub flags: Vec<String>,
}

fn solve_tol(dist: &ValuationDistribution) -> f64 {
    1e-13 * dist.theta_max().max(1.0)
}

/// The threshold an operator with cost-QoS ratio `ψ` picks with no rival:
/// the unique root of `(σ − ψ)·h(σ) = 1 − H(σ)`.
pub fn monopoly_threshold(psi: f64, dist: &ValuationDistribution) -> Result<f64, PricingError> {
    let theta_max = dist.theta_max();
    if psi >= theta_max {
        return Ok(theta_max);
    }
    let f = |s: f64| (s - psi) * dist.pdf(s) - (1.0 - dist.cdf(s));
    Ok(bracketed_root(f, psi.max(0.0), theta_max, solve_tol(dist))?)
}

/// Threshold and profit of a lone operator facing no competition.
pub fn monopoly_outcome(
    op: &OperatorProfile,
    rp: &RolloverProfile,
    dist: &ValuationDistribution,
) -> Result<(f64, f64), PricingError> {
    let mp = monopoly_threshold(op.psi(), dist)?;
    let profit = crate::market::strength(op, rp) * (mp - op.psi()) * (1.0 - dist.cdf(mp));
    Ok((mp, profit))
}

/// Cutoffs on `σ₁` that drive operator 2's best response, as functions of
/// operator 2's own ratio `ψ₂`.
pub fn second_response_cutoffs(
    psi2: f64,
    xi: f64,
    dist: &ValuationDistribution,
) -> Result<ResponseCutoffs, PricingError> {
    let theta_max = dist.theta_max();
    // At the `losing` cutoff operator 2's interior optimum collides with the
    // boundary where it would price operator 1 out entirely; there the
    // neutral type sits at theta_max, which adds a constant
    // ξ/(1−ξ)·h(theta_max) to the density term of the optimality condition.
    let edge = xi / (1.0 - xi) * dist.pdf(theta_max);
    let f = |x: f64| (x - psi2) * (edge + dist.pdf(x)) - (1.0 - dist.cdf(x));
    let x = if psi2 >= theta_max {
        theta_max
    } else {
        bracketed_root(f, psi2.max(0.0), theta_max, solve_tol(dist))?
    };
    Ok(ResponseCutoffs {
        winning: psi2,
        losing: xi * x + (1.0 - xi) * theta_max,
        no_influence: xi * monopoly_threshold(psi2, dist)? + (1.0 - xi) * theta_max,
    })
}

/// Cutoffs on `σ₂` that drive operator 1's best response, as functions of
/// operator 1's own ratio `ψ₁`. The `winning` cutoff is negative whenever
/// `ψ₁ ≤ (1−ξ)·theta_max`: a cheap strong operator always wins some share.
pub fn first_response_cutoffs(
    psi1: f64,
    xi: f64,
    dist: &ValuationDistribution,
) -> Result<ResponseCutoffs, PricingError> {
    let theta_max = dist.theta_max();
    let f = |s: f64| (s - psi1) * dist.pdf(s) - (1.0 - xi) * (1.0 - dist.cdf(s));
    let losing = if psi1 >= theta_max {
        theta_max
    } else {
        bracketed_root(f, psi1.max(0.0), theta_max, solve_tol(dist))?
    };
    Ok(ResponseCutoffs {
        winning: (psi1 - (1.0 - xi) * theta_max) / xi,
        losing,
        no_influence: monopoly_threshold(psi1, dist)?,
    })
}

/// Root solve that tolerates the root sitting exactly on a bracket
/// endpoint, which happens at branch boundaries of the best responses.
fn interior_root(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, SolveError> {
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo >= 0.0 {
        return Ok(lo);
    }
    if f_hi <= 0.0 {
        return Ok(hi);
    }
    bracketed_root(f, lo, hi, tol)
}

/// Operator 2's profit-maximizing threshold against `σ₁`.
pub fn best_response_second(
    sigma1: f64,
    psi2: f64,
    xi: f64,
    dist: &ValuationDistribution,
) -> Result<f64, PricingError> {
    let theta_max = dist.theta_max();
    let cut = second_response_cutoffs(psi2, xi, dist)?;
    if sigma1 < cut.winning {
        // Nothing profitable is left; price at cost.
        Ok(psi2)
    } else if sigma1 < cut.losing {
        // Share the market: interior optimum of W₂ in the split region.
        // The neutral type is clamped to the support top so that rounding
        // right at the boundary cannot zero out the density term.
        let tilde = |s2: f64| ((sigma1 - xi * s2) / (1.0 - xi)).min(theta_max);
        let f = |s2: f64| {
            let t = tilde(s2);
            (s2 - psi2) * (xi / (1.0 - xi) * dist.pdf(t) + dist.pdf(s2))
                - (dist.cdf(t) - dist.cdf(s2))
        };
        let lo = ((sigma1 - (1.0 - xi) * theta_max) / xi).max(psi2).max(0.0);
        Ok(interior_root(f, lo, sigma1, solve_tol(dist))?)
    } else if sigma1 < cut.no_influence {
        // Push operator 1 out: choose the largest σ₂ that still leaves it
        // with an empty share.
        Ok((sigma1 - (1.0 - xi) * theta_max) / xi)
    } else {
        monopoly_threshold(psi2, dist)
    }
}

/// Operator 1's profit-maximizing threshold against `σ₂`.
pub fn best_response_first(
    sigma2: f64,
    psi1: f64,
    xi: f64,
    dist: &ValuationDistribution,
) -> Result<f64, PricingError> {
    let theta_max = dist.theta_max();
    let cut = first_response_cutoffs(psi1, xi, dist)?;
    if sigma2 < cut.winning {
        // Operator 2 already serves everyone operator 1 could take
        // profitably; price at cost.
        Ok(psi1)
    } else if sigma2 < cut.losing {
        // Share the market: interior optimum of W₁ over the top segment,
        // with the neutral type clamped to the support top (see above).
        let f = |s1: f64| {
            let t = ((s1 - xi * sigma2) / (1.0 - xi)).min(theta_max);
            (s1 - psi1) * dist.pdf(t) - (1.0 - xi) * (1.0 - dist.cdf(t))
        };
        let hi = xi * sigma2 + (1.0 - xi) * theta_max;
        Ok(interior_root(f, sigma2.max(psi1), hi, solve_tol(dist))?)
    } else if sigma2 < cut.no_influence {
        // Matching σ₂ takes the whole market.
        Ok(sigma2)
    } else {
        monopoly_threshold(psi1, dist)
    }
}

/// Best response when both operators have exactly equal strength: give up,
/// undercut by a configurable step, or ignore the rival.
pub fn bertrand_best_response(
    sigma_other: f64,
    psi: f64,
    dist: &ValuationDistribution,
    undercut_step: f64,
) -> Result<f64, PricingError> {
    let mp = monopoly_threshold(psi, dist)?;
    if sigma_other < psi {
        Ok(psi)
    } else if sigma_other < mp {
        Ok((sigma_other - undercut_step).max(psi))
    } else {
        Ok(mp)
    }
}

/// Profits at an arbitrary threshold pair (canonical order, `ξ ≤ 1`).
pub fn profits_at(
    sigma1: f64,
    sigma2: f64,
    ops: (&OperatorProfile, &OperatorProfile),
    rps: (&RolloverProfile, &RolloverProfile),
    dist: &ValuationDistribution,
) -> (f64, f64) {
    let x = crate::market::xi(ops.0, ops.1, rps.0, rps.1);
    let part = partition(sigma1, sigma2, x, dist.theta_max());
    operator_profits(&part, (sigma1, sigma2), ops, rps, dist)
}

/// Classifies the cost pair into one of the five pricing regimes.
///
/// Also returns how many of the five defining conditions held: anything but
/// one indicates the point sits on a regime boundary (or an internal
/// inconsistency), which callers surface as a flag.
pub fn classify_regime(
    psi1: f64,
    psi2: f64,
    xi: f64,
    dist: &ValuationDistribution,
) -> Result<(Regime, usize), PricingError> {
    let first = first_response_cutoffs(psi1, xi, dist)?;
    let second = second_response_cutoffs(psi2, xi, dist)?;
    let conditions = [
        (Regime::FirstStrongMonopoly, psi2 > first.no_influence),
        (
            Regime::FirstWeakMonopoly,
            first.losing < psi2 && psi2 <= first.no_influence,
        ),
        (
            Regime::Coexistence,
            psi2 <= first.losing && psi1 <= second.losing,
        ),
        (
            Regime::SecondWeakMonopoly,
            second.losing < psi1 && psi1 <= second.no_influence,
        ),
        (Regime::SecondStrongMonopoly, psi1 > second.no_influence),
    ];
    let matched = conditions.iter().filter(|(_, c)| *c).count();
    let regime = conditions
        .iter()
        .find(|(_, c)| *c)
        .map(|(r, _)| *r)
        .unwrap_or(Regime::Coexistence);
    Ok((regime, matched))
}

/// Solves the pricing stage for a canonicalized operator pair.
///
/// The returned thresholds are verified to be a mutual best response; a
/// failed check is reported as an error rather than patched over.
pub fn pricing_equilibrium(
    op1: &OperatorProfile,
    op2: &OperatorProfile,
    rp1: &RolloverProfile,
    rp2: &RolloverProfile,
    dist: &ValuationDistribution,
    undercut_step: f64,
) -> Result<PricingEquilibrium, PricingError> {
    let x = crate::market::xi(op1, op2, rp1, rp2);
    if x > 1.0 + 1e-12 {
        return Err(PricingError::NotCanonical { xi: x });
    }
    let theta_max = dist.theta_max();
    let scale = theta_max.max(1.0);
    let (psi1, psi2) = (op1.psi(), op2.psi());
    let mut flags = Vec::new();

    if (x - 1.0).abs() <= 1e-12 {
        return bertrand_equilibrium(op1, op2, rp1, rp2, dist, undercut_step);
    }

    let (regime, matched) = classify_regime(psi1, psi2, x, dist)?;
    if matched != 1 {
        flags.push(format!("regime-boundary({matched} conditions matched)"));
    }

    let sigma = match regime {
        Regime::FirstStrongMonopoly => (monopoly_threshold(psi1, dist)?, psi2),
        Regime::FirstWeakMonopoly => (psi2, psi2),
        Regime::Coexistence => {
            let map = |(s1, s2): (f64, f64)| -> Result<(f64, f64), PricingError> {
                Ok((
                    best_response_first(s2, psi1, x, dist)?,
                    best_response_second(s1, psi2, x, dist)?,
                ))
            };
            let init = (monopoly_threshold(psi1, dist)?, psi2.max(0.0));
            let iterated = fixed_point_pair(
                |p| map(p).unwrap_or((f64::NAN, f64::NAN)),
                init,
                1e-13 * scale,
                10_000,
            );
            match iterated {
                Ok(fp) => fp.point,
                Err(_) => {
                    // Compose the responses into a one-dimensional root
                    // problem in σ₁; bisection tolerates the branch kinks.
                    flags.push("coexistence-fallback-solve".into());
                    let g = |s1: f64| -> f64 {
                        best_response_second(s1, psi2, x, dist)
                            .and_then(|s2| best_response_first(s2, psi1, x, dist))
                            .map(|b| b - s1)
                            .unwrap_or(f64::NAN)
                    };
                    let s1 = bracketed_root(g, psi1.max(0.0), theta_max, 1e-12 * scale)?;
                    (s1, best_response_second(s1, psi2, x, dist)?)
                }
            }
        }
        Regime::SecondWeakMonopoly => (psi1, (psi1 - (1.0 - x) * theta_max) / x),
        Regime::SecondStrongMonopoly => (psi1, monopoly_threshold(psi2, dist)?),
        Regime::BertrandFirst | Regime::BertrandSecond => {
            unreachable!("equal strengths are dispatched before classification")
        }
    };

    let br1 = best_response_first(sigma.1, psi1, x, dist)?;
    let br2 = best_response_second(sigma.0, psi2, x, dist)?;
    let tol = 1e-8 * scale;
    if (br1 - sigma.0).abs() > tol || (br2 - sigma.1).abs() > tol {
        return Err(PricingError::NotBestResponse {
            regime,
            sigma1: sigma.0,
            sigma2: sigma.1,
            br1,
            br2,
        });
    }

    let part = partition(sigma.0, sigma.1, x, theta_max);
    let profits = operator_profits(&part, sigma, (op1, op2), (rp1, rp2), dist);
    Ok(PricingEquilibrium {
        regime,
        sigma,
        partition: part,
        profits,
        flags,
    })
}

fn bertrand_equilibrium(
    op1: &OperatorProfile,
    op2: &OperatorProfile,
    rp1: &RolloverProfile,
    rp2: &RolloverProfile,
    dist: &ValuationDistribution,
    undercut_step: f64,
) -> Result<PricingEquilibrium, PricingError> {
    let theta_max = dist.theta_max();
    let (psi1, psi2) = (op1.psi(), op2.psi());
    let mut flags = vec![format!("undercut-step({undercut_step:e})")];

    // The cheaper operator wins the whole market, pricing just below the
    // rival's cost ratio (or ignoring it if the rival is priced out anyway).
    let first_wins = psi1 <= psi2;
    let (psi_win, psi_lose) = if first_wins { (psi1, psi2) } else { (psi2, psi1) };
    let mp_win = monopoly_threshold(psi_win, dist)?;
    let sigma_win = if psi_lose >= mp_win {
        mp_win
    } else {
        (psi_lose - undercut_step).max(psi_win)
    };
    let sigma = if first_wins {
        (sigma_win, psi_lose)
    } else {
        (psi_lose, sigma_win)
    };

    let br1 = bertrand_best_response(sigma.1, psi1, dist, undercut_step)?;
    let br2 = bertrand_best_response(sigma.0, psi2, dist, undercut_step)?;
    let tol = undercut_step + 1e-8 * theta_max.max(1.0);
    if (br1 - sigma.0).abs() > tol || (br2 - sigma.1).abs() > tol {
        flags.push("bertrand-response-drift".into());
    }

    let part = partition(sigma.0, sigma.1, 1.0, theta_max);
    let profits = operator_profits(&part, sigma, (op1, op2), (rp1, rp2), dist);
    Ok(PricingEquilibrium {
        regime: if first_wins {
            Regime::BertrandFirst
        } else {
            Regime::BertrandSecond
        },
        sigma,
        partition: part,
        profits,
        flags,
    })
}
