//! Subscription stage: how users with heterogeneous data valuations split
//! between two operators once plans and prices are fixed.
//!
//! A type-θ user values operator n's service at `ρ_n·V_n·θ` per month, pays
//! the subscription fee plus expected overage charges, and picks the operator
//! with the higher expected payoff (or stays out if both are negative). Every
//! plan therefore reduces to a single number, the threshold type σ at which
//! its payoff crosses zero, and the market outcome depends only on
//! `(σ₁, σ₂)` and the relative strength `ξ = ρ₂V₂ / (ρ₁V₁)`.

use crate::demand::{Mechanism, RolloverProfile};
use crate::valuation::ValuationDistribution;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("operator parameter out of range: {0}")]
    BadParameter(String),
    #[error("offload fraction must be positive to price overage demand")]
    UndefinedOverageRate,
    #[error("subscription fee would be negative ({0}) at the requested threshold")]
    NegativeSubscription(f64),
    #[error("operators have equal strength; the tie-breaking path applies")]
    EqualStrength,
}

/// An operator's technology: service quality, unit cost, and plan shape.
#[derive(Debug, Clone)]
pub struct OperatorProfile {
    pub qos: f64,
    /// Cost per data unit delivered.
    pub marginal_cost: f64,
    pub cap: usize,
    pub mechanism: Mechanism,
}

impl OperatorProfile {
    pub fn new(
        qos: f64,
        marginal_cost: f64,
        cap: usize,
        mechanism: Mechanism,
    ) -> Result<Self, MarketError> {
        if !(qos > 0.0 && qos.is_finite()) {
            return Err(MarketError::BadParameter(format!(
                "qos must be positive, got {qos}"
            )));
        }
        if !(marginal_cost >= 0.0 && marginal_cost.is_finite()) {
            return Err(MarketError::BadParameter(format!(
                "marginal cost must be non-negative, got {marginal_cost}"
            )));
        }
        Ok(OperatorProfile {
            qos,
            marginal_cost,
            cap,
            mechanism,
        })
    }

    /// Cost per unit of delivered value, `ψ = c / ρ`; the lowest threshold
    /// at which the operator can serve without losing money.
    pub fn psi(&self) -> f64 {
        self.marginal_cost / self.qos
    }
}

/// Monthly price pair of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingStrategy {
    pub subscription_fee: f64,
    /// Charge per data unit consumed above the (effective) cap.
    pub overage_fee: f64,
}

/// Who serves whom after users sort themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Operator 1 underprices enough to serve every participating user.
    FirstOnly,
    /// Operator 1 prices itself out; operator 2 serves the whole market.
    SecondOnly,
    /// Operator 1 takes the high-valuation segment, operator 2 the middle.
    Split,
    /// Equal strength: operator 1 wins the whole market on price.
    BertrandFirst,
    /// Equal strength: operator 2 wins the whole market on price.
    BertrandSecond,
}

impl Region {
    /// The same outcome with the operator indices exchanged.
    pub fn swap_operators(self) -> Region {
        match self {
            Region::FirstOnly => Region::SecondOnly,
            Region::SecondOnly => Region::FirstOnly,
            Region::Split => Region::Split,
            Region::BertrandFirst => Region::BertrandSecond,
            Region::BertrandSecond => Region::BertrandFirst,
        }
    }
}

/// The subscription outcome: which θ interval each operator serves.
#[derive(Debug, Clone)]
pub struct MarketPartition {
    pub region: Region,
    pub share_first: Option<(f64, f64)>,
    pub share_second: Option<(f64, f64)>,
    /// Type indifferent between the two operators, where defined.
    pub neutral: Option<f64>,
}

impl MarketPartition {
    /// The same partition as seen after exchanging the operator indices.
    pub fn swap_operators(&self) -> MarketPartition {
        MarketPartition {
            region: self.region.swap_operators(),
            share_first: self.share_second,
            share_second: self.share_first,
            neutral: self.neutral,
        }
    }
}

/// Effective service rate `ρ·V`: expected delivered value per unit of θ.
pub fn strength(op: &OperatorProfile, profile: &RolloverProfile) -> f64 {
    op.qos * profile.expected_usage
}

fn billed_overage(profile: &RolloverProfile) -> Result<f64, MarketError> {
    if profile.beta <= 0.0 {
        return Err(MarketError::UndefinedOverageRate);
    }
    // The user keeps a fraction (1/β − 1)·β = 1 − β of overage demand on
    // the home network and is billed for it.
    Ok((1.0 / profile.beta - 1.0) * profile.beta * profile.expected_overage)
}

/// Expected monthly payoff of a type-θ subscriber of the given plan.
pub fn expected_user_payoff(
    op: &OperatorProfile,
    prices: &PricingStrategy,
    profile: &RolloverProfile,
    theta: f64,
) -> Result<f64, MarketError> {
    Ok(strength(op, profile) * theta
        - prices.overage_fee * billed_overage(profile)?
        - prices.subscription_fee)
}

/// The user type whose expected payoff under the plan is exactly zero.
///
/// May exceed the top of the valuation support, in which case the plan
/// attracts nobody.
pub fn threshold_type(
    op: &OperatorProfile,
    prices: &PricingStrategy,
    profile: &RolloverProfile,
) -> Result<f64, MarketError> {
    let s = strength(op, profile);
    if !(s > 0.0) {
        return Err(MarketError::BadParameter(format!(
            "effective service rate must be positive, got {s}"
        )));
    }
    Ok((prices.overage_fee * billed_overage(profile)? + prices.subscription_fee) / s)
}

/// Recovers a price pair producing the requested threshold at a given
/// overage fee. Inverse of [`threshold_type`] in the subscription fee.
pub fn prices_for_threshold(
    sigma: f64,
    overage_fee: f64,
    profile: &RolloverProfile,
    qos: f64,
) -> Result<PricingStrategy, MarketError> {
    let subscription_fee =
        qos * profile.expected_usage * sigma - overage_fee * billed_overage(profile)?;
    if subscription_fee < 0.0 {
        return Err(MarketError::NegativeSubscription(subscription_fee));
    }
    Ok(PricingStrategy {
        subscription_fee,
        overage_fee,
    })
}

/// Strength ratio `ξ = ρ₂V₂ / (ρ₁V₁)` of operator 2 relative to operator 1.
pub fn xi(
    op1: &OperatorProfile,
    op2: &OperatorProfile,
    rp1: &RolloverProfile,
    rp2: &RolloverProfile,
) -> f64 {
    strength(op2, rp2) / strength(op1, rp1)
}

/// The type indifferent between the two operators: `θ̃ = (σ₁ − ξσ₂)/(1 − ξ)`.
pub fn neutral_type(sigma1: f64, sigma2: f64, xi: f64) -> Result<f64, MarketError> {
    if (xi - 1.0).abs() <= 1e-12 {
        return Err(MarketError::EqualStrength);
    }
    Ok((sigma1 - xi * sigma2) / (1.0 - xi))
}

fn clip_interval(lo: f64, hi: f64, theta_max: f64) -> Option<(f64, f64)> {
    let lo = lo.max(0.0);
    let hi = hi.min(theta_max);
    (lo < hi).then_some((lo, hi))
}

/// Sorts users between the operators given both thresholds.
///
/// Operator 1 must be the (weakly) stronger one, `ξ ≤ 1`. Within `1e-12` of
/// `ξ = 1` the operators are perfect substitutes and the lower threshold
/// takes the whole market, ties going to operator 1.
pub fn partition(sigma1: f64, sigma2: f64, xi: f64, theta_max: f64) -> MarketPartition {
    debug_assert!(
        xi > 0.0 && xi <= 1.0 + 1e-12,
        "operator 1 must be canonicalized as the stronger side (xi = {xi})"
    );
    if (xi - 1.0).abs() <= 1e-12 {
        return if sigma1 <= sigma2 {
            MarketPartition {
                region: Region::BertrandFirst,
                share_first: clip_interval(sigma1, theta_max, theta_max),
                share_second: None,
                neutral: None,
            }
        } else {
            MarketPartition {
                region: Region::BertrandSecond,
                share_first: None,
                share_second: clip_interval(sigma2, theta_max, theta_max),
                neutral: None,
            }
        };
    }
    if sigma1 <= sigma2 {
        MarketPartition {
            region: Region::FirstOnly,
            share_first: clip_interval(sigma1, theta_max, theta_max),
            share_second: None,
            neutral: None,
        }
    } else if sigma1 - sigma2 >= (1.0 - xi) * (theta_max - sigma2) {
        MarketPartition {
            region: Region::SecondOnly,
            share_first: None,
            share_second: clip_interval(sigma2, theta_max, theta_max),
            neutral: None,
        }
    } else {
        let tilde = (sigma1 - xi * sigma2) / (1.0 - xi);
        MarketPartition {
            region: Region::Split,
            share_first: clip_interval(tilde, theta_max, theta_max),
            share_second: clip_interval(sigma2, tilde, theta_max),
            neutral: Some(tilde.clamp(0.0, theta_max)),
        }
    }
}

/// Monthly profits `(W₁, W₂)` under a partition.
///
/// Every subscriber of operator n is worth `ρ_n V_n (σ_n − ψ_n)` per month
/// regardless of type, so profit is that margin times the served mass.
pub fn operator_profits(
    part: &MarketPartition,
    sigma: (f64, f64),
    ops: (&OperatorProfile, &OperatorProfile),
    rps: (&RolloverProfile, &RolloverProfile),
    dist: &ValuationDistribution,
) -> (f64, f64) {
    let served_mass = |share: &Option<(f64, f64)>| match share {
        Some((lo, hi)) => dist.cdf(*hi) - dist.cdf(*lo),
        None => 0.0,
    };
    let w1 = strength(ops.0, rps.0) * (sigma.0 - ops.0.psi()) * served_mass(&part.share_first);
    let w2 = strength(ops.1, rps.1) * (sigma.1 - ops.1.psi()) * served_mass(&part.share_second);
    (w1, w2)
}
