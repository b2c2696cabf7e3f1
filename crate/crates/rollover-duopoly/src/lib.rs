//! Equilibrium engine for a duopoly of mobile network operators selling
//! capped data plans to users with heterogeneous data valuations.
//!
//! Each operator picks a data mechanism (traditional, or rollover where the
//! unused part of last month's cap carries into the current month), then a
//! three-part tariff (subscription fee, cap, overage fee). Users subscribe to
//! whichever operator maximizes their expected payoff, or stay out of the
//! market. The engine solves this by backward induction:
//!
//! * [`market`] - user subscription given both tariffs: threshold types,
//!   the market partition over valuation types, operator profits.
//! * [`pricing`] - the pricing stage: best responses in threshold space and
//!   the pricing equilibrium across its five competitive regimes.
//! * [`mechanism`] - the mechanism-selection stage: 2x2 payoff matrix,
//!   pure Nash outcomes, survival and rollover-adoption cost thresholds.
//! * [`demand`] / [`valuation`] - the statistical inputs: discrete monthly
//!   demand with the rollover balance chain, and valuation distributions.
//! * [`oligopoly`] - coexistence conditions and profits for N >= 2 operators
//!   with fixed thresholds.
//! * [`scenario`] / [`sweep`] / [`report`] - declarative scenario files,
//!   parameter sweeps, and deterministic CSV/JSON output.

pub mod demand;
pub mod market;
pub mod mechanism;
pub mod numerics;
pub mod oligopoly;
pub mod pricing;
pub mod report;
pub mod scenario;
pub mod sweep;
pub mod valuation;
