//! The mechanism-selection stage: both operators commit to traditional or
//! rollover billing before setting prices, anticipating the pricing and
//! subscription play that follows. This module builds the 2×2 profit matrix
//! over mechanism pairs, enumerates its pure equilibria with the `Na`
//! shorthand for an operator whose choice is immaterial, and locates the
//! cost and QoS thresholds that separate the market structures.

use crate::demand::{DemandError, DemandModel, Mechanism, RolloverProfile};
use crate::market::{MarketError, OperatorProfile, Region};
use crate::numerics::{bracketed_root, SolveError, DEFAULT_ROOT_TOL};
use crate::pricing::{pricing_equilibrium, PricingError, Regime};
use crate::valuation::ValuationDistribution;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("no coexistence cost window: {0}")]
    NoCoexistenceWindow(String),
}

const MECHANISMS: [Mechanism; 2] = [Mechanism::Traditional, Mechanism::Rollover];

fn mech_index(k: Mechanism) -> usize {
    match k {
        Mechanism::Traditional => 0,
        Mechanism::Rollover => 1,
    }
}

/// An operator's exogenous position: service quality, delivery cost per
/// data unit, and plan cap. The mechanism is what the operator chooses.
#[derive(Debug, Clone, Copy)]
pub struct OperatorSpec {
    pub qos: f64,
    pub marginal_cost: f64,
    pub cap: usize,
}

impl OperatorSpec {
    pub fn new(qos: f64, marginal_cost: f64, cap: usize) -> Result<Self, MechanismError> {
        OperatorProfile::new(qos, marginal_cost, cap, Mechanism::Traditional)?;
        Ok(OperatorSpec {
            qos,
            marginal_cost,
            cap,
        })
    }

    pub fn psi(&self) -> f64 {
        self.marginal_cost / self.qos
    }

    pub fn with_mechanism(&self, mechanism: Mechanism) -> OperatorProfile {
        OperatorProfile {
            qos: self.qos,
            marginal_cost: self.marginal_cost,
            cap: self.cap,
            mechanism,
        }
    }

    fn with_cost(&self, marginal_cost: f64) -> OperatorSpec {
        OperatorSpec {
            marginal_cost,
            ..*self
        }
    }
}

/// Pricing-stage outcome for one mechanism pair, reported in the callers'
/// operator order regardless of which side was stronger.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub mechanisms: (Mechanism, Mechanism),
    /// Effective service rates `ρ·V` under the cell's mechanisms.
    pub strengths: (f64, f64),
    pub profits: (f64, f64),
    pub sigma: (f64, f64),
    pub theta_tilde: Option<f64>,
    pub region: Region,
    pub regime: Regime,
    pub flags: Vec<String>,
}

impl CellOutcome {
    pub fn swap_operators(&self) -> CellOutcome {
        CellOutcome {
            mechanisms: (self.mechanisms.1, self.mechanisms.0),
            strengths: (self.strengths.1, self.strengths.0),
            profits: (self.profits.1, self.profits.0),
            sigma: (self.sigma.1, self.sigma.0),
            theta_tilde: self.theta_tilde,
            region: self.region.swap_operators(),
            regime: self.regime.swap_operators(),
            flags: self.flags.clone(),
        }
    }
}

/// Profit matrix of the mechanism-selection game, one cell per pair.
#[derive(Debug, Clone)]
pub struct MechanismMatrix {
    cells: [CellOutcome; 4],
}

impl MechanismMatrix {
    pub fn from_cells(cells: [CellOutcome; 4]) -> Self {
        MechanismMatrix { cells }
    }

    pub fn cell(&self, k1: Mechanism, k2: Mechanism) -> &CellOutcome {
        &self.cells[mech_index(k1) * 2 + mech_index(k2)]
    }

    pub fn cells(&self) -> &[CellOutcome; 4] {
        &self.cells
    }

    pub fn profits(&self, k1: Mechanism, k2: Mechanism) -> (f64, f64) {
        self.cell(k1, k2).profits
    }

    pub fn max_abs_profit(&self) -> f64 {
        self.cells
            .iter()
            .flat_map(|c| [c.profits.0.abs(), c.profits.1.abs()])
            .fold(0.0, f64::max)
    }

    pub fn swap_operators(&self) -> MechanismMatrix {
        let swapped = |k1: Mechanism, k2: Mechanism| self.cell(k2, k1).swap_operators();
        MechanismMatrix {
            cells: [
                swapped(Mechanism::Traditional, Mechanism::Traditional),
                swapped(Mechanism::Traditional, Mechanism::Rollover),
                swapped(Mechanism::Rollover, Mechanism::Traditional),
                swapped(Mechanism::Rollover, Mechanism::Rollover),
            ],
        }
    }
}

/// Which operators retain a positive market share at the selected outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketMode {
    FirstSurviving,
    SecondSurviving,
    Coexistence,
}

impl MarketMode {
    pub fn label(&self) -> &'static str {
        match self {
            MarketMode::FirstSurviving => "first-surviving",
            MarketMode::SecondSurviving => "second-surviving",
            MarketMode::Coexistence => "coexistence",
        }
    }

    pub fn swap_operators(self) -> MarketMode {
        match self {
            MarketMode::FirstSurviving => MarketMode::SecondSurviving,
            MarketMode::SecondSurviving => MarketMode::FirstSurviving,
            MarketMode::Coexistence => MarketMode::Coexistence,
        }
    }
}

impl std::fmt::Display for MarketMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Compressed description of the pure-equilibrium set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EquilibriumLabel {
    /// Exactly one pure outcome.
    Single(Mechanism, Mechanism),
    /// The anti-coordination pair `{(R,T),(T,R)}`.
    SymmetricPair,
    /// Operator 1's choice is immaterial: `(Na, κ₂)`.
    FirstIndifferent(Mechanism),
    /// Operator 2's choice is immaterial: `(κ₁, Na)`.
    SecondIndifferent(Mechanism),
    /// Several outcomes that fit no shorthand.
    Multiple(Vec<(Mechanism, Mechanism)>),
    /// No pure outcome survives the deviation checks.
    Empty,
}

impl EquilibriumLabel {
    pub fn swap_operators(&self) -> EquilibriumLabel {
        match self {
            EquilibriumLabel::Single(k1, k2) => EquilibriumLabel::Single(*k2, *k1),
            EquilibriumLabel::SymmetricPair => EquilibriumLabel::SymmetricPair,
            EquilibriumLabel::FirstIndifferent(k) => EquilibriumLabel::SecondIndifferent(*k),
            EquilibriumLabel::SecondIndifferent(k) => EquilibriumLabel::FirstIndifferent(*k),
            EquilibriumLabel::Multiple(set) => {
                EquilibriumLabel::Multiple(set.iter().map(|&(a, b)| (b, a)).collect())
            }
            EquilibriumLabel::Empty => EquilibriumLabel::Empty,
        }
    }
}

impl std::fmt::Display for EquilibriumLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EquilibriumLabel::Single(k1, k2) => write!(f, "({k1},{k2})"),
            EquilibriumLabel::SymmetricPair => write!(f, "{{(R,T),(T,R)}}"),
            EquilibriumLabel::FirstIndifferent(k2) => write!(f, "(Na,{k2})"),
            EquilibriumLabel::SecondIndifferent(k1) => write!(f, "({k1},Na)"),
            EquilibriumLabel::Multiple(set) => {
                write!(f, "{{")?;
                for (i, (a, b)) in set.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({a},{b})")?;
                }
                write!(f, "}}")
            }
            EquilibriumLabel::Empty => write!(f, "none"),
        }
    }
}

/// Resolved outcome of the mechanism-selection stage.
#[derive(Debug, Clone)]
pub struct MechanismEquilibrium {
    pub mode: MarketMode,
    /// Every pure outcome that withstands unilateral deviation.
    pub outcomes: Vec<(Mechanism, Mechanism)>,
    pub label: EquilibriumLabel,
    /// Whether the lower-QoS operator would attract the high-valuation
    /// users under the `(T,R)` pair.
    pub qos_flip: bool,
    pub flags: Vec<String>,
    pub matrix: MechanismMatrix,
}

impl MechanismEquilibrium {
    pub fn swap_operators(&self) -> MechanismEquilibrium {
        MechanismEquilibrium {
            mode: self.mode.swap_operators(),
            outcomes: self.outcomes.iter().map(|&(a, b)| (b, a)).collect(),
            label: self.label.swap_operators(),
            qos_flip: self.qos_flip,
            flags: self.flags.clone(),
            matrix: self.matrix.swap_operators(),
        }
    }
}

/// Price-undercut granularity used when the two sides are exactly matched
/// in strength and compete on price alone.
pub fn default_undercut_step(dist: &ValuationDistribution) -> f64 {
    1e-6 * dist.theta_max()
}

/// Cost level below which operator 1 prices operator 2 out of the market
/// entirely, whatever mechanism operator 2 picks. `v_t` is operator 2's
/// expected usage under traditional billing, `v_r` operator 1's under
/// rollover; their ratio sets how much differentiation shields the rival.
pub fn c_single_1(
    rho1: f64,
    rho2: f64,
    c2: f64,
    v_t: f64,
    v_r: f64,
    dist: &ValuationDistribution,
) -> f64 {
    let psi2 = c2 / rho2;
    if psi2 <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if psi2 >= dist.theta_max() {
        return rho1 * dist.theta_max();
    }
    match dist.failure_rate_gap(psi2) {
        Ok(gap) => rho1 * (psi2 - (1.0 - rho2 * v_t / (rho1 * v_r)) * gap),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Cost level below which operator 2 prices operator 1 out of the market
/// entirely. Two exclusion routes compete: out-flexing a traditional
/// operator 1 (uses `v_t` of operator 1 and `v_r` of operator 2), or
/// out-pricing a rollover operator 1 on an otherwise equal footing. A
/// route whose argument leaves the valuation support cannot bind.
pub fn c_single_2(
    rho1: f64,
    rho2: f64,
    c1: f64,
    v_t: f64,
    v_r: f64,
    dist: &ValuationDistribution,
) -> f64 {
    let theta_max = dist.theta_max();
    let psi1 = c1 / rho1;
    let flex_route = if psi1 > 0.0 && psi1 < theta_max {
        match dist.failure_rate_gap(psi1) {
            Ok(gap) => rho2 * (psi1 - (1.0 - rho1 * v_t / (rho2 * v_r)) * gap),
            Err(_) => f64::NEG_INFINITY,
        }
    } else {
        f64::NEG_INFINITY
    };
    let price_arg = (c1 - (rho1 - rho2) * theta_max) / rho2;
    let price_route = if price_arg > 0.0 && price_arg < theta_max {
        match dist.failure_rate_gap(price_arg) {
            Ok(gap) => c1 - (rho1 - rho2) * theta_max - rho2 * gap,
            Err(_) => f64::NEG_INFINITY,
        }
    } else {
        f64::NEG_INFINITY
    };
    flex_route.max(price_route)
}

/// Whether the lower-QoS operator 2 would attract the high-valuation users
/// when it alone offers rollover: `ρ₂·v_r > ρ₁·v_t`.
pub fn qos_flip(rho1: f64, rho2: f64, v_t: f64, v_r: f64) -> bool {
    rho2 * v_r > rho1 * v_t
}

fn na_collapse_tol(matrix: &MechanismMatrix) -> f64 {
    1e-9 * matrix.max_abs_profit().max(1.0)
}

/// Enumerates the pure outcomes of the 2×2 matrix that no operator can
/// improve on by more than `eps`, and compresses the set to a label.
pub fn nash_pure(matrix: &MechanismMatrix, eps: f64) -> MechanismEquilibrium {
    let mut outcomes = Vec::new();
    for k1 in MECHANISMS {
        for k2 in MECHANISMS {
            let (w1, w2) = matrix.profits(k1, k2);
            let dev1 = matrix.profits(other(k1), k2).0;
            let dev2 = matrix.profits(k1, other(k2)).1;
            if dev1 <= w1 + eps && dev2 <= w2 + eps {
                outcomes.push((k1, k2));
            }
        }
    }

    let mut flags = Vec::new();
    let label = label_outcomes(matrix, &outcomes, &mut flags);
    let mode = infer_mode(matrix, &outcomes);
    let tr = matrix.cell(Mechanism::Traditional, Mechanism::Rollover);
    MechanismEquilibrium {
        mode,
        outcomes,
        label,
        qos_flip: tr.strengths.1 > tr.strengths.0,
        flags,
        matrix: matrix.clone(),
    }
}

fn other(k: Mechanism) -> Mechanism {
    match k {
        Mechanism::Traditional => Mechanism::Rollover,
        Mechanism::Rollover => Mechanism::Traditional,
    }
}

fn label_outcomes(
    matrix: &MechanismMatrix,
    outcomes: &[(Mechanism, Mechanism)],
    flags: &mut Vec<String>,
) -> EquilibriumLabel {
    match outcomes {
        [] => {
            flags.push("empty-equilibrium-set".into());
            EquilibriumLabel::Empty
        }
        [(k1, k2)] => EquilibriumLabel::Single(*k1, *k2),
        [a, b] if a.0 == b.0 => {
            // Same choice for operator 1, so operator 2 is the indifferent
            // side; collapse only if operator 1 is genuinely unaffected.
            let dw = (matrix.profits(a.0, a.1).0 - matrix.profits(b.0, b.1).0).abs();
            if dw <= na_collapse_tol(matrix) {
                EquilibriumLabel::SecondIndifferent(a.0)
            } else {
                flags.push(format!("na-collapse-gate-failed(dW1={dw:.3e})"));
                EquilibriumLabel::Multiple(outcomes.to_vec())
            }
        }
        [a, b] if a.1 == b.1 => EquilibriumLabel::FirstIndifferent(a.1),
        [a, b] if a.0 != b.0 && a.1 != b.1 && a.0 != a.1 => EquilibriumLabel::SymmetricPair,
        _ => EquilibriumLabel::Multiple(outcomes.to_vec()),
    }
}

fn share_present(region: Region, first: bool) -> bool {
    match region {
        Region::FirstOnly | Region::BertrandFirst => first,
        Region::SecondOnly | Region::BertrandSecond => !first,
        Region::Split => true,
    }
}

fn infer_mode(matrix: &MechanismMatrix, outcomes: &[(Mechanism, Mechanism)]) -> MarketMode {
    if outcomes.is_empty() {
        return MarketMode::Coexistence;
    }
    let second_alive = outcomes
        .iter()
        .any(|&(k1, k2)| share_present(matrix.cell(k1, k2).region, false));
    let first_alive = outcomes
        .iter()
        .any(|&(k1, k2)| share_present(matrix.cell(k1, k2).region, true));
    match (first_alive, second_alive) {
        (true, false) => MarketMode::FirstSurviving,
        (false, true) => MarketMode::SecondSurviving,
        _ => MarketMode::Coexistence,
    }
}

/// A cost threshold located numerically, with the window it was searched
/// in and whether a sign change actually pinned it down.
#[derive(Debug, Clone)]
pub struct RollThreshold {
    pub value: f64,
    pub binding: bool,
    pub window: (f64, f64),
    pub flags: Vec<String>,
}

/// The mechanism-selection game for a fixed pair of operators: holds the
/// rollover-state distributions for every (operator, mechanism) pair so
/// repeated cell evaluations at different costs stay cheap.
pub struct MechanismGame<'a> {
    op1: OperatorSpec,
    op2: OperatorSpec,
    profiles: [RolloverProfile; 4],
    dist: &'a ValuationDistribution,
    undercut_step: f64,
}

impl<'a> MechanismGame<'a> {
    pub fn new(
        op1: OperatorSpec,
        op2: OperatorSpec,
        demand: &DemandModel,
        dist: &'a ValuationDistribution,
        beta: f64,
        undercut_step: f64,
    ) -> Result<Self, MechanismError> {
        let profiles = [
            RolloverProfile::build(demand, op1.cap, beta, Mechanism::Traditional)?,
            RolloverProfile::build(demand, op1.cap, beta, Mechanism::Rollover)?,
            RolloverProfile::build(demand, op2.cap, beta, Mechanism::Traditional)?,
            RolloverProfile::build(demand, op2.cap, beta, Mechanism::Rollover)?,
        ];
        if !(undercut_step > 0.0 && undercut_step.is_finite()) {
            return Err(MechanismError::BadParameter(format!(
                "undercut step must be positive, got {undercut_step}"
            )));
        }
        Ok(MechanismGame {
            op1,
            op2,
            profiles,
            dist,
            undercut_step,
        })
    }

    pub fn operators(&self) -> (&OperatorSpec, &OperatorSpec) {
        (&self.op1, &self.op2)
    }

    pub fn valuation(&self) -> &ValuationDistribution {
        self.dist
    }

    pub fn profile(&self, first: bool, mechanism: Mechanism) -> &RolloverProfile {
        let base = if first { 0 } else { 2 };
        &self.profiles[base + mech_index(mechanism)]
    }

    fn swapped(&self) -> MechanismGame<'a> {
        MechanismGame {
            op1: self.op2,
            op2: self.op1,
            profiles: [
                self.profiles[2].clone(),
                self.profiles[3].clone(),
                self.profiles[0].clone(),
                self.profiles[1].clone(),
            ],
            dist: self.dist,
            undercut_step: self.undercut_step,
        }
    }

    /// Same operators and caps at different costs, reusing the
    /// rollover-state distributions (costs do not touch them).
    pub fn with_costs(&self, c1: f64, c2: f64) -> MechanismGame<'a> {
        MechanismGame {
            op1: self.op1.with_cost(c1),
            op2: self.op2.with_cost(c2),
            profiles: self.profiles.clone(),
            dist: self.dist,
            undercut_step: self.undercut_step,
        }
    }

    /// Same game with operator 2's service quality changed; quality does
    /// not feed the demand side, so profiles carry over.
    pub fn with_second_qos(&self, qos: f64) -> Result<MechanismGame<'a>, MechanismError> {
        let op2 = OperatorSpec::new(qos, self.op2.marginal_cost, self.op2.cap)?;
        Ok(MechanismGame {
            op1: self.op1,
            op2,
            profiles: self.profiles.clone(),
            dist: self.dist,
            undercut_step: self.undercut_step,
        })
    }

    /// One pricing-stage solve with the given mechanisms and temporary
    /// costs. The stronger side is put first for the solver and the
    /// result is mapped back to this game's operator order.
    pub fn cell_with_costs(
        &self,
        k1: Mechanism,
        k2: Mechanism,
        c1: f64,
        c2: f64,
    ) -> Result<CellOutcome, MechanismError> {
        let o1 = self.op1.with_cost(c1).with_mechanism(k1);
        let o2 = self.op2.with_cost(c2).with_mechanism(k2);
        let rp1 = self.profile(true, k1);
        let rp2 = self.profile(false, k2);
        let s1 = crate::market::strength(&o1, rp1);
        let s2 = crate::market::strength(&o2, rp2);

        if s2 / s1 <= 1.0 + 1e-12 {
            let eq = pricing_equilibrium(&o1, &o2, rp1, rp2, self.dist, self.undercut_step)?;
            Ok(CellOutcome {
                mechanisms: (k1, k2),
                strengths: (s1, s2),
                profits: eq.profits,
                sigma: eq.sigma,
                theta_tilde: eq.partition.neutral,
                region: eq.partition.region,
                regime: eq.regime,
                flags: eq.flags,
            })
        } else {
            let eq = pricing_equilibrium(&o2, &o1, rp2, rp1, self.dist, self.undercut_step)?;
            let mut flags = eq.flags;
            flags.push("strength-order-swapped".into());
            Ok(CellOutcome {
                mechanisms: (k1, k2),
                strengths: (s1, s2),
                profits: (eq.profits.1, eq.profits.0),
                sigma: (eq.sigma.1, eq.sigma.0),
                theta_tilde: eq.partition.neutral,
                region: eq.partition.region.swap_operators(),
                regime: eq.regime.swap_operators(),
                flags,
            })
        }
    }

    pub fn cell(&self, k1: Mechanism, k2: Mechanism) -> Result<CellOutcome, MechanismError> {
        self.cell_with_costs(k1, k2, self.op1.marginal_cost, self.op2.marginal_cost)
    }

    pub fn payoff_matrix(&self) -> Result<MechanismMatrix, MechanismError> {
        self.matrix_with_costs(self.op1.marginal_cost, self.op2.marginal_cost)
    }

    fn matrix_with_costs(&self, c1: f64, c2: f64) -> Result<MechanismMatrix, MechanismError> {
        Ok(MechanismMatrix {
            cells: [
                self.cell_with_costs(Mechanism::Traditional, Mechanism::Traditional, c1, c2)?,
                self.cell_with_costs(Mechanism::Traditional, Mechanism::Rollover, c1, c2)?,
                self.cell_with_costs(Mechanism::Rollover, Mechanism::Traditional, c1, c2)?,
                self.cell_with_costs(Mechanism::Rollover, Mechanism::Rollover, c1, c2)?,
            ],
        })
    }

    /// Exclusion thresholds `(C₁, C₂)` for the current costs: operator 1
    /// monopolizes below the first, operator 2 below the second.
    pub fn single_survivor_thresholds(&self) -> (f64, f64) {
        let c1 = c_single_1(
            self.op1.qos,
            self.op2.qos,
            self.op2.marginal_cost,
            self.profile(false, Mechanism::Traditional).expected_usage,
            self.profile(true, Mechanism::Rollover).expected_usage,
            self.dist,
        );
        let c2 = c_single_2(
            self.op1.qos,
            self.op2.qos,
            self.op1.marginal_cost,
            self.profile(true, Mechanism::Traditional).expected_usage,
            self.profile(false, Mechanism::Rollover).expected_usage,
            self.dist,
        );
        (c1, c2)
    }

    fn coexists_at(&self, c1: f64, c2: f64) -> bool {
        let v_t2 = self.profile(false, Mechanism::Traditional).expected_usage;
        let v_r1 = self.profile(true, Mechanism::Rollover).expected_usage;
        let v_t1 = self.profile(true, Mechanism::Traditional).expected_usage;
        let v_r2 = self.profile(false, Mechanism::Rollover).expected_usage;
        c1 >= c_single_1(self.op1.qos, self.op2.qos, c2, v_t2, v_r1, self.dist)
            && c2 >= c_single_2(self.op1.qos, self.op2.qos, c1, v_t1, v_r2, self.dist)
    }

    /// Operator 1's rollover-adoption cost bound: the own-cost level where
    /// its profit with traditional billing against a rollover rival equals
    /// its profit when both roll over.
    pub fn roll_threshold_first(&self) -> Result<RollThreshold, MechanismError> {
        self.roll_threshold(true)
    }

    /// Operator 2's rollover-adoption cost bound, from the matching profit
    /// equality in its own cost.
    pub fn roll_threshold_second(&self) -> Result<RollThreshold, MechanismError> {
        self.roll_threshold(false)
    }

    fn roll_threshold(&self, vary_first: bool) -> Result<RollThreshold, MechanismError> {
        let qos = if vary_first { self.op1.qos } else { self.op2.qos };
        let hi_cost = qos * self.dist.theta_max();
        let coexists = |c: f64| {
            if vary_first {
                self.coexists_at(c, self.op2.marginal_cost)
            } else {
                self.coexists_at(self.op1.marginal_cost, c)
            }
        };

        // The profit equality only governs the shared-market mode, so the
        // search window is the widest cost band where both operators keep
        // positive shares.
        let window_pts = 257;
        let mut window: Option<(f64, f64)> = None;
        let mut run_start: Option<f64> = None;
        for i in 0..=window_pts {
            let c = hi_cost * i as f64 / window_pts as f64;
            if coexists(c) {
                run_start.get_or_insert(c);
            } else if let Some(start) = run_start.take() {
                let prev = hi_cost * (i - 1) as f64 / window_pts as f64;
                if window.map_or(true, |(a, b)| b - a < prev - start) {
                    window = Some((start, prev));
                }
            }
        }
        if let Some(start) = run_start {
            if window.map_or(true, |(a, b)| b - a < hi_cost - start) {
                window = Some((start, hi_cost));
            }
        }
        let (lo, hi) = window.ok_or_else(|| {
            MechanismError::NoCoexistenceWindow(format!(
                "no shared-market cost in [0, {hi_cost:.6}]"
            ))
        })?;

        let gap = |c: f64| -> Result<f64, MechanismError> {
            if vary_first {
                let keep = self
                    .cell_with_costs(
                        Mechanism::Traditional,
                        Mechanism::Rollover,
                        c,
                        self.op2.marginal_cost,
                    )?
                    .profits
                    .0;
                let adopt = self
                    .cell_with_costs(
                        Mechanism::Rollover,
                        Mechanism::Rollover,
                        c,
                        self.op2.marginal_cost,
                    )?
                    .profits
                    .0;
                Ok(keep - adopt)
            } else {
                let keep = self
                    .cell_with_costs(
                        Mechanism::Rollover,
                        Mechanism::Traditional,
                        self.op1.marginal_cost,
                        c,
                    )?
                    .profits
                    .1;
                let adopt = self
                    .cell_with_costs(
                        Mechanism::Rollover,
                        Mechanism::Rollover,
                        self.op1.marginal_cost,
                        c,
                    )?
                    .profits
                    .1;
                Ok(keep - adopt)
            }
        };

        let scan_pts = 48;
        let mut xs = Vec::with_capacity(scan_pts + 1);
        let mut gs = Vec::with_capacity(scan_pts + 1);
        for i in 0..=scan_pts {
            let c = lo + (hi - lo) * i as f64 / scan_pts as f64;
            xs.push(c);
            gs.push(gap(c)?);
        }

        let mut roots = Vec::new();
        for i in 0..scan_pts {
            if gs[i] == 0.0 {
                roots.push(xs[i]);
            } else if gs[i].signum() != gs[i + 1].signum() && gs[i + 1] != 0.0 {
                let tol = DEFAULT_ROOT_TOL * hi_cost.max(1.0);
                let root = bracketed_root(|c| gap(c).unwrap_or(f64::NAN), xs[i], xs[i + 1], tol)?;
                roots.push(root);
            }
        }
        if gs[scan_pts] == 0.0 {
            roots.push(xs[scan_pts]);
        }

        let mut flags = Vec::new();
        let (value, binding) = match roots.len() {
            0 => {
                // No crossing: the comparison has one sign across the whole
                // window, so the bound sits on the boundary that sign points at.
                if gs.iter().all(|&g| g < 0.0) {
                    flags.push("non-binding(rollover-preferred-throughout)".into());
                    (hi, false)
                } else {
                    flags.push("non-binding(traditional-preferred-throughout)".into());
                    (lo, false)
                }
            }
            1 => (roots[0], true),
            n => {
                flags.push(format!("multiple-roots({n})"));
                (roots[n - 1], true)
            }
        };
        Ok(RollThreshold {
            value,
            binding,
            window: (lo, hi),
            flags,
        })
    }

    /// Whether rollover would flip the quality ranking if only operator 2
    /// adopted it.
    pub fn qos_flip(&self) -> bool {
        qos_flip(
            self.op1.qos,
            self.op2.qos,
            self.profile(true, Mechanism::Traditional).expected_usage,
            self.profile(false, Mechanism::Rollover).expected_usage,
        )
    }

    /// Full resolution of the mechanism stage: market mode from the
    /// exclusion thresholds, then the equilibrium set. Internal-consistency
    /// checks are reported as flags, never patched over.
    pub fn classify(&self) -> Result<MechanismEquilibrium, MechanismError> {
        if self.op2.qos > self.op1.qos {
            let mut eq = self.swapped().classify()?.swap_operators();
            eq.flags.push("relabeled-by-qos".into());
            return Ok(eq);
        }

        let theta_max = self.dist.theta_max();
        let (psi1, psi2) = (self.op1.psi(), self.op2.psi());
        if psi1 >= theta_max && psi2 >= theta_max {
            return Err(MechanismError::BadParameter(format!(
                "both cost-QoS ratios ({psi1:.6}, {psi2:.6}) exceed the valuation ceiling {theta_max:.6}"
            )));
        }

        let matrix = self.payoff_matrix()?;
        let enumerated = nash_pure(&matrix, 1e-9 * matrix.max_abs_profit());
        let mut flags = Vec::new();
        let (c1_bound, c2_bound) = self.single_survivor_thresholds();

        let mode = if psi2 >= theta_max || self.op1.marginal_cost < c1_bound {
            if psi2 >= theta_max {
                flags.push("rival-priced-out(second)".into());
            }
            MarketMode::FirstSurviving
        } else if psi1 >= theta_max || self.op2.marginal_cost < c2_bound {
            if psi1 >= theta_max {
                flags.push("rival-priced-out(first)".into());
            }
            MarketMode::SecondSurviving
        } else {
            MarketMode::Coexistence
        };

        let profit_tol = 1e-9 * matrix.max_abs_profit().max(1.0);
        let (outcomes, label) = match mode {
            MarketMode::FirstSurviving => {
                let w_rt = matrix.profits(Mechanism::Rollover, Mechanism::Traditional).0;
                let w_rr = matrix.profits(Mechanism::Rollover, Mechanism::Rollover).0;
                if (w_rt - w_rr).abs() > profit_tol {
                    flags.push(format!(
                        "survivor-profit-gap(w1_rt={w_rt:.9e}, w1_rr={w_rr:.9e})"
                    ));
                }
                (
                    vec![
                        (Mechanism::Rollover, Mechanism::Traditional),
                        (Mechanism::Rollover, Mechanism::Rollover),
                    ],
                    EquilibriumLabel::SecondIndifferent(Mechanism::Rollover),
                )
            }
            MarketMode::SecondSurviving => {
                let w2_rr = matrix.profits(Mechanism::Rollover, Mechanism::Rollover).1;
                let w2_tr = matrix.profits(Mechanism::Traditional, Mechanism::Rollover).1;
                if w2_rr > w2_tr + profit_tol {
                    flags.push(format!(
                        "second-survivor-order-violated(w2_rr={w2_rr:.9e}, w2_tr={w2_tr:.9e})"
                    ));
                }
                (
                    vec![
                        (Mechanism::Traditional, Mechanism::Rollover),
                        (Mechanism::Rollover, Mechanism::Rollover),
                    ],
                    EquilibriumLabel::FirstIndifferent(Mechanism::Rollover),
                )
            }
            MarketMode::Coexistence => (enumerated.outcomes.clone(), enumerated.label.clone()),
        };

        if mode != MarketMode::Coexistence && enumerated.outcomes != outcomes {
            flags.push(format!(
                "enumeration-mismatch(expected={label}, enumerated={})",
                enumerated.label
            ));
        }
        flags.extend(enumerated.flags);

        Ok(MechanismEquilibrium {
            mode,
            outcomes,
            label,
            qos_flip: self.qos_flip(),
            flags,
            matrix,
        })
    }
}

/// Rectangular cost grid used for region-emptiness scans.
#[derive(Debug, Clone)]
pub struct CostGrid {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl CostGrid {
    pub fn square(c_min: f64, c_max: f64, steps: usize) -> CostGrid {
        let axis: Vec<f64> = (0..steps)
            .map(|i| c_min + (c_max - c_min) * i as f64 / (steps - 1).max(1) as f64)
            .collect();
        CostGrid {
            c1: axis.clone(),
            c2: axis,
        }
    }
}

/// Whether no shared-market cost pair on the grid lets the `(T,R)` outcome
/// stand as an equilibrium.
fn tr_region_empty(template: &MechanismGame<'_>, grid: &CostGrid) -> Result<bool, MechanismError> {
    let pairs: Vec<(f64, f64)> = grid
        .c1
        .iter()
        .flat_map(|&a| grid.c2.iter().map(move |&b| (a, b)))
        .collect();
    let hits = pairs
        .par_iter()
        .map(|&(c1, c2)| -> Result<bool, MechanismError> {
            let game = template.with_costs(c1, c2);
            let (psi1, psi2) = (game.op1.psi(), game.op2.psi());
            let theta_max = game.dist.theta_max();
            if psi1 >= theta_max || psi2 >= theta_max {
                return Ok(false);
            }
            let eq = game.classify()?;
            Ok(eq.mode == MarketMode::Coexistence
                && eq
                    .outcomes
                    .contains(&(Mechanism::Traditional, Mechanism::Rollover)))
        })
        .collect::<Result<Vec<bool>, MechanismError>>()?;
    Ok(!hits.into_iter().any(|h| h))
}

/// QoS levels `(ρ̂, ρ̃)` splitting operator 2's quality into three bands.
/// Above `ρ̃` the simultaneous-rollover outcome disappears in favor of
/// the anti-coordination pair; `ρ̂` is the highest quality at which the
/// `(T,R)` outcome is still absent from the whole cost grid.
pub fn qos_regime_thresholds(
    rho1: f64,
    c1: f64,
    cap1: usize,
    cap2: usize,
    demand: &DemandModel,
    dist: &ValuationDistribution,
    beta: f64,
    undercut_step: f64,
    grid: &CostGrid,
) -> Result<(f64, f64), MechanismError> {
    let game_at = |rho2: f64, c2: f64| -> Result<MechanismGame<'_>, MechanismError> {
        MechanismGame::new(
            OperatorSpec::new(rho1, c1, cap1)?,
            OperatorSpec::new(rho2, c2, cap2)?,
            demand,
            dist,
            beta,
            undercut_step,
        )
    };

    // Upper split: the own-cost bound of operator 1, evaluated at operator
    // 2's own adoption bound, stops crossing c1 once quality gets too close.
    let c2_seed = grid.c2[grid.c2.len() / 2];
    let composite = |rho2: f64| -> Result<f64, MechanismError> {
        let inner = game_at(rho2, c2_seed)?.roll_threshold_second()?;
        let outer = game_at(rho2, inner.value)?.roll_threshold_first()?;
        Ok(outer.value - c1)
    };
    let lo_q = 0.55 * rho1;
    let f_lo = composite(lo_q)?;
    let f_hi = composite(rho1)?;
    let rho_tilde = if f_lo.signum() != f_hi.signum() {
        bracketed_root(
            |r| composite(r).unwrap_or(f64::NAN),
            lo_q,
            rho1,
            1e-6 * rho1,
        )?
    } else {
        return Err(MechanismError::NoCoexistenceWindow(format!(
            "adoption-bound crossing not bracketed on [{lo_q:.4}, {rho1:.4}]"
        )));
    };

    // Lower split by bisection on emptiness of the (T,R) region.
    let mut lo = 0.55 * rho1;
    let mut hi = rho1;
    if !tr_region_empty(&game_at(lo, c2_seed)?, grid)? {
        // Region already populated at the search floor; report the floor.
        return Ok((lo, rho_tilde));
    }
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if tr_region_empty(&game_at(mid, c2_seed)?, grid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, rho_tilde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::make_uniform;

    fn uniform_dist() -> ValuationDistribution {
        make_uniform(1.0).unwrap()
    }

    #[test]
    fn exclusion_bound_first_uniform_oracle() {
        let dist = uniform_dist();
        // gap(θ) = 1 − θ under the uniform unit valuation.
        let c = c_single_1(1.0, 1.0, 0.5, 0.9, 1.0, &dist);
        assert!((c - 0.45).abs() < 1e-12, "got {c}");
    }

    #[test]
    fn exclusion_bound_first_vanishing_bracket() {
        let dist = uniform_dist();
        // ρ₂·v_t = ρ₁·v_r kills the differentiation term entirely.
        let c = c_single_1(1.0, 0.8, 0.4, 1.0, 0.8, &dist);
        assert!((c - 0.4 / 0.8).abs() < 1e-12, "got {c}");
    }

    #[test]
    fn exclusion_bound_first_saturates_at_ceiling() {
        let dist = uniform_dist();
        let near = c_single_1(1.0, 1.0, 1.0 - 1e-9, 0.9, 1.0, &dist);
        assert!((near - 1.0).abs() < 1e-8, "got {near}");
        assert_eq!(c_single_1(1.0, 1.0, 1.5, 0.9, 1.0, &dist), 1.0);
    }

    #[test]
    fn exclusion_bound_second_symmetric_is_rival_cost() {
        let dist = uniform_dist();
        // Matched strengths drop the differentiation term, leaving the
        // rival's cost itself; the price route 0.8 − gap(0.8) = 0.6 loses.
        let c = c_single_2(1.0, 1.0, 0.8, 1.0, 1.0, &dist);
        assert!((c - 0.8).abs() < 1e-12, "got {c}");
    }

    #[test]
    fn exclusion_bound_second_flex_route_hand_value() {
        let dist = uniform_dist();
        // ψ₁ = 0.5, equal usages: route = ρ₂ψ₁ + (ρ₁−ρ₂)·gap(ψ₁) = 0.5,
        // against a price route of 2(c₁−Δρ) − ρ₂ = −0.1.
        let c = c_single_2(1.0, 0.9, 0.5, 1.0, 1.0, &dist);
        assert!((c - 0.5).abs() < 1e-12, "got {c}");
    }

    #[test]
    fn exclusion_bound_second_negative_at_small_cost() {
        let dist = uniform_dist();
        // A cheap high-QoS rival cannot be priced out by any c₂ ≥ 0.
        let c = c_single_2(1.0, 0.91, 0.005, 0.9, 1.0, &dist);
        assert!(c < 0.0, "got {c}");
    }

    #[test]
    fn exclusion_bound_second_symmetry_with_first() {
        let dist = uniform_dist();
        let a = c_single_1(1.0, 1.0, 0.6, 1.0, 1.0, &dist);
        let b = c_single_2(1.0, 1.0, 0.6, 1.0, 1.0, &dist);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn qos_flip_comparisons() {
        assert!(qos_flip(1.0, 0.95, 0.9, 1.0));
        assert!(!qos_flip(1.0, 0.85, 0.9, 1.0));
        assert!(qos_flip(1.0, 1.0, 0.99, 1.0));
    }

    fn mk_cell(k1: Mechanism, k2: Mechanism, w1: f64, w2: f64) -> CellOutcome {
        CellOutcome {
            mechanisms: (k1, k2),
            strengths: (1.0, 0.9),
            profits: (w1, w2),
            sigma: (0.5, 0.4),
            theta_tilde: Some(0.6),
            region: Region::Split,
            regime: Regime::Coexistence,
            flags: Vec::new(),
        }
    }

    fn mk_matrix(w: [(f64, f64); 4]) -> MechanismMatrix {
        MechanismMatrix::from_cells([
            mk_cell(Mechanism::Traditional, Mechanism::Traditional, w[0].0, w[0].1),
            mk_cell(Mechanism::Traditional, Mechanism::Rollover, w[1].0, w[1].1),
            mk_cell(Mechanism::Rollover, Mechanism::Traditional, w[2].0, w[2].1),
            mk_cell(Mechanism::Rollover, Mechanism::Rollover, w[3].0, w[3].1),
        ])
    }

    #[test]
    fn nash_dominant_cell() {
        // (R,T) strictly dominant for both sides.
        let m = mk_matrix([(1.0, 1.0), (1.5, 0.5), (3.0, 2.0), (2.0, 1.0)]);
        let eq = nash_pure(&m, 0.0);
        assert_eq!(
            eq.outcomes,
            vec![(Mechanism::Rollover, Mechanism::Traditional)]
        );
        assert_eq!(
            eq.label,
            EquilibriumLabel::Single(Mechanism::Rollover, Mechanism::Traditional)
        );
        assert_eq!(eq.label.to_string(), "(R,T)");
    }

    #[test]
    fn nash_anti_coordination_pair() {
        // Each side prefers the mechanism the other did not take.
        let m = mk_matrix([(1.0, 1.0), (2.0, 3.0), (3.0, 2.0), (1.5, 1.5)]);
        let eq = nash_pure(&m, 0.0);
        assert_eq!(eq.outcomes.len(), 2);
        assert_eq!(eq.label, EquilibriumLabel::SymmetricPair);
        assert_eq!(eq.label.to_string(), "{(R,T),(T,R)}");
    }

    #[test]
    fn nash_na_collapse_second() {
        // Operator 2 earns nothing either way; operator 1 unaffected.
        let m = mk_matrix([(1.0, 0.0), (0.9, 0.0), (2.0, 0.0), (2.0, 0.0)]);
        let eq = nash_pure(&m, 0.0);
        assert_eq!(
            eq.label,
            EquilibriumLabel::SecondIndifferent(Mechanism::Rollover)
        );
        assert_eq!(eq.label.to_string(), "(R,Na)");
    }

    #[test]
    fn nash_na_collapse_gate_rejects_profit_gap() {
        // Both (R,T) and (R,R) stand, but operator 1's profit differs, so
        // the shorthand would hide real structure.
        let m = mk_matrix([(1.0, 0.0), (0.9, 0.0), (2.0, 1.0), (2.5, 1.0)]);
        let eq = nash_pure(&m, 0.0);
        match &eq.label {
            EquilibriumLabel::Multiple(set) => assert_eq!(set.len(), 2),
            other => panic!("expected multiple, got {other}"),
        }
        assert!(eq.flags.iter().any(|f| f.starts_with("na-collapse-gate")));
    }

    #[test]
    fn nash_first_indifferent_allows_second_profit_gap() {
        // Operator 1 earns zero in both (T,R) and (R,R); operator 2's
        // profits may legitimately differ between them.
        let m = mk_matrix([(0.5, 1.0), (0.0, 3.0), (0.4, 1.2), (0.0, 2.0)]);
        let eq = nash_pure(&m, 0.0);
        assert_eq!(
            eq.outcomes,
            vec![
                (Mechanism::Traditional, Mechanism::Rollover),
                (Mechanism::Rollover, Mechanism::Rollover)
            ]
        );
        assert_eq!(
            eq.label,
            EquilibriumLabel::FirstIndifferent(Mechanism::Rollover)
        );
        assert_eq!(eq.label.to_string(), "(Na,R)");
    }

    #[test]
    fn nash_empty_set_is_surfaced() {
        // Matching-pennies payoffs admit no pure outcome.
        let m = mk_matrix([(1.0, 0.0), (0.0, 1.0), (0.0, 1.0), (1.0, 0.0)]);
        let eq = nash_pure(&m, 0.0);
        assert!(eq.outcomes.is_empty());
        assert_eq!(eq.label, EquilibriumLabel::Empty);
        assert!(eq.flags.iter().any(|f| f == "empty-equilibrium-set"));
    }

    use crate::demand::DemandModel;

    // Small setup solvable end to end: unit uniform valuation, uniform
    // demand on {0..4} tens of MB, caps of 2 units, β = 0.8.
    fn compact_game(
        dist: &ValuationDistribution,
        c1: f64,
        c2: f64,
    ) -> (MechanismGame<'_>, DemandModel) {
        let demand = DemandModel::uniform(4, 10.0).unwrap();
        let op1 = OperatorSpec::new(1.0, c1, 2).unwrap();
        let op2 = OperatorSpec::new(0.95, c2, 2).unwrap();
        let game = MechanismGame::new(op1, op2, &demand, dist, 0.8, 1e-6).unwrap();
        (game, demand)
    }

    #[test]
    fn compact_pipeline_coexistence() {
        let dist = uniform_dist();
        let (game, _d) = compact_game(&dist, 0.25, 0.30);
        let eq = game.classify().unwrap();

        assert_eq!(eq.mode, MarketMode::Coexistence);
        assert_eq!(
            eq.label,
            EquilibriumLabel::Single(Mechanism::Rollover, Mechanism::Traditional)
        );
        assert!(eq.qos_flip);
        assert!(eq.flags.is_empty(), "unexpected flags: {:?}", eq.flags);
        assert!(!eq
            .outcomes
            .contains(&(Mechanism::Traditional, Mechanism::Traditional)));

        let m = &eq.matrix;
        let w1_tt = m.profits(Mechanism::Traditional, Mechanism::Traditional).0;
        let w1_rt = m.profits(Mechanism::Rollover, Mechanism::Traditional).0;
        assert!(w1_rt > w1_tt, "{w1_rt} vs {w1_tt}");
        assert!(m.profits(Mechanism::Rollover, Mechanism::Traditional).1 > 0.0);

        // Against a both-traditional pair the stronger side prices the
        // rival out by matching its cost-QoS ratio.
        let tt = m.cell(Mechanism::Traditional, Mechanism::Traditional);
        let psi2 = game.operators().1.psi();
        assert_eq!(tt.region, Region::FirstOnly);
        assert!((tt.sigma.0 - psi2).abs() < 1e-9);
        assert!((tt.sigma.1 - psi2).abs() < 1e-9);
    }

    #[test]
    fn compact_pipeline_first_survivor_collapse() {
        let dist = uniform_dist();
        let (game, _d) = compact_game(&dist, 0.10, 0.30);
        let eq = game.classify().unwrap();

        assert_eq!(eq.mode, MarketMode::FirstSurviving);
        assert_eq!(
            eq.label,
            EquilibriumLabel::SecondIndifferent(Mechanism::Rollover)
        );
        assert!(eq.flags.is_empty(), "unexpected flags: {:?}", eq.flags);

        // The constrained side's mechanism cannot move the survivor's
        // profit: the limit fee tracks the rival's cost-QoS ratio alone.
        let w1_rt = eq.matrix.profits(Mechanism::Rollover, Mechanism::Traditional).0;
        let w1_rr = eq.matrix.profits(Mechanism::Rollover, Mechanism::Rollover).0;
        assert!((w1_rt - w1_rr).abs() <= 1e-9 * w1_rt.abs().max(1.0));
        for cell in eq.matrix.cells() {
            assert_eq!(cell.region, Region::FirstOnly);
            assert_eq!(cell.profits.1, 0.0);
        }
    }

    #[test]
    fn compact_pipeline_second_survivor_collapse() {
        let dist = uniform_dist();
        let (game, _d) = compact_game(&dist, 0.25, 0.10);
        let eq = game.classify().unwrap();

        assert_eq!(eq.mode, MarketMode::SecondSurviving);
        assert_eq!(
            eq.label,
            EquilibriumLabel::FirstIndifferent(Mechanism::Rollover)
        );
        assert!(eq.flags.is_empty(), "unexpected flags: {:?}", eq.flags);

        // Matching the rival's rollover costs the excluder some margin.
        let w2_tr = eq.matrix.profits(Mechanism::Traditional, Mechanism::Rollover).1;
        let w2_rr = eq.matrix.profits(Mechanism::Rollover, Mechanism::Rollover).1;
        assert!(w2_rr <= w2_tr + 1e-12, "{w2_rr} vs {w2_tr}");
        assert_eq!(
            eq.matrix.profits(Mechanism::Traditional, Mechanism::Rollover).0,
            0.0
        );
    }

    #[test]
    fn roll_threshold_self_consistency() {
        let dist = uniform_dist();
        let (game, _d) = compact_game(&dist, 0.25, 0.30);

        let rt2 = game.roll_threshold_second().unwrap();
        assert!(rt2.binding, "flags: {:?}", rt2.flags);
        assert!(rt2.window.0 <= rt2.value && rt2.value <= rt2.window.1);
        let keep = game
            .cell_with_costs(Mechanism::Rollover, Mechanism::Traditional, 0.25, rt2.value)
            .unwrap()
            .profits
            .1;
        let adopt = game
            .cell_with_costs(Mechanism::Rollover, Mechanism::Rollover, 0.25, rt2.value)
            .unwrap()
            .profits
            .1;
        assert!(
            (keep - adopt).abs() <= 1e-7 * keep.abs().max(1.0),
            "profit gap at threshold: {keep} vs {adopt}"
        );

        // Operator 1 never wants to stay traditional here, so its bound
        // pins to the top of the shared-market window.
        let rt1 = game.roll_threshold_first().unwrap();
        assert!(!rt1.binding);
        assert!((rt1.value - rt1.window.1).abs() < 1e-12);
        assert!(rt1
            .flags
            .iter()
            .any(|f| f == "non-binding(rollover-preferred-throughout)"));
    }

    #[test]
    fn symmetric_operators_mirror_exactly() {
        let dist = uniform_dist();
        let demand = DemandModel::uniform(4, 10.0).unwrap();
        let op = OperatorSpec::new(1.0, 0.25, 2).unwrap();
        let game = MechanismGame::new(op, op, &demand, &dist, 0.8, 1e-6).unwrap();
        let m = game.payoff_matrix().unwrap();

        // Equal strengths on the diagonal leave only price competition,
        // which burns both margins down to the undercut step.
        for k in MECHANISMS {
            let cell = m.cell(k, k);
            assert_eq!(cell.strengths.0, cell.strengths.1);
            assert!(cell.profits.0.abs() < 1e-5);
            assert!(cell.profits.1.abs() < 1e-5);
        }

        // Off-diagonal cells are exact mirrors of each other.
        let tr = m.cell(Mechanism::Traditional, Mechanism::Rollover);
        let rt = m.cell(Mechanism::Rollover, Mechanism::Traditional);
        assert_eq!(tr.profits.0, rt.profits.1);
        assert_eq!(tr.profits.1, rt.profits.0);
        assert_eq!(tr.sigma.0, rt.sigma.1);
        assert_eq!(tr.region, rt.region.swap_operators());
    }

    #[test]
    fn classify_relabels_lower_qos_first() {
        let dist = uniform_dist();
        let demand = DemandModel::uniform(4, 10.0).unwrap();
        let lo = OperatorSpec::new(0.95, 0.30, 2).unwrap();
        let hi = OperatorSpec::new(1.0, 0.25, 2).unwrap();
        let game = MechanismGame::new(lo, hi, &demand, &dist, 0.8, 1e-6).unwrap();
        let eq = game.classify().unwrap();

        assert!(eq.flags.iter().any(|f| f == "relabeled-by-qos"));
        assert_eq!(
            eq.label,
            EquilibriumLabel::Single(Mechanism::Traditional, Mechanism::Rollover)
        );
        let (w1, w2) = eq.matrix.profits(Mechanism::Traditional, Mechanism::Rollover);
        let mirror = compact_game(&dist, 0.25, 0.30).0;
        let (m1, m2) = mirror
            .payoff_matrix()
            .unwrap()
            .profits(Mechanism::Rollover, Mechanism::Traditional);
        assert_eq!((w1, w2), (m2, m1));
    }

    #[test]
    fn label_swap_round_trips() {
        let labels = [
            EquilibriumLabel::Single(Mechanism::Rollover, Mechanism::Traditional),
            EquilibriumLabel::SymmetricPair,
            EquilibriumLabel::FirstIndifferent(Mechanism::Rollover),
            EquilibriumLabel::SecondIndifferent(Mechanism::Rollover),
            EquilibriumLabel::Empty,
        ];
        for l in labels {
            assert_eq!(l.swap_operators().swap_operators(), l);
        }
        assert_eq!(
            EquilibriumLabel::SecondIndifferent(Mechanism::Rollover)
                .swap_operators()
                .to_string(),
            "(Na,R)"
        );
    }
}

