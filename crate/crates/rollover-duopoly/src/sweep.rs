//! Executes what a scenario asks for: single-point solves, one-dimensional
//! parameter sweeps, and two-dimensional regime maps. Grid points are
//! independent and evaluated in parallel; output order follows the grid.

use crate::demand::Mechanism;
use crate::mechanism::{
    EquilibriumLabel, MarketMode, MechanismEquilibrium, MechanismError, MechanismGame,
    OperatorSpec,
};
use crate::market::OperatorProfile;
use crate::demand::RolloverProfile;
use crate::pricing::{classify_regime, monopoly_outcome};
use crate::scenario::{MechanismChoice, RegimeMap, Scenario, SweepVariable};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Demand(#[from] crate::demand::DemandError),
    #[error(transparent)]
    Pricing(#[from] crate::pricing::PricingError),
    #[error("the scenario has no [sweep] section")]
    NoSweep,
    #[error("the scenario has no [regime_map] section")]
    NoRegimeMap,
    #[error("{0}")]
    Unsupported(String),
}

/// One output record: a grid point and one equilibrium branch at it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub swept_var: f64,
    pub eq_label: String,
    pub kappa1: String,
    pub kappa2: String,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub theta_tilde: Option<f64>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub regime: String,
    pub flags: Vec<String>,
}

fn mech_str(k: Mechanism) -> String {
    k.to_string()
}

fn cell_row(
    swept: f64,
    eq_label: String,
    kappa1: String,
    kappa2: String,
    cell: &crate::mechanism::CellOutcome,
    extra_flags: &[String],
) -> SweepRow {
    let mut flags = extra_flags.to_vec();
    flags.extend(cell.flags.iter().cloned());
    SweepRow {
        swept_var: swept,
        eq_label,
        kappa1,
        kappa2,
        sigma1: Some(cell.sigma.0),
        sigma2: Some(cell.sigma.1),
        theta_tilde: cell.theta_tilde,
        w1: Some(cell.profits.0),
        w2: Some(cell.profits.1),
        regime: cell.regime.label().to_string(),
        flags,
    }
}

fn error_row(swept: f64, err: &MechanismError) -> SweepRow {
    SweepRow {
        swept_var: swept,
        eq_label: "error".into(),
        kappa1: String::new(),
        kappa2: String::new(),
        sigma1: None,
        sigma2: None,
        theta_tilde: None,
        w1: None,
        w2: None,
        regime: String::new(),
        flags: vec![err.to_string()],
    }
}

fn equilibrium_rows(swept: f64, eq: &MechanismEquilibrium) -> Vec<SweepRow> {
    let mut base_flags = eq.flags.clone();
    if eq.mode != MarketMode::Coexistence {
        base_flags.push(format!("mode={}", eq.mode));
    }
    let label = eq.label.to_string();
    let from_outcome = |(k1, k2): (Mechanism, Mechanism), kappa1: String, kappa2: String| {
        cell_row(
            swept,
            label.clone(),
            kappa1,
            kappa2,
            eq.matrix.cell(k1, k2),
            &base_flags,
        )
    };
    match &eq.label {
        EquilibriumLabel::Single(k1, k2) => {
            vec![from_outcome((*k1, *k2), mech_str(*k1), mech_str(*k2))]
        }
        EquilibriumLabel::SymmetricPair | EquilibriumLabel::Multiple(_) => eq
            .outcomes
            .iter()
            .map(|&(k1, k2)| from_outcome((k1, k2), mech_str(k1), mech_str(k2)))
            .collect(),
        EquilibriumLabel::SecondIndifferent(k1) => {
            vec![from_outcome(eq.outcomes[0], mech_str(*k1), "Na".into())]
        }
        EquilibriumLabel::FirstIndifferent(k2) => {
            vec![from_outcome(eq.outcomes[0], "Na".into(), mech_str(*k2))]
        }
        EquilibriumLabel::Empty => vec![SweepRow {
            swept_var: swept,
            eq_label: label,
            kappa1: String::new(),
            kappa2: String::new(),
            sigma1: None,
            sigma2: None,
            theta_tilde: None,
            w1: None,
            w2: None,
            regime: String::new(),
            flags: base_flags,
        }],
    }
}

fn duopoly_specs(scenario: &Scenario) -> Result<(OperatorSpec, OperatorSpec), SweepError> {
    let mk = |i: usize| {
        let o = &scenario.operators[i];
        OperatorSpec::new(o.qos, o.cost, o.cap).map_err(SweepError::from)
    };
    Ok((mk(0)?, mk(1)?))
}

enum PointTask {
    Classify,
    FixedPair(Mechanism, Mechanism),
}

fn point_task(scenario: &Scenario) -> Result<PointTask, SweepError> {
    match (
        scenario.operators[0].mechanism,
        scenario.operators[1].mechanism,
    ) {
        (MechanismChoice::Free, MechanismChoice::Free) => Ok(PointTask::Classify),
        (MechanismChoice::Fixed(a), MechanismChoice::Fixed(b)) => Ok(PointTask::FixedPair(a, b)),
        _ => Err(SweepError::Unsupported(
            "one operator with a fixed mechanism and one free is not supported; fix both or neither"
                .into(),
        )),
    }
}

fn eval_duopoly_point(
    game: &MechanismGame<'_>,
    task: &PointTask,
    swept: f64,
) -> Vec<SweepRow> {
    match task {
        PointTask::Classify => match game.classify() {
            Ok(eq) => equilibrium_rows(swept, &eq),
            Err(e) => vec![error_row(swept, &e)],
        },
        PointTask::FixedPair(a, b) => match game.cell(*a, *b) {
            Ok(cell) => {
                let label = format!("({a},{b})");
                let flags = vec!["mechanisms-fixed".to_string()];
                vec![cell_row(
                    swept,
                    label,
                    mech_str(*a),
                    mech_str(*b),
                    &cell,
                    &flags,
                )]
            }
            Err(e) => vec![error_row(swept, &e)],
        },
    }
}

fn monopoly_mechanisms(choice: MechanismChoice) -> Vec<Mechanism> {
    match choice {
        MechanismChoice::Free => vec![Mechanism::Traditional, Mechanism::Rollover],
        MechanismChoice::Fixed(k) => vec![k],
    }
}

fn monopoly_rows(
    scenario: &Scenario,
    profiles: &[(Mechanism, RolloverProfile)],
    cost: f64,
    swept: f64,
) -> Vec<SweepRow> {
    let o = &scenario.operators[0];
    profiles
        .iter()
        .map(|(k, rp)| {
            let op = OperatorProfile::new(o.qos, cost, o.cap, *k).expect("validated");
            match monopoly_outcome(&op, rp, &scenario.valuation) {
                Ok((mp, w)) => SweepRow {
                    swept_var: swept,
                    eq_label: format!("({k})"),
                    kappa1: mech_str(*k),
                    kappa2: String::new(),
                    sigma1: Some(mp),
                    sigma2: None,
                    theta_tilde: None,
                    w1: Some(w),
                    w2: None,
                    regime: "monopoly".into(),
                    flags: Vec::new(),
                },
                Err(e) => SweepRow {
                    swept_var: swept,
                    eq_label: "error".into(),
                    kappa1: mech_str(*k),
                    kappa2: String::new(),
                    sigma1: None,
                    sigma2: None,
                    theta_tilde: None,
                    w1: None,
                    w2: None,
                    regime: String::new(),
                    flags: vec![e.to_string()],
                },
            }
        })
        .collect()
}

/// Evaluates the scenario's sweep grid. Each grid point yields one row
/// per equilibrium branch; point-level failures become flagged rows.
pub fn run_sweep(scenario: &Scenario) -> Result<Vec<SweepRow>, SweepError> {
    let sweep = scenario.sweep.as_ref().ok_or(SweepError::NoSweep)?;
    run_over_grid(scenario, sweep.variable, &sweep.raw_values)
}

/// Evaluates the scenario at its base parameters: a sweep of one point.
pub fn run_point(scenario: &Scenario) -> Result<Vec<SweepRow>, SweepError> {
    let raw = scenario.operators[0].cost / scenario.money_factor();
    run_over_grid(scenario, SweepVariable::Cost1, &[raw])
}

fn run_over_grid(
    scenario: &Scenario,
    variable: SweepVariable,
    raw_values: &[f64],
) -> Result<Vec<SweepRow>, SweepError> {
    let money = scenario.money_factor();

    if scenario.operators.len() == 1 {
        if variable != SweepVariable::Cost1 {
            return Err(SweepError::Unsupported(format!(
                "a single-operator scenario can only sweep c1_rmb_per_gb, not {}",
                variable.name()
            )));
        }
        let o = &scenario.operators[0];
        let profiles: Vec<(Mechanism, RolloverProfile)> = monopoly_mechanisms(o.mechanism)
            .into_iter()
            .map(|k| {
                RolloverProfile::build(&scenario.demand, o.cap, scenario.beta, k)
                    .map(|rp| (k, rp))
            })
            .collect::<Result<_, _>>()?;
        let rows: Vec<Vec<SweepRow>> = raw_values
            .par_iter()
            .map(|&raw| monopoly_rows(scenario, &profiles, raw * money, raw))
            .collect();
        return Ok(rows.into_iter().flatten().collect());
    }

    let task = point_task(scenario)?;
    let (spec1, spec2) = duopoly_specs(scenario)?;
    let template = MechanismGame::new(
        spec1,
        spec2,
        &scenario.demand,
        &scenario.valuation,
        scenario.beta,
        scenario.undercut_step,
    )?;
    let (c1, c2) = (spec1.marginal_cost, spec2.marginal_cost);

    let rows: Vec<Vec<SweepRow>> = raw_values
        .par_iter()
        .map(|&raw| {
            let game = match variable {
                SweepVariable::Cost1 => Ok(template.with_costs(raw * money, c2)),
                SweepVariable::Cost2 => Ok(template.with_costs(c1, raw * money)),
                SweepVariable::Qos2 => template.with_second_qos(raw),
            };
            match game {
                Ok(game) => eval_duopoly_point(&game, &task, raw),
                Err(e) => vec![error_row(raw, &e)],
            }
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Pricing regime at one cost-ratio pair of the map.
#[derive(Debug, Clone)]
pub struct PsiRegimeRow {
    pub psi1: f64,
    pub psi2: f64,
    pub regime: String,
    /// How many of the five regime conditions matched; exactly one is the
    /// clean case.
    pub matched: usize,
}

/// Mechanism equilibrium at one cost pair of the map.
#[derive(Debug, Clone)]
pub struct CostMapRow {
    pub c2_raw: f64,
    pub c1_raw: f64,
    pub eq_label: String,
    pub mode: String,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum MapRows {
    Psi(Vec<PsiRegimeRow>),
    Cost(Vec<CostMapRow>),
}

/// Evaluates the scenario's two-dimensional regime map.
pub fn run_regime_map(scenario: &Scenario) -> Result<MapRows, SweepError> {
    let map = scenario.regime_map.as_ref().ok_or(SweepError::NoRegimeMap)?;
    match map {
        RegimeMap::Psi { xi, psi1, psi2 } => {
            let pairs: Vec<(f64, f64)> = psi1
                .iter()
                .flat_map(|&a| psi2.iter().map(move |&b| (a, b)))
                .collect();
            let rows: Vec<PsiRegimeRow> = pairs
                .par_iter()
                .map(|&(p1, p2)| {
                    match classify_regime(p1, p2, *xi, &scenario.valuation) {
                        Ok((regime, matched)) => PsiRegimeRow {
                            psi1: p1,
                            psi2: p2,
                            regime: regime.label().to_string(),
                            matched,
                        },
                        Err(e) => PsiRegimeRow {
                            psi1: p1,
                            psi2: p2,
                            regime: format!("error: {e}"),
                            matched: 0,
                        },
                    }
                })
                .collect();
            Ok(MapRows::Psi(rows))
        }
        RegimeMap::Cost { c1_raw, c2_raw } => {
            let money = scenario.money_factor();
            let (spec1, spec2) = duopoly_specs(scenario)?;
            let template = MechanismGame::new(
                spec1,
                spec2,
                &scenario.demand,
                &scenario.valuation,
                scenario.beta,
                scenario.undercut_step,
            )?;
            let pairs: Vec<(f64, f64)> = c2_raw
                .iter()
                .flat_map(|&b| c1_raw.iter().map(move |&a| (b, a)))
                .collect();
            let rows: Vec<CostMapRow> = pairs
                .par_iter()
                .map(|&(c2r, c1r)| {
                    let game = template.with_costs(c1r * money, c2r * money);
                    match game.classify() {
                        Ok(eq) => CostMapRow {
                            c2_raw: c2r,
                            c1_raw: c1r,
                            eq_label: eq.label.to_string(),
                            mode: eq.mode.label().to_string(),
                            flags: eq.flags,
                        },
                        Err(e) => CostMapRow {
                            c2_raw: c2r,
                            c1_raw: c1r,
                            eq_label: "error".into(),
                            mode: String::new(),
                            flags: vec![e.to_string()],
                        },
                    }
                })
                .collect();
            Ok(MapRows::Cost(rows))
        }
    }
}
