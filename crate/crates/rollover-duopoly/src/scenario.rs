//! Scenario files: a declarative TOML description of demand, valuations,
//! operators, and what to compute. Quantities are written in field units
//! (GB, RMB/GB) and resolved here into the engine's per-unit scale.
//!
//! A data unit is `unit_mb` megabytes. Money per GB converts to money per
//! unit by the factor `unit_mb / 1000`; volumes in GB convert to units by
//! `1000 / unit_mb`.

use crate::demand::{DemandError, DemandModel, Mechanism};
use crate::valuation::{make_truncated_gamma, make_uniform, ValuationDistribution, ValuationError};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}; available: {}", PRESET_NAMES.join(", "))]
    UnknownPreset(String),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?}, expected csv or json")),
        }
    }
}

/// Which mechanism an operator runs: its own choice in the selection
/// game, or pinned from the scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismChoice {
    Free,
    Fixed(Mechanism),
}

#[derive(Debug, Clone, Copy)]
pub struct OperatorSetting {
    pub qos: f64,
    /// Marginal cost per data unit.
    pub cost: f64,
    /// Plan cap in data units.
    pub cap: usize,
    pub mechanism: MechanismChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Cost1,
    Cost2,
    Qos2,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Cost1 => "c1_rmb_per_gb",
            SweepVariable::Cost2 => "c2_rmb_per_gb",
            SweepVariable::Qos2 => "rho2",
        }
    }

    pub fn is_money(self) -> bool {
        matches!(self, SweepVariable::Cost1 | SweepVariable::Cost2)
    }
}

/// Sweep grid kept in the scenario file's own units, so reported sweep
/// values match what was written.
#[derive(Debug, Clone)]
pub struct ResolvedSweep {
    pub variable: SweepVariable,
    pub raw_values: Vec<f64>,
}

/// Two-dimensional map request: pricing regimes over cost-QoS ratios, or
/// mechanism equilibria over a cost rectangle.
#[derive(Debug, Clone)]
pub enum RegimeMap {
    Psi {
        xi: f64,
        psi1: Vec<f64>,
        psi2: Vec<f64>,
    },
    Cost {
        c1_raw: Vec<f64>,
        c2_raw: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub format: OutputFormat,
    pub path: Option<PathBuf>,
}

/// A fully validated scenario in engine units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub demand: DemandModel,
    pub valuation: ValuationDistribution,
    pub beta: f64,
    pub operators: Vec<OperatorSetting>,
    pub sweep: Option<ResolvedSweep>,
    pub regime_map: Option<RegimeMap>,
    pub output: OutputSpec,
    pub undercut_step: f64,
    pub unit_mb: f64,
}

impl Scenario {
    /// Multiply a money-per-GB figure by this to get money per data unit.
    pub fn money_factor(&self) -> f64 {
        self.unit_mb / 1000.0
    }
}

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub unit_mb: Option<f64>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    beta: Option<f64>,
    undercut_step: Option<f64>,
    demand: DemandSection,
    valuation: ValuationSection,
    #[serde(default, rename = "operator")]
    operators: Vec<OperatorSection>,
    sweep: Option<SweepSection>,
    regime_map: Option<RegimeMapSection>,
    output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandSection {
    kind: String,
    max_gb: f64,
    mean_gb: Option<f64>,
    sigma_log: Option<f64>,
    at_gb: Option<f64>,
    unit_mb: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValuationSection {
    kind: String,
    shape: Option<f64>,
    scale_rmb_per_gb: Option<f64>,
    trunc_quantile: Option<f64>,
    theta_max_rmb_per_gb: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorSection {
    qos: f64,
    cost_rmb_per_gb: f64,
    cap_gb: f64,
    mechanism: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    variable: String,
    start: f64,
    stop: f64,
    points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegimeMapSection {
    kind: String,
    steps: usize,
    xi: Option<f64>,
    psi1_min: Option<f64>,
    psi1_max: Option<f64>,
    psi2_min: Option<f64>,
    psi2_max: Option<f64>,
    c1_min_rmb_per_gb: Option<f64>,
    c1_max_rmb_per_gb: Option<f64>,
    c2_min_rmb_per_gb: Option<f64>,
    c2_max_rmb_per_gb: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    format: Option<String>,
    path: Option<String>,
}

pub const PRESET_NAMES: [&str; 5] = ["fig8", "fig12", "fig14", "monopoly", "regime-map"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "fig8" => Some(include_str!("../presets/fig8.toml")),
        "fig12" => Some(include_str!("../presets/fig12.toml")),
        "fig14" => Some(include_str!("../presets/fig14.toml")),
        "monopoly" => Some(include_str!("../presets/monopoly.toml")),
        "regime-map" => Some(include_str!("../presets/regime-map.toml")),
        _ => None,
    }
}

pub fn load_preset(name: &str, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let text =
        preset_text(name).ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))?;
    parse_scenario(text, overrides)
}

pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, overrides)
}

pub fn parse_scenario(text: &str, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text)?;
    resolve(file, overrides)
}

fn check_range(name: &str, value: f64, lo: f64, hi: f64) -> Result<f64, ScenarioError> {
    if value.is_finite() && value > lo && value < hi {
        Ok(value)
    } else {
        Err(invalid(format!(
            "{name} must lie in ({lo}, {hi}), got {value}"
        )))
    }
}

fn require<T>(field: Option<T>, name: &str, context: &str) -> Result<T, ScenarioError> {
    field.ok_or_else(|| invalid(format!("{context} requires {name}")))
}

fn resolve(file: ScenarioFile, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let unit_mb = overrides
        .unit_mb
        .or(file.demand.unit_mb)
        .unwrap_or(10.0);
    check_range("unit_mb", unit_mb, 0.0, 1000.0 + 1e-9)?;
    let units_per_gb = 1000.0 / unit_mb;
    let money = unit_mb / 1000.0;

    let beta = check_range(
        "beta",
        require(file.beta, "beta", "the scenario")?,
        0.0,
        1.0 + 1e-12,
    )?;

    let d = &file.demand;
    let max_units = (d.max_gb * units_per_gb).round() as isize;
    if max_units < 1 {
        return Err(invalid(format!(
            "demand.max_gb {} is below one data unit of {unit_mb} MB",
            d.max_gb
        )));
    }
    let max_units = max_units as usize;
    let demand = match d.kind.as_str() {
        "uniform" => DemandModel::uniform(max_units, unit_mb)?,
        "lognormal" => {
            let mean_gb = require(d.mean_gb, "mean_gb", "lognormal demand")?;
            let sigma_log = require(d.sigma_log, "sigma_log", "lognormal demand")?;
            DemandModel::truncated_lognormal(mean_gb * units_per_gb, max_units, sigma_log, unit_mb)?
        }
        "point" => {
            let at_gb = require(d.at_gb, "at_gb", "point demand")?;
            let at = (at_gb * units_per_gb).round();
            if at < 0.0 || at > max_units as f64 {
                return Err(invalid(format!(
                    "demand.at_gb {} falls outside [0, {}]",
                    at_gb, d.max_gb
                )));
            }
            DemandModel::point_mass(at as usize, max_units, unit_mb)?
        }
        other => {
            return Err(invalid(format!(
                "demand.kind {other:?} is not one of uniform, lognormal, point"
            )))
        }
    };

    let v = &file.valuation;
    let valuation = match v.kind.as_str() {
        "gamma" => {
            let shape = require(v.shape, "shape", "gamma valuation")?;
            let scale_gb = require(v.scale_rmb_per_gb, "scale_rmb_per_gb", "gamma valuation")?;
            let trunc = v.trunc_quantile.unwrap_or(0.9999);
            check_range("valuation.trunc_quantile", trunc, 0.0, 1.0)?;
            make_truncated_gamma(shape, scale_gb * money, trunc)?
        }
        "uniform" => {
            let top_gb = require(
                v.theta_max_rmb_per_gb,
                "theta_max_rmb_per_gb",
                "uniform valuation",
            )?;
            make_uniform(top_gb * money)?
        }
        other => {
            return Err(invalid(format!(
                "valuation.kind {other:?} is not one of gamma, uniform"
            )))
        }
    };

    if file.operators.is_empty() || file.operators.len() > 2 {
        return Err(invalid(format!(
            "need one or two [[operator]] blocks, got {}",
            file.operators.len()
        )));
    }
    let mut operators = Vec::with_capacity(file.operators.len());
    for (i, op) in file.operators.iter().enumerate() {
        let label = format!("operator {}", i + 1);
        if !(op.qos > 0.0 && op.qos.is_finite()) {
            return Err(invalid(format!("{label}: qos must be positive")));
        }
        if !(op.cost_rmb_per_gb >= 0.0 && op.cost_rmb_per_gb.is_finite()) {
            return Err(invalid(format!(
                "{label}: cost_rmb_per_gb must be non-negative"
            )));
        }
        let cap = (op.cap_gb * units_per_gb).round() as isize;
        if cap < 1 {
            return Err(invalid(format!(
                "{label}: cap_gb {} is below one data unit of {unit_mb} MB",
                op.cap_gb
            )));
        }
        if cap as usize > demand.max_units() {
            return Err(invalid(format!(
                "{label}: cap_gb {} exceeds the demand support of {} units",
                op.cap_gb,
                demand.max_units()
            )));
        }
        let mechanism = match op.mechanism.as_deref() {
            None | Some("choice") => MechanismChoice::Free,
            Some("T") => MechanismChoice::Fixed(Mechanism::Traditional),
            Some("R") => MechanismChoice::Fixed(Mechanism::Rollover),
            Some(other) => {
                return Err(invalid(format!(
                    "{label}: mechanism {other:?} is not one of choice, T, R"
                )))
            }
        };
        operators.push(OperatorSetting {
            qos: op.qos,
            cost: op.cost_rmb_per_gb * money,
            cap: cap as usize,
            mechanism,
        });
    }

    let sweep = match &file.sweep {
        None => None,
        Some(s) => {
            let variable = match s.variable.as_str() {
                "c1_rmb_per_gb" => SweepVariable::Cost1,
                "c2_rmb_per_gb" => SweepVariable::Cost2,
                "rho2" => SweepVariable::Qos2,
                other => {
                    return Err(invalid(format!(
                        "sweep.variable {other:?} is not one of c1_rmb_per_gb, c2_rmb_per_gb, rho2"
                    )))
                }
            };
            if variable != SweepVariable::Cost1 && operators.len() < 2 {
                return Err(invalid(format!(
                    "sweep over {} needs two operators",
                    variable.name()
                )));
            }
            if s.points == 0 {
                return Err(invalid("sweep.points must be at least 1"));
            }
            if s.points > 1 && !(s.stop > s.start) {
                return Err(invalid(format!(
                    "sweep grid must increase strictly: start {} vs stop {}",
                    s.start, s.stop
                )));
            }
            let raw_values = grid(s.start, s.stop, s.points);
            Some(ResolvedSweep {
                variable,
                raw_values,
            })
        }
    };

    let regime_map = match &file.regime_map {
        None => None,
        Some(r) => {
            if r.steps < 2 {
                return Err(invalid("regime_map.steps must be at least 2"));
            }
            match r.kind.as_str() {
                "psi" => {
                    let xi = check_range(
                        "regime_map.xi",
                        require(r.xi, "xi", "the psi regime map")?,
                        0.0,
                        1.0,
                    )?;
                    let p1_lo = r.psi1_min.unwrap_or(0.0);
                    let p1_hi = require(r.psi1_max, "psi1_max", "the psi regime map")?;
                    let p2_lo = r.psi2_min.unwrap_or(0.0);
                    let p2_hi = require(r.psi2_max, "psi2_max", "the psi regime map")?;
                    if !(p1_hi > p1_lo && p2_hi > p2_lo) {
                        return Err(invalid("regime_map psi ranges must increase strictly"));
                    }
                    Some(RegimeMap::Psi {
                        xi,
                        psi1: grid(p1_lo, p1_hi, r.steps),
                        psi2: grid(p2_lo, p2_hi, r.steps),
                    })
                }
                "cost" => {
                    if operators.len() != 2 {
                        return Err(invalid("the cost regime map needs two operators"));
                    }
                    let c1_lo = require(r.c1_min_rmb_per_gb, "c1_min_rmb_per_gb", "the cost map")?;
                    let c1_hi = require(r.c1_max_rmb_per_gb, "c1_max_rmb_per_gb", "the cost map")?;
                    let c2_lo = require(r.c2_min_rmb_per_gb, "c2_min_rmb_per_gb", "the cost map")?;
                    let c2_hi = require(r.c2_max_rmb_per_gb, "c2_max_rmb_per_gb", "the cost map")?;
                    if !(c1_hi > c1_lo && c2_hi > c2_lo) {
                        return Err(invalid("regime_map cost ranges must increase strictly"));
                    }
                    Some(RegimeMap::Cost {
                        c1_raw: grid(c1_lo, c1_hi, r.steps),
                        c2_raw: grid(c2_lo, c2_hi, r.steps),
                    })
                }
                other => {
                    return Err(invalid(format!(
                        "regime_map.kind {other:?} is not one of psi, cost"
                    )))
                }
            }
        }
    };

    let format = match (&overrides.format, &file.output) {
        (Some(f), _) => *f,
        (None, Some(o)) => match &o.format {
            Some(s) => OutputFormat::from_str(s).map_err(invalid)?,
            None => OutputFormat::Csv,
        },
        (None, None) => OutputFormat::Csv,
    };
    let path = overrides.out.clone().or_else(|| {
        file.output
            .as_ref()
            .and_then(|o| o.path.as_ref().map(PathBuf::from))
    });

    let theta_max = valuation.theta_max();
    let undercut_step = match file.undercut_step {
        Some(u) => check_range("undercut_step", u, 0.0, theta_max)?,
        None => 1e-6 * theta_max,
    };

    Ok(Scenario {
        demand,
        valuation,
        beta,
        operators,
        sweep,
        regime_map,
        output: OutputSpec { format, path },
        undercut_step,
        unit_mb,
    })
}

fn grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    (0..points)
        .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
beta = 0.8

[demand]
kind = "uniform"
max_gb = 0.04

[valuation]
kind = "uniform"
theta_max_rmb_per_gb = 100.0

[[operator]]
qos = 1.0
cost_rmb_per_gb = 25.0
cap_gb = 0.02

[[operator]]
qos = 0.95
cost_rmb_per_gb = 30.0
cap_gb = 0.02
"#;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario(text, &Overrides::default())
    }

    #[test]
    fn minimal_scenario_resolves_units() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.demand.max_units(), 4);
        assert_eq!(s.operators.len(), 2);
        assert_eq!(s.operators[0].cap, 2);
        // 100 RMB/GB at 10 MB units is 1 RMB per unit.
        assert!((s.valuation.theta_max() - 1.0).abs() < 1e-12);
        assert!((s.operators[0].cost - 0.25).abs() < 1e-12);
        assert!((s.operators[1].cost - 0.30).abs() < 1e-12);
        assert_eq!(s.output.format, OutputFormat::Csv);
        assert!((s.undercut_step - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn missing_beta_is_flagged() {
        let text = MINIMAL.replace("beta = 0.8", "");
        match parse(&text) {
            Err(ScenarioError::Invalid(msg)) => assert!(msg.contains("beta"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn zero_cap_is_flagged() {
        let text = MINIMAL.replacen("cap_gb = 0.02", "cap_gb = 0.0", 1);
        match parse(&text) {
            Err(ScenarioError::Invalid(msg)) => {
                assert!(msg.contains("cap_gb"), "{msg}")
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[typo_section]\nx = 1\n");
        assert!(matches!(parse(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn sweep_grid_must_increase() {
        let text = format!(
            "{MINIMAL}\n[sweep]\nvariable = \"c1_rmb_per_gb\"\nstart = 60.0\nstop = 10.0\npoints = 5\n"
        );
        match parse(&text) {
            Err(ScenarioError::Invalid(msg)) => assert!(msg.contains("increase"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn single_point_sweep_is_allowed() {
        let text = format!(
            "{MINIMAL}\n[sweep]\nvariable = \"c1_rmb_per_gb\"\nstart = 25.0\nstop = 25.0\npoints = 1\n"
        );
        let s = parse(&text).unwrap();
        assert_eq!(s.sweep.unwrap().raw_values, vec![25.0]);
    }

    #[test]
    fn mechanism_strings_resolve() {
        let text = MINIMAL.replace(
            "qos = 0.95",
            "mechanism = \"T\"\nqos = 0.95",
        );
        let s = parse(&text).unwrap();
        assert_eq!(s.operators[0].mechanism, MechanismChoice::Free);
        assert_eq!(
            s.operators[1].mechanism,
            MechanismChoice::Fixed(Mechanism::Traditional)
        );
    }

    #[test]
    fn unit_override_rescales_money_and_volume() {
        let over = Overrides {
            unit_mb: Some(20.0),
            ..Default::default()
        };
        let s = parse_scenario(MINIMAL, &over).unwrap();
        assert_eq!(s.demand.max_units(), 2);
        assert_eq!(s.operators[0].cap, 1);
        assert!((s.valuation.theta_max() - 2.0).abs() < 1e-12);
        assert!((s.operators[0].cost - 0.5).abs() < 1e-12);
    }

    #[test]
    fn preset_fig8_matches_published_setup() {
        let s = load_preset("fig8", &Overrides::default()).unwrap();
        assert_eq!(s.operators.len(), 2);
        assert!((s.operators[0].qos - 1.0).abs() < 1e-12);
        assert!((s.operators[1].qos - 0.91).abs() < 1e-12);
        // c2 = 40 RMB/GB is 0.40 RMB per 10 MB unit.
        assert!((s.operators[1].cost - 0.40).abs() < 1e-12);
        assert!((s.beta - 0.8).abs() < 1e-12);
        assert_eq!(s.operators[0].cap, 100);
        assert_eq!(s.demand.max_units(), 1000);
        assert!((s.demand.mean_units() - 100.0).abs() < 0.1);
        let sweep = s.sweep.as_ref().unwrap();
        assert_eq!(sweep.variable, SweepVariable::Cost1);
        assert!(*sweep.raw_values.first().unwrap() >= 5.0);
        assert!(*sweep.raw_values.last().unwrap() <= 70.0);
    }

    #[test]
    fn all_presets_parse() {
        for name in PRESET_NAMES {
            let s = load_preset(name, &Overrides::default());
            assert!(s.is_ok(), "{name}: {:?}", s.err());
        }
        assert!(matches!(
            load_preset("nope", &Overrides::default()),
            Err(ScenarioError::UnknownPreset(_))
        ));
    }
}
