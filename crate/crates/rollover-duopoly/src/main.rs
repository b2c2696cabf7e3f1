use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rollover_duopoly::demand::{expected_overage, simulate_rollover, Mechanism};
use rollover_duopoly::report;
use rollover_duopoly::scenario::{
    load_preset, load_scenario, OutputFormat, Overrides, Scenario, PRESET_NAMES,
};
use rollover_duopoly::sweep::{run_point, run_regime_map, run_sweep, SweepRow};

/// Equilibrium engine for competing data plans with rollover.
#[derive(Parser)]
#[command(name = "rollover-duopoly", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the scenario at its base parameters
    Solve(RunArgs),
    /// Run the scenario's one-dimensional parameter sweep
    Sweep(RunArgs),
    /// Run the scenario's two-dimensional regime map
    Regimes(RunArgs),
    /// List the built-in scenario presets
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a scenario file
    #[arg(long, conflicts_with = "preset", value_name = "PATH")]
    scenario: Option<PathBuf>,

    /// Name of a built-in preset (see `presets`)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,

    /// Output format, overriding the scenario file
    #[arg(long, value_enum)]
    format: Option<FormatArg>,

    /// Write output here instead of the scenario's path or stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Data-unit size in megabytes, overriding the scenario file
    #[arg(long, value_name = "MB")]
    unit_mb: Option<f64>,

    /// Worker threads (defaults to all cores)
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,

    /// Cross-check each rollover chain by simulation with this RNG seed,
    /// reporting to stderr
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> OutputFormat {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

enum Verb {
    Solve,
    Sweep,
    Regimes,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cli = Cli::parse();
    let (verb, args) = match cli.command {
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            return Ok(());
        }
        Command::Solve(a) => (Verb::Solve, a),
        Command::Sweep(a) => (Verb::Sweep, a),
        Command::Regimes(a) => (Verb::Regimes, a),
    };

    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()?;
    }

    let overrides = Overrides {
        unit_mb: args.unit_mb,
        format: args.format.map(Into::into),
        out: args.out.clone(),
    };
    let scenario = match (&args.scenario, &args.preset) {
        (Some(path), None) => load_scenario(path, &overrides)?,
        (None, Some(name)) => load_preset(name, &overrides)?,
        _ => return Err("pass exactly one of --scenario <path> or --preset <name>".into()),
    };

    if let Some(seed) = args.seed {
        chain_check(&scenario, seed);
    }

    let format = scenario.output.format;
    let text = match verb {
        Verb::Solve => render_rows(&run_point(&scenario)?, format),
        Verb::Sweep => render_rows(&run_sweep(&scenario)?, format),
        Verb::Regimes => {
            let map = run_regime_map(&scenario)?;
            match format {
                OutputFormat::Csv => report::map_rows_to_csv(&map),
                OutputFormat::Json => report::map_rows_to_json(&map),
            }
        }
    };

    match &scenario.output.path {
        Some(path) => {
            std::fs::write(path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn render_rows(rows: &[SweepRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => report::sweep_rows_to_csv(rows),
        OutputFormat::Json => report::sweep_rows_to_json(rows),
    }
}

/// Simulates each operator's rollover chain and compares the sampled
/// overage against the stationary-distribution value.
fn chain_check(scenario: &Scenario, seed: u64) {
    const MONTHS: usize = 200_000;
    for (i, op) in scenario.operators.iter().enumerate() {
        let label = format!("operator {}", i + 1);
        let analytic = match expected_overage(&scenario.demand, op.cap, Mechanism::Rollover) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("{label}: rollover check skipped ({e})");
                continue;
            }
        };
        match simulate_rollover(&scenario.demand, op.cap, MONTHS, seed.wrapping_add(i as u64)) {
            Ok(mc) => {
                let gap = mc.avg_overage - analytic;
                let score = if mc.se_overage > 0.0 { gap / mc.se_overage } else { 0.0 };
                eprintln!(
                    "{label}: simulated overage {:.6} vs stationary {:.6} over {} months ({:+.2} se, seed {})",
                    mc.avg_overage, analytic, mc.months, score, seed.wrapping_add(i as u64),
                );
            }
            Err(e) => eprintln!("{label}: rollover simulation failed ({e})"),
        }
    }
}
