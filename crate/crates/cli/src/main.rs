//! `harmlil`: batch driver for weights, fields, averages, martingales, the counterexample
//! construction and the acceptance suites.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 for usage or
//! configuration errors.

mod commands;
mod config;
mod output;
mod plot;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, RawConfig};
use output::Run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Run(#[from] harmlil_core::Error),
}

impl CliError {
    pub fn config(e: harmlil_core::Error) -> CliError {
        CliError::Config(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "harmlil", version, about = "Weighted boundary averages of harmonic functions, by experiment")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Quadrature tolerance.
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,
    /// `section.key=value`, applied after the file; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VAL")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scale sequence, doubling constant and multiplier band of the weight.
    Weights {
        #[command(subcommand)]
        action: WeightsAction,
    },
    /// Evaluate the field on a grid with its growth norm and Bloch seminorm.
    Field {
        #[command(subcommand)]
        action: FieldAction,
    },
    /// Profiles of the weighted average over the δ grid.
    Average {
        #[command(subcommand)]
        action: AverageAction,
    },
    /// Surrogate dyadic martingale sampled from the Bloch approximant.
    Martingale {
        #[command(subcommand)]
        action: BuildCheck,
    },
    /// Stopping-time construction: snapshot, or every structural and measure check.
    Counterexample {
        #[command(subcommand)]
        action: BuildCheck,
    },
    /// LIL-normalised ratios against ten times the growth norm.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// SVG line plot of CSV columns.
    Plot(PlotArgs),
    /// Run an acceptance criterion by number or name, or `all`.
    Suite { name: String },
}

#[derive(Subcommand, Debug)]
enum WeightsAction {
    Check,
}

#[derive(Subcommand, Debug)]
enum FieldAction {
    Build,
}

#[derive(Subcommand, Debug)]
enum AverageAction {
    Profile,
}

#[derive(Subcommand, Debug)]
enum ExperimentAction {
    Lil,
}

#[derive(Subcommand, Debug)]
enum BuildCheck {
    Build,
    Check,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// CSV table with a header row.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "COLUMN")]
    x: String,
    /// Repeatable; one line per column.
    #[arg(long, value_name = "COLUMN", required = true)]
    y: Vec<String>,
    #[arg(long, default_value = "identity", value_name = "identity|log10|log-inverse")]
    x_map: plot::XMap,
    /// Defaults to `<out>/<input stem>.svg`.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

fn load_config(g: &Global) -> Result<ExperimentConfig, CliError> {
    let mut raw = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RawConfig::parse(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
                e => e,
            })?
        }
        None => RawConfig::default(),
    };
    for o in &g.overrides {
        raw.apply_override(o)?;
    }
    if let Some(s) = g.seed {
        raw.set("", "seed", s.to_string());
    }
    if let Some(t) = g.tol {
        raw.set("", "tol", t.to_string());
    }
    if let Some(o) = &g.out {
        raw.set("", "out", o.display().to_string());
    }
    ExperimentConfig::from_raw(raw)
}

fn plot(args: &PlotArgs, out: &std::path::Path) -> Result<bool, CliError> {
    let text = fs::read(&args.input).map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let series = plot::read_series(&text, &args.x, &args.y, args.x_map)?;
    let svg = plot::render(&series, &args.x_map.label(&args.x), &args.y);
    let path = match &args.output {
        Some(p) => p.clone(),
        None => {
            let stem = args.input.file_stem().map_or("plot".into(), |s| s.to_string_lossy().into_owned());
            fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            out.join(format!("{stem}.svg"))
        }
    };
    fs::write(&path, svg).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(true)
}

type Body = fn(&ExperimentConfig, &mut Run) -> Result<(), CliError>;

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let cfg = load_config(&cli.global)?;
    let (name, body): (String, Body) = match &cli.command {
        Command::Plot(args) => return plot(args, &cfg.out),
        Command::Suite { name } => {
            commands::criterion_ids(name)?;
            let mut run = Run::new(&cfg.out, &format!("suite {name}"), cfg.to_text())?;
            commands::suite(&cfg, name, &mut run)?;
            return run.finish();
        }
        Command::Weights { action: WeightsAction::Check } => ("weights check".into(), commands::weights_check),
        Command::Field { action: FieldAction::Build } => ("field build".into(), commands::field_build),
        Command::Average { action: AverageAction::Profile } => ("average profile".into(), commands::average_profile),
        Command::Martingale { action: BuildCheck::Build } => ("martingale build".into(), commands::martingale_build),
        Command::Martingale { action: BuildCheck::Check } => ("martingale check".into(), commands::martingale_check),
        Command::Counterexample { action: BuildCheck::Build } => {
            ("counterexample build".into(), commands::counterexample_build)
        }
        Command::Counterexample { action: BuildCheck::Check } => {
            ("counterexample check".into(), commands::counterexample_check)
        }
        Command::Experiment { action: ExperimentAction::Lil } => ("experiment lil".into(), commands::experiment_lil),
    };
    let mut run = Run::new(&cfg.out, &name, cfg.to_text())?;
    body(&cfg, &mut run)?;
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
