mod config;
mod error;
mod plot;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::stages::Context;

#[derive(Parser, Debug)]
#[command(name = "tripinfer", version, about = "Trip-purpose inference for GPS staypoints")]
struct Cli {
    /// Sectioned TOML run configuration; every key has a default
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (overrides `output_dir`)
    #[arg(short, long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed (overrides `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads, 0 for all cores (overrides `workers`)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Pings CSV (overrides `inputs.pings`)
    #[arg(long, global = true, value_name = "FILE")]
    pings: Option<PathBuf>,

    /// POI CSV (overrides `inputs.pois`)
    #[arg(long, global = true, value_name = "FILE")]
    pois: Option<PathBuf>,

    /// Reference statistics file (overrides `inputs.reference`)
    #[arg(long, global = true, value_name = "FILE")]
    reference: Option<PathBuf>,

    /// Pipeline parameter file such as params_final.toml (overrides `inputs.params`)
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,

    /// More log output (-v debug, -vv trace)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only warnings and errors
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with planted anchors
    Synth {
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        days: Option<u32>,
    },
    /// Extract staypoints from pings
    Extract,
    /// Build semantic zones from POIs
    Zones,
    /// Label every staypoint with an activity and confidence
    Infer,
    /// Compare labeled staypoints with the reference statistics
    Evaluate,
    /// Run the three-phase parameter calibration
    Calibrate {
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
    },
    /// Measure label stability under positional noise and POI deletion
    Robustness,
    /// Write CSV series for distribution overlays and stability bars
    PlotData,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &cli.out {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if let Some(v) = &cli.pings {
        cfg.inputs.pings = Some(v.clone());
    }
    if let Some(v) = &cli.pois {
        cfg.inputs.pois = Some(v.clone());
    }
    if let Some(v) = &cli.reference {
        cfg.inputs.reference = Some(v.clone());
    }
    if let Some(v) = &cli.params {
        cfg.inputs.params = Some(v.clone());
    }
    match cli.command {
        Command::Synth { agents, days } => {
            if let Some(v) = agents {
                cfg.synth.agents = v;
            }
            if let Some(v) = days {
                cfg.synth.days = v;
            }
        }
        Command::Calibrate { generations, population } => {
            if let Some(v) = generations {
                cfg.calibration.nsga.generations = v;
            }
            if let Some(v) = population {
                cfg.calibration.nsga.population = v;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    }
    let ctx = Context::new(cfg)?;
    log::debug!("config hash {}", ctx.provenance.config_hash);
    match cli.command {
        Command::Synth { .. } => stages::synth(&ctx),
        Command::Extract => stages::extract(&ctx),
        Command::Zones => stages::zones(&ctx),
        Command::Infer => stages::infer(&ctx),
        Command::Evaluate => stages::evaluate(&ctx),
        Command::Calibrate { .. } => stages::calibrate(&ctx),
        Command::Robustness => stages::robustness(&ctx),
        Command::PlotData => plot::plot_data(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
