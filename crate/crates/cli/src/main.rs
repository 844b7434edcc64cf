use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use randinf_cli::config::{file_hash, Overrides, RunConfig};
use randinf_cli::output::{emit, Format, RunStamp};
use randinf_cli::presets::Preset;
use randinf_cli::{commands, CliResult};

#[derive(Debug, Parser)]
#[command(name = "randinf", version, about = "Design-based inference for randomized experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Replications, resamples or reference draws, depending on the command.
    #[arg(long, global = true)]
    reps: Option<usize>,

    /// Input CSV file.
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Read two-arm files with arms coded 0 (control) and 1 (treated).
    #[arg(long, global = true)]
    zero_one_arms: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw an assignment and write it as CSV.
    Design,
    /// Estimate effects and their uncertainty from an observed dataset.
    Analyze,
    /// Fisher randomization test of a sharp null.
    Frt,
    /// Simulation studies.
    Simulate {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Limit-theorem diagnostics for permutation statistics.
    Diagnose,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match (&cli.config, &cli.command) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Command::Simulate { preset: Some(p) }) => p.config(),
        (None, _) => RunConfig::default(),
    };
    if let (Some(_), Command::Simulate { preset: Some(p) }) = (&cli.config, &cli.command) {
        let preset = p.config();
        cfg.simulate = preset.simulate;
        cfg.seed = cfg.seed.or(preset.seed);
    }
    cfg.apply(Overrides {
        seed: cli.seed,
        alpha: cli.alpha,
        out: cli.out,
        data: cli.data,
        reps: cli.reps,
        zero_one_arms: cli.zero_one_arms,
    });
    let (name, default_format) = match cli.command {
        Command::Design => ("design", Format::Csv),
        Command::Analyze => ("analyze", Format::Json),
        Command::Frt => ("frt", Format::Json),
        Command::Simulate { .. } => ("simulate", Format::Json),
        Command::Diagnose => ("diagnose", Format::Json),
    };
    let output = match cli.command {
        Command::Design => commands::design(&cfg)?,
        Command::Analyze => commands::analyze(&cfg)?,
        Command::Frt => commands::frt(&cfg)?,
        Command::Simulate { .. } => commands::simulate(&cfg)?,
        Command::Diagnose => commands::diagnose(&cfg)?,
    };
    let data_hash = cfg.data.as_deref().map(file_hash).transpose()?;
    let stamp = RunStamp::new(name, cfg.seed(), cfg.hash(), data_hash);
    emit(&output, &stamp, cli.format.unwrap_or(default_format), cfg.out.as_deref())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
