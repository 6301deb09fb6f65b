use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bdris_secopt::config::{load_config, parse_csi, parse_format, parse_schemes, parse_sweep};
use bdris_secopt::harness::{run_experiment, write_results, write_table, CsiSpec, ExperimentSpec};
use bdris_secopt::{Error, Result};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(
    name = "bdris-secopt",
    version,
    about = "Secrecy-rate optimization for BD-RIS MIMO wiretap links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write one row per (scheme, sweep value, trial).
    Run(RunArgs),
    /// Check a configuration file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Comma-separated list of fc, gcN, dris, random, wo, upper.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Axis and values, e.g. m=32,64,128.
    #[arg(long)]
    sweep: Option<String>,
    /// perfect or imperfect.
    #[arg(long)]
    csi: Option<String>,
    /// Channel-uncertainty levels; implies imperfect CSI.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long)]
    multistart: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn cli_error(flag: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        path: format!("--{flag}"),
        msg: msg.into(),
    }
}

/// An unreadable configuration file counts as a configuration error.
fn load(path: &std::path::Path) -> Result<ExperimentSpec> {
    load_config(path).map_err(|e| match e {
        Error::Io { path, source } => Error::Config {
            path: path.display().to_string(),
            msg: source.to_string(),
        },
        e => e,
    })
}

fn parse_sweep_arg(arg: &str) -> Result<bdris_secopt::harness::Sweep> {
    let (name, values) = arg
        .split_once('=')
        .ok_or_else(|| cli_error("sweep", "expected name=v1,v2,..."))?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| cli_error("sweep", format!("{v:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    parse_sweep(name.trim(), values)
}

fn apply_overrides(spec: &mut ExperimentSpec, a: RunArgs) -> Result<()> {
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.trials {
        spec.trials = v;
    }
    if let Some(v) = a.out {
        spec.output = Some(v);
    }
    if let Some(v) = a.format {
        spec.format = parse_format(&v)?;
    }
    if let Some(v) = a.schemes {
        spec.schemes = parse_schemes(&v)?;
    }
    if let Some(v) = a.sweep {
        spec.sweep = Some(parse_sweep_arg(&v)?);
    }
    match (a.csi, a.delta) {
        (Some(mode), delta) => {
            let delta = delta.or(match &spec.csi {
                CsiSpec::Imperfect(d) => Some(d.clone()),
                CsiSpec::Perfect => None,
            });
            spec.csi = parse_csi(&mode, delta)?;
        }
        (None, Some(delta)) => spec.csi = CsiSpec::Imperfect(delta),
        (None, None) => {}
    }
    if let Some(v) = a.multistart {
        spec.multistart = v;
    }
    if let Some(v) = a.jobs {
        spec.jobs = v;
    }
    spec.validate()
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Validate { config } => {
            load(&config)?.validate()?;
            println!("{}: ok", config.display());
            Ok(0)
        }
        Command::Run(args) => {
            let mut spec = load(&args.config)?;
            apply_overrides(&mut spec, args)?;
            let rows = run_experiment(&spec)?;
            match &spec.output {
                Some(path) => write_results(&rows, path, spec.format)?,
                None => write_table(&rows, io::stdout().lock(), spec.format)?,
            }
            let exhausted = rows.iter().filter(|r| r.budget_exhausted()).count();
            if exhausted > 0 {
                eprintln!("warning: {exhausted} run(s) hit the iteration budget");
                return Ok(EXIT_BUDGET);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            })
        }
    }
}
