//! `multiphase` command-line tool.
//!
//! Subcommands `bounds`, `table1`, `measure`, `simulate` write their data
//! files to the output directory (`--out-dir`, else `$MULTIPHASE_OUT_DIR`,
//! else the working directory), each with a `*.manifest.json` sidecar;
//! `replay` regenerates a file from its manifest.
//!
//! Exit codes: 0 success, 1 I/O, 2 usage or invalid input, 3 numerical
//! failure, 4 invariant violation.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use multiphase::reparam::Parametrization;
use multiphase::strategies::ResourceKind;

use crate::output::{write_outputs, RunManifest, OUT_DIR_ENV};

#[derive(Parser, Debug)]
#[command(name = "multiphase", version, about = "Multiphase estimation bounds without a phase reference")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key = value file with default flags (command-line flags win)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, env = OUT_DIR_ENV, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Shortest round-trip floats in CSV output instead of 12 digits
    #[arg(long, global = true)]
    pub full_precision: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Optimal allocation, bound and sequential baseline for one cost
    Bounds(BoundsArgs),
    /// Simultaneous vs sequential minimum total variances at E = N = 1
    Table1(Table1Args),
    /// Build a measurement set and compare its CFIM limit to the QFIM
    Measure(MeasureArgs),
    /// Monte-Carlo maximum-likelihood run against H⁻¹/M
    Simulate(SimulateArgs),
    /// Regenerate a data file from its manifest
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bounds(_) => "bounds",
            Command::Table1(_) => "table1",
            Command::Measure(_) => "measure",
            Command::Simulate(_) => "simulate",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SetKind {
    Humphreys,
    Ghz,
    Hadamard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeKind {
    /// Weights (√d, 1, …, 1)
    OptimalCommon,
    /// Equal weights
    Ghz,
}

#[derive(Args, Debug, Clone)]
pub struct BoundsArgs {
    /// Number of independent relative phases
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value = "classical")]
    pub resource: ResourceKind,
    #[arg(long, default_value = "common")]
    pub cost: Parametrization,
    /// Mean photon number (classical); default 1
    #[arg(long)]
    pub energy: Option<f64>,
    /// Photon number (quantum); default 1
    #[arg(long)]
    pub photons: Option<u32>,
    /// Cost weights: d for common, d+1 for ring, C(d+1,2) for all-pairs
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct Table1Args {
    #[arg(long, default_value_t = 8)]
    pub d_max: usize,
}

#[derive(Args, Debug, Clone)]
pub struct MeasureArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub photons: u32,
    #[arg(long, value_enum, default_value_t = SetKind::Ghz)]
    pub set: SetKind,
    /// Offsets for the CFIM extrapolation
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub photons: u32,
    #[arg(long, value_enum, default_value_t = SetKind::Ghz)]
    pub set: SetKind,
    /// Probe; defaults to the one the set is built for
    #[arg(long, value_enum)]
    pub probe: Option<ProbeKind>,
    #[arg(long, default_value_t = 10_000)]
    pub shots: u64,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// True δ₀,₁ … δ₀,d in radians; default 0.05·(1..d)/d
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub offsets: Option<Vec<f64>>,
    /// Ascending shot counts for the 1/M scaling file
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<u64>>,
    /// Also write per-trial estimates and counts
    #[arg(long)]
    pub per_trial: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Maps a failure to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<clap::Error>() {
        return e.exit_code();
    }
    if let Some(e) = err.downcast_ref::<multiphase::Error>() {
        return match e {
            multiphase::Error::InvariantViolation(_) => 4,
            e if e.is_numerical() => 3,
            _ => 2,
        };
    }
    if err.downcast_ref::<commands::UsageError>().is_some() {
        return 2;
    }
    1
}

/// Arguments worth recording in a manifest: everything after the program
/// name except output-location flags.
fn reproducible_args(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--out-dir" {
            i += 2;
            continue;
        }
        if !a.starts_with("--out-dir=") {
            out.push(a.clone());
        }
        i += 1;
    }
    out
}

/// Parses `argv` (program name first), runs the command and writes its
/// files. Returns the paths written.
pub fn execute(argv: Vec<String>) -> anyhow::Result<Vec<PathBuf>> {
    let mut argv = argv;
    let file = config::take_config_flag(&mut argv)?;
    let argv = config::merge(argv, file.as_deref())?;
    let cli = Cli::try_parse_from(&argv)?;
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));

    if let Command::Replay(r) = &cli.command {
        let manifest = RunManifest::read(&r.manifest)?;
        if manifest.command == "replay" {
            return Err(commands::UsageError("a manifest cannot point at replay".into()).into());
        }
        let mut again = vec![argv[0].clone()];
        again.extend(manifest.argv.iter().cloned());
        again.push(format!("--out-dir={}", out_dir.display()));
        return execute(again);
    }

    let recorded = reproducible_args(&argv);
    let out = commands::run(&cli.command, cli.full_precision)?;
    for msg in &out.messages {
        println!("{msg}");
    }
    let paths = write_outputs(&out_dir, &out.files, cli.command.name(), &recorded, out.seed)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(paths)
}

/// Entry point for the binary.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    match execute(argv) {
        Ok(_) => 0,
        Err(err) => {
            if let Some(e) = err.downcast_ref::<clap::Error>() {
                let _ = e.print();
            } else {
                eprintln!("error: {err:#}");
            }
            exit_code(&err)
        }
    }
}
