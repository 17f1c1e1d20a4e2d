//! `jmeas`: command-line front end for the joint measurability toolkit.
//!
//! Machine-readable results go to stdout (or `--out`); progress and logs go
//! to stderr as JSON lines.

mod checkpoint;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use jmeas_core::sdp::DEFAULT_SDP_TOL;

/// Exit codes shared by every command.
pub mod exit {
    pub const COMPATIBLE: u8 = 0;
    pub const INCOMPATIBLE: u8 = 1;
    pub const INDETERMINATE: u8 = 2;
    pub const MALFORMED: u8 = 64;
    pub const FAILURE: u8 = 70;
}

#[derive(Parser, Debug)]
#[command(name = "jmeas", version, about = "Joint measurability, parent complexity and steering tools")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// SDP tolerance.
    #[arg(long, global = true, env = "JMEAS_TOL", default_value_t = DEFAULT_SDP_TOL)]
    pub tol: f64,
    /// Seed for stochastic commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially, 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decide compatibility of a measurement set.
    Check {
        input: PathBuf,
    },
    /// Smallest parent support by exhaustive enumeration.
    MinParent(MinParentArgs),
    /// Shrink a parent's support by conic Caratheodory steps.
    Reduce {
        input: PathBuf,
        /// Parent to reduce; extracted from the compatibility SDP if omitted.
        #[arg(long)]
        parent: Option<PathBuf>,
        /// Keep reducing below the dimension bound while possible.
        #[arg(long)]
        greedy: bool,
    },
    /// Complexity histogram of boundary points of the compatible set.
    Sample {
        /// `d,m,o`.
        #[arg(long, value_parser = parse_shape)]
        shape: (usize, usize, usize),
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, value_enum, default_value_t = SampleFormat::Csv)]
        format: SampleFormat,
    },
    /// Steering conversions with round-trip residuals.
    Steer {
        /// Measurement set, or an assemblage with `--from-assemblage`.
        input: PathBuf,
        /// Bob's state; maximally mixed if omitted.
        #[arg(long, conflicts_with = "from_assemblage")]
        state: Option<PathBuf>,
        #[arg(long)]
        from_assemblage: bool,
    },
    /// Probabilistic parents.
    #[command(subcommand)]
    Prob(ProbCommand),
    /// Write named measurement sets and parents.
    Examples {
        #[arg(long, value_enum, required_unless_present = "list")]
        name: Option<ExampleName>,
        #[arg(long, default_value_t = 0.6)]
        eta: f64,
        /// Outcome count of the random parent for `random-children`.
        #[arg(long, default_value_t = 6)]
        outcomes: usize,
        #[arg(long)]
        list: bool,
    },
}

#[derive(Args, Debug)]
pub struct MinParentArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub lower: Option<usize>,
    #[arg(long)]
    pub upper: Option<usize>,
    /// Test only supports whose index is `K-1 mod N`.
    #[arg(long)]
    pub shard: Option<String>,
    /// Directory holding resumable checkpoints.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ProbCommand {
    /// The three-outcome noisy Pauli construction at one visibility.
    Construct {
        #[arg(long)]
        eta: f64,
    },
    /// Largest visibility at which the construction stays valid.
    Threshold {
        #[arg(long, default_value_t = 0.5)]
        lo: f64,
        #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
        hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Alternating search for a size-k probabilistic parent.
    Search {
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        restarts: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Csv,
    Json,
    Gnuplot,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleName {
    NoisyPauli,
    NoisyPauliParent,
    NoisyPauliProbParent,
    QutritTriple,
    QutritParent,
    QutritCertificates,
    Trine,
    TrineParent,
    TrineChildren,
    RandomChildren,
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [d, m, o] if d > 0 && m > 0 && o > 0 => Ok((d, m, o)),
        _ => Err(format!("expected three positive integers d,m,o, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(exit::MALFORMED),
            };
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            commands::log("error", serde_json::json!({ "message": e.to_string() }));
            ExitCode::from(e.code())
        }
    }
}
