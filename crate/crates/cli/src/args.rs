use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "coherence",
    version,
    about = "Certify, witness and quantify multilevel coherence"
)]
pub struct Cli {
    /// Suppress progress messages (results are always written).
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Master seed; defaults to $COHERENCE_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the JSON result here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic membership certificates.
    Certify(CertifyArgs),
    /// Robustness of multilevel coherence of a state.
    Rmc(RmcArgs),
    /// Lower bound on the robustness from measured expectation values.
    RmcBound(RmcBoundArgs),
    /// Build, validate or evaluate witnesses.
    #[command(subcommand)]
    Witness(WitnessCommand),
    /// Phase-discrimination performance and the bound it implies.
    PhaseDisc(PhaseDiscArgs),
    /// Reproduce a figure table from simulated data.
    Simulate(SimulateArgs),
    /// Coherence number of a state.
    Classify(ClassifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Criterion {
    Comparison,
    Purity,
    Sufficient,
    Qutrit,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// State: mcs:d=4, nmcs:d=4,p=0.5, mixed:d=4, basis:d=4,i=0, or a matrix JSON file.
    #[arg(long)]
    pub state: String,
    #[arg(long, value_enum)]
    pub criterion: Criterion,
    /// Level for the sufficient-condition check.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dual,
    Primal,
}

#[derive(Debug, Args)]
pub struct RmcArgs {
    #[arg(long)]
    pub state: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Method::Dual)]
    pub method: Method,
    /// Also write the optimal witness (dual method) as witness JSON.
    #[arg(long)]
    pub witness_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RmcBoundArgs {
    /// JSON array of {observable, value, err_lo, err_hi}.
    #[arg(long)]
    pub observations: PathBuf,
    #[arg(long)]
    pub k: usize,
}

#[derive(Debug, Subcommand)]
pub enum WitnessCommand {
    /// Witness I - |psi><psi| / (top-k weight) for a pure state.
    Build {
        #[arg(long)]
        state: String,
        #[arg(long)]
        k: usize,
    },
    /// Check that a matrix is a witness at level k.
    Validate {
        #[arg(long)]
        witness: PathBuf,
        /// Level to check; defaults to the one stored in the file.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Expectation value of a witness on a state.
    Expect {
        #[arg(long)]
        witness: PathBuf,
        #[arg(long)]
        state: String,
    },
}

#[derive(Debug, Args)]
pub struct PhaseDiscArgs {
    #[arg(long)]
    pub state: String,
    /// uniform:d=4, phases:d=4;p@phi;..., or a task JSON file.
    #[arg(long)]
    pub task: String,
    /// Measurement JSON; defaults to the optimal one for the uniform task.
    #[arg(long)]
    pub povm: Option<PathBuf>,
    /// Process fidelity of the phase device for the corrected bound.
    #[arg(long)]
    pub process_fidelity: Option<f64>,
    /// Also solve for the optimal guessing probability.
    #[arg(long)]
    pub optimal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureArg {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub figure: FigureArg,
    /// Shots per setting; accepts forms such as 1e5.
    #[arg(long, value_parser = parse_count)]
    pub shots: Option<u64>,
    /// Monte-Carlo runs for every resampled estimate.
    #[arg(long, value_parser = parse_count)]
    pub mc_runs: Option<u64>,
    /// Comma-separated grid of p values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Number of random observables (observable-count figure).
    #[arg(long)]
    pub observables: Option<usize>,
    /// Use exact expectation values (observable-count figure).
    #[arg(long)]
    pub exact: bool,
    /// Full configuration as JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub state: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

/// Nonnegative integer written either plainly or in float notation.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !x.is_finite() || x < 0.0 || x.fract() != 0.0 || x > 9.0e15 {
        return Err(format!("'{s}' is not a nonnegative integer"));
    }
    Ok(x as u64)
}
