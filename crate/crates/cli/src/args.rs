use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use markov_hoeffding::bounds::{BoundForm, Tail};
use markov_hoeffding::oracle::Suite;

#[derive(Debug, Parser)]
#[command(name = "mchoeff", version, about = "Hoeffding bounds for Markov chains with a spectral gap")]
pub struct Cli {
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads for verify and simulate (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Upper, lower or two-sided deviation bound for given (mu, lambda, eps, n).
    Bound(BoundArgs),
    /// Smallest n whose bound is at most delta.
    InvertN(InvertNArgs),
    /// Deviation eps at which the bound equals delta.
    InvertEps(InvertEpsArgs),
    /// Stationary law and spectral gap of a chain file.
    Gap(GapArgs),
    /// Exact randomized verification suites.
    Verify(VerifyArgs),
    /// Monte Carlo tail experiment compared against the bounds.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailArg {
    Upper,
    Lower,
    TwoSided,
}

impl From<TailArg> for Tail {
    fn from(t: TailArg) -> Self {
        match t {
            TailArg::Upper => Tail::Upper,
            TailArg::Lower => Tail::Lower,
            TailArg::TwoSided => Tail::TwoSided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Sharp,
    Loose,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SingleForm {
    Sharp,
    Loose,
}

impl From<SingleForm> for BoundForm {
    fn from(f: SingleForm) -> Self {
        match f {
            SingleForm::Sharp => BoundForm::Sharp,
            SingleForm::Loose => BoundForm::Loose,
        }
    }
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Stationary mean of f, in [0, 1].
    #[arg(long, allow_hyphen_values = true)]
    pub mu: f64,
    /// Operator norm ||P - Pi|| in L2(pi), in [0, 1).
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    /// Exponent p of the start-density norm; `inf` is accepted.
    #[arg(long)]
    pub p: Option<f64>,
    /// ||d nu / d pi||_p (defaults to 1 when --p is given).
    #[arg(long, requires = "p")]
    pub nu_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub eps: f64,
    #[arg(long)]
    pub n: u64,
    #[command(flatten)]
    pub bias: BiasArgs,
    #[arg(long, value_enum, default_value = "upper")]
    pub tail: TailArg,
    #[arg(long, value_enum, default_value = "both")]
    pub form: FormArg,
    /// Report the loose bound alone when mu is 0 or 1.
    #[arg(long)]
    pub allow_degenerate: bool,
}

#[derive(Debug, Args)]
pub struct InvertNArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub eps: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    #[command(flatten)]
    pub bias: BiasArgs,
    #[arg(long, value_enum, default_value = "upper")]
    pub tail: TailArg,
    #[arg(long, value_enum, default_value = "sharp")]
    pub form: SingleForm,
}

#[derive(Debug, Args)]
pub struct InvertEpsArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub n: u64,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    #[command(flatten)]
    pub bias: BiasArgs,
    #[arg(long, value_enum, default_value = "upper")]
    pub tail: TailArg,
    #[arg(long, value_enum, default_value = "sharp")]
    pub form: SingleForm,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    /// JSON file `{"P": [[...]], "f": [...]}`.
    #[arg(long)]
    pub chain: PathBuf,
    /// Also report the second eigenvalue of a reversible kernel.
    #[arg(long)]
    pub reversible: bool,
    /// Print the estimate and exit 0 even when lambda >= 1.
    #[arg(long)]
    pub allow_violation: bool,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse::<Suite>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// l1, glowny, mp1, corollary, theorem2 or all.
    #[arg(long, value_parser = parse_suite)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per suite.
    #[arg(long, default_value_t = 25)]
    pub instances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChainKind {
    Finite,
    Doeblin,
    Ar1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FKind {
    IndicatorPositive,
    AffineClamp,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment JSON: one object or an array of objects.
    #[arg(long, conflicts_with_all = ["chain", "shipped"])]
    pub config: Option<PathBuf>,
    /// Run the built-in experiment matrix.
    #[arg(long)]
    pub shipped: bool,
    #[arg(long, value_enum)]
    pub chain: Option<ChainKind>,
    /// Chain file for `--chain finite`; its f is used unless --f is given.
    #[arg(long)]
    pub chain_file: Option<PathBuf>,
    /// Hold probability for `--chain doeblin`.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Stationary sampler id for `--chain doeblin`: uniform, std_normal, exponential.
    #[arg(long)]
    pub base: Option<String>,
    /// Autoregression coefficient for `--chain ar1`.
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub f: Option<FKind>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub replicates: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimate mu by sampling when it has no closed form.
    #[arg(long)]
    pub estimate_mu: bool,
    /// Append result rows to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
