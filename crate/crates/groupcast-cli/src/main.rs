//! `groupcast`: rate computations, grouping search, Monte Carlo campaigns
//! and invariant verification for the user-grouping downlink precoder.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage/config error,
//! 3 numerical error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use groupcast::Error;

#[derive(Parser)]
#[command(name = "groupcast", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-user and sum rates for one channel and scheme.
    Rate(RateArgs),
    /// Search for a user grouping and report it with powers and trace.
    Group(GroupArgs),
    /// Monte Carlo rate-distribution campaign over Rayleigh channels.
    Montecarlo(MonteCarloArgs),
    /// Run the invariant suites on one channel instance.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct ChannelArgs {
    /// Channel matrix file (JSON).
    #[arg(long, conflicts_with_all = ["builtin_hex", "rayleigh"])]
    channel: Option<PathBuf>,
    /// Use the built-in ill-conditioned 6x6 example channel.
    #[arg(long, conflicts_with = "rayleigh")]
    builtin_hex: bool,
    /// Draw a seeded Rayleigh channel with NU users and NT antennas.
    #[arg(long, num_args = 2, value_names = ["NU", "NT"])]
    rayleigh: Option<Vec<usize>>,
    /// Master seed for channel draws and random groupings.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output path (stdout when absent). `montecarlo` appends
    /// `.samples.<ext>` and `.summary.<ext>` to this base.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Zf,
    Random,
    Guga,
    Jpauga,
    Brute,
    Zfdp,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Transmit SNR in dB; linear total power is 10^(snr_db/10).
    #[arg(long)]
    snr_db: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Zf)]
    scheme: SchemeArg,
    /// Group size (ignored by zf and zfdp).
    #[arg(long, default_value_t = 2)]
    g: usize,
    #[arg(long, default_value_t = 10)]
    max_itr: usize,
    #[arg(long, default_value_t = 1e-4)]
    rel_threshold: f64,
    /// Enumeration budget for brute-force search.
    #[arg(long, default_value_t = 100_000)]
    budget: u128,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum GroupAlgo {
    Guga,
    Jpauga,
    Brute,
    Random,
}

#[derive(Args)]
struct GroupArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long)]
    snr_db: f64,
    #[arg(long, value_enum, default_value_t = GroupAlgo::Jpauga)]
    algo: GroupAlgo,
    #[arg(long, default_value_t = 2)]
    g: usize,
    #[arg(long, default_value_t = 10)]
    max_itr: usize,
    #[arg(long, default_value_t = 1e-4)]
    rel_threshold: f64,
    #[arg(long, default_value_t = 100_000)]
    budget: u128,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// Channel dimensions for the per-trial Rayleigh draws.
    #[arg(long, num_args = 2, value_names = ["NU", "NT"], default_values_t = [6, 6])]
    rayleigh: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    snr_db: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Zf)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 2)]
    g: usize,
    #[arg(long, default_value_t = 10)]
    max_itr: usize,
    #[arg(long, default_value_t = 1e-4)]
    rel_threshold: f64,
    #[arg(long, default_value_t = 100_000)]
    budget: u128,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    /// Group sizes to verify; defaults to every divisor of n_users.
    #[arg(long)]
    g: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    budget: u128,
    #[command(flatten)]
    output: OutputArgs,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::BadDimensions(_)
        | Error::ParseError(_)
        | Error::InvalidGrouping(_)
        | Error::BudgetExceeded(_)
        | Error::Io(_) => 2,
        Error::RankDeficient(_)
        | Error::NotPositiveDefinite(_)
        | Error::PowerMismatch(_)
        | Error::EmptyGains
        | Error::DomainError(_)
        | Error::TooFewSamples(_)
        | Error::StaleCache(_) => 3,
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("GROUPCAST_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rate(args) => commands::cmd_rate(&args),
        Command::Group(args) => commands::cmd_group(&args),
        Command::Montecarlo(args) => commands::cmd_montecarlo(&args),
        Command::Verify(args) => return commands::cmd_verify(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
