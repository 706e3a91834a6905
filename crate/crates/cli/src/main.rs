use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conewalk::{execute, Config, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "conewalk", version, about = "Monte Carlo checks of limit theorems for random walks in cones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $CONEWALK_OUT, then ./conewalk-out.
    #[arg(long, env = "CONEWALK_OUT")]
    out: Option<PathBuf>,
    /// Replaces the main path count of every simulation section.
    #[arg(long)]
    paths: Option<u64>,
    /// Size of the thread pool; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// κ₀, H₀, κ₁ and the normalization identity.
    Constants(Common),
    /// Exit-time tail exponent and constant.
    Tail(Common),
    /// V̂ on a grid: harmonicity, positivity, monotonicity, growth.
    Harmonic(Common),
    /// Histogram of the conditioned walk against the limit density.
    WeakLimit(Common),
    /// Local probabilities of boxes at distance √n.
    Llt(Common),
    /// Probability of returning to a fixed box.
    Return(Common),
    /// Time-reversal inclusions between thickened cones.
    Duality(Common),
    /// Upper and lower bounds for Gaussian steps.
    Bounds(Common),
    /// Characteristic-function scan of a lattice law.
    Aperiodicity(Common),
    /// Which starting points can reach the deep interior.
    CmuProbe(Common),
    /// Every experiment with a section in the config.
    All(Common),
}

impl Command {
    fn split(self) -> (Option<Experiment>, Common) {
        match self {
            Command::Constants(c) => (Some(Experiment::Constants), c),
            Command::Tail(c) => (Some(Experiment::Tail), c),
            Command::Harmonic(c) => (Some(Experiment::Harmonic), c),
            Command::WeakLimit(c) => (Some(Experiment::WeakLimit), c),
            Command::Llt(c) => (Some(Experiment::Llt), c),
            Command::Return(c) => (Some(Experiment::Return), c),
            Command::Duality(c) => (Some(Experiment::Duality), c),
            Command::Bounds(c) => (Some(Experiment::Bounds), c),
            Command::Aperiodicity(c) => (Some(Experiment::Aperiodicity), c),
            Command::CmuProbe(c) => (Some(Experiment::CmuProbe), c),
            Command::All(c) => (None, c),
        }
    }
}

fn run(cli: Cli) -> Result<i32, Box<dyn std::error::Error>> {
    let (which, common) = cli.command.split();
    let mut cfg = Config::load(&common.config)?;
    cfg.apply(&Overrides { seed: common.seed, paths: common.paths })?;
    let selection = match which {
        Some(e) => vec![e],
        None => Experiment::configured_in(&cfg),
    };
    let out = common.out.unwrap_or_else(|| PathBuf::from("conewalk-out"));
    let summary = execute(&cfg, &selection, &out, common.workers)?;
    for (e, r) in &summary.results {
        match r {
            Ok(o) => {
                println!("{:<13} {}", e.name(), o.report.verdict.as_str());
                for c in o.report.checks.iter().filter(|c| c.verdict != conewalk_core::theorems::Verdict::Pass) {
                    println!("  {} = {} ± {} ({}): {}", c.name, c.value, c.stderr, c.target, c.verdict.as_str());
                }
            }
            Err(msg) => println!("{:<13} error: {msg}", e.name()),
        }
    }
    println!("results in {}", summary.out_dir.display());
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
