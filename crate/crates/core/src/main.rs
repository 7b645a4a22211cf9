use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tstmle::cli::{parse_config, run, Command, RunConfig};
use tstmle::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "tstmle", version, about = "TMLE of context-specific causal parameters from a single time series")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single time-point TMLE (ATE or treatment-specific mean) on a CSV series.
    EstimateAte(Common),
    /// Sequential-regression TMLE under a stochastic intervention on a CSV series.
    EstimateLtmle(Common),
    /// One adaptive-design trial on a simulation DGP.
    AdaptiveTrial(Common),
    /// Monte Carlo evaluation of a simulation scenario.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    draws: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn resolve(command: Command, args: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let (cfg, recorded) = parse_config(path)?;
            if let Some(c) = recorded.filter(|&c| c != command) {
                return Err(Error::Config(format!("manifest was written by `{}`, not `{}`", c.name(), command.name())));
            }
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(d) = args.draws {
        cfg.draws = d;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::EstimateAte(a) => (Command::EstimateAte, a),
        Cmd::EstimateLtmle(a) => (Command::EstimateLtmle, a),
        Cmd::AdaptiveTrial(a) => (Command::AdaptiveTrial, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
    };
    match resolve(command, args).and_then(|cfg| run(command, &cfg)) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
