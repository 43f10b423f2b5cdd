use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nnmilp::harness::{self, BestKnown, ExperimentConfig, HarnessError};

/// Model-based optimization experiments with MILP-solved surrogates.
#[derive(Parser)]
#[command(name = "nnmilp", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Override the worker count from the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score table across run directories (one algorithm each).
    Score {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Primal gap of each trial's best value.
    Gap {
        dir: PathBuf,
        /// A number, or `from-instance` to read it from the problem file.
        #[arg(long, value_parser = parse_best_known)]
        best_known: BestKnown,
    },
    /// Write mean best-reward curves for plotting.
    Plotdata { dir: PathBuf },
}

fn parse_best_known(s: &str) -> Result<BestKnown, String> {
    s.parse()
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_validation() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { config, workers } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| match e {
                HarnessError::Io(io) => Failure::Usage(format!("{}: {io}", config.display())),
                other => other.into(),
            })?;
            cfg.apply_env();
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let summary = harness::run_experiment(&cfg)?;
            println!("{} {} -> {}", summary.manifest.problem, cfg.algorithm.as_str(), summary.dir.display());
            for t in &summary.trials {
                let c = t.curve();
                println!(
                    "trial {:>3} seed {:>20} evaluations {:>5} best {}",
                    t.trial,
                    t.seed,
                    c.len(),
                    c.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Cmd::Score { dirs, out } => {
            let table = harness::score_dirs(&dirs)?;
            let csv = table.to_csv();
            print!("{csv}");
            if let Some(p) = out {
                std::fs::write(&p, &csv).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            }
        }
        Cmd::Gap { dir, best_known } => {
            let rows = harness::gap_report(&dir, best_known)?;
            print!("{}", harness::gap_csv(&rows));
        }
        Cmd::Plotdata { dir } => {
            for p in harness::plotdata(&dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
