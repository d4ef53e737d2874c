use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lifelong::bench::SyntheticParams;
use lifelong::experiment::{cmd_gen, cmd_report, cmd_run, ExperimentSpec, RunOptions};
use lifelong::selftest::{run_suites, SelfTestConfig};
use lifelong::Error;

#[derive(Parser)]
#[command(version, about = "Lifelong relation detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strategy x seed grid of an experiment spec.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the spec's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid cells run concurrently; 0 means one per core.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Aggregate the run records under a results directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Check gradients, projections and selection against slow oracles.
    Selftest {
        /// Tolerance handed to the GEM solver.
        #[arg(long)]
        qp_tol: Option<f64>,
    },
    /// Write a synthetic benchmark to disk.
    Gen {
        /// TOML file of synthetic parameters; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            jobs,
            seed_offset,
        } => {
            let mut spec = match ExperimentSpec::from_file(&config) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            if let Some(out) = out {
                spec.out = out;
            }
            match cmd_run(&spec, RunOptions { jobs, seed_offset }) {
                Ok(o) => {
                    println!(
                        "{} cells run, {} reused, {} failed; results in {}",
                        o.ran,
                        o.skipped,
                        o.failed.len(),
                        spec.out.display()
                    );
                    for (path, err) in &o.failed {
                        eprintln!("failed: {}: {err}", path.display());
                    }
                    if o.failed.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Report { out } => match cmd_report(&out) {
            Ok(r) => {
                print!("{}", r.summary_table());
                for f in &r.skipped {
                    eprintln!("skipped incomplete record {}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Selftest { qp_tol } => {
            let mut cfg = SelfTestConfig::default();
            if let Some(t) = qp_tol {
                cfg.qp_tol = t;
            }
            let reports = run_suites(&cfg);
            for r in &reports {
                println!("{}", r.line());
            }
            if reports.iter().all(|r| r.passed()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Gen { config, out } => {
            let params = match config {
                Some(path) => match std::fs::read_to_string(&path)
                    .map_err(Error::from)
                    .and_then(|t| toml::from_str::<SyntheticParams>(&t).map_err(|e| Error::Config(e.to_string())))
                {
                    Ok(p) => p,
                    Err(e) => return fail(e),
                },
                None => SyntheticParams::default(),
            };
            match cmd_gen(&params, &out) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
