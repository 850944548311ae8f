use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mimo_capacity::config::{self, preset, read_covariance, snr_to_sigma2, ScenarioConfig};
use mimo_capacity::harness::{self, SweepOptions};
use mimo_capacity::monte_carlo::threads_from_env;
use mimo_capacity::{CovarianceMatrix, Error};

/// Ergodic capacity of correlated multipath MIMO channels: canonical
/// equations, covariance optimization, Monte-Carlo sweeps.
#[derive(Parser)]
#[command(name = "mimo-capacity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Scenario {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario: table1-r4, table1-r8 or isotropic.
    #[arg(long)]
    preset: Option<String>,
    /// Operating point for solve/optimize, overriding the config.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
}

impl Scenario {
    fn load(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(Error::Config("--config or --preset is required".into())),
        };
        if let Some(snr) = self.snr_db {
            cfg.sigma2 = Some(snr_to_sigma2(snr));
            cfg.snr_db_list = vec![snr];
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the canonical equations at one operating point and print JSON.
    Solve {
        #[command(flatten)]
        scenario: Scenario,
        /// Input covariance: `identity` or a matrix JSON file.
        #[arg(long, default_value = "identity")]
        q: String,
    },
    /// Optimize the input covariance; print a JSON report and write Q.
    Optimize {
        #[command(flatten)]
        scenario: Scenario,
        /// Destination of the optimal covariance (matrix JSON).
        #[arg(long, default_value = "q_star.json")]
        out: PathBuf,
    },
    /// Sweep the configured SNR list and write CSV.
    Sweep {
        #[command(flatten)]
        scenario: Scenario,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for Monte-Carlo (0 = automatic).
        #[arg(long)]
        threads: Option<usize>,
        /// Override the configured number of Monte-Carlo trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Write wall_time_s as 0 so the file depends only on the inputs.
        #[arg(long)]
        no_timing: bool,
    },
    /// Median optimizer wall time for increasing path counts.
    Bench {
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
}

fn exit_code(err: &Error) -> ExitCode {
    if err.is_numerical_non_convergence() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve { scenario, q } => {
            let cfg = scenario.load()?;
            let q = if q == "identity" {
                CovarianceMatrix::identity(cfg.t)
            } else {
                read_covariance(&PathBuf::from(q))?
            };
            if q.t() != cfg.t {
                return Err(Error::Config(format!("covariance is {0}x{0} but t = {1}", q.t(), cfg.t)));
            }
            print_json(&harness::run_solve(&cfg, &q)?)
        }
        Command::Optimize { scenario, out } => {
            let cfg = scenario.load()?;
            let report = harness::run_optimize(&cfg)?;
            config::write_matrix(&out, report.q_star.matrix().as_matrix())
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", out.display())))?;
            print_json(&report)
        }
        Command::Sweep { scenario, out, threads, trials, no_timing } => {
            let mut cfg = scenario.load()?;
            if let Some(n) = trials {
                cfg.trials = n;
                cfg.validate()?;
            }
            let opts = SweepOptions {
                threads: threads.unwrap_or_else(threads_from_env),
                timing: !no_timing,
            };
            // Open the destination before the long computation.
            let mut sink: Box<dyn Write> = match &out {
                Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
                    Error::Config(format!("cannot write {}: {e}", path.display()))
                })?)),
                None => Box::new(io::stdout().lock()),
            };
            let rows = harness::run_sweep(&cfg, opts)?;
            harness::write_csv(&mut sink, &rows)?;
            sink.flush()?;
            Ok(())
        }
        Command::Bench { scenario, repeats } => {
            let cfg = scenario.load()?;
            let rows = harness::run_bench(&cfg, repeats)?;
            harness::write_bench_table(io::stdout().lock(), &rows)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
