use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hsvc::config::HsvcConfig;
use hsvc::sim::{self, Scheme, SweepSpec};
use hsvc::HsvcError;

#[derive(Parser)]
#[command(
    name = "hsvc",
    version,
    about = "Hierarchical sparse vector coding link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exact bit capacities of a configuration.
    Capacity { config: PathBuf },
    /// Noiseless identity-channel round trips.
    Roundtrip {
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// BLER over an SNR grid.
    Sweep {
        config: PathBuf,
        /// Inclusive grid `A:B:STEP` in dB.
        #[arg(long)]
        snr: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// BLER over a subcarrier grid at one SNR.
    Msweep {
        config: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        snr: f64,
        /// Subcarrier counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        m_grid: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// `hsvc` or `svc-seq`.
    #[arg(long, default_value = "hsvc")]
    scheme: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Stop a point once every user has this many block errors.
    #[arg(long)]
    stop_errors: Option<u64>,
}

impl RunArgs {
    fn spec(&self, config: HsvcConfig, snr_grid_db: Vec<f64>) -> Result<SweepSpec, Failure> {
        let scheme: Scheme = self.scheme.parse()?;
        let mut spec = SweepSpec::new(config, snr_grid_db, self.trials, self.seed, scheme);
        spec.workers = self.workers;
        spec.stop_rule = self.stop_errors;
        Ok(spec)
    }
}

/// A failure and its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<HsvcError> for Failure {
    fn from(e: HsvcError) -> Self {
        let code = match e {
            HsvcError::Config(_) | HsvcError::InvalidParameter(_) => 2,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn load(path: &Path) -> Result<HsvcConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Ok(HsvcConfig::from_toml_str(&text)?)
}

fn emit(points: &[sim::BlerPoint], out: Option<&Path>) -> Result<(), Failure> {
    let io_failure = |p: &Path, e: io::Error| Failure {
        code: 3,
        message: format!("cannot write {}: {e}", p.display()),
    };
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
            sim::write_csv(points, io::BufWriter::new(file))?;
        }
        None => sim::write_csv(points, io::stdout().lock())?,
    }
    for p in points {
        eprintln!(
            "snr {:>6} dB  M {:>4}  trials {:>8}  avg BLER {:.3e}",
            p.snr_db,
            p.m,
            p.trials_run,
            p.avg_bler()
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Capacity { config } => {
            print!("{}", sim::capacity_report(&load(&config)?)?);
        }
        Command::Roundtrip {
            config,
            trials,
            seed,
        } => {
            let failures = sim::roundtrip(&load(&config)?, trials, seed)?;
            println!("{} of {trials} payloads recovered", trials - failures);
            if failures > 0 {
                return Err(Failure {
                    code: 3,
                    message: format!("{failures} noiseless round trips failed"),
                });
            }
        }
        Command::Sweep { config, snr, run } => {
            let spec = run.spec(load(&config)?, sim::parse_snr_range(&snr)?)?;
            emit(&sim::run_sweep(&spec)?, run.out.as_deref())?;
        }
        Command::Msweep {
            config,
            snr,
            m_grid,
            run,
        } => {
            let spec = run.spec(load(&config)?, vec![snr])?;
            emit(
                &sim::run_subcarrier_sweep(&spec, &m_grid)?,
                run.out.as_deref(),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
