use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimicry_cli::commands::{self, CalibrateArgs};
use mimicry_cli::config::Format;
use mimicry_cli::runner::Overrides;
use mimicry_cli::{CliError, EXIT_ERROR};

#[derive(Parser, Debug)]
#[command(name = "mimicry", version, about = "Simulate and verify self-similar martingales that mimic a reference process")]
struct Cli {
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true, env = "MIMICRY_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output formats, comma separated or repeated.
    #[arg(long = "format", value_delimiter = ',')]
    formats: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Overrides, CliError> {
        Ok(Overrides { seed: self.seed, out_dir: self.out_dir.clone(), formats: parse_formats(&self.formats)? })
    }
}

fn parse_formats(raw: &[String]) -> Result<Option<Vec<Format>>, CliError> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.iter().map(|s| s.parse()).collect::<Result<Vec<_>, _>>().map(Some)
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve psi(kappa) = kappa (or --target) for one subordinator parameter.
    Calibrate {
        #[arg(long, conflicts_with = "family")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        family: Option<String>,
        #[arg(long, required_unless_present = "config")]
        kappa: Option<f64>,
        #[arg(long)]
        target: Option<f64>,
        /// beta, rate, shape, scale or theta.
        #[arg(long)]
        free: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        shape: Option<f64>,
        #[arg(long)]
        index: Option<f64>,
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Simulate the ensemble and write it out.
    Simulate(Common),
    /// Simulate and run the configured tests.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Subset of configured tests, e.g. marginal,martingale,selfsim.
        #[arg(long, value_delimiter = ',')]
        tests: Vec<String>,
    },
    /// Compare closed-form, composed and finite-difference generators.
    GeneratorCheck(Common),
    /// Summarize report.json from an output directory.
    Report {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long = "format", value_delimiter = ',')]
        formats: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Calibrate { config: Some(path), .. } => commands::calibrate_config(&path),
        Command::Calibrate { config: None, family, kappa, target, free, beta, rate, theta, shape, index, scale } => {
            commands::calibrate(&CalibrateArgs {
                family: family.unwrap_or_default(),
                kappa: kappa.unwrap_or_default(),
                target,
                free,
                beta,
                rate,
                theta,
                shape,
                index,
                scale,
            })
        }
        Command::Simulate(c) => commands::simulate(&c.config, &c.overrides()?),
        Command::Verify { common, tests } => {
            let filter = if tests.is_empty() { None } else { Some(tests.as_slice()) };
            commands::verify(&common.config, &common.overrides()?, filter)
        }
        Command::GeneratorCheck(c) => commands::generator_check(&c.config, &c.overrides()?),
        Command::Report { out_dir, formats } => {
            commands::report(&out_dir, &parse_formats(&formats)?.unwrap_or_else(|| vec![Format::Csv]))
        }
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
