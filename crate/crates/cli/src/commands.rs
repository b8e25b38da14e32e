//! Subcommand bodies. Each returns the process exit code.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mimicry_core::subordinator::{calibrate_to, FreeParam, JumpFamily};
use mimicry_core::SubordinatorSpec;

use crate::config::{ExperimentConfig, Format};
use crate::runner::{read_reports, write_ensemble, write_probes, write_reports, write_summary, Experiment, Overrides};
use crate::{CliError, EXIT_PASS, EXIT_REJECT};

/// Arguments of `calibrate` when no config is given.
#[derive(Debug, Clone, Default)]
pub struct CalibrateArgs {
    pub family: String,
    pub kappa: f64,
    pub target: Option<f64>,
    pub free: Option<String>,
    pub beta: f64,
    pub rate: Option<f64>,
    pub theta: Option<f64>,
    pub shape: Option<f64>,
    pub index: Option<f64>,
    pub scale: Option<f64>,
}

fn free_param_value(spec: &SubordinatorSpec, free: FreeParam) -> (&'static str, f64) {
    match (free, spec.jumps) {
        (FreeParam::Beta, _) => ("beta", spec.beta),
        (FreeParam::Rate, JumpFamily::Poisson { rate })
        | (FreeParam::Rate, JumpFamily::CompoundPoissonExponential { rate, .. }) => ("rate", rate),
        (FreeParam::Rate, JumpFamily::Gamma { shape, .. }) => ("shape", shape),
        (FreeParam::Rate, JumpFamily::StableSubordinator { scale, .. }) => ("scale", scale),
        (FreeParam::Theta, JumpFamily::CompoundPoissonExponential { theta, .. })
        | (FreeParam::Theta, JumpFamily::Gamma { theta, .. }) => ("theta", theta),
        _ => ("beta", spec.beta),
    }
}

/// Solves `ψ(κ) = target` and prints the free parameter and the spec as JSON.
pub fn calibrate(args: &CalibrateArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    let free: FreeParam = match &args.free {
        Some(f) => f.parse()?,
        None if args.family == "drift-only" => FreeParam::Beta,
        None => FreeParam::Rate,
    };
    let placeholder = |v: Option<f64>, param: FreeParam| v.or(if free == param { Some(1.0) } else { None });
    let need =
        |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Config(format!("--{name} is required for {}", args.family)));
    let jumps = match args.family.as_str() {
        "drift-only" => JumpFamily::DriftOnly,
        "poisson" => JumpFamily::Poisson { rate: need(placeholder(args.rate, FreeParam::Rate), "rate")? },
        "compound-poisson-exponential" => JumpFamily::CompoundPoissonExponential {
            rate: need(placeholder(args.rate, FreeParam::Rate), "rate")?,
            theta: need(placeholder(args.theta, FreeParam::Theta), "theta")?,
        },
        "gamma" => JumpFamily::Gamma {
            shape: need(placeholder(args.shape, FreeParam::Rate), "shape")?,
            theta: need(placeholder(args.theta, FreeParam::Theta), "theta")?,
        },
        "stable-subordinator" => JumpFamily::StableSubordinator {
            index: need(args.index, "index")?,
            scale: need(placeholder(args.scale, FreeParam::Rate), "scale")?,
        },
        other => return Err(CliError::Config(format!("unknown family `{other}`"))),
    };
    let beta = if free == FreeParam::Beta && args.family == "drift-only" { 1.0 } else { args.beta };
    let template = SubordinatorSpec::new(beta, jumps)?;
    let target = args.target.unwrap_or(args.kappa);
    let spec = calibrate_to(&template, args.kappa, target, free)?;
    let (name, value) = free_param_value(&spec, free);
    println!("{name} = {value:.6}");
    println!(
        "psi({}) = {} (target {target}, residual {:.3e}, {:.1} ms)",
        args.kappa,
        spec.psi(args.kappa),
        (spec.psi(args.kappa) - target).abs(),
        start.elapsed().as_secs_f64() * 1e3
    );
    println!("{}", serde_json::to_string(&spec).expect("serializable"));
    Ok(EXIT_PASS)
}

/// Calibrates the subordinator of a config and prints it.
pub fn calibrate_config(path: &Path) -> Result<i32, CliError> {
    let exp = Experiment::new(ExperimentConfig::load(path)?, &Overrides::default())?;
    println!("{}", serde_json::to_string(&exp.spec).expect("serializable"));
    Ok(EXIT_PASS)
}

pub fn simulate(path: &Path, overrides: &Overrides) -> Result<i32, CliError> {
    let exp = Experiment::from_path(path, overrides)?;
    let ensemble = exp.simulate()?;
    for p in write_ensemble(&exp, &ensemble)? {
        println!("wrote {}", p.display());
    }
    Ok(EXIT_PASS)
}

pub fn verify(path: &Path, overrides: &Overrides, tests: Option<&[String]>) -> Result<i32, CliError> {
    let exp = Experiment::from_path(path, overrides)?;
    let ensemble = exp.simulate()?;
    let reports = exp.run_tests(&ensemble, tests)?;
    write_reports(&exp, &reports, Some(&ensemble))?;
    for r in &reports {
        println!(
            "{:<11} {:<6} statistic={} p={}",
            r.test_name,
            if r.passed() { "pass" } else { "reject" },
            r.statistic,
            r.p_value.map(|p| p.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    println!("wrote {}", exp.out_dir().join("report.json").display());
    Ok(if reports.iter().all(|r| r.passed()) { EXIT_PASS } else { EXIT_REJECT })
}

pub fn generator_check(path: &Path, overrides: &Overrides) -> Result<i32, CliError> {
    let exp = Experiment::from_path(path, overrides)?;
    let probes = exp.generator_probes()?;
    for p in &probes {
        println!(
            "f={} t={} x={}: closed={} composed={} fd={}±{} {}",
            p.f,
            p.t,
            p.x,
            p.closed_form,
            p.composed,
            p.fd_estimate,
            p.fd_se,
            if p.passed() { "pass" } else { "reject" }
        );
    }
    println!("wrote {}", write_probes(&exp, &probes)?.display());
    Ok(if probes.iter().all(|p| p.passed()) { EXIT_PASS } else { EXIT_REJECT })
}

/// Summarizes `report.json` in `dir` (writing `summary.csv` when csv is requested).
pub fn report(dir: &Path, formats: &[Format]) -> Result<i32, CliError> {
    let path: PathBuf = dir.join("report.json");
    let reports = read_reports(&path)?;
    if reports.is_empty() {
        return Err(CliError::Config(format!("{} has no reports", path.display())));
    }
    println!("{:<11} {:<7} {:>14} {:>12}", "test", "verdict", "statistic", "p");
    for r in &reports {
        println!(
            "{:<11} {:<7} {:>14.6} {:>12}",
            r.test_name,
            if r.passed() { "pass" } else { "reject" },
            r.statistic,
            r.p_value.map(|p| format!("{p:.4e}")).unwrap_or_else(|| "-".into())
        );
    }
    if formats.contains(&Format::Csv) {
        write_summary(&dir.join("summary.csv"), &reports)?;
    }
    let rejected = reports.iter().filter(|r| !r.passed()).count();
    println!("{} passed, {rejected} rejected", reports.len() - rejected);
    Ok(if rejected == 0 { EXIT_PASS } else { EXIT_REJECT })
}
