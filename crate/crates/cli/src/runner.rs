//! Turns a configuration into ensembles, reports and files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mimicry_core::generator::{build_mimic_generator, closed_form_generator, finite_difference_generator_check, TestFunction};
use mimicry_core::mimic::{exponential_transform, hermite, hermite_transform, simulate_ensemble, Route};
use mimicry_core::reference::Variant;
use mimicry_core::rng::{derive_seed, stream};
use mimicry_core::verify::{
    ensemble_match_test, marginal_match_test_with, martingale_slope_test_with, qv_consistency_test, self_similarity_test,
    SlopeOptions,
};
use mimicry_core::{PathEnsemble, ReferenceProcess, SubordinatorSpec, TestReport, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format, TestConfig, Transform};
use crate::svg;
use crate::CliError;

/// Trim used for the stable variant when the config leaves it at zero.
const STABLE_TRIM: f64 = 0.001;

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
}

/// A validated configuration with its built objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub reference: ReferenceProcess,
    pub spec: SubordinatorSpec,
    pub grid: TimeGrid,
}

impl Experiment {
    pub fn new(mut config: ExperimentConfig, overrides: &Overrides) -> Result<Self, CliError> {
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(dir) = &overrides.out_dir {
            config.outputs.dir = dir.clone();
        }
        if let Some(formats) = &overrides.formats {
            config.outputs.formats = formats.clone();
        }
        let reference = config.reference.build()?;
        let spec = config.subordinator.build(reference.kappa)?;
        let grid = config.grid.build()?;
        Ok(Self { config, reference, spec, grid })
    }

    pub fn from_path(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        Self::new(ExperimentConfig::load(path)?, overrides)
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.outputs.dir
    }

    pub fn wants(&self, format: Format) -> bool {
        self.config.outputs.formats.contains(&format)
    }

    /// Self-similarity exponent of the (transformed) ensemble.
    pub fn ensemble_kappa(&self) -> Option<f64> {
        match self.config.transform {
            Transform::None => Some(self.reference.kappa),
            Transform::Hermite { degree } => Some(f64::from(degree) / 2.0),
            Transform::Exponential => None,
        }
    }

    fn apply_transform(&self, ensemble: PathEnsemble) -> Result<PathEnsemble, CliError> {
        match self.config.transform {
            Transform::None => Ok(ensemble),
            Transform::Hermite { degree } => {
                self.require_gaussian("hermite")?;
                Ok(hermite_transform(&ensemble, degree)?)
            }
            Transform::Exponential => {
                self.require_gaussian("exponential")?;
                Ok(exponential_transform(&ensemble)?)
            }
        }
    }

    fn require_gaussian(&self, what: &str) -> Result<(), CliError> {
        match self.reference.variant {
            Variant::GaussianMartingale { k: 0.0 } => Ok(()),
            _ => Err(CliError::Config(format!("the {what} transform needs the gaussian-martingale reference with k = 0"))),
        }
    }

    /// Ensemble by `route` with `seed`, transformed.
    pub fn simulate_route(&self, route: Route, seed: u64) -> Result<PathEnsemble, CliError> {
        let raw = simulate_ensemble(&self.reference, &self.spec, &self.grid, route, self.config.n_paths, seed)?;
        self.apply_transform(raw)
    }

    pub fn simulate(&self) -> Result<PathEnsemble, CliError> {
        self.simulate_route(self.config.route, self.config.seed)
    }

    /// A draw of the target law at time `t`: the reference marginal, transformed.
    fn sample_target(&self, t: f64, rng: &mut mimicry_core::rng::SimRng) -> mimicry_core::Result<f64> {
        let z = self.reference.sample_marginal(t, rng)?;
        Ok(match self.config.transform {
            Transform::None => z,
            Transform::Hermite { degree } => hermite(degree, z, t),
            Transform::Exponential => (z - 0.5 * t).exp(),
        })
    }

    fn grid_index(&self, t: f64) -> Result<usize, CliError> {
        self.grid.index_of(t).ok_or_else(|| CliError::Config(format!("time {t} is not on the grid {:?}", self.grid.times())))
    }

    pub fn run_test(&self, test: &TestConfig, ensemble: &PathEnsemble) -> Result<TestReport, CliError> {
        let seed = self.config.seed;
        let mut report = match test {
            TestConfig::Marginal { alpha, times } => marginal_match_test_with(
                ensemble,
                times,
                *alpha,
                self.reference.name(),
                derive_seed(seed, "marginal"),
                |t, rng| self.sample_target(t, rng),
            )?,
            TestConfig::Martingale { alpha, s, t, trim } => {
                let trim = match self.reference.variant {
                    Variant::StableMartingale { .. } if *trim == 0.0 => STABLE_TRIM,
                    _ => *trim,
                };
                let (i, j) = (self.grid_index(*s)?, self.grid_index(*t)?);
                martingale_slope_test_with(ensemble, i, j, *alpha, SlopeOptions { trim, seed })?
            }
            TestConfig::Selfsim { alpha, t, c, kappa } => {
                let kappa = kappa
                    .or(self.ensemble_kappa())
                    .ok_or_else(|| CliError::Config("selfsim on a transformed ensemble needs an explicit `kappa`".into()))?;
                let twin_seed = derive_seed(seed, "selfsim");
                let twin = self.simulate_route(self.config.route, twin_seed)?;
                let at_t = ensemble.column(self.grid_index(*t)?);
                let at_ct = twin.column(self.grid_index(c * t)?);
                let mut r = self_similarity_test(&at_t, &at_ct, *c, kappa, *alpha)?;
                r.seed = twin_seed;
                r.details.insert("t".into(), serde_json::json!(t));
                r
            }
            TestConfig::Routes { alpha, other, times } => {
                let other_seed = derive_seed(seed, &format!("route-{}", other.name()));
                let b = self.simulate_route(*other, other_seed)?;
                let mut r = ensemble_match_test(ensemble, &b, times, *alpha)?;
                r.details.insert("routes".into(), serde_json::json!([self.config.route.name(), other.name()]));
                r
            }
            TestConfig::Qv { t, rel_tol } => {
                if self.config.transform != Transform::None {
                    return Err(CliError::Config("the qv test needs an untransformed ensemble".into()));
                }
                qv_consistency_test(ensemble, &self.reference, &self.spec, *t, *rel_tol)?
            }
        };
        report.details.insert("reference".into(), serde_json::json!(self.reference.name()));
        report.details.insert("subordinator".into(), serde_json::to_value(self.spec).expect("serializable"));
        Ok(report)
    }

    /// Runs the configured tests, restricted to `filter` when given.
    pub fn run_tests(&self, ensemble: &PathEnsemble, filter: Option<&[String]>) -> Result<Vec<TestReport>, CliError> {
        let selected: Vec<&TestConfig> = match filter {
            None => self.config.tests.iter().collect(),
            Some(names) => {
                for n in names {
                    if !self.config.tests.iter().any(|t| t.name() == n) {
                        return Err(CliError::Config(format!("test `{n}` is not configured in [[tests]]")));
                    }
                }
                self.config.tests.iter().filter(|t| names.iter().any(|n| n == t.name())).collect()
            }
        };
        if selected.is_empty() {
            return Err(CliError::Config("no tests selected".into()));
        }
        selected.into_iter().map(|t| self.run_test(t, ensemble)).collect()
    }

    pub fn generator_probes(&self) -> Result<Vec<ProbeRecord>, CliError> {
        let gcfg =
            self.config.generator.as_ref().ok_or_else(|| CliError::Config("generator-check needs a [generator] table".into()))?;
        let mc_seed = derive_seed(self.config.seed, "generator-mc");
        let closed = closed_form_generator(&self.reference, &self.spec)?.with_mc(gcfg.mc_samples, mc_seed);
        let composed = build_mimic_generator(&self.reference, &self.spec)?.with_mc(gcfg.mc_samples, mc_seed);
        gcfg.probes
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let f = TestFunction::parse(&p.f)?;
                let c = closed.apply(p.t, p.x, &f)?;
                let m = composed.apply(p.t, p.x, &f)?;
                let fd_seed = derive_seed(self.config.seed, &format!("fd-{i}"));
                let fd = finite_difference_generator_check(
                    &self.reference,
                    &self.spec,
                    &f,
                    p.t,
                    p.x,
                    gcfg.h,
                    gcfg.fd_samples,
                    fd_seed,
                )?;
                let composed_ok = (c - m).abs() <= 1e-9 * c.abs().max(1.0);
                let fd_ok = (fd.estimate - c).abs() <= (0.05 * c.abs()).max(3.0 * fd.se);
                Ok(ProbeRecord {
                    variant: self.reference.name().into(),
                    spec: self.spec,
                    f: f.to_string(),
                    t: p.t,
                    x: p.x,
                    closed_form: c,
                    composed: m,
                    fd_estimate: fd.estimate,
                    fd_se: fd.se,
                    composed_ok,
                    fd_ok,
                })
            })
            .collect()
    }
}

/// One generator probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub variant: String,
    pub spec: SubordinatorSpec,
    pub f: String,
    pub t: f64,
    pub x: f64,
    pub closed_form: f64,
    pub composed: f64,
    pub fd_estimate: f64,
    pub fd_se: f64,
    pub composed_ok: bool,
    pub fd_ok: bool,
}

impl ProbeRecord {
    pub fn passed(&self) -> bool {
        self.composed_ok && self.fd_ok
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// `ensemble.csv`, `ensemble.bin` + `ensemble.json`, `paths.svg` per requested format.
pub fn write_ensemble(exp: &Experiment, ensemble: &PathEnsemble) -> Result<Vec<PathBuf>, CliError> {
    let dir = exp.out_dir();
    let mut written = Vec::new();
    if exp.wants(Format::Csv) {
        let path = dir.join("ensemble.csv");
        let mut w = create(&path)?;
        ensemble.write_csv(&mut w)?;
        w.flush()?;
        written.push(path);
    }
    if exp.wants(Format::Json) {
        let bin = dir.join("ensemble.bin");
        let mut w = create(&bin)?;
        ensemble.write_binary(&mut w)?;
        w.flush()?;
        let side = dir.join("ensemble.json");
        let mut w = create(&side)?;
        serde_json::to_writer_pretty(&mut w, &ensemble.sidecar()).map_err(|e| CliError::Io(e.into()))?;
        writeln!(w)?;
        w.flush()?;
        written.extend([bin, side]);
    }
    if exp.wants(Format::Svg) {
        let path = dir.join("paths.svg");
        let paths: Vec<&[f64]> = ensemble.paths().take(20).collect();
        let title = format!("{} mimic, {} subordinator", exp.reference.name(), exp.spec.jumps.name());
        fs::create_dir_all(dir)?;
        fs::write(&path, svg::paths_plot(&title, ensemble.grid.times(), &paths, 20))?;
        written.push(path);
    }
    Ok(written)
}

/// `report.json` (JSON lines, always), `summary.csv`, and ECDF/QQ plots for
/// marginal tests.
pub fn write_reports(exp: &Experiment, reports: &[TestReport], ensemble: Option<&PathEnsemble>) -> Result<(), CliError> {
    let dir = exp.out_dir();
    let mut w = create(&dir.join("report.json"))?;
    for r in reports {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::Io(e.into()))?;
        writeln!(w)?;
    }
    w.flush()?;
    if exp.wants(Format::Csv) {
        write_summary(&dir.join("summary.csv"), reports)?;
    }
    if let (true, Some(ensemble)) = (exp.wants(Format::Svg), ensemble) {
        for test in &exp.config.tests {
            if let TestConfig::Marginal { times, .. } = test {
                for (j, &t) in times.iter().enumerate() {
                    let sample = ensemble.at_time(t)?;
                    let mut rng = stream(derive_seed(exp.config.seed, "plot"), j as u64);
                    let target =
                        (0..sample.len()).map(|_| exp.sample_target(t, &mut rng)).collect::<mimicry_core::Result<Vec<_>>>()?;
                    let a = ("mimic", sample.as_slice());
                    let b = ("reference", target.as_slice());
                    fs::write(dir.join(format!("ecdf_t{j}.svg")), svg::ecdf_plot(&format!("ECDF at t = {t}"), a, b))?;
                    fs::write(dir.join(format!("qq_t{j}.svg")), svg::qq_plot(&format!("QQ at t = {t}"), a, b))?;
                }
            }
        }
    }
    Ok(())
}

pub fn write_summary(path: &Path, reports: &[TestReport]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "test_name,verdict,statistic,p_value,ci_low,ci_high,n_samples,alpha,seed")?;
    for r in reports {
        let p = r.p_value.map(|v| v.to_string()).unwrap_or_default();
        let (lo, hi) = r.interval.map(|(a, b)| (a.to_string(), b.to_string())).unwrap_or_default();
        let n: Vec<String> = r.n_samples.iter().map(|n| n.to_string()).collect();
        let verdict = if r.passed() { "pass" } else { "reject" };
        writeln!(w, "{},{verdict},{},{p},{lo},{hi},{},{},{}", r.test_name, r.statistic, n.join(";"), r.alpha, r.seed)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_probes(exp: &Experiment, probes: &[ProbeRecord]) -> Result<PathBuf, CliError> {
    let path = exp.out_dir().join("generator.json");
    let mut w = create(&path)?;
    for p in probes {
        serde_json::to_writer(&mut w, p).map_err(|e| CliError::Io(e.into()))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(path)
}

/// Reads a `report.json` written by [`write_reports`].
pub fn read_reports(path: &Path) -> Result<Vec<TestReport>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), i + 1))))
        .collect()
}
