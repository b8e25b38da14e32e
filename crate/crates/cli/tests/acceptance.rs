//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any of them fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mimicry_cli::config::TestConfig;
use mimicry_cli::runner::{Experiment, Overrides};
use mimicry_core::generator::{finite_difference_generator_check, predictable_qv, QvFormula};
use mimicry_core::mimic::{simulate_reference, timechange_path_with_clock, Route, TimeGrid};
use mimicry_core::rng::stream;
use mimicry_core::subordinator::{calibrate, sample_r, FreeParam, SubordinatorSpec};
use mimicry_core::verify::{ensemble_match_test, ks_two_sample, TestReport};
use mimicry_core::{build_mimic_generator, closed_form_generator, ReferenceProcess, TestFunction, VLaw};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn experiment(name: &str) -> Experiment {
    let path = configs_dir().join(format!("{name}.toml"));
    Experiment::from_path(&path, &Overrides::default()).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run_config(name: &str) -> Vec<TestReport> {
    let exp = experiment(name);
    let ensemble = exp.simulate().unwrap();
    exp.run_tests(&ensemble, None).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit, || format!("{what} took {:.2} s (limit {limit} s)", elapsed.as_secs_f64()))
}

fn detail(report: &TestReport, key: &str) -> f64 {
    report.details[key].as_f64().unwrap_or_else(|| panic!("missing detail {key}"))
}

/// Templates for the four jump families, each calibrated through its intensity.
fn families() -> Vec<SubordinatorSpec> {
    vec![
        SubordinatorSpec::poisson(0.0, 1.0).unwrap(),
        SubordinatorSpec::compound_poisson_exponential(0.0, 1.0, 1.0).unwrap(),
        SubordinatorSpec::gamma(0.0, 1.0, 1.0).unwrap(),
        SubordinatorSpec::stable(0.0, 0.5, 1.0).unwrap(),
    ]
}

fn calibration_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for template in families() {
        for kappa in [0.5, 2.0 / 3.0, 1.0] {
            let spec = calibrate(&template, kappa, FreeParam::Rate).map_err(|e| e.to_string())?;
            let residual = (spec.psi(kappa) - kappa).abs();
            worst = worst.max(residual);
            ensure(residual < 1e-12, || format!("{} kappa={kappa}: residual {residual:e}", template.jumps.name()))?;
        }
    }
    let elapsed = start.elapsed();
    within_time(elapsed, 1.0, "calibration")?;
    Ok(format!("max |psi(kappa) - kappa| = {worst:.1e} in {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn laplace_transform() -> Outcome {
    let start = Instant::now();
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for (f, template) in families().into_iter().enumerate() {
        let spec = calibrate(&template, 0.5, FreeParam::Rate).unwrap();
        for (lambda, t) in [(1.0, 1.0), (2.0, 0.5)] {
            let mut rng = stream(11, f as u64);
            let draws: Vec<f64> = (0..n).map(|_| (-lambda * spec.sample_increment(t, &mut rng).unwrap()).exp()).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            let z = (mean - (-t * spec.psi(lambda)).exp()).abs() / se;
            worst = worst.max(z);
            ensure(z < 3.0, || format!("{} (lambda={lambda}, t={t}): {z:.2} SE", spec.jumps.name()))?;
        }
    }
    let elapsed = start.elapsed();
    within_time(elapsed, 10.0, "Laplace check")?;
    Ok(format!("worst deviation {worst:.2} SE in {:.2} s", elapsed.as_secs_f64()))
}

fn randomizer_semigroup() -> Outcome {
    let n = 10_000;
    let mut worst_p: f64 = 1.0;
    for (f, template) in families().into_iter().enumerate() {
        let spec = calibrate(&template, 0.5, FreeParam::Rate).unwrap();
        let mut rng = stream(12, f as u64);
        let product: Vec<f64> =
            (0..n).map(|_| sample_r(&spec, 2.0, &mut rng).unwrap() * sample_r(&spec, 2.0, &mut rng).unwrap()).collect();
        let direct: Vec<f64> = (0..n).map(|_| sample_r(&spec, 4.0, &mut rng).unwrap()).collect();
        let (_, p) = ks_two_sample(&product, &direct).unwrap();
        worst_p = worst_p.min(p);
        ensure(p > 0.01, || format!("{}: KS p = {p:.4}", spec.jumps.name()))?;
    }
    Ok(format!("min KS p = {worst_p:.3} over four families"))
}

const VARIANTS: [&str; 4] = ["gaussian", "besq", "stable", "signflip"];

fn marginal_preservation() -> Outcome {
    let mut lines = Vec::new();
    for v in VARIANTS {
        let start = Instant::now();
        let exp = experiment(&format!("marginal_{v}"));
        let ensemble = exp.simulate().unwrap();
        let test = exp.config.tests.iter().find(|t| matches!(t, TestConfig::Marginal { .. })).unwrap();
        let report = exp.run_test(test, &ensemble).unwrap();
        within_time(start.elapsed(), 60.0, v)?;
        ensure(report.passed(), || format!("{v}: marginal rejected (p = {:?})", report.p_value))?;
        lines.push(format!("{v} p={:.3}", report.p_value.unwrap()));
    }
    Ok(lines.join(", "))
}

fn martingale_property() -> Outcome {
    let mut lines = Vec::new();
    for v in ["gaussian", "gaussian_k1", "besq", "signflip"] {
        let report = run_config(&format!("martingale_{v}")).remove(0);
        ensure(report.passed(), || format!("{v}: slope {} rejected", report.statistic))?;
        lines.push(format!("{v} slope={:.4}", report.statistic));
    }
    let exp = experiment("miscalibrated");
    let report = exp.run_tests(&exp.simulate().unwrap(), Some(&["martingale".to_string()])).unwrap().remove(0);
    let expected = 2f64.powf(0.5 - exp.spec.psi(0.5));
    let se = detail(&report, "slope_se");
    ensure(!report.passed(), || "miscalibrated control was not rejected".into())?;
    ensure((report.statistic - expected).abs() <= 3.0 * se, || {
        format!("control slope {} not within 3 SE ({se}) of {expected}", report.statistic)
    })?;
    lines.push(format!("control slope={:.4} vs {expected:.4} rejected", report.statistic));
    Ok(lines.join(", "))
}

fn self_similarity() -> Outcome {
    let mut lines = Vec::new();
    for v in VARIANTS {
        let exp = experiment(&format!("marginal_{v}"));
        let ensemble = exp.simulate().unwrap();
        let test = exp.config.tests.iter().find(|t| matches!(t, TestConfig::Selfsim { .. })).unwrap();
        let report = exp.run_test(test, &ensemble).unwrap();
        ensure(report.passed(), || format!("{v}: self-similarity rejected (p = {:?})", report.p_value))?;
        lines.push(format!("{v} p={:.3}", report.p_value.unwrap()));
    }
    let control = run_config("selfsim_wrong_exponent").remove(0);
    ensure(!control.passed(), || "wrong-exponent control was not rejected".into())?;
    lines.push(format!("wrong exponent p={:.1e} rejected", control.p_value.unwrap()));
    Ok(lines.join(", "))
}

fn route_equivalence() -> Outcome {
    let mut count = 0;
    let mut worst_p: f64 = 1.0;
    for v in VARIANTS {
        let exp = experiment(&format!("marginal_{v}"));
        let ensemble = exp.simulate().unwrap();
        let mut others = Vec::new();
        for test in exp.config.tests.iter().filter(|t| matches!(t, TestConfig::Routes { .. })) {
            let TestConfig::Routes { other, times, .. } = test else { unreachable!() };
            ensure(times.len() == 5, || format!("{v}: route grid has {} points", times.len()))?;
            let report = exp.run_test(test, &ensemble).unwrap();
            ensure(report.passed(), || format!("{v} vs {}: p = {:?}", other.name(), report.p_value))?;
            worst_p = worst_p.min(report.p_value.unwrap());
            others.push(*other);
            count += 1;
        }
        ensure(others.contains(&Route::RandomizedTransition), || format!("{v}: no randomized-transition comparison"))?;
        if matches!(v, "gaussian" | "stable") {
            ensure(others.contains(&Route::Markov), || format!("{v}: no markov comparison"))?;
        }
    }
    Ok(format!("{count} route comparisons, min p = {worst_p:.3}"))
}

fn generator_consistency() -> Outcome {
    let poisson = calibrate(&SubordinatorSpec::poisson(0.0, 1.0).unwrap(), 0.5, FreeParam::Rate).unwrap();
    let poisson_one = calibrate(&SubordinatorSpec::poisson(0.0, 1.0).unwrap(), 1.0, FreeParam::Rate).unwrap();
    let gaussian = ReferenceProcess::gaussian(0.0).unwrap();
    let sign_flip = ReferenceProcess::sign_flip(1.0, VLaw::Rademacher).unwrap();
    let mut worst_rel: f64 = 0.0;
    let mut checked = 0;
    for (reference, spec) in [(gaussian, poisson), (sign_flip, poisson_one)] {
        let closed = closed_form_generator(&reference, &spec).unwrap();
        let composed = build_mimic_generator(&reference, &spec).unwrap();
        for f in ["x", "x^2", "x^3"] {
            let f = TestFunction::parse(f).unwrap();
            for (t, x) in [(1.0, 0.5), (2.0, -1.0)] {
                let a = closed.apply(t, x, &f).unwrap();
                let b = composed.apply(t, x, &f).unwrap();
                let rel = (a - b).abs() / a.abs().max(1.0);
                worst_rel = worst_rel.max(rel);
                checked += 1;
                ensure(rel < 1e-9, || format!("{} {f} at ({t}, {x}): closed {a} vs composed {b}", reference.name()))?;
            }
        }
    }
    for reference in
        [gaussian, ReferenceProcess::gaussian(1.0).unwrap(), ReferenceProcess::squared_bessel(2.0).unwrap(), sign_flip]
    {
        let spec = calibrate(&SubordinatorSpec::poisson(0.0, 1.0).unwrap(), reference.kappa, FreeParam::Rate).unwrap();
        let generator = closed_form_generator(&reference, &spec).unwrap();
        for (t, x) in [(1.0, 0.5), (2.0, 1.5)] {
            let v = generator.apply(t, x, &TestFunction::monomial(1)).unwrap();
            ensure(v.abs() < 1e-9, || format!("{}: A x = {v} at ({t}, {x})", reference.name()))?;
        }
    }

    // Finite differences: drift-only, then the committed probe configs.
    let fd = finite_difference_generator_check(
        &gaussian,
        &SubordinatorSpec::identity(),
        &TestFunction::monomial(2),
        1.0,
        0.0,
        1e-3,
        1_000_000,
        13,
    )
    .unwrap();
    ensure((fd.estimate - 1.0).abs() <= (0.05f64).max(3.0 * fd.se), || format!("drift-only FD {} ± {}", fd.estimate, fd.se))?;
    let mut probes = 1;
    for name in ["generator_brownian_poisson", "generator_signflip"] {
        for p in experiment(name).generator_probes().unwrap() {
            ensure(p.passed(), || {
                format!(
                    "{name} f={} at ({}, {}): closed {} composed {} fd {} ± {}",
                    p.f, p.t, p.x, p.closed_form, p.composed, p.fd_estimate, p.fd_se
                )
            })?;
            probes += 1;
        }
    }
    let sign_flip_value = experiment("generator_signflip").generator_probes().unwrap().remove(0);
    ensure((sign_flip_value.closed_form - 9.0).abs() < 1e-12, || format!("sign-flip A x^2 = {}", sign_flip_value.closed_form))?;
    Ok(format!("{checked} composed/closed pairs (max rel {worst_rel:.1e}), {probes} FD probes"))
}

fn quadratic_variation() -> Outcome {
    let mut lines = Vec::new();
    for v in ["gaussian", "gaussian_k1", "signflip"] {
        let exp = experiment(&format!("qv_{v}"));
        ensure(exp.grid.len() == 512 && exp.config.n_paths == 10_000, || format!("{v}: unexpected grid or N"))?;
        let report = run_config(&format!("qv_{v}")).remove(0);
        ensure(report.passed(), || format!("{v}: {:?}", report.details.get("checks")))?;
        lines.push(format!("{v} rel={:.4}", detail(&report, "relative_error")));
    }
    let exp = experiment("qv_gaussian_drift_only");
    let ensemble = exp.simulate().unwrap();
    let formula = QvFormula::new(&exp.reference, &exp.spec).unwrap();
    let times = exp.grid.times();
    let mut worst: f64 = 0.0;
    for row in predictable_qv(&ensemble, &formula) {
        for (q, t) in row.iter().zip(times) {
            worst = worst.max((q - t).abs() / t);
        }
    }
    ensure(worst < 1e-12, || format!("drift-only QV deviates from t by {worst:e} relative"))?;
    lines.push(format!("drift-only max rel {worst:.1e}"));
    Ok(lines.join(", "))
}

fn hermite_extension() -> Outcome {
    let calibrated = run_config("hermite_calibrated");
    let martingale = calibrated.iter().find(|r| r.test_name == "martingale").unwrap();
    ensure(martingale.passed(), || format!("calibrated H3 slope {} rejected", martingale.statistic))?;
    let exp = experiment("hermite_miscalibrated");
    let report = exp.run_tests(&exp.simulate().unwrap(), Some(&["martingale".to_string()])).unwrap().remove(0);
    let expected = 2f64.powf(1.5 - exp.spec.psi(1.5));
    let se = detail(&report, "slope_se");
    ensure(!report.passed(), || "miscalibrated H3 was not rejected".into())?;
    ensure((report.statistic - expected).abs() <= 3.0 * se, || {
        format!("miscalibrated H3 slope {} not within 3 SE ({se}) of {expected}", report.statistic)
    })?;
    Ok(format!("calibrated slope={:.4}, miscalibrated slope={:.4} vs {expected:.4}", martingale.statistic, report.statistic))
}

fn exponential_negative() -> Outcome {
    let reports = run_config("exponential_negative");
    let find = |name: &str| reports.iter().find(|r| r.test_name == name).unwrap();
    let (martingale, marginal) = (find("martingale"), find("marginal"));
    ensure(!martingale.passed(), || "exp(X_t - t/2) passed the martingale test".into())?;
    ensure(marginal.passed(), || format!("exp(X_t - t/2) marginals rejected (p = {:?})", marginal.p_value))?;
    Ok(format!("martingale rejected (slope {:.3}), marginal p={:.3}", martingale.statistic, marginal.p_value.unwrap()))
}

fn degenerate_reduction() -> Outcome {
    let exp = experiment("degenerate_drift_only");
    let ensemble = exp.simulate().unwrap();
    let reports = exp.run_tests(&ensemble, None).unwrap();
    for r in &reports {
        ensure(r.passed(), || format!("drift-only {} rejected", r.test_name))?;
    }
    let reference = simulate_reference(&exp.reference, &exp.grid, ensemble.n_paths(), 61).unwrap();
    let against_z = ensemble_match_test(&ensemble, &reference, exp.grid.times(), 0.01).unwrap();
    ensure(against_z.passed(), || format!("drift-only mimic vs Z paths: p = {:?}", against_z.p_value))?;

    let spec = calibrate(&SubordinatorSpec::compound_poisson_exponential(0.0, 1.0, 2.0).unwrap(), 0.5, FreeParam::Rate).unwrap();
    let grid = TimeGrid::geometric(0.1, 10.0, 200).unwrap();
    let gaussian = ReferenceProcess::gaussian(0.0).unwrap();
    let times = grid.times();
    let (mut flat, mut worst) = (0usize, 0.0f64);
    for i in 0..200u64 {
        let (path, clock) = timechange_path_with_clock(&gaussian, &spec, &grid, &mut stream(62, i)).unwrap();
        for j in 1..path.len() {
            if clock[j] == clock[j - 1] {
                let predicted = (times[j] / times[j - 1]).powf(0.5) * path[j - 1];
                worst = worst.max((path[j] - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE));
                flat += 1;
            }
        }
    }
    ensure(flat > 1000, || format!("only {flat} jump-free steps"))?;
    ensure(worst < 1e-12, || format!("piecewise-power identity off by {worst:e} relative"))?;
    Ok(format!(
        "{} Z-level tests pass, mimic ~ Z p={:.3}, power identity max rel {worst:.1e} over {flat} steps",
        reports.len(),
        against_z.p_value.unwrap()
    ))
}

fn run_binary(args: &[&str], threads: &str, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_mimicry"))
        .args(args)
        .args(["--threads", threads, "--out-dir"])
        .arg(out)
        .env_remove("MIMICRY_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.code().is_some_and(|c| c <= 1), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr))
    })
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let mut configs: Vec<PathBuf> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    configs.sort();
    let tmp = tempfile::tempdir().unwrap();
    let mut files = 0;
    for config in &configs {
        let name = config.file_stem().unwrap().to_string_lossy().into_owned();
        let config_arg = config.to_str().unwrap();
        let commands: Vec<Vec<&str>> = if name.starts_with("generator_") {
            vec![vec!["generator-check", "--config", config_arg]]
        } else {
            vec![
                vec!["simulate", "--config", config_arg, "--format", "csv,json,svg"],
                vec!["verify", "--config", config_arg, "--format", "csv,json,svg"],
            ]
        };
        let mut outputs = Vec::new();
        for (run, threads) in [("a", "1"), ("b", "8"), ("c", "8")] {
            let out = tmp.path().join(format!("{name}-{run}"));
            for args in &commands {
                run_binary(args, threads, &out)?;
            }
            outputs.push(dir_contents(&out));
        }
        ensure(!outputs[0].is_empty(), || format!("{name}: no outputs"))?;
        ensure(outputs[0] == outputs[1], || format!("{name}: --threads 1 and --threads 8 outputs differ"))?;
        ensure(outputs[1] == outputs[2], || format!("{name}: repeated runs differ"))?;
        files += outputs[0].len();
    }
    Ok(format!("{} configs, {files} files byte-identical across 3 runs (threads 1, 8, 8)", configs.len()))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("calibration-exactness", calibration_exactness),
        ("subordinator-laplace", laplace_transform),
        ("randomizer-semigroup", randomizer_semigroup),
        ("marginal-preservation", marginal_preservation),
        ("martingale", martingale_property),
        ("self-similarity", self_similarity),
        ("route-equivalence", route_equivalence),
        ("generator", generator_consistency),
        ("quadratic-variation", quadratic_variation),
        ("hermite-extension", hermite_extension),
        ("exponential-negative", exponential_negative),
        ("degenerate-reduction", degenerate_reduction),
        ("reproducibility", reproducibility),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name:<22} {msg} [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name:<22} {msg} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
