//! Hypothesis tests on across-path samples.
//!
//! Every test looks at values of independent paths at fixed times, so the samples
//! are iid and asymptotic p-values apply.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{domain, Error, Result};
use crate::generator::{predictable_qv, realized_qv, QvFormula};
use crate::mimic::PathEnsemble;
use crate::reference::ReferenceProcess;
use crate::rng::{derive_seed, stream, SimRng};
use crate::subordinator::SubordinatorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Reject,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Reject
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub n_samples: Vec<usize>,
    pub alpha: f64,
    pub verdict: Verdict,
    pub seed: u64,
    #[serde(default)]
    pub details: BTreeMap<String, Value>,
}

impl TestReport {
    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid normal")
}

/// Upper two-sided normal tail `2(1 - Φ(|z|))`.
fn two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return 0.0;
    }
    (2.0 * standard_normal().sf(z.abs())).min(1.0)
}

/// `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} e^{-2j²λ²}`, the Kolmogorov survival function.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // series converges slowly there and the value is 1 to machine precision
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Two-sample Kolmogorov–Smirnov statistic `D = sup |F̂_a - F̂_b|` with the
/// asymptotic p-value at effective size `n_a n_b / (n_a + n_b)` (Stephens'
/// small-sample correction applied to the argument).
///
/// Values within `1e-12` relative of each other count as ties, so atoms computed
/// along different floating-point paths are not split apart.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(domain("KS test needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(domain("KS test samples contain NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        let top = v + TIE_TOLERANCE * v.abs().max(1.0);
        while i < a.len() && a[i] <= top {
            i += 1;
        }
        while j < b.len() && b[j] <= top {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    Ok((d, p))
}

/// Options for [`martingale_slope_test_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeOptions {
    /// Fraction of paths dropped from each tail of `X_s` (0 keeps all). Trimming on
    /// the conditioning value keeps `E[X_t | X_s] = X_s` on the retained set.
    pub trim: f64,
    pub seed: u64,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        Self { trim: 0.0, seed: 0 }
    }
}

/// OLS fit `y = a + b x` with White (HC0) standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
}

pub fn robust_ols(x: &[f64], y: &[f64]) -> Result<RobustFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(domain("regression needs matched samples of size >= 3"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 1e-300 * nf) {
        return Err(Error::TestInapplicable("regressor has zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // sandwich (X'X)^{-1} X' diag(e²) X (X'X)^{-1}
    let (mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let e2 = (yi - intercept - slope * xi).powi(2);
        m00 += e2;
        m01 += e2 * xi;
        m11 += e2 * xi * xi;
    }
    let sx: f64 = x.iter().sum();
    let sxx_raw: f64 = x.iter().map(|v| v * v).sum();
    let det = nf * sxx_raw - sx * sx;
    let (i00, i01, i11) = (sxx_raw / det, -sx / det, nf / det);
    let v00 = i00 * (i00 * m00 + i01 * m01) + i01 * (i00 * m01 + i01 * m11);
    let v11 = i01 * (i01 * m00 + i11 * m01) + i11 * (i01 * m01 + i11 * m11);
    Ok(RobustFit { intercept, slope, intercept_se: v00.max(0.0).sqrt(), slope_se: v11.max(0.0).sqrt() })
}

/// Regresses `X_t` on `X_s` across paths. Passes iff the robust `1 - alpha`
/// intervals contain slope 1 and intercept 0 and the orthogonality moments
/// `mean[g(X_s)(X_t - X_s)]`, `g ∈ {1, x, x², sign(x - median)}`, are not
/// rejected at `alpha/4`. Centering the sign at the sample median keeps that
/// moment informative for positive processes.
pub fn martingale_slope_test(ensemble: &PathEnsemble, s_index: usize, t_index: usize, alpha: f64) -> Result<TestReport> {
    martingale_slope_test_with(ensemble, s_index, t_index, alpha, SlopeOptions { seed: ensemble.seed, ..Default::default() })
}

pub fn martingale_slope_test_with(
    ensemble: &PathEnsemble,
    s_index: usize,
    t_index: usize,
    alpha: f64,
    options: SlopeOptions,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if !(s_index < t_index && t_index < ensemble.n_times()) {
        return Err(domain(format!("need s_index < t_index < {}, got {s_index}, {t_index}", ensemble.n_times())));
    }
    if !(0.0..0.5).contains(&options.trim) {
        return Err(domain(format!("trim fraction must lie in [0, 0.5), got {}", options.trim)));
    }
    let xs_all = ensemble.column(s_index);
    let xt_all = ensemble.column(t_index);
    let (xs, xt) = if options.trim > 0.0 {
        let mut sorted = xs_all.clone();
        sorted.sort_by(f64::total_cmp);
        let k = (options.trim * sorted.len() as f64).floor() as usize;
        let (lo, hi) = (sorted[k], sorted[sorted.len() - 1 - k]);
        xs_all.iter().zip(&xt_all).filter(|(s, _)| **s >= lo && **s <= hi).map(|(s, t)| (*s, *t)).unzip()
    } else {
        (xs_all, xt_all)
    };
    let fit = robust_ols(&xs, &xt)?;
    let z = standard_normal().inverse_cdf(1.0 - alpha / 2.0);
    let slope_ci = (fit.slope - z * fit.slope_se, fit.slope + z * fit.slope_se);
    let intercept_ci = (fit.intercept - z * fit.intercept_se, fit.intercept + z * fit.intercept_se);
    let slope_ok = slope_ci.0 <= 1.0 && 1.0 <= slope_ci.1;
    let intercept_ok = intercept_ci.0 <= 0.0 && 0.0 <= intercept_ci.1;

    let n = xs.len() as f64;
    let median = median(&xs);
    let sign = move |x: f64| match x.partial_cmp(&median) {
        Some(std::cmp::Ordering::Greater) => 1.0,
        Some(std::cmp::Ordering::Less) => -1.0,
        _ => 0.0,
    };
    let weights: [(&str, &dyn Fn(f64) -> f64); 4] = [("one", &|_| 1.0), ("x", &|x| x), ("x2", &|x| x * x), ("sign", &sign)];
    let mut moments = serde_json::Map::new();
    let mut moments_ok = true;
    for (name, g) in weights {
        let prods: Vec<f64> = xs.iter().zip(&xt).map(|(&s, &t)| g(s) * (t - s)).collect();
        let mean = prods.iter().sum::<f64>() / n;
        let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let zstat = if se > 0.0 {
            mean / se
        } else if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let p = two_sided_p(zstat);
        moments_ok &= p > alpha / 4.0;
        moments.insert(name.into(), json!({ "mean": mean, "se": se, "z": finite_or_null(zstat), "p": p }));
    }

    let slope_p = two_sided_p((fit.slope - 1.0) / fit.slope_se);
    let mut details = BTreeMap::new();
    details.insert("s".into(), json!(ensemble.grid.times()[s_index]));
    details.insert("t".into(), json!(ensemble.grid.times()[t_index]));
    details.insert("slope_se".into(), json!(fit.slope_se));
    details.insert("intercept".into(), json!(fit.intercept));
    details.insert("intercept_se".into(), json!(fit.intercept_se));
    details.insert("intercept_ci".into(), json!([intercept_ci.0, intercept_ci.1]));
    details.insert("orthogonality".into(), Value::Object(moments));
    details.insert("sign_center".into(), json!(median));
    details.insert("trim".into(), json!(options.trim));
    details.insert(
        "checks".into(),
        json!({ "slope_ci_contains_1": slope_ok, "intercept_ci_contains_0": intercept_ok, "orthogonality": moments_ok }),
    );
    Ok(TestReport {
        test_name: "martingale".into(),
        statistic: fit.slope,
        p_value: Some(slope_p),
        interval: Some(slope_ci),
        n_samples: vec![xs.len()],
        alpha,
        verdict: Verdict::from_pass(slope_ok && intercept_ok && moments_ok),
        seed: options.seed,
        details,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Per-time KS of the ensemble against fresh reference marginals of equal size;
/// passes iff every p-value exceeds `alpha / |times|`.
pub fn marginal_match_test(
    ensemble: &PathEnsemble,
    reference: &ReferenceProcess,
    times: &[f64],
    alpha: f64,
) -> Result<TestReport> {
    let reference = *reference;
    marginal_match_test_with(ensemble, times, alpha, reference.name(), derive_seed(ensemble.seed, "marginal"), move |t, rng| {
        reference.sample_marginal(t, rng)
    })
}

/// [`marginal_match_test`] against an arbitrary sampler of the target law at time `t`.
pub fn marginal_match_test_with(
    ensemble: &PathEnsemble,
    times: &[f64],
    alpha: f64,
    target: &str,
    seed: u64,
    sampler: impl Fn(f64, &mut SimRng) -> Result<f64>,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if times.is_empty() {
        return Err(domain("marginal test needs at least one time"));
    }
    let n = ensemble.n_paths();
    let threshold = alpha / times.len() as f64;
    let mut per_time = Vec::with_capacity(times.len());
    let (mut worst_d, mut min_p): (f64, f64) = (0.0, 1.0);
    for (j, &requested) in times.iter().enumerate() {
        let index =
            ensemble.grid.index_of(requested).ok_or_else(|| domain(format!("time {requested} is not on the ensemble grid")))?;
        let t = ensemble.grid.times()[index];
        let sample = ensemble.column(index);
        let mut rng = stream(seed, j as u64);
        let fresh = (0..n).map(|_| sampler(t, &mut rng)).collect::<Result<Vec<_>>>()?;
        let (d, p) = ks_two_sample(&sample, &fresh)?;
        worst_d = worst_d.max(d);
        min_p = min_p.min(p);
        per_time.push(json!({ "t": t, "D": d, "p": p }));
    }
    let mut details = BTreeMap::new();
    details.insert("target".into(), json!(target));
    details.insert("per_time".into(), Value::Array(per_time));
    details.insert("bonferroni_threshold".into(), json!(threshold));
    Ok(TestReport {
        test_name: "marginal".into(),
        statistic: worst_d,
        p_value: Some((min_p * times.len() as f64).min(1.0)),
        interval: None,
        n_samples: vec![n, n],
        alpha,
        verdict: Verdict::from_pass(min_p > threshold),
        seed,
        details,
    })
}

/// KS between `X_{ct}` and `c^κ X_t`. Samples of unequal size are cut to the
/// smaller size (both are iid, so the leading draws are a valid subsample).
pub fn self_similarity_test(at_t: &[f64], at_ct: &[f64], c: f64, kappa: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(domain(format!("scale factor must be positive, got {c}")));
    }
    let n = at_t.len().min(at_ct.len());
    if n == 0 {
        return Err(domain("self-similarity test needs nonempty samples"));
    }
    let factor = c.powf(kappa);
    let scaled: Vec<f64> = at_t[..n].iter().map(|x| factor * x).collect();
    let (d, p) = ks_two_sample(&at_ct[..n], &scaled)?;
    let mut details = BTreeMap::new();
    details.insert("c".into(), json!(c));
    details.insert("kappa".into(), json!(kappa));
    Ok(TestReport {
        test_name: "selfsim".into(),
        statistic: d,
        p_value: Some(p),
        interval: None,
        n_samples: vec![n, n],
        alpha,
        verdict: Verdict::from_pass(p > alpha),
        seed: 0,
        details,
    })
}

/// Per-time KS between two ensembles on the same grid; passes iff every p-value
/// exceeds `alpha`.
pub fn ensemble_match_test(a: &PathEnsemble, b: &PathEnsemble, times: &[f64], alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    if times.is_empty() {
        return Err(domain("ensemble comparison needs at least one time"));
    }
    let mut per_time = Vec::with_capacity(times.len());
    let (mut worst_d, mut min_p): (f64, f64) = (0.0, 1.0);
    for &t in times {
        let (d, p) = ks_two_sample(&a.at_time(t)?, &b.at_time(t)?)?;
        worst_d = worst_d.max(d);
        min_p = min_p.min(p);
        per_time.push(json!({ "t": t, "D": d, "p": p }));
    }
    let mut details = BTreeMap::new();
    details.insert("per_time".into(), Value::Array(per_time));
    details.insert("seeds".into(), json!([a.seed, b.seed]));
    Ok(TestReport {
        test_name: "routes".into(),
        statistic: worst_d,
        p_value: Some(min_p),
        interval: None,
        n_samples: vec![a.n_paths(), b.n_paths()],
        alpha,
        verdict: Verdict::from_pass(min_p > alpha),
        seed: a.seed,
        details,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Mean predictable QV at `t` against `t^{2κ} θ₁` (relative tolerance `rel_tol`) and
/// against the mean realized QV of the paths started from `X_0 = 0` (3 combined SE).
pub fn qv_consistency_test(
    ensemble: &PathEnsemble,
    reference: &ReferenceProcess,
    spec: &SubordinatorSpec,
    t: f64,
    rel_tol: f64,
) -> Result<TestReport> {
    let formula = QvFormula::new(reference, spec)?;
    let theta1 = reference.theta1.ok_or_else(|| Error::Unsupported("second moment of the reference is infinite".into()))?;
    let j = ensemble.grid.index_of(t).ok_or_else(|| domain(format!("time {t} is not on the ensemble grid")))?;
    let predictable: Vec<f64> = predictable_qv(ensemble, &formula).into_iter().map(|row| row[j]).collect();
    let realized: Vec<f64> = ensemble
        .paths()
        .map(|p| {
            let mut full = Vec::with_capacity(j + 2);
            full.push(0.0);
            full.extend_from_slice(&p[..=j]);
            realized_qv(&full)
        })
        .collect::<Result<_>>()?;
    let (pm, pse) = mean_and_se(&predictable);
    let (rm, rse) = mean_and_se(&realized);
    let expected = t.powf(2.0 * reference.kappa) * theta1;
    let rel = (pm - expected).abs() / expected;
    let combined = (pse * pse + rse * rse).sqrt();
    let consistent = (pm - rm).abs() <= 3.0 * combined;
    let mut details = BTreeMap::new();
    details.insert("t".into(), json!(t));
    details.insert("expected".into(), json!(expected));
    details.insert("predictable_se".into(), json!(pse));
    details.insert("realized_mean".into(), json!(rm));
    details.insert("realized_se".into(), json!(rse));
    details.insert("relative_error".into(), json!(rel));
    details.insert("rel_tol".into(), json!(rel_tol));
    details.insert("checks".into(), json!({ "expectation": rel <= rel_tol, "realized_within_3se": consistent }));
    Ok(TestReport {
        test_name: "qv".into(),
        statistic: pm,
        p_value: None,
        interval: Some((pm - 3.0 * combined, pm + 3.0 * combined)),
        n_samples: vec![ensemble.n_paths()],
        alpha: rel_tol,
        verdict: Verdict::from_pass(rel <= rel_tol && consistent),
        seed: ensemble.seed,
        details,
    })
}
