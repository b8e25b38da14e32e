//! Infinitesimal generators of the mimic and its quadratic variation.
//!
//! Two independent evaluations of `A_t` are provided:
//!
//! - [`closed_form_generator`]:
//!   `A_t f(x) = β L_t f(x) + (1-β)(κ/t) x f′(x) + (1/t) ∫∫ (f(y) - f(x)) P(te^{-u}, t, xe^{-uκ}, dy) ν(du)`,
//!   with the inner expectation taken from backward transition moments;
//! - [`build_mimic_generator`]: the Lamperti, Bochner, time-change and product
//!   combinators chained as `A_t f(x) = (1/t)[L̄(π_{t^κ} f)(x/t^κ) + κ x f′(x)]`,
//!   where `L̄` is the Bochner subordinate of the Lamperti generator. Its jump
//!   term uses forward moments of the reference.
//!
//! For polynomial test functions both routes are exact: `u ↦ E f(Y_u)` is a finite
//! sum `Σ c_i e^{-λ_i u}`, so `∫ (E f(Y_u) - f(x)) ν(du) = -Σ c_i ψ_J(λ_i)` for every
//! jump family.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mimic::{randomized_transition_sample, PathEnsemble};
use crate::reference::{ReferenceProcess, Variant};
use crate::rng::stream;
use crate::subordinator::{JumpFamily, SubordinatorSpec};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Highest polynomial degree with closed-form transition moments.
pub const MAX_POLY_DEGREE: usize = 4;

/// A test function together with its first two derivatives.
#[derive(Clone)]
pub enum TestFunction {
    /// `Σ c_n x^n`, coefficients in increasing degree.
    Polynomial(Vec<f64>),
    Custom {
        name: String,
        f: RealFn,
        df: RealFn,
        d2f: RealFn,
    },
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Polynomial(c) => write!(fmt, "Polynomial({c:?})"),
            TestFunction::Custom { name, .. } => write!(fmt, "Custom({name})"),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Polynomial(c) => {
                let terms: Vec<String> = c
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(n, v)| match n {
                        0 => format!("{v}"),
                        1 => format!("{v}*x"),
                        _ => format!("{v}*x^{n}"),
                    })
                    .collect();
                if terms.is_empty() {
                    write!(fmt, "0")
                } else {
                    write!(fmt, "{}", terms.join(" + "))
                }
            }
            TestFunction::Custom { name, .. } => write!(fmt, "{name}"),
        }
    }
}

impl TestFunction {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(domain("polynomial coefficients must be finite"));
        }
        Ok(TestFunction::Polynomial(coeffs))
    }

    /// `x^n`.
    pub fn monomial(n: usize) -> Self {
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        TestFunction::Polynomial(c)
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TestFunction::Custom { name: name.into(), f: Arc::new(f), df: Arc::new(df), d2f: Arc::new(d2f) }
    }

    /// Parse `x`, `x^n`, or a comma-separated coefficient list `c0,c1,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "x" {
            return Ok(Self::monomial(1));
        }
        if let Some(p) = s.strip_prefix("x^") {
            let n: usize = p.parse().map_err(|_| domain(format!("bad exponent in `{s}`")))?;
            return Ok(Self::monomial(n));
        }
        let coeffs = s
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| domain(format!("bad test function `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        Self::polynomial(coeffs)
    }

    fn poly_coeffs(&self) -> Option<&[f64]> {
        match self {
            TestFunction::Polynomial(c) => Some(c),
            TestFunction::Custom { .. } => None,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &a| acc * x + a),
            TestFunction::Custom { f, .. } => f(x),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (n, &a)| acc * x + n as f64 * a),
            TestFunction::Custom { df, .. } => df(x),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => {
                c.iter().enumerate().skip(2).rev().fold(0.0, |acc, (n, &a)| acc * x + (n * (n - 1)) as f64 * a)
            }
            TestFunction::Custom { d2f, .. } => d2f(x),
        }
    }

    /// `π_c f : x ↦ f(cx)`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            TestFunction::Polynomial(coeffs) => {
                TestFunction::Polynomial(coeffs.iter().enumerate().map(|(n, &a)| a * c.powi(n as i32)).collect())
            }
            TestFunction::Custom { name, f, df, d2f } => {
                let (f, df, d2f) = (f.clone(), df.clone(), d2f.clone());
                TestFunction::Custom {
                    name: format!("{name}({c}*x)"),
                    f: Arc::new(move |x| f(c * x)),
                    df: Arc::new(move |x| c * df(c * x)),
                    d2f: Arc::new(move |x| c * c * d2f(c * x)),
                }
            }
        }
    }

    /// `α f + β g`.
    pub fn combine(alpha: f64, f: &Self, beta: f64, g: &Self) -> Self {
        if let (Some(a), Some(b)) = (f.poly_coeffs(), g.poly_coeffs()) {
            let n = a.len().max(b.len());
            let at = |c: &[f64], i: usize| c.get(i).copied().unwrap_or(0.0);
            return TestFunction::Polynomial((0..n).map(|i| alpha * at(a, i) + beta * at(b, i)).collect());
        }
        let (f1, g1, f2, g2, f3, g3) = (f.clone(), g.clone(), f.clone(), g.clone(), f.clone(), g.clone());
        TestFunction::Custom {
            name: format!("{alpha}*({f}) + {beta}*({g})"),
            f: Arc::new(move |x| alpha * f1.value(x) + beta * g1.value(x)),
            df: Arc::new(move |x| alpha * f2.d1(x) + beta * g2.d1(x)),
            d2f: Arc::new(move |x| alpha * f3.d2(x) + beta * g3.d2(x)),
        }
    }

    fn checked_poly(&self) -> Result<Option<&[f64]>> {
        match self.poly_coeffs() {
            Some(c) if c.len() > MAX_POLY_DEGREE + 1 && c[MAX_POLY_DEGREE + 1..].iter().any(|&v| v != 0.0) => {
                Err(Error::Unsupported(format!("polynomial test functions are limited to degree {MAX_POLY_DEGREE}")))
            }
            other => Ok(other),
        }
    }
}

/// `Σ c_i e^{-λ_i u}` as a function of `u ≥ 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpSeries {
    terms: Vec<(f64, f64)>,
}

impl ExpSeries {
    fn constant(c: f64) -> Self {
        Self { terms: vec![(0.0, c)] }
    }

    /// `c · e^{-λu}`.
    fn exp(rate: f64, c: f64) -> Self {
        Self { terms: vec![(rate, c)] }
    }

    fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self { terms }.normalized()
    }

    fn scale(&self, c: f64) -> Self {
        Self { terms: self.terms.iter().map(|&(r, a)| (r, a * c)).collect() }
    }

    fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for &(r1, a1) in &self.terms {
            for &(r2, a2) in &other.terms {
                terms.push((r1 + r2, a1 * a2));
            }
        }
        Self { terms }.normalized()
    }

    fn powi(&self, n: usize) -> Self {
        (0..n).fold(Self::constant(1.0), |acc, _| acc.mul(self))
    }

    fn normalized(mut self) -> Self {
        self.terms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(self.terms.len());
        for (r, a) in self.terms {
            match out.last_mut() {
                Some(last) if (last.0 - r).abs() <= 1e-12 * (1.0 + r.abs()) => last.1 += a,
                _ => out.push((r, a)),
            }
        }
        Self { terms: out }
    }

    pub fn at(&self, u: f64) -> f64 {
        self.terms.iter().map(|&(r, a)| a * (-r * u).exp()).sum()
    }

    /// `∫ (S(u) - S(0)) ν(du) = -Σ c_i ψ_J(λ_i)`.
    fn jump_integral(&self, jumps: &JumpFamily) -> Result<f64> {
        self.terms.iter().try_fold(0.0, |acc, &(r, a)| {
            if r < -1e-12 {
                return Err(domain(format!("exponential series has a growing term e^({}u)", -r)));
            }
            Ok(acc - a * jumps.jump_exponent(r.max(0.0)))
        })
    }
}

/// Raw moments `E[Y^n]`, `n = 0..=4`, of `N(m, v)`.
fn normal_moments(m: &ExpSeries, v: &ExpSeries) -> [ExpSeries; 5] {
    let m2 = m.mul(m);
    let one = ExpSeries::constant(1.0);
    [
        one,
        m.clone(),
        m2.add(v),
        m2.mul(m).add(&m.mul(v).scale(3.0)),
        m2.mul(&m2).add(&m2.mul(v).scale(6.0)).add(&v.mul(v).scale(3.0)),
    ]
}

/// Raw moments of `Q - shift` where `Q` is the BESQ(δ) value after time `h` from
/// `q`: cumulants `κ_n = 2^{n-1}(n-1)! (δ h^n + n q h^{n-1})`.
fn besq_moments(delta: f64, q: &ExpSeries, h: &ExpSeries, shift: &ExpSeries) -> [ExpSeries; 5] {
    let fact = [1.0, 1.0, 2.0, 6.0];
    let k: Vec<ExpSeries> = (1..=4)
        .map(|n| {
            let c = 2f64.powi(n as i32 - 1) * fact[n - 1];
            h.powi(n).scale(delta).add(&q.mul(&h.powi(n - 1)).scale(n as f64)).scale(c)
        })
        .collect();
    let (k1, k2, k3, k4) = (&k[0], &k[1], &k[2], &k[3]);
    let raw = [
        ExpSeries::constant(1.0),
        k1.clone(),
        k2.add(&k1.powi(2)),
        k3.add(&k2.mul(k1).scale(3.0)).add(&k1.powi(3)),
        k4.add(&k3.mul(k1).scale(4.0)).add(&k2.powi(2).scale(3.0)).add(&k2.mul(&k1.powi(2)).scale(6.0)).add(&k1.powi(4)),
    ];
    // E (Q - c)^n = Σ_j C(n,j) E Q^j (-c)^{n-j}
    let neg = shift.scale(-1.0);
    let binom = |n: usize, j: usize| -> f64 { (1..=j).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64) };
    std::array::from_fn(|n| {
        (0..=n).fold(ExpSeries::default(), |acc, j| acc.add(&raw[j].mul(&neg.powi(n - j)).scale(binom(n, j))))
    })
}

fn poly_expectation(coeffs: &[f64], moments: &[ExpSeries; 5]) -> ExpSeries {
    coeffs.iter().enumerate().filter(|(_, &c)| c != 0.0).fold(ExpSeries::default(), |acc, (n, &c)| acc.add(&moments[n].scale(c)))
}

/// Sign-flip kernels keep `|y|` and flip the sign with probability
/// `½(1 - e^{-κu})` over log-time `u`.
fn sign_flip_series(f: &TestFunction, x: f64, kappa: f64) -> ExpSeries {
    let (fp, fm) = (f.value(x), f.value(-x));
    ExpSeries::constant(0.5 * (fp + fm)).add(&ExpSeries::exp(kappa, 0.5 * (fp - fm)))
}

fn unsupported_stable() -> Error {
    Error::Unsupported("the stable reference has a nonlocal generator with no closed polynomial action".into())
}

/// Monte Carlo settings for jump integrals with non-polynomial test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: 100_000, seed: 0 }
    }
}

/// `rate · mean[f(Y) - f(x)]` with jump sizes drawn from the normalized `ν`.
/// Uses the same draws for every `f`, so it is exactly linear in `f`.
fn mc_jump_integral(
    jumps: &JumpFamily,
    f: &TestFunction,
    x: f64,
    mc: &McConfig,
    draw: impl Fn(f64, &mut crate::rng::SimRng) -> Result<f64> + Sync,
) -> Result<f64> {
    let rate = match jumps.total_rate() {
        Some(r) => r,
        None => {
            return Err(Error::Unsupported(format!(
                "non-polynomial test functions need a finite-activity jump measure, {} has infinite activity",
                jumps.name()
            )))
        }
    };
    if rate == 0.0 {
        return Ok(0.0);
    }
    if mc.samples == 0 {
        return Err(domain("mc_samples must be positive"));
    }
    let fx = f.value(x);
    let mut rng = stream(mc.seed, 0);
    let mut sum = 0.0;
    for _ in 0..mc.samples {
        let u = jumps.sample_jump_size(&mut rng).expect("finite activity");
        sum += f.value(draw(u, &mut rng)?) - fx;
    }
    Ok(rate * sum / mc.samples as f64)
}

/// Generator of a time-inhomogeneous Markov process.
pub trait TimeDependentGenerator: Send + Sync {
    fn apply(&self, t: f64, x: f64, f: &TestFunction, mc: &McConfig) -> Result<f64>;
}

/// Generator of a time-homogeneous Markov process.
pub trait HomogeneousGenerator: Send + Sync {
    fn apply(&self, x: f64, f: &TestFunction, mc: &McConfig) -> Result<f64>;
}

/// The transition semigroup `P_u` paired with a homogeneous generator.
pub trait Semigroup: Send + Sync {
    /// `u ↦ P_u f(x)` when it has an exact exponential-series form.
    fn expectation_series(&self, x: f64, f: &TestFunction) -> Result<Option<ExpSeries>>;
    /// A draw from `P_u(x, ·)`.
    fn sample(&self, x: f64, u: f64, rng: &mut crate::rng::SimRng) -> Result<f64>;
}

/// `L_t` of the reference process.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceGenerator {
    pub reference: ReferenceProcess,
}

impl TimeDependentGenerator for ReferenceGenerator {
    fn apply(&self, t: f64, x: f64, f: &TestFunction, _mc: &McConfig) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(domain(format!("generator time must be finite and >= 0, got {t}")));
        }
        f.checked_poly()?;
        match self.reference.variant {
            Variant::GaussianMartingale { k } => Ok(0.5 * t.powf(2.0 * k) * f.d2(x)),
            Variant::SquaredBesselMartingale { delta } => Ok(2.0 * (x + delta * t) * f.d2(x)),
            Variant::SignFlip { kappa, .. } => {
                if t == 0.0 {
                    return Err(domain("the sign-flip generator is singular at t = 0"));
                }
                Ok(kappa / t * (x * f.d1(x) - 0.5 * f.value(x) + 0.5 * f.value(-x)))
            }
            Variant::StableMartingale { .. } => Err(unsupported_stable()),
        }
    }
}

/// Lamperti transform `Ẑ_τ = e^{-κτ} Z_{e^τ}`: `L̂ f(x) = L_1 f(x) - κ x f′(x)`.
#[derive(Debug, Clone, Copy)]
pub struct LampertiGenerator {
    pub reference: ReferenceProcess,
}

impl HomogeneousGenerator for LampertiGenerator {
    fn apply(&self, x: f64, f: &TestFunction, mc: &McConfig) -> Result<f64> {
        let l1 = ReferenceGenerator { reference: self.reference }.apply(1.0, x, f, mc)?;
        Ok(l1 - self.reference.kappa * x * f.d1(x))
    }
}

impl Semigroup for LampertiGenerator {
    /// `P̂_u f(y) = E[f(e^{-κu} Z_{e^u}) | Z_1 = y]`, from forward moments of `Z`
    /// (growing in `T = e^u`) damped by `e^{-nκu}`.
    fn expectation_series(&self, y: f64, f: &TestFunction) -> Result<Option<ExpSeries>> {
        let kappa = self.reference.kappa;
        if let Variant::SignFlip { .. } = self.reference.variant {
            return Ok(Some(sign_flip_series(f, y, kappa)));
        }
        let Some(coeffs) = f.checked_poly()? else {
            return Ok(None);
        };
        let forward = match self.reference.variant {
            Variant::GaussianMartingale { .. } => {
                // Z_T | Z_1 = y ~ N(y, (T^{2κ} - 1)/(2κ))
                let var = ExpSeries::exp(-2.0 * kappa, 1.0 / (2.0 * kappa)).add(&ExpSeries::constant(-1.0 / (2.0 * kappa)));
                normal_moments(&ExpSeries::constant(y), &var)
            }
            Variant::SquaredBesselMartingale { delta } => {
                // BESQ from y + δ at time 1 run for T - 1, then recentred by δT
                let h = ExpSeries::exp(-1.0, 1.0).add(&ExpSeries::constant(-1.0));
                besq_moments(delta, &ExpSeries::constant(y + delta), &h, &ExpSeries::exp(-1.0, delta))
            }
            Variant::StableMartingale { .. } => return Err(unsupported_stable()),
            Variant::SignFlip { .. } => unreachable!(),
        };
        let damped: [ExpSeries; 5] = std::array::from_fn(|n| forward[n].mul(&ExpSeries::exp(n as f64 * kappa, 1.0)));
        Ok(Some(poly_expectation(coeffs, &damped)))
    }

    fn sample(&self, y: f64, u: f64, rng: &mut crate::rng::SimRng) -> Result<f64> {
        self.reference.sample_lamperti(y, u, rng)
    }
}

/// Bochner subordination of a homogeneous process by `ζ`:
/// `β G f + ∫ (P_u f - f) ν(du)`.
#[derive(Debug, Clone, Copy)]
pub struct BochnerGenerator<G> {
    pub base: G,
    pub spec: SubordinatorSpec,
}

impl<G: HomogeneousGenerator + Semigroup> HomogeneousGenerator for BochnerGenerator<G> {
    fn apply(&self, x: f64, f: &TestFunction, mc: &McConfig) -> Result<f64> {
        let drift = if self.spec.beta == 0.0 { 0.0 } else { self.spec.beta * self.base.apply(x, f, mc)? };
        if !self.spec.has_jumps() {
            return Ok(drift);
        }
        let jump = match self.base.expectation_series(x, f)? {
            Some(series) => series.jump_integral(&self.spec.jumps)?,
            None => mc_jump_integral(&self.spec.jumps, f, x, mc, |u, rng| self.base.sample(x, u, rng))?,
        };
        Ok(drift + jump)
    }
}

/// Treats a homogeneous generator as time dependent.
#[derive(Debug, Clone, Copy)]
pub struct Stationary<G>(pub G);

impl<G: HomogeneousGenerator> TimeDependentGenerator for Stationary<G> {
    fn apply(&self, _t: f64, x: f64, f: &TestFunction, mc: &McConfig) -> Result<f64> {
        self.0.apply(x, f, mc)
    }
}

/// Deterministic time change `Y_t = X_{c_t}`: `Ã_t = c′_t A_{c_t}`.
#[derive(Clone)]
pub struct TimeChanged<G> {
    pub inner: G,
    pub clock: RealFn,
    pub clock_rate: RealFn,
}

impl<G: TimeDependentGenerator> TimeDependentGenerator for TimeChanged<G> {
    fn apply(&self, t: f64, x: f64, f: &TestFunction, mc: &McConfig) -> Result<f64> {
        Ok((self.clock_rate)(t) * self.inner.apply((self.clock)(t), x, f, mc)?)
    }
}

/// Deterministic product `Y_t = c_t X_t`:
/// `A^Y_t f(x) = (A_t π_{c_t} f)(x / c_t) + (c′_t / c_t) x f′(x)`.
#[derive(Clone)]
pub struct Scaled<G> {
    pub inner: G,
    pub factor: RealFn,
    pub log_rate: RealFn,
}

impl<G: TimeDependentGenerator> TimeDependentGenerator for Scaled<G> {
    fn apply(&self, t: f64, x: f64, f: &TestFunction, mc: &McConfig) -> Result<f64> {
        let c = (self.factor)(t);
        Ok(self.inner.apply(t, x / c, &f.scaled(c), mc)? + (self.log_rate)(t) * x * f.d1(x))
    }
}

/// The mimic's generator written out directly.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormGenerator {
    pub reference: ReferenceProcess,
    pub spec: SubordinatorSpec,
}

impl ClosedFormGenerator {
    /// `u ↦ E f(Y_u)` with `Y_u ~ P(te^{-u}, t, xe^{-uκ}, ·)`, from backward moments.
    fn kernel_series(&self, t: f64, x: f64, f: &TestFunction) -> Result<Option<ExpSeries>> {
        let kappa = self.reference.kappa;
        if let Variant::SignFlip { .. } = self.reference.variant {
            return Ok(Some(sign_flip_series(f, x, kappa)));
        }
        let Some(coeffs) = f.checked_poly()? else {
            return Ok(None);
        };
        let moments = match self.reference.variant {
            Variant::GaussianMartingale { .. } => {
                let p = 2.0 * kappa;
                let mean = ExpSeries::exp(kappa, x);
                let var = ExpSeries::constant(1.0).add(&ExpSeries::exp(p, -1.0)).scale(t.powf(p) / p);
                normal_moments(&mean, &var)
            }
            Variant::SquaredBesselMartingale { delta } => {
                let q = ExpSeries::exp(1.0, x + delta * t);
                let h = ExpSeries::constant(t).add(&ExpSeries::exp(1.0, -t));
                besq_moments(delta, &q, &h, &ExpSeries::constant(delta * t))
            }
            Variant::StableMartingale { .. } => return Err(unsupported_stable()),
            Variant::SignFlip { .. } => unreachable!(),
        };
        Ok(Some(poly_expectation(coeffs, &moments)))
    }
}

impl TimeDependentGenerator for ClosedFormGenerator {
    fn apply(&self, t: f64, x: f64, f: &TestFunction, mc: &McConfig) -> Result<f64> {
        let base = ReferenceGenerator { reference: self.reference };
        let beta = self.spec.beta;
        let kappa = self.reference.kappa;
        let local = if beta == 0.0 { 0.0 } else { beta * base.apply(t, x, f, mc)? };
        let drift = (1.0 - beta) * kappa / t * x * f.d1(x);
        if !self.spec.has_jumps() {
            return Ok(local + drift);
        }
        let jump = match self.kernel_series(t, x, f)? {
            Some(series) => series.jump_integral(&self.spec.jumps)?,
            None => {
                let reference = self.reference;
                mc_jump_integral(&self.spec.jumps, f, x, mc, |u, rng| {
                    reference.sample_transition(t * (-u).exp(), t, x * (-u * kappa).exp(), rng)
                })?
            }
        };
        Ok(local + drift + jump / t)
    }
}

/// A time-dependent generator bundled with its Monte Carlo settings.
/// At `t = 0` it evaluates `L_0` of the reference.
#[derive(Clone)]
pub struct GeneratorEvaluator {
    pub name: String,
    reference: ReferenceProcess,
    inner: Arc<dyn TimeDependentGenerator>,
    pub mc: McConfig,
}

impl fmt::Debug for GeneratorEvaluator {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt.debug_struct("GeneratorEvaluator").field("name", &self.name).field("mc", &self.mc).finish()
    }
}

impl GeneratorEvaluator {
    pub fn new(name: impl Into<String>, reference: ReferenceProcess, inner: Arc<dyn TimeDependentGenerator>) -> Self {
        Self { name: name.into(), reference, inner, mc: McConfig::default() }
    }

    pub fn with_mc(mut self, samples: usize, seed: u64) -> Self {
        self.mc = McConfig { samples, seed };
        self
    }

    /// `A_t f(x)`.
    pub fn apply(&self, t: f64, x: f64, f: &TestFunction) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() || !x.is_finite() {
            return Err(domain(format!("generator needs finite t >= 0 and finite x, got t={t}, x={x}")));
        }
        if !self.reference.in_state_space(t, x) {
            return Err(domain(format!("state {x} is outside the state space at time {t}")));
        }
        if t == 0.0 {
            return ReferenceGenerator { reference: self.reference }.apply(0.0, x, f, &self.mc);
        }
        self.inner.apply(t, x, f, &self.mc)
    }
}

fn check_supported(reference: &ReferenceProcess) -> Result<()> {
    match reference.variant {
        Variant::StableMartingale { .. } => Err(unsupported_stable()),
        _ => Ok(()),
    }
}

/// `A_t` written out directly.
pub fn closed_form_generator(reference: &ReferenceProcess, spec: &SubordinatorSpec) -> Result<GeneratorEvaluator> {
    check_supported(reference)?;
    Ok(GeneratorEvaluator::new("closed-form", *reference, Arc::new(ClosedFormGenerator { reference: *reference, spec: *spec })))
}

/// `A_t` assembled from the combinators:
/// reference → Lamperti → Bochner(ζ) → time change `ln t` → product `t^κ`.
pub fn build_mimic_generator(reference: &ReferenceProcess, spec: &SubordinatorSpec) -> Result<GeneratorEvaluator> {
    check_supported(reference)?;
    let kappa = reference.kappa;
    let subordinated = Stationary(BochnerGenerator { base: LampertiGenerator { reference: *reference }, spec: *spec });
    let time_changed =
        TimeChanged { inner: subordinated, clock: Arc::new(|t: f64| t.ln()), clock_rate: Arc::new(|t: f64| 1.0 / t) };
    let scaled = Scaled {
        inner: time_changed,
        factor: Arc::new(move |t: f64| t.powf(kappa)),
        log_rate: Arc::new(move |t: f64| kappa / t),
    };
    Ok(GeneratorEvaluator::new("composed", *reference, Arc::new(scaled)))
}

/// Monte Carlo difference quotient of the randomized transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n: usize,
}

const FD_CHUNK: usize = 1 << 14;

/// `mean[f(Y) - f(x)] / h` with `Y` drawn from the randomized kernel over `[t, t+h]`.
/// Chunks use their own RNG streams and are summed in order, so the estimate does
/// not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_generator_check(
    reference: &ReferenceProcess,
    spec: &SubordinatorSpec,
    f: &TestFunction,
    t: f64,
    x: f64,
    h: f64,
    n: usize,
    seed: u64,
) -> Result<FdEstimate> {
    if !(t > 0.0 && h > 0.0) || n < 2 {
        return Err(domain(format!("finite difference needs t > 0, h > 0, N >= 2; got t={t}, h={h}, N={n}")));
    }
    let fx = f.value(x);
    let chunks = n.div_ceil(FD_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let len = FD_CHUNK.min(n - c * FD_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let y = randomized_transition_sample(reference, spec, t, t + h, x, &mut rng)?;
                let d = (f.value(y) - fx) / h;
                s += d;
                s2 += d * d;
            }
            Ok((s, s2))
        })
        .collect::<Result<_>>()?;
    let (s, s2) = partial.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(FdEstimate { estimate: mean, se: (var / nf).sqrt(), n })
}

/// Predictable quadratic variation `⟨X, X⟩_t` in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum QvFormula {
    /// `t^{2k+1} ψ(2k+1)/(2k+1)² + (2k+1 - ψ(2k+1)) ∫ X²/s ds`.
    Gaussian { k: f64, psi: f64 },
    /// `δ t² ψ(2) + 4(ψ(2) - ψ(1)) ∫ X ds + (2 - ψ(2)) ∫ X²/s ds`.
    SquaredBessel { delta: f64, psi1: f64, psi2: f64 },
    /// `2κ ∫ X²/s ds`.
    SignFlip { kappa: f64 },
}

impl QvFormula {
    pub fn new(reference: &ReferenceProcess, spec: &SubordinatorSpec) -> Result<Self> {
        match reference.variant {
            Variant::GaussianMartingale { k } => Ok(QvFormula::Gaussian { k, psi: spec.psi(2.0 * k + 1.0) }),
            Variant::SquaredBesselMartingale { delta } => {
                Ok(QvFormula::SquaredBessel { delta, psi1: spec.psi(1.0), psi2: spec.psi(2.0) })
            }
            Variant::SignFlip { kappa, .. } => Ok(QvFormula::SignFlip { kappa }),
            Variant::StableMartingale { .. } => {
                Err(Error::Unsupported("the stable reference has infinite variance and no quadratic variation formula".into()))
            }
        }
    }

    /// `d⟨X, X⟩_t / dt` at `X_t = x`.
    pub fn integrand(&self, t: f64, x: f64) -> f64 {
        match *self {
            QvFormula::Gaussian { k, psi } => {
                let p = 2.0 * k + 1.0;
                t.powf(p - 1.0) * psi / p + (p - psi) * x * x / t
            }
            QvFormula::SquaredBessel { delta, psi1, psi2 } => {
                2.0 * delta * t * psi2 + 4.0 * (psi2 - psi1) * x + (2.0 - psi2) * x * x / t
            }
            QvFormula::SignFlip { kappa } => 2.0 * kappa * x * x / t,
        }
    }

    /// `⟨X, X⟩` along one path. Integrals start at the first grid time; the
    /// contribution of `[0, t_0]` to them is taken as zero.
    pub fn along_path(&self, times: &[f64], path: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(times.len());
        let (mut int_x, mut int_x2s) = (0.0, 0.0);
        for i in 0..times.len() {
            if i > 0 {
                let ds = times[i] - times[i - 1];
                int_x += 0.5 * ds * (path[i] + path[i - 1]);
                int_x2s += 0.5 * ds * (path[i] * path[i] / times[i] + path[i - 1] * path[i - 1] / times[i - 1]);
            }
            let t = times[i];
            out.push(match *self {
                QvFormula::Gaussian { k, psi } => {
                    let p = 2.0 * k + 1.0;
                    t.powf(p) * psi / (p * p) + (p - psi) * int_x2s
                }
                QvFormula::SquaredBessel { delta, psi1, psi2 } => {
                    delta * t * t * psi2 + 4.0 * (psi2 - psi1) * int_x + (2.0 - psi2) * int_x2s
                }
                QvFormula::SignFlip { kappa } => 2.0 * kappa * int_x2s,
            });
        }
        out
    }
}

/// `⟨X, X⟩` at every grid time for every path (row-major like the ensemble).
pub fn predictable_qv(ensemble: &PathEnsemble, formula: &QvFormula) -> Vec<Vec<f64>> {
    let times = ensemble.grid.times();
    (0..ensemble.n_paths()).into_par_iter().map(|i| formula.along_path(times, ensemble.path(i))).collect()
}

/// `Σ (X_{i+1} - X_i)²`.
pub fn realized_qv(path: &[f64]) -> Result<f64> {
    if path.len() < 2 {
        return Err(domain(format!("realized QV needs at least 2 points, got {}", path.len())));
    }
    Ok(path.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum())
}
