//! Mimicking processes built from a reference process and a subordinator.
//!
//! Three constructions produce the same law:
//!
//! - time change: `X_t = t^κ e^{-κ ζ_{a+ln t}} Z_{e^{ζ_{a+ln t}}}` for `t ≥ e^{-a}`;
//! - randomized transition: `X_t | X_s = x` drawn from `P(Rt, t, (t/s)^κ R^κ x, ·)`
//!   with `R = e^{-ζ_{ln(t/s)}}`;
//! - Markov step (independent-increment references only):
//!   `X_t = (t/s)^κ (R^κ X_s + s^κ (1-R)^κ ξ)`, `ξ ~ Z_1`.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::reference::ReferenceProcess;
use crate::rng::stream;
use crate::subordinator::{sample_r, SubordinatorSpec};

/// Strictly increasing positive observation times plus the log-anchor `a` of the
/// time-change construction (`e^{-a} ≤ times[0]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    log_anchor: f64,
}

impl TimeGrid {
    /// Default anchor: `a = 2 - ln t_0`, i.e. the clock has already run for two
    /// units of log-time at the first grid point.
    pub fn default_anchor(t0: f64) -> f64 {
        2.0 - t0.ln()
    }

    pub fn new(times: Vec<f64>, log_anchor: Option<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(domain("time grid must not be empty"));
        }
        if !times.iter().all(|&t| t > 0.0 && t.is_finite()) {
            return Err(domain("grid times must be positive and finite"));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(domain("grid times must be strictly increasing"));
        }
        let a = log_anchor.unwrap_or_else(|| Self::default_anchor(times[0]));
        if !a.is_finite() || a + times[0].ln() < 0.0 {
            return Err(domain(format!("log anchor a = {a} violates e^(-a) <= t_0 = {}", times[0])));
        }
        Ok(Self { times, log_anchor: a })
    }

    /// `points` times uniformly spaced in `ln t`, endpoints included.
    pub fn geometric(t_min: f64, t_max: f64, points: usize) -> Result<Self> {
        check_range(t_min, t_max, points)?;
        let (l0, l1) = (t_min.ln(), t_max.ln());
        let mut times: Vec<f64> = (0..points).map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp()).collect();
        times[0] = t_min;
        times[points - 1] = t_max;
        Self::new(times, None)
    }

    pub fn linear(t_min: f64, t_max: f64, points: usize) -> Result<Self> {
        check_range(t_min, t_max, points)?;
        let mut times: Vec<f64> = (0..points).map(|i| t_min + (t_max - t_min) * i as f64 / (points - 1) as f64).collect();
        times[points - 1] = t_max;
        Self::new(times, None)
    }

    pub fn with_anchor(self, log_anchor: f64) -> Result<Self> {
        Self::new(self.times, Some(log_anchor))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn log_anchor(&self) -> f64 {
        self.log_anchor
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the grid time equal to `t` (to 1e-12 relative).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&g| (g - t).abs() <= 1e-12 * t.abs().max(1.0))
    }
}

fn check_range(t_min: f64, t_max: f64, points: usize) -> Result<()> {
    if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) || points < 2 {
        return Err(domain(format!(
            "grid needs 0 < t_min < t_max and points >= 2, got t_min={t_min}, t_max={t_max}, points={points}"
        )));
    }
    Ok(())
}

/// Construction used to generate an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Timechange,
    Markov,
    RandomizedTransition,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Timechange => "timechange",
            Route::Markov => "markov",
            Route::RandomizedTransition => "randomized-transition",
        }
    }
}

impl std::str::FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timechange" => Ok(Route::Timechange),
            "markov" => Ok(Route::Markov),
            "randomized-transition" => Ok(Route::RandomizedTransition),
            other => Err(domain(format!("unknown route `{other}`"))),
        }
    }
}

/// `N` paths observed on a common grid, stored row-major (one row per path).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    values: Vec<f64>,
    n_paths: usize,
    pub kappa: f64,
    pub seed: u64,
}

/// JSON sidecar describing the binary dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    pub n_paths: usize,
    pub n_times: usize,
    pub grid: Vec<f64>,
    pub log_anchor: f64,
    pub kappa: f64,
    pub seed: u64,
    pub layout: String,
}

impl PathEnsemble {
    pub fn from_rows(grid: TimeGrid, rows: Vec<Vec<f64>>, kappa: f64, seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(domain("ensemble needs at least one path"));
        }
        let m = grid.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(domain(format!("path {i} has {} values, grid has {m}", row.len())));
            }
            if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                return Err(domain(format!("path {i} contains a non-finite value {bad}")));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { grid, values, n_paths: rows.len(), kappa, seed })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_times(&self) -> usize {
        self.grid.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let m = self.n_times();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_times())
    }

    /// Values of all paths at grid index `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.paths().map(|p| p[j]).collect()
    }

    /// Values of all paths at grid time `t`.
    pub fn at_time(&self, t: f64) -> Result<Vec<f64>> {
        let j = self.grid.index_of(t).ok_or_else(|| domain(format!("time {t} is not on the ensemble grid")))?;
        Ok(self.column(j))
    }

    /// Entrywise `f(x, t)`; the result keeps the grid and seed.
    pub fn map(&self, kappa: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let m = self.n_times();
        let times = self.grid.times();
        let values: Vec<f64> = self.values.iter().enumerate().map(|(i, &x)| f(x, times[i % m])).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("transformed ensemble contains non-finite values"));
        }
        Ok(Self { grid: self.grid.clone(), values, n_paths: self.n_paths, kappa, seed: self.seed })
    }

    /// CSV with header `path_id,t_1,...,t_M`, one row per path.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = String::from("path_id");
        for j in 1..=self.n_times() {
            header.push_str(&format!(",t_{j}"));
        }
        writeln!(w, "{header}")?;
        for (i, p) in self.paths().enumerate() {
            let mut line = i.to_string();
            for v in p {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Raw little-endian `f64` values, row-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn sidecar(&self) -> EnsembleSidecar {
        EnsembleSidecar {
            n_paths: self.n_paths,
            n_times: self.n_times(),
            grid: self.grid.times().to_vec(),
            log_anchor: self.grid.log_anchor(),
            kappa: self.kappa,
            seed: self.seed,
            layout: "row-major f64 little-endian, n_paths x n_times".into(),
        }
    }

    /// Inverse of [`Self::write_binary`] given its sidecar.
    pub fn read_binary(bytes: &[u8], sidecar: &EnsembleSidecar) -> Result<Self> {
        let expected = sidecar.n_paths * sidecar.n_times * 8;
        if bytes.len() != expected {
            return Err(domain(format!("binary dump has {} bytes, sidecar implies {expected}", bytes.len())));
        }
        let grid = TimeGrid::new(sidecar.grid.clone(), Some(sidecar.log_anchor))?;
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let rows = values.chunks(sidecar.n_times).map(<[f64]>::to_vec).collect();
        Self::from_rows(grid, rows, sidecar.kappa, sidecar.seed)
    }
}

/// One time-change path together with the clock values `ζ_{a + ln t_i}`.
pub fn timechange_path_with_clock<R: Rng + ?Sized>(
    reference: &ReferenceProcess,
    spec: &SubordinatorSpec,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if spec.beta > 1.0 {
        return Err(domain(format!("time-change route needs beta <= 1, got {}", spec.beta)));
    }
    let a = grid.log_anchor();
    let log_times: Vec<f64> = grid.times().iter().map(|&t| (a + t.ln()).max(0.0)).collect();
    let clock = spec.sample_path_at(&log_times, rng)?;
    // Ẑ_τ = e^{-κτ} Z_{e^τ} is read at τ = ζ_i; X_i = t_i^κ Ẑ_{ζ_i}.
    let mut scaled = Vec::with_capacity(clock.len());
    let mut prev_clock = 0.0;
    let mut prev: f64 = 0.0;
    for (i, &tau) in clock.iter().enumerate() {
        let z = if i == 0 { reference.sample_unit(rng) } else { reference.sample_lamperti(prev, tau - prev_clock, rng)? };
        scaled.push(z);
        prev = z;
        prev_clock = tau;
    }
    let kappa = reference.kappa;
    let path = grid.times().iter().zip(&scaled).map(|(&t, &z)| t.powf(kappa) * z).collect();
    Ok((path, clock))
}

/// One path of `X_t = t^κ e^{-κζ_{a+ln t}} Z_{e^{ζ_{a+ln t}}}` on the grid.
pub fn timechange_path<R: Rng + ?Sized>(
    reference: &ReferenceProcess,
    spec: &SubordinatorSpec,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Vec<f64>> {
    timechange_path_with_clock(reference, spec, grid, rng).map(|(p, _)| p)
}

/// `X_t = (t/s)^κ (R^κ x + s^κ (1-R)^κ ξ)` with `R ~ G_{t/s}` and `ξ ~ Z_1`.
pub fn markov_step<R: Rng + ?Sized>(
    reference: &ReferenceProcess,
    spec: &SubordinatorSpec,
    s: f64,
    t: f64,
    x: f64,
    rng: &mut R,
) -> Result<f64> {
    if !reference.supports_markov_step() {
        return Err(Error::Unsupported(format!(
            "the Markov-step representation needs stationary independent increments; {} {:?} does not have them",
            reference.name(),
            reference.variant
        )));
    }
    if !(s > 0.0) || !(t >= s) || t.is_infinite() {
        return Err(domain(format!("Markov step needs 0 < s <= t < inf, got s={s}, t={t}")));
    }
    let kappa = reference.kappa;
    let r = sample_r(spec, t / s, rng)?;
    let xi = reference.sample_unit(rng);
    Ok((t / s).powf(kappa) * (r.powf(kappa) * x + s.powf(kappa) * (1.0 - r).powf(kappa) * xi))
}

/// Draw from the randomized kernel `E[P(Rt, t, (t/s)^κ R^κ x, ·)]`.
///
/// Evaluated as `t^κ · Ẑ` where `Ẑ` follows the Lamperti kernel over log-time
/// `ζ_{ln(t/s)}` started from `x / s^κ`; by self-similarity this is the same draw
/// as [`randomized_transition_given_r`] with a random `R`, but stays finite when `R`
/// underflows.
pub fn randomized_transition_sample<R: Rng + ?Sized>(
    reference: &ReferenceProcess,
    spec: &SubordinatorSpec,
    s: f64,
    t: f64,
    x: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(s > 0.0) || !(t >= s) || t.is_infinite() {
        return Err(domain(format!("transition needs 0 < s <= t < inf, got s={s}, t={t}")));
    }
    if !reference.in_state_space(s, x) {
        return Err(domain(format!("state {x} is outside the state space at time {s}")));
    }
    if s == t {
        return Ok(x);
    }
    let kappa = reference.kappa;
    let zeta = spec.sample_increment((t / s).ln(), rng)?;
    let start = x / s.powf(kappa);
    Ok(t.powf(kappa) * reference.sample_lamperti(start, zeta, rng)?)
}

/// The randomized kernel conditional on a given `R = r ∈ (0, 1]`:
/// a draw from `P(rt, t, (t/s)^κ r^κ x, ·)`.
pub fn randomized_transition_given_r<R: Rng + ?Sized>(
    reference: &ReferenceProcess,
    s: f64,
    t: f64,
    x: f64,
    r: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(domain(format!("randomizer must lie in (0,1], got {r}")));
    }
    let kappa = reference.kappa;
    reference.sample_transition(r * t, t, (t / s).powf(kappa) * r.powf(kappa) * x, rng)
}

/// One path on the grid by the given route. Non-timechange routes start from an
/// exact draw of `Z_{t_0}`.
pub fn sample_path<R: Rng + ?Sized>(
    reference: &ReferenceProcess,
    spec: &SubordinatorSpec,
    grid: &TimeGrid,
    route: Route,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match route {
        Route::Timechange => timechange_path(reference, spec, grid, rng),
        Route::Markov | Route::RandomizedTransition => {
            let times = grid.times();
            let mut path = Vec::with_capacity(times.len());
            let mut x = reference.sample_marginal(times[0], rng)?;
            path.push(x);
            for w in times.windows(2) {
                x = match route {
                    Route::Markov => markov_step(reference, spec, w[0], w[1], x, rng)?,
                    _ => randomized_transition_sample(reference, spec, w[0], w[1], x, rng)?,
                };
                path.push(x);
            }
            Ok(path)
        }
    }
}

/// Generate `n_paths` paths in parallel. Path `i` uses stream `(seed, i)`, so the
/// result is identical for any thread count.
pub fn simulate_ensemble(
    reference: &ReferenceProcess,
    spec: &SubordinatorSpec,
    grid: &TimeGrid,
    route: Route,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(domain("n_paths must be >= 1"));
    }
    if route == Route::Markov && !reference.supports_markov_step() {
        return Err(Error::Unsupported(format!(
            "Markov route is not available for {} {:?}",
            reference.name(),
            reference.variant
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            sample_path(reference, spec, grid, route, &mut rng)
        })
        .collect::<Result<_>>()?;
    PathEnsemble::from_rows(grid.clone(), rows, reference.kappa, seed)
}

/// Paths of the reference process itself (no randomization).
pub fn simulate_reference(reference: &ReferenceProcess, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(domain("n_paths must be >= 1"));
    }
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| reference.sample_at_times(grid.times(), &mut stream(seed, i as u64)))
        .collect::<Result<_>>()?;
    PathEnsemble::from_rows(grid.clone(), rows, reference.kappa, seed)
}

/// Space–time Hermite polynomial `H_n(x, t) = t^{n/2} h_n(x/√t)`, via
/// `H_{n+1} = x H_n - n t H_{n-1}`.
pub fn hermite(n: u32, x: f64, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for j in 1..n {
        let next = x * cur - f64::from(j) * t * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Entrywise `H_n(X_i, t_i)`; the result is `n/2`-self-similar.
pub fn hermite_transform(ensemble: &PathEnsemble, n: u32) -> Result<PathEnsemble> {
    if n < 1 {
        return Err(domain("Hermite degree must be >= 1"));
    }
    ensemble.map(f64::from(n) / 2.0, |x, t| hermite(n, x, t))
}

/// Entrywise `exp(X_t - t/2)`.
pub fn exponential_transform(ensemble: &PathEnsemble) -> Result<PathEnsemble> {
    ensemble.map(ensemble.kappa, |x, t| (x - 0.5 * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subordinator::{calibrate, FreeParam};

    fn poisson_calibrated(kappa: f64) -> SubordinatorSpec {
        calibrate(&SubordinatorSpec::poisson(0.0, 1.0).unwrap(), kappa, FreeParam::Rate).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![1.0, 1.0], None).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], None).is_err());
        assert!(TimeGrid::new(vec![1.0, 2.0], Some(-1.0)).is_err());
        let g = TimeGrid::geometric(0.5, 4.0, 4).unwrap();
        assert_eq!(g.times(), &[0.5, 1.0, 2.0, 4.0]);
        assert!((g.log_anchor() - (2.0 + 2f64.ln())).abs() < 1e-15);
        assert_eq!(g.index_of(2.0), Some(2));
        let l = TimeGrid::linear(1.0, 2.0, 3).unwrap();
        assert_eq!(l.times(), &[1.0, 1.5, 2.0]);
        assert!(TimeGrid::geometric(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(2, 1.5, 1.0), 1.25);
        assert_eq!(hermite(3, 2.0, 1.0), 2.0);
        for &(x, t) in &[(0.3, 2.0), (-1.2, 0.7)] {
            assert!((hermite(4, x, t) - (x.powi(4) - 6.0 * t * x * x + 3.0 * t * t)).abs() < 1e-12);
        }
        assert!((hermite(5, 1.3, 0.0) - 1.3f64.powi(5)).abs() < 1e-12);
    }

    #[test]
    fn markov_step_degenerate_cases() {
        let bm = ReferenceProcess::gaussian(0.0).unwrap();
        let spec = poisson_calibrated(0.5);
        let mut rng = stream(1, 0);
        assert_eq!(markov_step(&bm, &spec, 2.0, 2.0, 0.37, &mut rng).unwrap(), 0.37);
        // identity clock: R = s/t, so X_t = x + √(t-s) ξ
        let id = SubordinatorSpec::identity();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| markov_step(&bm, &id, 1.0, 4.0, 0.0, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 3.0 * (3.0 / n as f64).sqrt());
        assert!((var - 3.0).abs() < 3.0 * 3.0 * (2.0 / n as f64).sqrt());

        let sf = ReferenceProcess::sign_flip(1.0, crate::VLaw::Rademacher).unwrap();
        assert!(matches!(markov_step(&sf, &spec, 1.0, 2.0, 1.0, &mut rng), Err(Error::Unsupported(_))));
        let g1 = ReferenceProcess::gaussian(1.0).unwrap();
        assert!(matches!(markov_step(&g1, &spec, 1.0, 2.0, 1.0, &mut rng), Err(Error::Unsupported(_))));
    }

    #[test]
    fn randomized_transition_conditional_moments() {
        // Given R = r the Brownian kernel is N(√(t r / s) x, t(1 - r)).
        let bm = ReferenceProcess::gaussian(0.0).unwrap();
        let (s, t, x, r) = (1.0, 2.0, 0.8, 0.3);
        let n = 100_000;
        let mut rng = stream(2, 0);
        let ys: Vec<f64> = (0..n).map(|_| randomized_transition_given_r(&bm, s, t, x, r, &mut rng).unwrap()).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let (em, ev) = ((t / s * r).sqrt() * x, t * (1.0 - r));
        assert!((mean - em).abs() < 3.0 * (ev / n as f64).sqrt());
        assert!((var - ev).abs() < 3.0 * ev * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn randomized_transition_with_identity_clock_is_reference_kernel() {
        let id = SubordinatorSpec::identity();
        let mut rng = stream(3, 0);
        let sf = ReferenceProcess::sign_flip(1.0, crate::VLaw::Rademacher).unwrap();
        let n = 50_000;
        let up = (0..n).filter(|_| randomized_transition_sample(&sf, &id, 1.0, 2.0, 0.5, &mut rng).unwrap() == 1.0).count()
            as f64
            / n as f64;
        assert!((up - 0.75).abs() < 3.0 * (0.1875 / n as f64).sqrt());
        assert_eq!(randomized_transition_sample(&sf, &id, 1.0, 1.0, 0.5, &mut rng).unwrap(), 0.5);
    }

    #[test]
    fn piecewise_power_between_clock_jumps() {
        let spec =
            calibrate(&SubordinatorSpec::compound_poisson_exponential(0.0, 1.0, 2.0).unwrap(), 0.5, FreeParam::Rate).unwrap();
        let bm = ReferenceProcess::gaussian(0.0).unwrap();
        let grid = TimeGrid::geometric(0.5, 4.0, 40).unwrap();
        let mut rng = stream(4, 0);
        let mut checked = 0;
        for _ in 0..200 {
            let (x, clock) = timechange_path_with_clock(&bm, &spec, &grid, &mut rng).unwrap();
            for i in 0..x.len() - 1 {
                if clock[i + 1] == clock[i] && x[i] != 0.0 {
                    let (t1, t2) = (grid.times()[i], grid.times()[i + 1]);
                    let rel = (x[i + 1] / x[i] - (t2 / t1).powf(0.5)).abs() / (t2 / t1).powf(0.5);
                    assert!(rel < 1e-12, "{rel}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn ensemble_is_thread_count_independent() {
        let bm = ReferenceProcess::gaussian(0.0).unwrap();
        let spec = poisson_calibrated(0.5);
        let grid = TimeGrid::geometric(0.5, 2.0, 5).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_ensemble(&bm, &spec, &grid, Route::Timechange, 500, 99).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn csv_and_binary_exports() {
        let grid = TimeGrid::new(vec![1.0, 2.0], None).unwrap();
        let e = PathEnsemble::from_rows(grid, vec![vec![0.5, -1.0], vec![2.0, 0.25]], 0.5, 7).unwrap();
        let mut csv = Vec::new();
        e.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "path_id,t_1,t_2\n0,0.5,-1\n1,2,0.25\n");
        let mut bin = Vec::new();
        e.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 32);
        assert_eq!(PathEnsemble::read_binary(&bin, &e.sidecar()).unwrap(), e);
        assert!(PathEnsemble::read_binary(&bin[..24], &e.sidecar()).is_err());
    }

    #[test]
    fn from_rows_rejects_ragged_or_nonfinite() {
        let grid = TimeGrid::new(vec![1.0, 2.0], None).unwrap();
        assert!(PathEnsemble::from_rows(grid.clone(), vec![], 0.5, 0).is_err());
        assert!(PathEnsemble::from_rows(grid.clone(), vec![vec![1.0]], 0.5, 0).is_err());
        assert!(PathEnsemble::from_rows(grid, vec![vec![1.0, f64::NAN]], 0.5, 0).is_err());
    }
}
