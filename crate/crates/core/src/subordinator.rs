//! Subordinators `ζ` and the scale randomizers `R_u = exp(-ζ_{ln u})`.
//!
//! A subordinator is described by a drift `β ≥ 0` and one of four jump families.
//! Its Laplace exponent is
//!
//! ```text
//! ψ(λ) = βλ + ∫ (1 - e^{-λx}) ν(dx)
//! ```
//!
//! with closed forms for every family below.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::stable::positive_stable;

/// Jump part of a subordinator. Parameter names follow the Lévy measures:
///
/// - `Poisson`: unit jumps at rate `rate`.
/// - `CompoundPoissonExponential`: jumps at rate `rate`, sizes exponential with mean `1/theta`.
/// - `Gamma`: `ν(dx) = shape · x⁻¹ e^{-theta·x} dx`.
/// - `StableSubordinator`: `ψ_J(λ) = scale · λ^index`, `index ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum JumpFamily {
    DriftOnly,
    Poisson { rate: f64 },
    CompoundPoissonExponential { rate: f64, theta: f64 },
    Gamma { shape: f64, theta: f64 },
    StableSubordinator { index: f64, scale: f64 },
}

impl JumpFamily {
    pub fn name(&self) -> &'static str {
        match self {
            JumpFamily::DriftOnly => "drift-only",
            JumpFamily::Poisson { .. } => "poisson",
            JumpFamily::CompoundPoissonExponential { .. } => "compound-poisson-exponential",
            JumpFamily::Gamma { .. } => "gamma",
            JumpFamily::StableSubordinator { .. } => "stable-subordinator",
        }
    }

    /// `ψ_J(λ) = ∫ (1 - e^{-λx}) ν(dx)`.
    pub fn jump_exponent(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        match *self {
            JumpFamily::DriftOnly => 0.0,
            JumpFamily::Poisson { rate } => -rate * (-lambda).exp_m1(),
            JumpFamily::CompoundPoissonExponential { rate, theta } => rate * lambda / (lambda + theta),
            JumpFamily::Gamma { shape, theta } => shape * (lambda / theta).ln_1p(),
            JumpFamily::StableSubordinator { index, scale } => scale * lambda.powf(index),
        }
    }

    /// Total mass of `ν`, or `None` for infinite activity.
    pub fn total_rate(&self) -> Option<f64> {
        match *self {
            JumpFamily::DriftOnly => Some(0.0),
            JumpFamily::Poisson { rate } | JumpFamily::CompoundPoissonExponential { rate, .. } => Some(rate),
            JumpFamily::Gamma { .. } | JumpFamily::StableSubordinator { .. } => None,
        }
    }

    /// One jump size drawn from `ν / ν(0,∞)` (finite-activity families only).
    pub fn sample_jump_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        match *self {
            JumpFamily::Poisson { .. } => Some(1.0),
            JumpFamily::CompoundPoissonExponential { theta, .. } => {
                Some(rand_distr::Exp::new(theta).expect("theta validated").sample(rng))
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(domain(format!("{} parameter `{name}` must be positive and finite, got {v}", self.name())))
            }
        };
        match *self {
            JumpFamily::DriftOnly => Ok(()),
            JumpFamily::Poisson { rate } => positive("rate", rate),
            JumpFamily::CompoundPoissonExponential { rate, theta } => {
                positive("rate", rate)?;
                positive("theta", theta)
            }
            JumpFamily::Gamma { shape, theta } => {
                positive("shape", shape)?;
                positive("theta", theta)
            }
            JumpFamily::StableSubordinator { index, scale } => {
                positive("scale", scale)?;
                if index > 0.0 && index < 1.0 {
                    Ok(())
                } else {
                    Err(domain(format!("stable subordinator index must lie in (0,1), got {index}")))
                }
            }
        }
    }

    fn sample_jumps<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> f64 {
        match *self {
            JumpFamily::DriftOnly => 0.0,
            JumpFamily::Poisson { rate } => Poisson::new(rate * delta).expect("positive mean").sample(rng),
            JumpFamily::CompoundPoissonExponential { rate, theta } => {
                let n: f64 = Poisson::new(rate * delta).expect("positive mean").sample(rng);
                if n == 0.0 {
                    0.0
                } else {
                    Gamma::new(n, 1.0 / theta).expect("positive shape").sample(rng)
                }
            }
            JumpFamily::Gamma { shape, theta } => Gamma::new(shape * delta, 1.0 / theta).expect("positive shape").sample(rng),
            JumpFamily::StableSubordinator { index, scale } => (scale * delta).powf(1.0 / index) * positive_stable(index, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorSpec {
    /// Drift per unit log-time.
    pub beta: f64,
    #[serde(flatten)]
    pub jumps: JumpFamily,
}

impl SubordinatorSpec {
    pub fn new(beta: f64, jumps: JumpFamily) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(domain(format!("drift beta must be nonnegative and finite, got {beta}")));
        }
        jumps.validate()?;
        Ok(Self { beta, jumps })
    }

    /// `ζ_t = t`: the identity clock, which leaves the reference process unchanged.
    pub fn identity() -> Self {
        Self { beta: 1.0, jumps: JumpFamily::DriftOnly }
    }

    pub fn drift_only(beta: f64) -> Result<Self> {
        Self::new(beta, JumpFamily::DriftOnly)
    }

    pub fn poisson(beta: f64, rate: f64) -> Result<Self> {
        Self::new(beta, JumpFamily::Poisson { rate })
    }

    pub fn compound_poisson_exponential(beta: f64, rate: f64, theta: f64) -> Result<Self> {
        Self::new(beta, JumpFamily::CompoundPoissonExponential { rate, theta })
    }

    pub fn gamma(beta: f64, shape: f64, theta: f64) -> Result<Self> {
        Self::new(beta, JumpFamily::Gamma { shape, theta })
    }

    pub fn stable(beta: f64, index: f64, scale: f64) -> Result<Self> {
        Self::new(beta, JumpFamily::StableSubordinator { index, scale })
    }

    /// `ψ(λ)`. Panics in debug builds on negative `λ`; use [`laplace_exponent`] for
    /// checked evaluation.
    pub fn psi(&self, lambda: f64) -> f64 {
        debug_assert!(lambda >= 0.0);
        self.beta * lambda + self.jumps.jump_exponent(lambda)
    }

    pub fn has_jumps(&self) -> bool {
        !matches!(self.jumps, JumpFamily::DriftOnly)
    }

    /// A single increment `ζ_{a+Δ} - ζ_a`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> Result<f64> {
        if !(delta >= 0.0) || delta.is_infinite() {
            return Err(domain(format!("subordinator increment length must be finite and >= 0, got {delta}")));
        }
        if delta == 0.0 {
            return Ok(0.0);
        }
        Ok(self.beta * delta + self.jumps.sample_jumps(delta, rng))
    }

    /// Values `ζ_{s_1}, …, ζ_{s_n}` at nondecreasing log-times `s_i ≥ 0`, with `ζ_0 = 0`.
    pub fn sample_path_at<R: Rng + ?Sized>(&self, log_times: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(log_times.len());
        let mut clock = 0.0;
        let mut level = 0.0;
        for &s in log_times {
            if !(s >= clock) {
                return Err(domain(format!("log-times must be nondecreasing and >= 0, got {s} after {clock}")));
            }
            level += self.sample_increment(s - clock, rng)?;
            clock = s;
            out.push(level);
        }
        Ok(out)
    }
}

/// `ψ(λ)` with a domain check.
pub fn laplace_exponent(spec: &SubordinatorSpec, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(domain(format!("Laplace exponent needs lambda >= 0, got {lambda}")));
    }
    Ok(spec.psi(lambda))
}

/// Parameter solved for by [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreeParam {
    Beta,
    /// Jump intensity: `rate` (Poisson families), `shape` (gamma), `scale` (stable).
    Rate,
    /// Inverse jump scale `theta` (compound Poisson exponential, gamma).
    Theta,
}

impl std::str::FromStr for FreeParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(FreeParam::Beta),
            "rate" | "shape" | "scale" => Ok(FreeParam::Rate),
            "theta" => Ok(FreeParam::Theta),
            other => Err(domain(format!("unknown free parameter `{other}` (expected beta, rate, shape, scale or theta)"))),
        }
    }
}

/// Calibrate `template` so that `ψ(κ) = κ`, the martingale condition.
pub fn calibrate(template: &SubordinatorSpec, kappa: f64, free: FreeParam) -> Result<SubordinatorSpec> {
    calibrate_to(template, kappa, kappa, free)
}

/// Solve `ψ(lambda) = target` for the free parameter, holding the others fixed.
///
/// Intensity-type parameters enter `ψ` linearly and are solved in closed form;
/// `theta` is found by bisection on a geometrically widened bracket.
pub fn calibrate_to(template: &SubordinatorSpec, lambda: f64, target: f64, free: FreeParam) -> Result<SubordinatorSpec> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("calibration point must be positive, got {lambda}")));
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(domain(format!("calibration target must be positive, got {target}")));
    }
    let jumps = template.jumps;
    let out = match free {
        FreeParam::Beta => {
            let beta = (target - jumps.jump_exponent(lambda)) / lambda;
            if beta < 0.0 {
                return Err(Error::CalibrationInfeasible(format!(
                    "jump part alone gives psi({lambda}) = {} > {target}; no nonnegative drift solves it",
                    jumps.jump_exponent(lambda)
                )));
            }
            SubordinatorSpec { beta, jumps }
        }
        FreeParam::Rate => {
            let residual = target - template.beta * lambda;
            let unit = |j: JumpFamily| j.jump_exponent(lambda);
            let (jumps, unit_value) = match jumps {
                JumpFamily::DriftOnly => return Err(domain("drift-only subordinator has no rate parameter; calibrate `beta`")),
                JumpFamily::Poisson { .. } => (JumpFamily::Poisson { rate: 1.0 }, unit(JumpFamily::Poisson { rate: 1.0 })),
                JumpFamily::CompoundPoissonExponential { theta, .. } => {
                    let j = JumpFamily::CompoundPoissonExponential { rate: 1.0, theta };
                    (j, unit(j))
                }
                JumpFamily::Gamma { theta, .. } => {
                    let j = JumpFamily::Gamma { shape: 1.0, theta };
                    (j, unit(j))
                }
                JumpFamily::StableSubordinator { index, .. } => {
                    let j = JumpFamily::StableSubordinator { index, scale: 1.0 };
                    (j, unit(j))
                }
            };
            if !(residual > 0.0) {
                return Err(Error::CalibrationInfeasible(format!(
                    "drift beta = {} already gives beta*lambda = {} >= {target}; jumps would need a nonpositive rate",
                    template.beta,
                    template.beta * lambda
                )));
            }
            let r = residual / unit_value;
            let jumps = match jumps {
                JumpFamily::Poisson { .. } => JumpFamily::Poisson { rate: r },
                JumpFamily::CompoundPoissonExponential { theta, .. } => JumpFamily::CompoundPoissonExponential { rate: r, theta },
                JumpFamily::Gamma { theta, .. } => JumpFamily::Gamma { shape: r, theta },
                JumpFamily::StableSubordinator { index, .. } => JumpFamily::StableSubordinator { index, scale: r },
                JumpFamily::DriftOnly => unreachable!(),
            };
            SubordinatorSpec { beta: template.beta, jumps }
        }
        FreeParam::Theta => {
            let with_theta = |theta: f64| match jumps {
                JumpFamily::CompoundPoissonExponential { rate, .. } => Ok(JumpFamily::CompoundPoissonExponential { rate, theta }),
                JumpFamily::Gamma { shape, .. } => Ok(JumpFamily::Gamma { shape, theta }),
                _ => Err(domain(format!("family {} has no `theta` parameter", jumps.name()))),
            };
            with_theta(1.0)?;
            // ψ_J is strictly decreasing in theta.
            let excess = |theta: f64| template.beta * lambda + with_theta(theta).unwrap().jump_exponent(lambda) - target;
            let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
            while excess(lo) < 0.0 {
                lo *= 0.5;
                if lo < 1e-300 {
                    return Err(Error::CalibrationInfeasible(format!("psi({lambda}) stays below {target} for every theta > 0")));
                }
            }
            while excess(hi) > 0.0 {
                hi *= 2.0;
                if hi > 1e300 {
                    return Err(Error::CalibrationInfeasible(format!("psi({lambda}) stays above {target} for every theta > 0")));
                }
            }
            for _ in 0..2000 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if excess(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let theta = if excess(lo).abs() <= excess(hi).abs() { lo } else { hi };
            SubordinatorSpec { beta: template.beta, jumps: with_theta(theta)? }
        }
    };
    let out = SubordinatorSpec::new(out.beta, out.jumps)?;
    let err = (out.psi(lambda) - target).abs();
    if err >= 1e-12 {
        return Err(Error::CalibrationInfeasible(format!("solver stopped with |psi({lambda}) - {target}| = {err:e}")));
    }
    Ok(out)
}

/// Independent increments `ζ(Δ_i)`, one per requested length.
pub fn sample_increments<R: Rng + ?Sized>(spec: &SubordinatorSpec, deltas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    deltas.iter().map(|&d| spec.sample_increment(d, rng)).collect()
}

/// Randomizer `R = exp(-ζ_{ln u})`, `u ≥ 1`.
///
/// The drift part is applied as `u^{-β}` so that deterministic clocks give exact
/// powers. Extremely large stable jumps can underflow `R` to zero.
pub fn sample_r<R: Rng + ?Sized>(spec: &SubordinatorSpec, u: f64, rng: &mut R) -> Result<f64> {
    if !(u >= 1.0) || u.is_infinite() {
        return Err(domain(format!("randomizer argument must be finite and >= 1, got {u}")));
    }
    if u == 1.0 {
        return Ok(1.0);
    }
    let jumps = spec.jumps.sample_jumps(u.ln(), rng);
    Ok(u.powf(-spec.beta) * (-jumps).exp())
}
