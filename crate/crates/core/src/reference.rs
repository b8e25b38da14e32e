//! Reference processes: self-similar Markov martingales with exact samplers.
//!
//! | variant | law of `Z_t` | κ | `E[Z_1²]` |
//! |---|---|---|---|
//! | gaussian(k) | `N(0, t^{2k+1}/(2k+1))` | `k + 1/2` | `1/(2k+1)` |
//! | squared-bessel(δ) | `S_t - δt`, `S` a BESQ(δ) from 0 | 1 | `2δ` |
//! | stable(α, skew, scale) | `t^{1/α} S_α(scale, skew, 0)` | `1/α` | infinite |
//! | sign-flip(κ, V) | `t^κ V` | κ | `E[V²]` |

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::stable::stable;

/// Symmetric law of `V` for the sign-flip process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VLaw {
    /// Uniform on `{-1, +1}`.
    #[default]
    Rademacher,
    /// Standard normal.
    Normal,
}

impl VLaw {
    fn second_moment(self) -> f64 {
        1.0
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            VLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            VLaw::Normal => rng.sample(StandardNormal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Variant {
    GaussianMartingale {
        k: f64,
    },
    SquaredBesselMartingale {
        delta: f64,
    },
    /// Zero-mean strictly stable Lévy process, `α ∈ (1, 2)`.
    StableMartingale {
        alpha: f64,
        skew: f64,
        scale: f64,
    },
    SignFlip {
        kappa: f64,
        v: VLaw,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProcess {
    #[serde(flatten)]
    pub variant: Variant,
    /// Self-similarity exponent.
    pub kappa: f64,
    /// `E[Z_1²]`, absent when infinite.
    pub theta1: Option<f64>,
}

impl ReferenceProcess {
    pub fn new(variant: Variant) -> Result<Self> {
        let (kappa, theta1) = match variant {
            Variant::GaussianMartingale { k } => {
                if !(k >= 0.0 && k.is_finite()) {
                    return Err(domain(format!("gaussian martingale needs k >= 0, got {k}")));
                }
                (k + 0.5, Some(1.0 / (2.0 * k + 1.0)))
            }
            Variant::SquaredBesselMartingale { delta } => {
                if !(delta >= 0.0 && delta.is_finite()) {
                    return Err(domain(format!("squared Bessel dimension must be >= 0, got {delta}")));
                }
                (1.0, Some(2.0 * delta))
            }
            Variant::StableMartingale { alpha, skew, scale } => {
                if !(alpha > 1.0 && alpha < 2.0) {
                    return Err(domain(format!("stable martingale needs alpha in (1,2), got {alpha}")));
                }
                if !(-1.0..=1.0).contains(&skew) {
                    return Err(domain(format!("stable skew must lie in [-1,1], got {skew}")));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(domain(format!("stable scale must be positive, got {scale}")));
                }
                (1.0 / alpha, None)
            }
            Variant::SignFlip { kappa, v } => {
                if !(kappa > 0.0 && kappa.is_finite()) {
                    return Err(domain(format!("sign-flip exponent must be positive, got {kappa}")));
                }
                (kappa, Some(v.second_moment()))
            }
        };
        Ok(Self { variant, kappa, theta1 })
    }

    pub fn gaussian(k: f64) -> Result<Self> {
        Self::new(Variant::GaussianMartingale { k })
    }

    pub fn squared_bessel(delta: f64) -> Result<Self> {
        Self::new(Variant::SquaredBesselMartingale { delta })
    }

    pub fn stable(alpha: f64, skew: f64, scale: f64) -> Result<Self> {
        Self::new(Variant::StableMartingale { alpha, skew, scale })
    }

    /// Stable martingale from its Lévy measure
    /// `ν_Z(dz) = (A·1{z>0} + B·1{z<0}) |z|^{-(α+1)} dz`, compensated to mean zero.
    ///
    /// The standard correspondence gives `skew = (A-B)/(A+B)` and
    /// `scale^α = -(A+B) Γ(-α) cos(πα/2)`, positive for `α ∈ (1,2)`.
    pub fn stable_from_levy(alpha: f64, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(domain(format!("Levy weights A, B must be positive, got {a}, {b}")));
        }
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(domain(format!("stable martingale needs alpha in (1,2), got {alpha}")));
        }
        // Γ(-α) = Γ(2-α) / (α(α-1)) with 2-α ∈ (0,1)
        let gamma_neg = statrs::function::gamma::gamma(2.0 - alpha) / (alpha * (alpha - 1.0));
        let scale_pow = -(a + b) * gamma_neg * (std::f64::consts::FRAC_PI_2 * alpha).cos();
        Self::stable(alpha, (a - b) / (a + b), scale_pow.powf(1.0 / alpha))
    }

    pub fn sign_flip(kappa: f64, v: VLaw) -> Result<Self> {
        Self::new(Variant::SignFlip { kappa, v })
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            Variant::GaussianMartingale { .. } => "gaussian-martingale",
            Variant::SquaredBesselMartingale { .. } => "squared-bessel-martingale",
            Variant::StableMartingale { .. } => "stable-martingale",
            Variant::SignFlip { .. } => "sign-flip",
        }
    }

    /// True when `Z` has independent, stationary increments scaled by `t^κ`, which
    /// is what the Markov-step representation needs.
    pub fn supports_markov_step(&self) -> bool {
        match self.variant {
            Variant::GaussianMartingale { k } => k == 0.0,
            Variant::StableMartingale { .. } => true,
            _ => false,
        }
    }

    /// Whether `x` is an admissible state at time `t`.
    pub fn in_state_space(&self, t: f64, x: f64) -> bool {
        match self.variant {
            Variant::SquaredBesselMartingale { delta } => x + delta * t >= -1e-12 * (1.0 + delta * t),
            _ => x.is_finite(),
        }
    }

    /// A draw of `Z_1`.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.variant {
            Variant::GaussianMartingale { k } => {
                let z: f64 = rng.sample(StandardNormal);
                z / (2.0 * k + 1.0).sqrt()
            }
            Variant::SquaredBesselMartingale { delta } => noncentral_chi_square(delta, 0.0, rng) - delta,
            Variant::StableMartingale { alpha, skew, scale } => stable(alpha, skew, scale, rng),
            Variant::SignFlip { v, .. } => v.sample(rng),
        }
    }

    /// Exact draw from the law of `Z_t`.
    pub fn sample_marginal<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<f64> {
        if !(t >= 0.0) || t.is_infinite() {
            return Err(domain(format!("marginal time must be finite and >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(match self.variant {
            Variant::SquaredBesselMartingale { delta } => t * noncentral_chi_square(delta, 0.0, rng) - delta * t,
            _ => t.powf(self.kappa) * self.sample_unit(rng),
        })
    }

    /// Exact draw from `P(s, t, x, ·)`, `0 < s ≤ t`.
    pub fn sample_transition<R: Rng + ?Sized>(&self, s: f64, t: f64, x: f64, rng: &mut R) -> Result<f64> {
        if !(s > 0.0) || !(t >= s) || t.is_infinite() {
            return Err(domain(format!("transition needs 0 < s <= t < inf, got s={s}, t={t}")));
        }
        if !self.in_state_space(s, x) {
            return Err(domain(format!("state {x} is outside the state space of {} at time {s}", self.name())));
        }
        if s == t {
            return Ok(x);
        }
        Ok(match self.variant {
            Variant::GaussianMartingale { k } => {
                let p = 2.0 * k + 1.0;
                let var = (t.powf(p) - s.powf(p)) / p;
                let z: f64 = rng.sample(StandardNormal);
                x + var.sqrt() * z
            }
            Variant::SquaredBesselMartingale { delta } => {
                let h = t - s;
                let start = (x + delta * s).max(0.0);
                h * noncentral_chi_square(delta, start / h, rng) - delta * t
            }
            Variant::StableMartingale { alpha, skew, scale } => x + (t - s).powf(1.0 / alpha) * stable(alpha, skew, scale, rng),
            Variant::SignFlip { kappa, .. } => {
                let ratio = s / t;
                let up = 0.5 * (1.0 + ratio.powf(kappa));
                let y = (t / s).powf(kappa) * x;
                if rng.random::<f64>() < up {
                    y
                } else {
                    -y
                }
            }
        })
    }

    /// One consistent path sample at nondecreasing positive times.
    pub fn sample_at_times<R: Rng + ?Sized>(&self, times: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = Vec::with_capacity(times.len());
        for (i, &t) in times.iter().enumerate() {
            if !(t > 0.0) || t.is_infinite() {
                return Err(domain(format!("path times must be positive and finite, got {t}")));
            }
            let value = match i {
                0 => self.sample_marginal(t, rng)?,
                _ => {
                    let s = times[i - 1];
                    if t < s {
                        return Err(domain(format!("path times must be nondecreasing, got {t} after {s}")));
                    }
                    let prev = out[i - 1];
                    if t == s {
                        prev
                    } else {
                        self.sample_transition(s, t, prev, rng)?
                    }
                }
            };
            out.push(value);
        }
        Ok(out)
    }

    /// Transition of the Lamperti transform `Ẑ_τ = e^{-κτ} Z_{e^τ}` over a log-time
    /// step `dlog ≥ 0`: a draw from `P(e^{-dlog}, 1, y·e^{-κ·dlog}, ·)`.
    ///
    /// Equivalent to [`Self::sample_transition`] after rescaling, but evaluated in a
    /// form that stays finite for arbitrarily long steps (`dlog = ∞` gives the law
    /// of `Z_1` for variants continuous at the origin).
    pub fn sample_lamperti<R: Rng + ?Sized>(&self, y: f64, dlog: f64, rng: &mut R) -> Result<f64> {
        if !(dlog >= 0.0) {
            return Err(domain(format!("log-time step must be >= 0, got {dlog}")));
        }
        if !self.in_state_space(1.0, y) {
            return Err(domain(format!("state {y} is outside the state space of {} at time 1", self.name())));
        }
        if dlog == 0.0 {
            return Ok(y);
        }
        // 1 - e^{-dlog}
        let gap = -(-dlog).exp_m1();
        Ok(match self.variant {
            Variant::GaussianMartingale { k } => {
                let p = 2.0 * k + 1.0;
                let var = -(-p * dlog).exp_m1() / p;
                let z: f64 = rng.sample(StandardNormal);
                y * (-self.kappa * dlog).exp() + var.sqrt() * z
            }
            Variant::SquaredBesselMartingale { delta } => {
                let start = ((y + delta).max(0.0)) * (-dlog).exp();
                gap * noncentral_chi_square(delta, start / gap, rng) - delta
            }
            Variant::StableMartingale { alpha, skew, scale } => {
                y * (-self.kappa * dlog).exp() + gap.powf(1.0 / alpha) * stable(alpha, skew, scale, rng)
            }
            Variant::SignFlip { kappa, .. } => {
                let up = 0.5 * (1.0 + (-kappa * dlog).exp());
                if rng.random::<f64>() < up {
                    y
                } else {
                    -y
                }
            }
        })
    }
}

/// Noncentral chi-square with `df ≥ 0` degrees of freedom and noncentrality `nc ≥ 0`,
/// drawn as a Poisson mixture of gammas. `df = 0, nc = 0` is the point mass at 0.
pub(crate) fn noncentral_chi_square<R: Rng + ?Sized>(df: f64, nc: f64, rng: &mut R) -> f64 {
    let n: f64 = if nc > 0.0 { Poisson::new(0.5 * nc).expect("positive mean").sample(rng) } else { 0.0 };
    let shape = 0.5 * df + n;
    if shape == 0.0 {
        0.0
    } else {
        2.0 * Gamma::new(shape, 1.0).expect("positive shape").sample(rng)
    }
}
