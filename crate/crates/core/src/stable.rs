//! Stable random variates by the Chambers–Mallows–Stuck transformation.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

/// Uniform draw on the open interval `(0, 1)`.
fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Positive stable variate with `E[exp(-λS)] = exp(-λ^α)`, `α ∈ (0, 1)`.
///
/// This is the totally skewed (skew 1) case of the CMS transformation, written in
/// Kanter's form.
pub fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let u = PI * open01(rng);
    let w: f64 = loop {
        let w: f64 = Exp1.sample(rng);
        if w > 0.0 {
            break w;
        }
    };
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Stable variate `S_α(σ, β, 0)` in the Samorodnitsky–Taqqu parametrization,
/// `α ≠ 1`. Characteristic function
/// `exp(-σ^α |u|^α (1 - iβ sign(u) tan(πα/2)))`; for `α > 1` the mean is zero.
pub fn stable<R: Rng + ?Sized>(alpha: f64, skew: f64, scale: f64, rng: &mut R) -> f64 {
    debug_assert!(alpha > 0.0 && alpha <= 2.0 && (alpha - 1.0).abs() > 0.0);
    let v = PI * (open01(rng) - 0.5);
    let w: f64 = loop {
        let w: f64 = Exp1.sample(rng);
        if w > 0.0 {
            break w;
        }
    };
    let tan = (FRAC_PI_2 * alpha).tan();
    let b = (skew * tan).atan() / alpha;
    let s = (1.0 + skew * skew * tan * tan).powf(1.0 / (2.0 * alpha));
    let x =
        s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha) * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha);
    scale * x
}
