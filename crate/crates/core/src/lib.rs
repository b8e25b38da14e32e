//! Self-similar Markov martingales that share the one-dimensional marginals of a
//! reference process.
//!
//! A reference process `Z` (self-similar with exponent `κ`, Markov, martingale) is
//! "mimicked" by randomizing its transition kernel with the law of
//! `R_u = exp(-ζ_{ln u})`, where `ζ` is a subordinator. The same process arises by
//! time-changing `Z` through `ζ` and rescaling. When the Laplace exponent of `ζ`
//! satisfies `ψ(κ) = κ` the mimic is again a martingale.
//!
//! Modules:
//! - [`subordinator`]: Laplace exponents, calibration, increments and randomizers.
//! - [`reference`]: exact samplers for the reference processes.
//! - [`mimic`]: path construction by time change, Markov step and randomized
//!   transition, plus the Hermite transform.
//! - [`generator`]: infinitesimal generators (closed form and composed) and
//!   quadratic variations.
//! - [`verify`]: hypothesis tests used to check the constructions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod generator;
pub mod mimic;
pub mod reference;
pub mod rng;
pub mod stable;
pub mod subordinator;
pub mod verify;

pub use error::{Error, Result};
pub use generator::{
    build_mimic_generator, closed_form_generator, finite_difference_generator_check, predictable_qv, realized_qv,
    GeneratorEvaluator, QvFormula, TestFunction,
};
pub use mimic::{
    hermite_transform, markov_step, randomized_transition_sample, simulate_ensemble, timechange_path, PathEnsemble, Route,
    TimeGrid,
};
pub use reference::{ReferenceProcess, VLaw, Variant};
pub use subordinator::{calibrate, laplace_exponent, sample_increments, sample_r, FreeParam, JumpFamily, SubordinatorSpec};
pub use verify::{
    ensemble_match_test, ks_two_sample, marginal_match_test, martingale_slope_test, qv_consistency_test, self_similarity_test,
    TestReport, Verdict,
};
