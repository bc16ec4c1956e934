//! Decision-curve analysis and value-of-information calculations for
//! external validation of binary-outcome risk prediction models.
//!
//! The library quantifies, in net-benefit units, what a future external
//! validation study of a given sample size is expected to buy:
//!
//! - [`nb`] — net-benefit arithmetic for the treat-none / use-model /
//!   treat-all strategies at a risk threshold;
//! - [`dataset`] — individual-level data, confusion counts, and decision
//!   curves with bootstrap confidence intervals;
//! - [`betabin`] — EVPI/EVSI via beta-binomial conjugacy (the fast default);
//! - [`bootstrap`] — two-level resampling EVPI/EVSI on raw data;
//! - [`reweight`] — EVSI for arbitrary posterior draws via likelihood
//!   reweighting;
//! - [`oracle`] — exact enumeration on small discrete priors, the ground
//!   truth the Monte Carlo engines are tested against;
//! - [`report`] — population scaling and table serialization;
//! - [`rng`] — seeded, stream-splittable sampling shared by every engine;
//! - [`synth`] — a synthetic validation-sample generator;
//! - [`cli`] — the command implementations behind the `voinb` binary.
//!
//! The numeric core is generic over the scalar type via [`scalar::Real`];
//! the aliases below fix the common concrete choices.

pub mod betabin;
pub mod bootstrap;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod nb;
pub mod oracle;
pub mod report;
pub mod reweight;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Threshold32 = nb::Threshold<f32>;
pub type Threshold64 = nb::Threshold<f64>;
pub type Theta32 = nb::ThetaTriplet<f32>;
pub type Theta64 = nb::ThetaTriplet<f64>;
pub type BetaPriorSet64 = betabin::BetaPriorSet<f64>;
pub type VoiEstimate64 = betabin::VoiEstimate<f64>;
pub type ValidationSample64 = dataset::ValidationSample<f64>;
pub type DecisionCurve64 = dataset::DecisionCurve<f64>;
