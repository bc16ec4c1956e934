//! Synthetic validation-sample generator.
//!
//! Risks come from a logistic latent-risk model: a normal linear predictor
//! on the logit scale with configurable spread (the discrimination control),
//! intercept solved so that the mean risk hits the target prevalence, and
//! outcomes drawn Bernoulli at the individual risk.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Record, ValidationSample};
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n: u64,
    /// Target mean risk (and hence expected event fraction).
    pub prevalence: f64,
    /// Standard deviation of the linear predictor on the logit scale;
    /// 0 makes every risk equal to the prevalence.
    pub slope: f64,
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean of expit(mu + slope * X), X standard normal, by midpoint quadrature.
fn mean_risk(mu: f64, slope: f64) -> f64 {
    const HALF_WIDTH: f64 = 8.0;
    const STEPS: usize = 2001;
    let dx = 2.0 * HALF_WIDTH / STEPS as f64;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..STEPS {
        let x = -HALF_WIDTH + (i as f64 + 0.5) * dx;
        let w = (-0.5 * x * x).exp();
        num += w * expit(mu + slope * x);
        den += w;
    }
    num / den
}

/// Solve for the intercept that hits the target mean risk; monotone in mu,
/// so plain bisection suffices.
fn solve_intercept(prevalence: f64, slope: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_risk(mid, slope) < prevalence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generate a synthetic sample; deterministic in the seed.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<ValidationSample<f64>> {
    if cfg.n < 1 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    if !(cfg.prevalence > 0.0 && cfg.prevalence < 1.0) {
        return Err(Error::InvalidParam(format!(
            "prevalence must lie strictly inside (0, 1), got {}",
            cfg.prevalence
        )));
    }
    if !(cfg.slope >= 0.0) || !cfg.slope.is_finite() {
        return Err(Error::InvalidParam(format!(
            "slope must be nonnegative, got {}",
            cfg.slope
        )));
    }

    let mut rng = substream(seed, 0).rng();
    let mut records = Vec::with_capacity(cfg.n as usize);
    if cfg.slope == 0.0 {
        for _ in 0..cfg.n {
            let outcome = u8::from(rng.gen_bool(cfg.prevalence));
            records.push(Record {
                risk: cfg.prevalence,
                outcome,
            });
        }
    } else {
        let mu = solve_intercept(cfg.prevalence, cfg.slope);
        for _ in 0..cfg.n {
            let x: f64 = rng.sample(StandardNormal);
            let risk = expit(mu + cfg.slope * x);
            let outcome = u8::from(rng.gen_bool(risk));
            records.push(Record { risk, outcome });
        }
    }
    ValidationSample::new(records)
}
