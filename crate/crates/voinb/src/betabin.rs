//! EVPI/EVSI engine based on beta-binomial conjugacy: the fast default for
//! binary outcomes.
//!
//! Current information is three independent Beta distributions on
//! prevalence, sensitivity, and specificity. Each iteration draws a truth
//! from those distributions, simulates a future validation dataset of size
//! `n_star`, and revalues the strategies at the conjugately updated
//! posterior means.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ConfusionCounts;
use crate::error::{Error, Result};
use crate::nb::{max_enb, net_benefits, Threshold, ThetaTriplet};
use crate::rng::{beta_dist, sample_binomial_with, substream};
use crate::scalar::Real;

/// Parameters of one proper Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams<F> {
    pub alpha: F,
    pub beta: F,
}

impl<F: Real> BetaParams<F> {
    pub fn new(alpha: F, beta: F) -> Result<Self> {
        if !(alpha > F::zero()) || !(beta > F::zero()) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::ImproperBeta {
                alpha: alpha.to_f64().unwrap_or(f64::NAN),
                beta: beta.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> F {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Independent Beta distributions encoding the current information about
/// prevalence, sensitivity, and specificity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPriorSet<F> {
    pub prevalence: BetaParams<F>,
    pub sensitivity: BetaParams<F>,
    pub specificity: BetaParams<F>,
}

impl<F: Real> BetaPriorSet<F> {
    pub fn new(
        prevalence: BetaParams<F>,
        sensitivity: BetaParams<F>,
        specificity: BetaParams<F>,
    ) -> Self {
        Self {
            prevalence,
            sensitivity,
            specificity,
        }
    }

    /// Flat Beta(1, 1) on all three components.
    pub fn flat() -> Self {
        let one = BetaParams {
            alpha: F::one(),
            beta: F::one(),
        };
        Self {
            prevalence: one,
            sensitivity: one,
            specificity: one,
        }
    }

    pub fn means(&self) -> ThetaTriplet<F> {
        ThetaTriplet {
            prevalence: self.prevalence.mean(),
            sensitivity: self.sensitivity.mean(),
            specificity: self.specificity.mean(),
        }
    }
}

/// Conjugate update of a base prior with observed confusion counts:
/// prevalence gains (events, non-events), sensitivity (n_tp, n_fn),
/// specificity (n_tn, n_fp).
pub fn priors_from_sample<F: Real>(
    counts: &ConfusionCounts,
    base: &BetaPriorSet<F>,
) -> BetaPriorSet<F> {
    let f = |x: u64| F::from_u64(x).unwrap();
    BetaPriorSet {
        prevalence: BetaParams {
            alpha: base.prevalence.alpha + f(counts.events()),
            beta: base.prevalence.beta + f(counts.non_events()),
        },
        sensitivity: BetaParams {
            alpha: base.sensitivity.alpha + f(counts.n_tp),
            beta: base.sensitivity.beta + f(counts.n_fn),
        },
        specificity: BetaParams {
            alpha: base.specificity.alpha + f(counts.n_tn),
            beta: base.specificity.beta + f(counts.n_fp),
        },
    }
}

/// Expected NB of each strategy under the current information, evaluated
/// exactly at the prior means. Exact because NB is multilinear in the three
/// independent components, so the expectation of each product is the
/// product of expectations.
pub fn enb_current<F: Real>(priors: &BetaPriorSet<F>, z: Threshold<F>) -> [F; 3] {
    net_benefits(&priors.means(), z)
}

/// A realized future validation dataset of size `n_star`, reduced to its
/// sufficient statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FutureCounts {
    pub n_pos: u64,
    pub n_tp: u64,
    pub n_fn: u64,
    pub n_tn: u64,
    pub n_fp: u64,
    pub n_star: u64,
}

impl FutureCounts {
    pub fn zero(n_star: u64) -> Self {
        Self {
            n_pos: 0,
            n_tp: 0,
            n_fn: 0,
            n_tn: 0,
            n_fp: 0,
            n_star,
        }
    }
}

/// Simulate a future dataset given a truth: positives are binomial in
/// prevalence, true positives binomial in sensitivity among positives, true
/// negatives binomial in specificity among negatives.
pub fn simulate_future_counts<F: Real>(
    theta: &ThetaTriplet<F>,
    n_star: u64,
    stream: crate::rng::RandomStream,
) -> Result<FutureCounts> {
    simulate_future_counts_with(&mut stream.rng(), theta, n_star)
}

/// As [`simulate_future_counts`], drawing from an existing generator.
pub fn simulate_future_counts_with<F: Real>(
    rng: &mut rand_chacha::ChaCha8Rng,
    theta: &ThetaTriplet<F>,
    n_star: u64,
) -> Result<FutureCounts> {
    let p = theta.prevalence.to_f64_lossy();
    let se = theta.sensitivity.to_f64_lossy();
    let sp = theta.specificity.to_f64_lossy();
    let n_pos = sample_binomial_with(rng, n_star, p)?;
    let n_tp = sample_binomial_with(rng, n_pos, se)?;
    let n_tn = sample_binomial_with(rng, n_star - n_pos, sp)?;
    Ok(FutureCounts {
        n_pos,
        n_tp,
        n_fn: n_pos - n_tp,
        n_tn,
        n_fp: n_star - n_pos - n_tn,
        n_star,
    })
}

/// Posterior means of the three components after observing `fc`.
pub fn posterior_mean_update<F: Real>(
    priors: &BetaPriorSet<F>,
    fc: &FutureCounts,
) -> ThetaTriplet<F> {
    let f = |x: u64| F::from_u64(x).unwrap();
    ThetaTriplet {
        prevalence: (priors.prevalence.alpha + f(fc.n_tp) + f(fc.n_fn))
            / (priors.prevalence.alpha + priors.prevalence.beta + f(fc.n_star)),
        sensitivity: (priors.sensitivity.alpha + f(fc.n_tp))
            / (priors.sensitivity.alpha + priors.sensitivity.beta + f(fc.n_tp) + f(fc.n_fn)),
        specificity: (priors.specificity.alpha + f(fc.n_tn))
            / (priors.specificity.alpha + priors.specificity.beta + f(fc.n_tn) + f(fc.n_fp)),
    }
}

/// One engine run's EVPI/EVSI estimates with Monte Carlo standard errors.
///
/// `evpi` and `evsi` are clamped to be nonnegative (and EVSI is identically
/// zero at `n_star == 0`); the raw Monte Carlo values are kept under
/// `diagnostics["raw_evpi"]` / `diagnostics["raw_evsi"]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoiEstimate<F> {
    pub z: F,
    pub n_star: u64,
    pub evpi: F,
    pub evsi: F,
    pub mc_se_evpi: F,
    pub mc_se_evsi: F,
    pub n_sims: u64,
    pub enb_current: [F; 3],
    pub diagnostics: BTreeMap<String, f64>,
}

/// Arithmetic mean, exact for constant sequences (summation rounding would
/// otherwise shift a constant by an ulp).
pub(crate) fn arithmetic_mean(values: &[f64]) -> f64 {
    if values.iter().all(|&v| v == values[0]) {
        return values[0];
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and standard error of a sequence of per-iteration values.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let mean = arithmetic_mean(values);
    if values.len() < 2 || values.iter().all(|&v| v == values[0]) {
        return (mean, 0.0);
    }
    let n = values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Clamp raw Monte Carlo VoI values into the headline fields. EVSI at
/// `n_star == 0` is identically zero, so the headline reports that exact
/// value; the raw number stays in the diagnostics.
pub(crate) fn clamp_voi(
    raw_evpi: f64,
    raw_evsi: f64,
    n_star: u64,
    diagnostics: &mut BTreeMap<String, f64>,
) -> (f64, f64) {
    diagnostics.insert("raw_evpi".into(), raw_evpi);
    diagnostics.insert("raw_evsi".into(), raw_evsi);
    let evpi = raw_evpi.max(0.0);
    let evsi = if n_star == 0 { 0.0 } else { raw_evsi.max(0.0) };
    diagnostics.insert("clamped_evpi".into(), f64::from(evpi != raw_evpi));
    diagnostics.insert("clamped_evsi".into(), f64::from(evsi != raw_evsi));
    (evpi, evsi)
}

/// Run the conjugate engine: `n_sims` iterations, each on substream
/// (seed, iteration index). Deterministic for a fixed seed regardless of
/// worker count.
pub fn run<F: Real>(
    priors: &BetaPriorSet<F>,
    z: Threshold<F>,
    n_star: u64,
    n_sims: u64,
    seed: u64,
) -> Result<VoiEstimate<F>> {
    if n_sims < 2 {
        return Err(Error::InvalidParam(format!(
            "n_sims must be at least 2, got {n_sims}"
        )));
    }
    let dist_p = beta_dist(priors.prevalence.alpha, priors.prevalence.beta)?;
    let dist_se = beta_dist(priors.sensitivity.alpha, priors.sensitivity.beta)?;
    let dist_sp = beta_dist(priors.specificity.alpha, priors.specificity.beta)?;

    let enb_cur = enb_current(priors, z);
    let max_cur = max_enb(&enb_cur);

    // Per-iteration gains over the current-information maximum; keeping the
    // difference per iteration makes EVSI exactly zero when n_star is zero.
    let iteration = |j: u64| -> Result<(f64, f64)> {
        use rand::distributions::Distribution;
        let mut rng = substream(seed, j).rng();
        let theta = ThetaTriplet {
            prevalence: F::from_f64_lossy(dist_p.sample(&mut rng)),
            sensitivity: F::from_f64_lossy(dist_se.sample(&mut rng)),
            specificity: F::from_f64_lossy(dist_sp.sample(&mut rng)),
        };
        let d_perfect = (max_enb(&net_benefits(&theta, z)) - max_cur).to_f64_lossy();
        let fc = simulate_future_counts_with(&mut rng, &theta, n_star)?;
        let updated = posterior_mean_update(priors, &fc);
        let d_sample = (max_enb(&net_benefits(&updated, z)) - max_cur).to_f64_lossy();
        Ok((d_perfect, d_sample))
    };
    let gains: Vec<(f64, f64)> = (0..n_sims)
        .into_par_iter()
        .map(iteration)
        .collect::<Result<_>>()?;

    let perfect: Vec<f64> = gains.iter().map(|g| g.0).collect();
    let sample: Vec<f64> = gains.iter().map(|g| g.1).collect();
    let (raw_evpi, se_evpi) = mean_and_se(&perfect);
    let (raw_evsi, se_evsi) = mean_and_se(&sample);

    let mut diagnostics = BTreeMap::new();
    let (evpi, evsi) = clamp_voi(raw_evpi, raw_evsi, n_star, &mut diagnostics);

    Ok(VoiEstimate {
        z: z.value(),
        n_star,
        evpi: F::from_f64_lossy(evpi),
        evsi: F::from_f64_lossy(evsi),
        mc_se_evpi: F::from_f64_lossy(se_evpi),
        mc_se_evsi: F::from_f64_lossy(se_evsi),
        n_sims,
        enb_current: enb_cur,
        diagnostics,
    })
}
