//! Two-level resampling EVPI/EVSI engine operating directly on
//! individual-level data.
//!
//! Each iteration draws a weight vector over the records (Bayesian or
//! ordinary bootstrap), treats the weighted sample as one draw of the
//! generating population, records its strategy NBs, then draws the future
//! dataset from that population and revalues the strategies in the pooled
//! (original + future) data. The current-information NB is the per-strategy
//! average of the weighted NBs across iterations, which keeps EVPI
//! nonnegative by construction.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::betabin::{clamp_voi, mean_and_se, VoiEstimate};
use crate::dataset::{confusion_at_threshold, ValidationSample};
use crate::error::{Error, Result};
use crate::nb::{max_enb, net_benefits, Threshold, ThetaTriplet};
use crate::rng::{dirichlet_weights_with, multinomial_weights_with, substream};
use crate::scalar::Real;

/// Which resampling scheme generates the population draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BootstrapKind {
    /// Dirichlet(1, ..., 1) weights over the records.
    Bayesian,
    /// Scaled multinomial weights (classic resampling with replacement).
    Ordinary,
}

impl std::fmt::Display for BootstrapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BootstrapKind::Bayesian => "bayesian",
            BootstrapKind::Ordinary => "ordinary",
        })
    }
}

#[derive(Clone, Copy)]
enum Class {
    Tp,
    Fn,
    Tn,
    Fp,
}

/// Weighted prevalence/sensitivity/specificity of a reweighted sample, with
/// the 0/0 -> 0 convention for empty weighted classes (the affected NB term
/// vanishes either way).
fn weighted_theta<F: Real>(w: &[f64], classes: &[Class]) -> (ThetaTriplet<F>, bool, bool) {
    let (mut w_tp, mut w_fn, mut w_tn, mut w_fp) = (0.0f64, 0.0, 0.0, 0.0);
    for (wi, class) in w.iter().zip(classes) {
        match class {
            Class::Tp => w_tp += wi,
            Class::Fn => w_fn += wi,
            Class::Tn => w_tn += wi,
            Class::Fp => w_fp += wi,
        }
    }
    let events = w_tp + w_fn;
    let non_events = w_tn + w_fp;
    let zero_events = events == 0.0;
    let zero_non_events = non_events == 0.0;
    let theta = ThetaTriplet {
        prevalence: F::from_f64_lossy(events),
        sensitivity: F::from_f64_lossy(if zero_events { 0.0 } else { w_tp / events }),
        specificity: F::from_f64_lossy(if zero_non_events { 0.0 } else { w_tn / non_events }),
    };
    (theta, zero_events, zero_non_events)
}

/// Run the bootstrap engine. Iterations use substream (seed, iteration
/// index); results are deterministic for a fixed seed regardless of worker
/// count.
pub fn run<F: Real>(
    sample: &ValidationSample<F>,
    z: Threshold<F>,
    n_star: u64,
    n_sims: u64,
    seed: u64,
    kind: BootstrapKind,
) -> Result<VoiEstimate<F>> {
    if n_sims < 2 {
        return Err(Error::InvalidParam(format!(
            "n_sims must be at least 2, got {n_sims}"
        )));
    }
    let n = sample.len();
    let events = sample.events();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    if events == n as u64 {
        return Err(Error::NoNonEvents);
    }

    let classes: Vec<Class> = sample
        .records()
        .iter()
        .map(|r| {
            let positive = r.risk >= z.value();
            match (positive, r.outcome == 1) {
                (true, true) => Class::Tp,
                (false, true) => Class::Fn,
                (false, false) => Class::Tn,
                (true, false) => Class::Fp,
            }
        })
        .collect();
    let orig = confusion_at_threshold(sample, z);

    struct Iter {
        nb_model: f64,
        nb_all: f64,
        max_weighted: f64,
        max_pooled: f64,
        zero_events: bool,
        zero_non_events: bool,
    }

    let iteration = |j: u64| -> Iter {
        let mut rng = substream(seed, j).rng();
        let w = match kind {
            BootstrapKind::Bayesian => dirichlet_weights_with(&mut rng, n),
            BootstrapKind::Ordinary => multinomial_weights_with(&mut rng, n),
        };
        let (theta_w, zero_events, zero_non_events) = weighted_theta::<F>(&w, &classes);
        let nb_w = net_benefits(&theta_w, z);
        let max_weighted = max_enb(&nb_w).to_f64_lossy();

        // Future dataset: n_star independent draws from the categorical
        // distribution over the records with the bootstrap weights.
        let mut pooled = orig;
        if n_star > 0 {
            let cat = WeightedIndex::new(w.iter()).expect("positive weight sum");
            for _ in 0..n_star {
                match classes[cat.sample(&mut rng)] {
                    Class::Tp => pooled.n_tp += 1,
                    Class::Fn => pooled.n_fn += 1,
                    Class::Tn => pooled.n_tn += 1,
                    Class::Fp => pooled.n_fp += 1,
                }
            }
        }
        // Pooled plug-in NB; the pooled set inherits at least one event and
        // one non-event from the original sample.
        let theta_pooled = crate::dataset::theta_plugin::<F>(&pooled);
        let max_pooled = max_enb(&net_benefits(&theta_pooled, z)).to_f64_lossy();

        Iter {
            nb_model: nb_w[1].to_f64_lossy(),
            nb_all: nb_w[2].to_f64_lossy(),
            max_weighted,
            max_pooled,
            zero_events,
            zero_non_events,
        }
    };
    let iters: Vec<Iter> = (0..n_sims).into_par_iter().map(iteration).collect();

    let nb_model: Vec<f64> = iters.iter().map(|i| i.nb_model).collect();
    let nb_all: Vec<f64> = iters.iter().map(|i| i.nb_all).collect();
    let max_weighted: Vec<f64> = iters.iter().map(|i| i.max_weighted).collect();
    let max_pooled: Vec<f64> = iters.iter().map(|i| i.max_pooled).collect();

    let (mean_model, se_model) = mean_and_se(&nb_model);
    let (mean_all, se_all) = mean_and_se(&nb_all);
    let enb_cur = [0.0, mean_model, mean_all];
    let best = crate::nb::best_strategy(&enb_cur)?;
    let max_cur = enb_cur[best.index()];
    let se_cur = [0.0, se_model, se_all][best.index()];

    let (mean_perfect, se_evpi) = mean_and_se(&max_weighted);
    let (mean_sample, se_evsi) = mean_and_se(&max_pooled);

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("mc_se_enb_current".into(), se_cur);
    diagnostics.insert(
        "zero_event_replicates".into(),
        iters.iter().filter(|i| i.zero_events).count() as f64,
    );
    diagnostics.insert(
        "zero_non_event_replicates".into(),
        iters.iter().filter(|i| i.zero_non_events).count() as f64,
    );
    let (evpi, evsi) = clamp_voi(
        mean_perfect - max_cur,
        mean_sample - max_cur,
        n_star,
        &mut diagnostics,
    );

    Ok(VoiEstimate {
        z: z.value(),
        n_star,
        evpi: F::from_f64_lossy(evpi),
        evsi: F::from_f64_lossy(evsi),
        mc_se_evpi: F::from_f64_lossy(se_evpi),
        mc_se_evsi: F::from_f64_lossy(se_evsi),
        n_sims,
        enb_current: [
            F::zero(),
            F::from_f64_lossy(mean_model),
            F::from_f64_lossy(mean_all),
        ],
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;

    fn z64(z: f64) -> Threshold<f64> {
        Threshold::new(z).unwrap()
    }

    fn sample(rows: &[(f64, u8)]) -> ValidationSample<f64> {
        ValidationSample::new(
            rows.iter()
                .map(|&(risk, outcome)| Record { risk, outcome })
                .collect(),
        )
        .unwrap()
    }

    fn toy_sample() -> ValidationSample<f64> {
        let mut rows = Vec::new();
        for i in 0..60 {
            let risk = 0.01 + 0.15 * (i as f64 / 60.0);
            rows.push((risk, u8::from(i % 9 == 0)));
        }
        sample(&rows)
    }

    #[test]
    fn rejects_samples_without_both_outcomes() {
        let all_zero = sample(&[(0.2, 0), (0.3, 0)]);
        assert!(matches!(
            run(&all_zero, z64(0.1), 10, 100, 1, BootstrapKind::Bayesian),
            Err(Error::NoEvents)
        ));
        let all_one = sample(&[(0.2, 1), (0.3, 1)]);
        assert!(matches!(
            run(&all_one, z64(0.1), 10, 100, 1, BootstrapKind::Bayesian),
            Err(Error::NoNonEvents)
        ));
    }

    #[test]
    fn evsi_headline_is_zero_without_future_data() {
        let est = run(&toy_sample(), z64(0.02), 0, 2_000, 3, BootstrapKind::Bayesian).unwrap();
        assert_eq!(est.evsi, 0.0);
        // Raw value is only Monte Carlo noise around zero.
        let tol = 3.0 * (est.mc_se_evsi + est.diagnostics["mc_se_enb_current"]);
        assert!(est.diagnostics["raw_evsi"].abs() <= tol);
    }

    #[test]
    fn evpi_raw_is_nonnegative_by_construction() {
        for kind in [BootstrapKind::Bayesian, BootstrapKind::Ordinary] {
            let est = run(&toy_sample(), z64(0.02), 50, 1_000, 5, kind).unwrap();
            assert!(est.diagnostics["raw_evpi"] >= -1e-12);
        }
    }

    #[test]
    fn bayesian_and_ordinary_agree() {
        let s = toy_sample();
        let a = run(&s, z64(0.05), 100, 10_000, 7, BootstrapKind::Bayesian).unwrap();
        let b = run(&s, z64(0.05), 100, 10_000, 7, BootstrapKind::Ordinary).unwrap();
        let tol = 3.0
            * (a.mc_se_evpi.powi(2)
                + b.mc_se_evpi.powi(2)
                + a.diagnostics["mc_se_enb_current"].powi(2)
                + b.diagnostics["mc_se_enb_current"].powi(2))
            .sqrt();
        assert!((a.evpi - b.evpi).abs() <= tol, "{} vs {}", a.evpi, b.evpi);
        let tol = 3.0
            * (a.mc_se_evsi.powi(2)
                + b.mc_se_evsi.powi(2)
                + a.diagnostics["mc_se_enb_current"].powi(2)
                + b.diagnostics["mc_se_enb_current"].powi(2))
            .sqrt();
        assert!((a.evsi - b.evsi).abs() <= tol, "{} vs {}", a.evsi, b.evsi);
    }

    #[test]
    fn enb_current_converges_to_plugin_values() {
        let s = toy_sample();
        let z = z64(0.02);
        let est = run(&s, z, 0, 100_000, 9, BootstrapKind::Bayesian).unwrap();
        let plugin = net_benefits(
            &crate::dataset::theta_hat::<f64>(&confusion_at_threshold(&s, z)).unwrap(),
            z,
        );
        // Model NB: weighted average converges to the plug-in value.
        let n = 100_000f64;
        assert!((est.enb_current[1] - plugin[1]).abs() <= 4.0 * 0.03 / n.sqrt() + 1e-3);
        assert!((est.enb_current[2] - plugin[2]).abs() <= 4.0 * 0.03 / n.sqrt() + 1e-3);
    }

    #[test]
    fn run_is_deterministic() {
        let s = toy_sample();
        let a = run(&s, z64(0.03), 40, 500, 21, BootstrapKind::Bayesian).unwrap();
        let b = run(&s, z64(0.03), 40, 500, 21, BootstrapKind::Bayesian).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_ordinary_replicates_are_counted_not_dropped() {
        // Single event in a tiny sample: ordinary resamples often miss it.
        let s = sample(&[(0.9, 1), (0.1, 0), (0.2, 0), (0.3, 0)]);
        let est = run(&s, z64(0.5), 5, 2_000, 31, BootstrapKind::Ordinary).unwrap();
        assert!(est.diagnostics["zero_event_replicates"] > 0.0);
        assert_eq!(est.n_sims, 2_000);
    }
}
