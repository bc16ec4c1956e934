//! Shared helpers for the integration suites: independent oracles for the
//! conjugate engine (lattice enumeration for EVSI, quantile-grid quadrature
//! for EVPI) and synthetic fixtures. The oracles deliberately share no code
//! with the engine paths they check.
#![allow(dead_code)] // each test target uses a different subset

use statrs::distribution::{Beta as BetaDist, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use voinb::betabin::{posterior_mean_update, BetaPriorSet, FutureCounts};
use voinb::dataset::ValidationSample;
use voinb::nb::{max_enb, net_benefits, Threshold, ThetaTriplet};
use voinb::synth::{generate, SynthConfig};

pub fn z64(z: f64) -> Threshold<f64> {
    Threshold::new(z).unwrap()
}

pub fn triplet(p: f64, se: f64, sp: f64) -> ThetaTriplet<f64> {
    ThetaTriplet::new(p, se, sp).unwrap()
}

/// A case-study-sized synthetic sample.
pub fn gusto_like(n: u64, prevalence: f64, seed: u64) -> ValidationSample<f64> {
    generate(
        &SynthConfig {
            n,
            prevalence,
            slope: 1.2,
        },
        seed,
    )
    .unwrap()
}

/// Quadrature-style combination of independent standard errors.
pub fn combined_se(parts: &[f64]) -> f64 {
    parts.iter().map(|s| s * s).sum::<f64>().sqrt()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log beta-binomial pmf of `k` successes in `n` trials under Beta(a, b).
fn ln_betabin_pmf(k: u64, n: u64, a: f64, b: f64, ln_fact: &[f64]) -> f64 {
    let ln_choose = ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize];
    ln_choose + ln_beta(k as f64 + a, (n - k) as f64 + b) - ln_beta(a, b)
}

/// Exact EVSI of the conjugate engine's estimand: enumerate the future-data
/// lattice under the beta-binomial marginals and revalue the strategies at
/// the conjugately updated posterior means.
pub fn betabin_evsi_exact(priors: &BetaPriorSet<f64>, z: Threshold<f64>, n_star: u64) -> f64 {
    let max_cur = max_enb(&net_benefits(&priors.means(), z));
    if n_star == 0 {
        return 0.0;
    }
    let ln_fact: Vec<f64> = (0..=n_star).map(|k| ln_gamma(k as f64 + 1.0)).collect();
    let (ap, bp) = (priors.prevalence.alpha, priors.prevalence.beta);
    let (ase, bse) = (priors.sensitivity.alpha, priors.sensitivity.beta);
    let (asp, bsp) = (priors.specificity.alpha, priors.specificity.beta);

    let mut e_sample = 0.0f64;
    for n_pos in 0..=n_star {
        let n_neg = n_star - n_pos;
        let p_pos = ln_betabin_pmf(n_pos, n_star, ap, bp, &ln_fact).exp();
        for n_tp in 0..=n_pos {
            let p_tp = ln_betabin_pmf(n_tp, n_pos, ase, bse, &ln_fact).exp();
            for n_tn in 0..=n_neg {
                let p_tn = ln_betabin_pmf(n_tn, n_neg, asp, bsp, &ln_fact).exp();
                let fc = FutureCounts {
                    n_pos,
                    n_tp,
                    n_fn: n_pos - n_tp,
                    n_tn,
                    n_fp: n_neg - n_tn,
                    n_star,
                };
                let updated = posterior_mean_update(priors, &fc);
                let best = max_enb(&net_benefits(&updated, z));
                e_sample += p_pos * p_tp * p_tn * best;
            }
        }
    }
    e_sample - max_cur
}

/// Near-exact EVPI of the conjugate engine's estimand: midpoint rule over
/// equal-probability (quantile) nodes of each Beta marginal, `k` nodes per
/// dimension. The u-space midpoint rule handles concentrated priors and has
/// error well below the Monte Carlo tolerances it is compared against.
pub fn betabin_evpi_quadrature(priors: &BetaPriorSet<f64>, z: Threshold<f64>, k: usize) -> f64 {
    let nodes = |a: f64, b: f64| -> Vec<f64> {
        let dist = BetaDist::new(a, b).unwrap();
        (0..k)
            .map(|i| dist.inverse_cdf((i as f64 + 0.5) / k as f64))
            .collect()
    };
    let ps = nodes(priors.prevalence.alpha, priors.prevalence.beta);
    let ses = nodes(priors.sensitivity.alpha, priors.sensitivity.beta);
    let sps = nodes(priors.specificity.alpha, priors.specificity.beta);

    let c = z.fp_exchange_rate();
    let zv = z.value();
    let mut total = 0.0f64;
    for &p in &ps {
        let nb2 = (p - zv) / (1.0 - zv);
        let q = 1.0 - p;
        for &se in &ses {
            let pse = p * se;
            for &sp in &sps {
                let nb1 = pse - q * (1.0 - sp) * c;
                total += nb1.max(nb2).max(0.0);
            }
        }
    }
    let e_max = total / (k as f64).powi(3);
    e_max - max_enb(&net_benefits(&priors.means(), z))
}
