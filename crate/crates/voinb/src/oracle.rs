//! Exact EVPI/EVSI by exhaustive enumeration over small discrete priors:
//! the independent ground truth the Monte Carlo engines are tested against.
//!
//! The prior is a finite set of parameter-triplet atoms with probabilities.
//! EVSI enumerates every realizable future dataset (reduced to its
//! sufficient statistics), applies Bayes' rule over the atoms exactly, and
//! sums the outcome-weighted maxima. No randomness is involved.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::nb::{max_enb, net_benefits, Threshold, ThetaTriplet};
use crate::scalar::Real;

/// Largest number of (n_pos, n_tp, n_tn) outcomes [`evsi_exact`] will
/// enumerate.
pub const ENUMERATION_GUARD: u64 = 1_000_000;

/// A discrete distribution over parameter triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePrior<F> {
    atoms: Vec<(ThetaTriplet<F>, F)>,
}

impl<F: Real> DiscretePrior<F> {
    pub fn new(atoms: Vec<(ThetaTriplet<F>, F)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParam("prior needs at least one atom".into()));
        }
        let mut total = 0.0f64;
        for (theta, p) in &atoms {
            ThetaTriplet::new(theta.prevalence, theta.sensitivity, theta.specificity)?;
            let p = p.to_f64().unwrap_or(f64::NAN);
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "atom probabilities must be positive, got {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!(
                "atom probabilities must sum to 1, got {total}"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(ThetaTriplet<F>, F)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Number of (n_pos, n_tp, n_tn) outcomes for a future sample of size
/// `n_star`: sum over n_pos of (n_pos + 1)(n_star - n_pos + 1), i.e.
/// binomial(n_star + 3, 3).
pub fn outcome_count(n_star: u64) -> u64 {
    (n_star + 1) * (n_star + 2) * (n_star + 3) / 6
}

/// Exact EVPI: expectation of the per-atom maximum NB minus the maximum of
/// the expected NBs.
pub fn evpi_exact<F: Real>(prior: &DiscretePrior<F>, z: Threshold<F>) -> f64 {
    let mut e_max = 0.0f64;
    let mut e_nb = [0.0f64; 3];
    for (theta, p) in prior.atoms() {
        let p = p.to_f64_lossy();
        let nb = net_benefits(theta, z);
        e_max += p * max_enb(&nb).to_f64_lossy();
        for i in 0..3 {
            e_nb[i] += p * nb[i].to_f64_lossy();
        }
    }
    e_max - e_nb[0].max(e_nb[1]).max(e_nb[2])
}

/// Log binomial pmf at `x` successes in `m` trials with probability `p`,
/// with exact handling of `p` equal to 0 or 1.
fn ln_binomial_pmf(x: u64, m: u64, p: f64, ln_fact: &[f64]) -> f64 {
    debug_assert!(x <= m);
    if p == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if x == m { 0.0 } else { f64::NEG_INFINITY };
    }
    let ln_choose = ln_fact[m as usize] - ln_fact[x as usize] - ln_fact[(m - x) as usize];
    ln_choose + x as f64 * p.ln() + (m - x) as f64 * (-p).ln_1p()
}

/// Exact EVSI by enumerating the future-data lattice. Errors when the
/// outcome count exceeds [`ENUMERATION_GUARD`].
pub fn evsi_exact<F: Real>(
    prior: &DiscretePrior<F>,
    z: Threshold<F>,
    n_star: u64,
) -> Result<f64> {
    let outcomes = outcome_count(n_star);
    if outcomes > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard {
            outcomes,
            limit: ENUMERATION_GUARD,
        });
    }

    let atoms: Vec<(f64, [f64; 3], f64, f64, f64)> = prior
        .atoms()
        .iter()
        .map(|(theta, p)| {
            (
                p.to_f64_lossy(),
                {
                    let nb = net_benefits(theta, z);
                    [
                        nb[0].to_f64_lossy(),
                        nb[1].to_f64_lossy(),
                        nb[2].to_f64_lossy(),
                    ]
                },
                theta.prevalence.to_f64_lossy(),
                theta.sensitivity.to_f64_lossy(),
                theta.specificity.to_f64_lossy(),
            )
        })
        .collect();

    let mut e_nb = [0.0f64; 3];
    for (p, nb, ..) in &atoms {
        for i in 0..3 {
            e_nb[i] += p * nb[i];
        }
    }
    let max_cur = e_nb[0].max(e_nb[1]).max(e_nb[2]);
    // No data changes nothing; a one-atom posterior is the prior for every
    // outcome. Both cases are identically zero.
    if n_star == 0 || atoms.len() == 1 {
        return Ok(0.0);
    }

    // ln k! for k = 0..=n_star.
    let ln_fact: Vec<f64> = (0..=n_star).map(|k| ln_gamma(k as f64 + 1.0)).collect();

    // Outer expectation over the sorted outcome lattice; summation order is
    // fixed for reproducibility.
    let mut e_sample = 0.0f64;
    let mut log_lik = vec![0.0f64; atoms.len()];
    for n_pos in 0..=n_star {
        let n_neg = n_star - n_pos;
        for n_tp in 0..=n_pos {
            for n_tn in 0..=n_neg {
                let mut max_ll = f64::NEG_INFINITY;
                for (k, &(_, _, p, se, sp)) in atoms.iter().enumerate() {
                    let ll = ln_binomial_pmf(n_pos, n_star, p, &ln_fact)
                        + ln_binomial_pmf(n_tp, n_pos, se, &ln_fact)
                        + ln_binomial_pmf(n_tn, n_neg, sp, &ln_fact);
                    log_lik[k] = ll;
                    if ll > max_ll {
                        max_ll = ll;
                    }
                }
                if max_ll == f64::NEG_INFINITY {
                    continue; // outcome impossible under every atom
                }
                // Marginal outcome probability and exact posterior over atoms.
                let mut marginal_scaled = 0.0f64;
                let mut post_nb = [0.0f64; 3];
                for (k, (p, nb, ..)) in atoms.iter().enumerate() {
                    let lik = (log_lik[k] - max_ll).exp();
                    let w = p * lik;
                    marginal_scaled += w;
                    for i in 0..3 {
                        post_nb[i] += w * nb[i];
                    }
                }
                if marginal_scaled == 0.0 {
                    continue;
                }
                let best = (post_nb[0].max(post_nb[1]).max(post_nb[2])) / marginal_scaled;
                let marginal = max_ll.exp() * marginal_scaled;
                e_sample += marginal * best;
            }
        }
    }

    Ok(e_sample - max_cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z64(z: f64) -> Threshold<f64> {
        Threshold::new(z).unwrap()
    }

    fn triplet(p: f64, se: f64, sp: f64) -> ThetaTriplet<f64> {
        ThetaTriplet::new(p, se, sp).unwrap()
    }

    fn two_atom_dominated() -> DiscretePrior<f64> {
        DiscretePrior::new(vec![
            (triplet(0.10, 0.9, 0.6), 0.5),
            (triplet(0.02, 0.6, 0.9), 0.5),
        ])
        .unwrap()
    }

    fn two_atom_contested() -> DiscretePrior<f64> {
        DiscretePrior::new(vec![
            (triplet(0.01, 0.5, 0.5), 0.5),
            (triplet(0.10, 0.95, 0.4), 0.5),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_bad_priors() {
        assert!(DiscretePrior::<f64>::new(vec![]).is_err());
        assert!(DiscretePrior::new(vec![(triplet(0.1, 0.5, 0.5), 0.7)]).is_err());
        assert!(
            DiscretePrior::new(vec![(triplet(0.1, 0.5, 0.5), 0.5), (triplet(0.2, 0.5, 0.5), 0.0)])
                .is_err()
        );
    }

    #[test]
    fn single_atom_has_zero_voi() {
        let prior = DiscretePrior::new(vec![(triplet(0.08, 0.9, 0.6), 1.0)]).unwrap();
        assert_eq!(evpi_exact(&prior, z64(0.02)), 0.0);
        assert_eq!(evsi_exact(&prior, z64(0.02), 5).unwrap(), 0.0);
    }

    #[test]
    fn dominated_two_atom_prior_has_zero_evpi() {
        // The model strategy is optimal under both atoms, so resolving the
        // uncertainty changes no decision. Hand values of the six NBs:
        // atom 1: nb1 = 0.0826530612..., nb2 = 0.0816326530...;
        // atom 2: nb1 = 0.01, nb2 = 0.
        let prior = two_atom_dominated();
        let z = z64(0.02);
        let nb_a = net_benefits(&prior.atoms()[0].0, z);
        assert!((nb_a[1] - 0.082_653_061_224_489_79).abs() < 1e-12);
        assert!((nb_a[2] - 0.081_632_653_061_224_49).abs() < 1e-12);
        let nb_b = net_benefits(&prior.atoms()[1].0, z);
        assert!((nb_b[1] - 0.01).abs() < 1e-12);
        assert!(nb_b[2].abs() < 1e-15);
        assert!(evpi_exact(&prior, z).abs() < 1e-15);
    }

    #[test]
    fn contested_two_atom_prior_evpi_hand_value() {
        // Treat-none wins under atom 1, the model under atom 2:
        // E[max] = 0.5 * 0 + 0.5 * nb1(atom 2); max E = E[nb1].
        let prior = two_atom_contested();
        let z = z64(0.02);
        let nb1_a = net_benefits(&prior.atoms()[0].0, z)[1];
        let nb1_b = net_benefits(&prior.atoms()[1].0, z)[1];
        let expected = 0.5 * nb1_b - 0.5 * (nb1_a + nb1_b);
        let got = evpi_exact(&prior, z);
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
        assert!(got > 1e-3);
    }

    #[test]
    fn evsi_zero_cases() {
        let prior = two_atom_contested();
        assert_eq!(evsi_exact(&prior, z64(0.02), 0).unwrap(), 0.0);
    }

    #[test]
    fn evsi_monotone_and_bounded_by_evpi() {
        let prior = two_atom_contested();
        let z = z64(0.02);
        let evpi = evpi_exact(&prior, z);
        let mut last = 0.0;
        for n_star in [0u64, 1, 2, 4, 8, 16, 32, 64, 128] {
            let evsi = evsi_exact(&prior, z, n_star).unwrap();
            assert!(evsi >= last - 1e-13, "n*={n_star}: {evsi} < {last}");
            assert!(evsi <= evpi + 1e-13, "n*={n_star}: {evsi} > {evpi}");
            last = evsi;
        }
        // Perfect-information limit from below.
        let big = evsi_exact(&prior, z, 150).unwrap();
        assert!(big > 0.8 * evpi, "evsi(150)={big} evpi={evpi}");
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        // Internal consistency: enumerate the lattice marginals directly.
        let prior = two_atom_contested();
        let n_star = 12u64;
        let ln_fact: Vec<f64> = (0..=n_star).map(|k| ln_gamma(k as f64 + 1.0)).collect();
        let mut total = 0.0f64;
        for n_pos in 0..=n_star {
            for n_tp in 0..=n_pos {
                for n_tn in 0..=(n_star - n_pos) {
                    for (theta, p) in prior.atoms() {
                        let ll = ln_binomial_pmf(n_pos, n_star, theta.prevalence, &ln_fact)
                            + ln_binomial_pmf(n_tp, n_pos, theta.sensitivity, &ln_fact)
                            + ln_binomial_pmf(n_tn, n_star - n_pos, theta.specificity, &ln_fact);
                        total += p * ll.exp();
                    }
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
    }

    #[test]
    fn guard_rejects_large_lattices() {
        let prior = two_atom_contested();
        let err = evsi_exact(&prior, z64(0.02), 200).unwrap_err();
        match err {
            Error::EnumerationGuard { outcomes, limit } => {
                assert_eq!(outcomes, outcome_count(200));
                assert!(outcomes > limit);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(outcome_count(179) <= ENUMERATION_GUARD);
        assert!(outcome_count(180) > ENUMERATION_GUARD);
    }

    #[test]
    fn degenerate_theta_components_are_handled() {
        // Prevalence 1 vs 0: a single observation's n_pos identifies the
        // atom, so EVSI(1) already equals EVPI. Treat-all is worth 1 under
        // the first atom; nothing beats treat-none under the second.
        let prior = DiscretePrior::new(vec![
            (triplet(1.0, 0.0, 1.0), 0.5),
            (triplet(0.0, 1.0, 1.0), 0.5),
        ])
        .unwrap();
        let z = z64(0.5);
        let evpi = evpi_exact(&prior, z);
        assert!((evpi - 0.5).abs() < 1e-15);
        let evsi = evsi_exact(&prior, z, 1).unwrap();
        assert!((evsi - evpi).abs() < 1e-14);
    }
}
