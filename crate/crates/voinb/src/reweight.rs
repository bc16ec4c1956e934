//! EVSI for arbitrary current-information distributions supplied as
//! posterior draws, via binomial-likelihood reweighting.
//!
//! Current information is an empirical distribution over M draws of the
//! parameter triplet. Each iteration picks a truth from the draws, simulates
//! a future dataset, reweights every draw by its binomial likelihood of that
//! dataset (in log space), and revalues the strategies under the reweighted
//! empirical distribution.

use std::collections::BTreeMap;
use std::io::Read;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::betabin::{clamp_voi, mean_and_se, simulate_future_counts_with, FutureCounts, VoiEstimate};
use crate::error::{Error, Result};
use crate::nb::{max_enb, net_benefits, Threshold, ThetaTriplet};
use crate::rng::substream;
use crate::scalar::Real;

/// M draws from the current-information distribution of the parameter
/// triplet; the empirical distribution puts equal mass on each draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws<F> {
    draws: Vec<ThetaTriplet<F>>,
}

impl<F: Real> PosteriorDraws<F> {
    pub fn new(draws: Vec<ThetaTriplet<F>>) -> Result<Self> {
        if draws.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "need at least 2 posterior draws, got {}",
                draws.len()
            )));
        }
        for (i, d) in draws.iter().enumerate() {
            ThetaTriplet::new(d.prevalence, d.sensitivity, d.specificity).map_err(|e| {
                Error::InvalidParam(format!("draw {i}: {e}"))
            })?;
        }
        Ok(Self { draws })
    }

    pub fn draws(&self) -> &[ThetaTriplet<F>] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Parse a CSV stream with header `theta_p,theta_se,theta_sp`, one draw
    /// per row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (ip, ise, isp) = (find("theta_p")?, find("theta_se")?, find("theta_sp")?);
        let mut draws = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let get = |idx: usize, name: &str| -> Result<F> {
                let txt = row.get(idx).unwrap_or("");
                let v: f64 = txt.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("{name} `{txt}` is not a number"),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("{name} {v} outside [0, 1]"),
                    });
                }
                Ok(F::from_f64_lossy(v))
            };
            draws.push(ThetaTriplet {
                prevalence: get(ip, "theta_p")?,
                sensitivity: get(ise, "theta_se")?,
                specificity: get(isp, "theta_sp")?,
            });
        }
        Self::new(draws)
    }
}

/// Degeneracy diagnostics for one reweighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightDiagnostics {
    /// (sum w)^2 / sum w^2, between 1 and M.
    pub effective_sample_size: f64,
    pub min_log_weight: f64,
    pub max_log_weight: f64,
    /// Set when the effective sample size falls below 1% of M.
    pub underflow: bool,
}

/// Precomputed per-draw log parameters for the binomial likelihood.
struct LogLik {
    ln_p: Vec<f64>,
    ln_1p: Vec<f64>,
    ln_se: Vec<f64>,
    ln_1se: Vec<f64>,
    ln_sp: Vec<f64>,
    ln_1sp: Vec<f64>,
}

impl LogLik {
    fn new<F: Real>(draws: &PosteriorDraws<F>) -> Self {
        let m = draws.len();
        let mut ll = LogLik {
            ln_p: Vec::with_capacity(m),
            ln_1p: Vec::with_capacity(m),
            ln_se: Vec::with_capacity(m),
            ln_1se: Vec::with_capacity(m),
            ln_sp: Vec::with_capacity(m),
            ln_1sp: Vec::with_capacity(m),
        };
        for d in draws.draws() {
            let p = d.prevalence.to_f64_lossy();
            let se = d.sensitivity.to_f64_lossy();
            let sp = d.specificity.to_f64_lossy();
            ll.ln_p.push(p.ln());
            ll.ln_1p.push((-p).ln_1p());
            ll.ln_se.push(se.ln());
            ll.ln_1se.push((-se).ln_1p());
            ll.ln_sp.push(sp.ln());
            ll.ln_1sp.push((-sp).ln_1p());
        }
        ll
    }

    /// Unnormalized log weight of draw `k` for the future data `fc`.
    /// Binomial coefficients are constant across draws and cancel in the
    /// normalization, so only the success/failure terms appear.
    fn log_weight(&self, k: usize, fc: &FutureCounts) -> f64 {
        let term = |count: u64, ln_p: f64| if count == 0 { 0.0 } else { count as f64 * ln_p };
        term(fc.n_pos, self.ln_p[k])
            + term(fc.n_star - fc.n_pos, self.ln_1p[k])
            + term(fc.n_tp, self.ln_se[k])
            + term(fc.n_fn, self.ln_1se[k])
            + term(fc.n_tn, self.ln_sp[k])
            + term(fc.n_fp, self.ln_1sp[k])
    }

    /// Fill `buf` with max-subtracted unnormalized weights and return their
    /// sum plus diagnostics.
    fn weights_into(&self, fc: &FutureCounts, buf: &mut Vec<f64>) -> Result<(f64, WeightDiagnostics)> {
        let m = self.ln_p.len();
        buf.clear();
        let mut max_lw = f64::NEG_INFINITY;
        let mut min_lw = f64::INFINITY;
        for k in 0..m {
            let lw = self.log_weight(k, fc);
            if lw > max_lw {
                max_lw = lw;
            }
            if lw < min_lw {
                min_lw = lw;
            }
            buf.push(lw);
        }
        if max_lw == f64::NEG_INFINITY {
            return Err(Error::AllWeightsZero);
        }
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for w in buf.iter_mut() {
            *w = (*w - max_lw).exp();
            sum += *w;
            sum_sq += *w * *w;
        }
        let ess = sum * sum / sum_sq;
        let diag = WeightDiagnostics {
            effective_sample_size: ess,
            min_log_weight: min_lw - max_lw,
            max_log_weight: 0.0,
            underflow: ess < 0.01 * m as f64,
        };
        Ok((sum, diag))
    }
}

/// Weighted expected NB of each strategy over the draws. Weights must be
/// nonnegative with a positive sum; they need not be normalized.
pub fn enb_from_draws<F: Real>(
    draws: &PosteriorDraws<F>,
    weights: &[f64],
    z: Threshold<F>,
) -> Result<[F; 3]> {
    if weights.len() != draws.len() {
        return Err(Error::InvalidParam(format!(
            "{} weights for {} draws",
            weights.len(),
            draws.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParam(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(Error::AllWeightsZero);
    }
    let nbs: Vec<[F; 3]> = draws.draws().iter().map(|d| net_benefits(d, z)).collect();
    // Constant weights factor out; the plain arithmetic mean keeps the
    // uniform case exact.
    if weights.iter().all(|&w| w == weights[0]) {
        let col = |i: usize| {
            crate::betabin::arithmetic_mean(
                &nbs.iter().map(|nb| nb[i].to_f64_lossy()).collect::<Vec<_>>(),
            )
        };
        return Ok([F::zero(), F::from_f64_lossy(col(1)), F::from_f64_lossy(col(2))]);
    }
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for (w, nb) in weights.iter().zip(&nbs) {
        s1 += w * nb[1].to_f64_lossy();
        s2 += w * nb[2].to_f64_lossy();
    }
    Ok([
        F::zero(),
        F::from_f64_lossy(s1 / sum),
        F::from_f64_lossy(s2 / sum),
    ])
}

/// Reweight the draws by the binomial likelihood of `fc`, in log space with
/// max-subtraction. Returns normalized weights summing to 1.
pub fn reweight<F: Real>(
    draws: &PosteriorDraws<F>,
    fc: &FutureCounts,
) -> Result<(Vec<f64>, WeightDiagnostics)> {
    let loglik = LogLik::new(draws);
    let mut buf = Vec::new();
    let (sum, diag) = loglik.weights_into(fc, &mut buf)?;
    for w in &mut buf {
        *w /= sum;
    }
    Ok((buf, diag))
}

/// Run the reweighting engine. The truth for iteration `j` cycles
/// deterministically over the draws when `n_sims >= M`; otherwise a seeded
/// shuffle picks which draws serve as truths. Future-data simulation for
/// iteration `j` uses substream (seed, j).
pub fn run<F: Real>(
    draws: &PosteriorDraws<F>,
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
    let m = draws.len();
    let loglik = LogLik::new(draws);
    let (nb_model, nb_all): (Vec<f64>, Vec<f64>) = draws
        .draws()
        .iter()
        .map(|d| {
            let nb = net_benefits(d, z);
            (nb[1].to_f64_lossy(), nb[2].to_f64_lossy())
        })
        .unzip();

    // Current-information ENBs: arithmetic means of the per-draw NBs, kept
    // in f64 so the per-iteration differences cancel exactly at n_star == 0
    // and for point-mass draws.
    let mean_model = crate::betabin::arithmetic_mean(&nb_model);
    let mean_all = crate::betabin::arithmetic_mean(&nb_all);
    let enb_cur = [
        F::zero(),
        F::from_f64_lossy(mean_model),
        F::from_f64_lossy(mean_all),
    ];
    let max_cur = mean_model.max(mean_all).max(0.0);

    let truth_order: Option<Vec<usize>> = if (n_sims as usize) < m {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut substream(seed, u64::MAX).rng());
        idx.truncate(n_sims as usize);
        Some(idx)
    } else {
        None
    };
    let truth_index = |j: u64| -> usize {
        match &truth_order {
            Some(order) => order[j as usize],
            None => (j % m as u64) as usize,
        }
    };

    struct Iter {
        d_perfect: f64,
        d_sample: f64,
        ess: f64,
        underflow: bool,
    }

    let iteration = |j: u64| -> Result<Iter> {
        let truth = draws.draws()[truth_index(j)];
        let d_perfect = max_enb(&net_benefits(&truth, z)).to_f64_lossy() - max_cur;
        let mut rng = substream(seed, j).rng();
        let fc = simulate_future_counts_with(&mut rng, &truth, n_star)?;
        let mut buf = Vec::with_capacity(m);
        let (sum, diag) = loglik.weights_into(&fc, &mut buf)?;
        // Equal weights (n_star == 0, or point-mass draws) reduce to the
        // same arithmetic means used for max_cur, making the gain exact.
        let (e1, e2) = if buf.iter().all(|&w| w == buf[0]) {
            (
                crate::betabin::arithmetic_mean(&nb_model),
                crate::betabin::arithmetic_mean(&nb_all),
            )
        } else {
            let (mut s1, mut s2) = (0.0f64, 0.0f64);
            for (k, w) in buf.iter().enumerate() {
                s1 += w * nb_model[k];
                s2 += w * nb_all[k];
            }
            (s1 / sum, s2 / sum)
        };
        let d_sample = e1.max(e2).max(0.0) - max_cur;
        Ok(Iter {
            d_perfect,
            d_sample,
            ess: diag.effective_sample_size,
            underflow: diag.underflow,
        })
    };
    let iters: Vec<Iter> = (0..n_sims)
        .into_par_iter()
        .map(iteration)
        .collect::<Result<_>>()?;

    let perfect: Vec<f64> = iters.iter().map(|i| i.d_perfect).collect();
    let sample: Vec<f64> = iters.iter().map(|i| i.d_sample).collect();
    let (raw_evpi, se_evpi) = mean_and_se(&perfect);
    let (raw_evsi, se_evsi) = mean_and_se(&sample);

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert(
        "underflow_fraction".into(),
        iters.iter().filter(|i| i.underflow).count() as f64 / n_sims as f64,
    );
    diagnostics.insert(
        "ess_min".into(),
        iters.iter().map(|i| i.ess).fold(f64::INFINITY, f64::min),
    );
    diagnostics.insert(
        "ess_mean".into(),
        iters.iter().map(|i| i.ess).sum::<f64>() / n_sims as f64,
    );
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
