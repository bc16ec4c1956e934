//! Deterministic, stream-splittable sampling primitives shared by the
//! Monte Carlo engines.
//!
//! The generator is ChaCha with 8 rounds. A [`RandomStream`] names one
//! reproducible sequence by (seed, stream id); engines give every iteration
//! its own stream id, so results are bit-identical regardless of worker
//! count or scheduling. Samplers draw in `f64` and narrow at the boundary,
//! keeping streams identical across scalar types.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Exp1};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Seed used by the CLI when neither `--seed` nor `VOINB_SEED` is given.
pub const DEFAULT_SEED: u64 = 42;

/// Nonnegative weights over the records of a sample. Bayesian-bootstrap
/// weights sum to 1; ordinary-bootstrap weights are multiples of `1/n`
/// summing to 1.
pub type WeightVector = Vec<f64>;

/// A (seed, stream id) pair naming one reproducible random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
}

/// Name the `stream_id`-th independent sequence under `seed`.
pub fn substream(seed: u64, stream_id: u64) -> RandomStream {
    RandomStream { seed, stream_id }
}

impl RandomStream {
    /// Instantiate the generator for this stream.
    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Derive an independent child seed from a seed and a tag
/// (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Draw from Beta(alpha, beta). Improper parameters (including the
/// Beta(0, 0) limit) are rejected.
pub fn sample_beta<F: Real>(alpha: F, beta: F, stream: RandomStream) -> Result<F> {
    sample_beta_with(&mut stream.rng(), alpha, beta)
}

/// As [`sample_beta`], drawing from an existing generator.
pub fn sample_beta_with<F: Real>(rng: &mut ChaCha8Rng, alpha: F, beta: F) -> Result<F> {
    let dist = beta_dist(alpha, beta)?;
    Ok(F::from_f64_lossy(dist.sample(rng)))
}

/// Validated Beta distribution over `f64`, for callers that draw repeatedly
/// with fixed parameters.
pub fn beta_dist<F: Real>(alpha: F, beta: F) -> Result<Beta<f64>> {
    let (a, b) = (
        alpha.to_f64().unwrap_or(f64::NAN),
        beta.to_f64().unwrap_or(f64::NAN),
    );
    if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::ImproperBeta { alpha: a, beta: b });
    }
    Beta::new(a, b).map_err(|e| Error::InvalidParam(format!("beta({a}, {b}): {e}")))
}

/// Draw from Binomial(trials, p); returns 0 when `trials == 0`.
pub fn sample_binomial(trials: u64, p: f64, stream: RandomStream) -> Result<u64> {
    sample_binomial_with(&mut stream.rng(), trials, p)
}

/// As [`sample_binomial`], drawing from an existing generator.
pub fn sample_binomial_with(rng: &mut ChaCha8Rng, trials: u64, p: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability {
            name: "binomial success probability",
            value: p,
        });
    }
    if trials == 0 {
        return Ok(0);
    }
    let dist =
        Binomial::new(trials, p).map_err(|e| Error::InvalidParam(format!("binomial: {e}")))?;
    Ok(dist.sample(rng))
}

/// Bayesian-bootstrap weights: `n` standard-exponential draws normalized by
/// their sum, i.e. one draw from Dirichlet(1, ..., 1).
pub fn dirichlet_weights(n: usize, stream: RandomStream) -> WeightVector {
    dirichlet_weights_with(&mut stream.rng(), n)
}

/// As [`dirichlet_weights`], drawing from an existing generator.
pub fn dirichlet_weights_with(rng: &mut ChaCha8Rng, n: usize) -> WeightVector {
    assert!(n >= 1, "weight vector needs at least one record");
    let mut weights: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights
}

/// Ordinary-bootstrap weights: counts of `n` draws with replacement over the
/// `n` records, scaled by `1/n`.
pub fn multinomial_weights(n: usize, stream: RandomStream) -> WeightVector {
    multinomial_weights_with(&mut stream.rng(), n)
}

/// As [`multinomial_weights`], drawing from an existing generator.
pub fn multinomial_weights_with(rng: &mut ChaCha8Rng, n: usize) -> WeightVector {
    assert!(n >= 1, "weight vector needs at least one record");
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts
        .into_iter()
        .map(|c| f64::from(c) / n as f64)
        .collect()
}
