//! Net-benefit arithmetic for the three treatment strategies (treat none,
//! use the model, treat all) and strategy selection.
//!
//! Net benefit is expressed in net true positives per decision: a false
//! positive costs `z/(1-z)` true-positive units, where `z` is the risk
//! threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Risk threshold placed on predicted risks, strictly inside (0, 1).
///
/// The treat-all net benefit diverges as `z -> 1` and the false-positive
/// exchange rate vanishes at `z = 0`, so both endpoints are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold<F>(F);

impl<F: Real> Threshold<F> {
    pub fn new(z: F) -> Result<Self> {
        if !z.is_finite() || z <= F::zero() || z >= F::one() {
            return Err(Error::InvalidThreshold(
                z.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self(z))
    }

    pub fn value(self) -> F {
        self.0
    }

    /// Exchange rate `z/(1-z)`: the cost of one false positive in net
    /// true-positive units.
    pub fn fp_exchange_rate(self) -> F {
        self.0 / (F::one() - self.0)
    }
}

/// Population parameters that fully specify net benefit for binary outcomes
/// at a fixed threshold: prevalence, sensitivity, and specificity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaTriplet<F> {
    pub prevalence: F,
    pub sensitivity: F,
    pub specificity: F,
}

impl<F: Real> ThetaTriplet<F> {
    pub fn new(prevalence: F, sensitivity: F, specificity: F) -> Result<Self> {
        for (name, value) in [
            ("prevalence", prevalence),
            ("sensitivity", sensitivity),
            ("specificity", specificity),
        ] {
            if !(value >= F::zero() && value <= F::one()) {
                return Err(Error::InvalidProbability {
                    name,
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self {
            prevalence,
            sensitivity,
            specificity,
        })
    }
}

/// Treatment strategies in their fixed order. The indexing is part of the
/// output contract: 0 = treat none, 1 = use the model, 2 = treat all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    TreatNone = 0,
    UseModel = 1,
    TreatAll = 2,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::TreatNone, Strategy::UseModel, Strategy::TreatAll];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::TreatNone => "treat-none",
            Strategy::UseModel => "use-model",
            Strategy::TreatAll => "treat-all",
        };
        f.write_str(s)
    }
}

/// Net benefit of one strategy at `theta` and threshold `z`.
///
/// Treat-all is evaluated as `(p - z)/(1 - z)`, an algebraic rearrangement
/// of `p - (1-p) z/(1-z)` that is exactly zero when prevalence equals the
/// threshold.
pub fn net_benefit<F: Real>(strategy: Strategy, theta: &ThetaTriplet<F>, z: Threshold<F>) -> F {
    let one = F::one();
    match strategy {
        Strategy::TreatNone => F::zero(),
        Strategy::UseModel => {
            theta.prevalence * theta.sensitivity
                - (one - theta.prevalence) * (one - theta.specificity) * z.fp_exchange_rate()
        }
        Strategy::TreatAll => (theta.prevalence - z.value()) / (one - z.value()),
    }
}

/// Net benefit of all three strategies, in strategy order.
pub fn net_benefits<F: Real>(theta: &ThetaTriplet<F>, z: Threshold<F>) -> [F; 3] {
    [
        net_benefit(Strategy::TreatNone, theta, z),
        net_benefit(Strategy::UseModel, theta, z),
        net_benefit(Strategy::TreatAll, theta, z),
    ]
}

/// Strategy with the highest expected net benefit. Ties break toward the
/// lowest index, i.e. the least interventional strategy.
pub fn best_strategy<F: Real>(enb: &[F; 3]) -> Result<Strategy> {
    if enb.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEnb([
            enb[0].to_f64().unwrap_or(f64::NAN),
            enb[1].to_f64().unwrap_or(f64::NAN),
            enb[2].to_f64().unwrap_or(f64::NAN),
        ]));
    }
    let mut best = Strategy::TreatNone;
    for s in [Strategy::UseModel, Strategy::TreatAll] {
        if enb[s.index()] > enb[best.index()] {
            best = s;
        }
    }
    Ok(best)
}

/// Maximum entry of an expected-NB vector.
pub fn max_enb<F: Real>(enb: &[F; 3]) -> F {
    enb[0].max(enb[1]).max(enb[2])
}

/// NB of the model minus the best default strategy,
/// `NB1 - max(NB0, NB2)`.
pub fn incremental_net_benefit<F: Real>(theta: &ThetaTriplet<F>, z: Threshold<F>) -> F {
    let nb = net_benefits(theta, z);
    nb[1] - nb[0].max(nb[2])
}
