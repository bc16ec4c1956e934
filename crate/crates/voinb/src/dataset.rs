//! Individual-level validation data: CSV ingestion, confusion counts per
//! threshold, plug-in estimates, and decision curves with bootstrap
//! percentile confidence intervals.

use std::io::Read;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nb::{net_benefits, Threshold, ThetaTriplet};
use crate::rng::substream;
use crate::scalar::Real;

/// One individual: model-predicted risk and observed binary outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record<F> {
    pub risk: F,
    pub outcome: u8,
}

/// An iid sample of individuals from the target population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSample<F> {
    records: Vec<Record<F>>,
}

impl<F: Real> ValidationSample<F> {
    pub fn new(records: Vec<Record<F>>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptySample);
        }
        for r in &records {
            if !(r.risk >= F::zero() && r.risk <= F::one()) {
                return Err(Error::InvalidProbability {
                    name: "risk",
                    value: r.risk.to_f64().unwrap_or(f64::NAN),
                });
            }
            if r.outcome > 1 {
                return Err(Error::InvalidParam(format!(
                    "outcome must be 0 or 1, got {}",
                    r.outcome
                )));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record<F>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn events(&self) -> u64 {
        self.records.iter().filter(|r| r.outcome == 1).count() as u64
    }

    /// Subsample without replacement, keeping the original row order.
    pub fn subsample(&self, size: usize, stream: crate::rng::RandomStream) -> Result<Self> {
        if size == 0 || size > self.len() {
            return Err(Error::InvalidParam(format!(
                "subsample size {size} out of range 1..={}",
                self.len()
            )));
        }
        let mut idx = rand::seq::index::sample(&mut stream.rng(), self.len(), size).into_vec();
        idx.sort_unstable();
        Ok(Self {
            records: idx.into_iter().map(|i| self.records[i]).collect(),
        })
    }
}

/// Parse a delimiter-separated stream with a header row into a sample.
///
/// `risk_col` must hold decimals in [0, 1]; `outcome_col` must hold 0 or 1.
/// Errors carry the 1-based line number of the offending row.
pub fn parse_validation_csv<F: Real, R: Read>(
    reader: R,
    risk_col: &str,
    outcome_col: &str,
) -> Result<ValidationSample<F>> {
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
    let risk_idx = find(risk_col)?;
    let outcome_idx = find(outcome_col)?;

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let risk_txt = row.get(risk_idx).unwrap_or("");
        let risk: f64 = risk_txt.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("risk `{risk_txt}` is not a number"),
        })?;
        if !(0.0..=1.0).contains(&risk) {
            return Err(Error::Parse {
                line,
                msg: format!("risk {risk} outside [0, 1]"),
            });
        }
        let outcome_txt = row.get(outcome_idx).unwrap_or("");
        let outcome = match outcome_txt {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("outcome `{other}` is not 0 or 1"),
                })
            }
        };
        records.push(Record {
            risk: F::from_f64_lossy(risk),
            outcome,
        });
    }
    ValidationSample::new(records)
}

/// Classification counts at a threshold; the sufficient statistics for
/// binary-outcome VoI. `z` records the threshold the counts were taken at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_tp: u64,
    pub n_fn: u64,
    pub n_tn: u64,
    pub n_fp: u64,
    pub z: f64,
}

impl ConfusionCounts {
    pub fn n(&self) -> u64 {
        self.n_tp + self.n_fn + self.n_tn + self.n_fp
    }

    pub fn events(&self) -> u64 {
        self.n_tp + self.n_fn
    }

    pub fn non_events(&self) -> u64 {
        self.n_tn + self.n_fp
    }
}

/// Count classifications at `z`. Boundary rule: `risk >= z` is positive.
pub fn confusion_at_threshold<F: Real>(
    sample: &ValidationSample<F>,
    z: Threshold<F>,
) -> ConfusionCounts {
    let mut c = ConfusionCounts {
        n_tp: 0,
        n_fn: 0,
        n_tn: 0,
        n_fp: 0,
        z: z.value().to_f64_lossy(),
    };
    for r in sample.records() {
        let positive = r.risk >= z.value();
        match (positive, r.outcome == 1) {
            (true, true) => c.n_tp += 1,
            (false, true) => c.n_fn += 1,
            (false, false) => c.n_tn += 1,
            (true, false) => c.n_fp += 1,
        }
    }
    c
}

/// Plug-in estimates of prevalence, sensitivity, and specificity.
/// Errors when the sample has no events or no non-events.
pub fn theta_hat<F: Real>(counts: &ConfusionCounts) -> Result<ThetaTriplet<F>> {
    if counts.events() == 0 {
        return Err(Error::NoEvents);
    }
    if counts.non_events() == 0 {
        return Err(Error::NoNonEvents);
    }
    Ok(theta_plugin(counts))
}

/// Plug-in estimates with the 0/0 -> 0 convention for degenerate
/// denominators. The model-NB term `prevalence * sensitivity` is zero
/// whenever sensitivity is set this way, so net benefits stay correct.
pub fn theta_plugin<F: Real>(counts: &ConfusionCounts) -> ThetaTriplet<F> {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            F::zero()
        } else {
            F::from_u64(num).unwrap() / F::from_u64(den).unwrap()
        }
    };
    ThetaTriplet {
        prevalence: ratio(counts.events(), counts.n()),
        sensitivity: ratio(counts.n_tp, counts.events()),
        specificity: ratio(counts.n_tn, counts.non_events()),
    }
}

/// Beta(1, 1)-smoothed plug-in estimates, used for bootstrap replicates
/// that resample zero events or zero non-events.
fn theta_smoothed<F: Real>(counts: &ConfusionCounts) -> ThetaTriplet<F> {
    let r = |num: u64, den: u64| {
        (F::from_u64(num).unwrap() + F::one())
            / (F::from_u64(den).unwrap() + F::from_f64_lossy(2.0))
    };
    ThetaTriplet {
        prevalence: r(counts.events(), counts.n()),
        sensitivity: r(counts.n_tp, counts.events()),
        specificity: r(counts.n_tn, counts.non_events()),
    }
}

/// One decision-curve row: per-strategy expected NB, incremental NB of the
/// model over the best default, and its percentile confidence bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<F> {
    pub z: F,
    pub nb_none: F,
    pub nb_model: F,
    pub nb_all: F,
    pub delta_nb: F,
    pub ci_lo: F,
    pub ci_hi: F,
}

/// Decision curve across a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCurve<F> {
    pub points: Vec<CurvePoint<F>>,
    pub n_boot: u64,
    pub ci_level: f64,
    pub seed: u64,
    /// Replicate-threshold cells that fell back to smoothed estimates
    /// because a resample had zero events or zero non-events.
    pub smoothed_cells: u64,
}

/// Decision curve with bootstrap percentile confidence intervals around the
/// incremental NB. Point estimates are plug-in values; the interval comes
/// from `n_boot` ordinary bootstrap resamples, each on its own substream.
pub fn decision_curve<F: Real>(
    sample: &ValidationSample<F>,
    thresholds: &[Threshold<F>],
    n_boot: u64,
    seed: u64,
    ci_level: f64,
) -> Result<DecisionCurve<F>> {
    if n_boot < 2 {
        return Err(Error::InvalidParam(format!(
            "n_boot must be at least 2, got {n_boot}"
        )));
    }
    if !(0.0 < ci_level && ci_level < 1.0) {
        return Err(Error::InvalidParam(format!(
            "ci_level must lie in (0, 1), got {ci_level}"
        )));
    }
    if thresholds.is_empty() {
        return Err(Error::InvalidParam("empty threshold grid".into()));
    }

    let n = sample.len();
    let records = sample.records();

    // Point estimates from the full sample.
    let mut points = Vec::with_capacity(thresholds.len());
    for &z in thresholds {
        let counts = confusion_at_threshold(sample, z);
        let nb = net_benefits(&theta_plugin::<F>(&counts), z);
        points.push(CurvePoint {
            z: z.value(),
            nb_none: nb[0],
            nb_model: nb[1],
            nb_all: nb[2],
            delta_nb: nb[1] - nb[0].max(nb[2]),
            ci_lo: F::zero(),
            ci_hi: F::zero(),
        });
    }

    // Bootstrap replicates: each draws n records with replacement and
    // evaluates the incremental NB at every threshold.
    let replicate = |b: u64| -> (Vec<f64>, u64) {
        let mut rng = substream(seed, b).rng();
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut smoothed = 0u64;
        let deltas = thresholds
            .iter()
            .map(|&z| {
                let mut counts = ConfusionCounts {
                    n_tp: 0,
                    n_fn: 0,
                    n_tn: 0,
                    n_fp: 0,
                    z: z.value().to_f64_lossy(),
                };
                for &i in &idx {
                    let r = records[i];
                    let positive = r.risk >= z.value();
                    match (positive, r.outcome == 1) {
                        (true, true) => counts.n_tp += 1,
                        (false, true) => counts.n_fn += 1,
                        (false, false) => counts.n_tn += 1,
                        (true, false) => counts.n_fp += 1,
                    }
                }
                let theta = if counts.events() == 0 || counts.non_events() == 0 {
                    smoothed += 1;
                    theta_smoothed::<F>(&counts)
                } else {
                    theta_plugin::<F>(&counts)
                };
                let nb = net_benefits(&theta, z);
                (nb[1] - nb[0].max(nb[2])).to_f64_lossy()
            })
            .collect();
        (deltas, smoothed)
    };
    let results: Vec<(Vec<f64>, u64)> = (0..n_boot).into_par_iter().map(replicate).collect();
    let smoothed_cells: u64 = results.iter().map(|(_, s)| s).sum();

    let alpha = 1.0 - ci_level;
    for (t, point) in points.iter_mut().enumerate() {
        let mut column: Vec<f64> = results.iter().map(|(d, _)| d[t]).collect();
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite NB values"));
        point.ci_lo = F::from_f64_lossy(quantile_sorted(&column, alpha / 2.0));
        point.ci_hi = F::from_f64_lossy(quantile_sorted(&column, 1.0 - alpha / 2.0));
    }

    Ok(DecisionCurve {
        points,
        n_boot,
        ci_level,
        seed,
        smoothed_cells,
    })
}

/// Quantile of a sorted slice with linear interpolation between order
/// statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

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

    #[test]
    fn parse_basic_csv() {
        let data = "risk,outcome\n0.10,1\n0.02,0\n";
        let s: ValidationSample<f64> =
            parse_validation_csv(data.as_bytes(), "risk", "outcome").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.events(), 1);
        assert_eq!(s.records()[0].risk, 0.10);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let data = "risk,outcome\n0.10,1\n1.5,0\n";
        let err = parse_validation_csv::<f64, _>(data.as_bytes(), "risk", "outcome").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("1.5"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_bad_outcome_and_missing_column() {
        let data = "risk,outcome\n0.1,2\n";
        assert!(matches!(
            parse_validation_csv::<f64, _>(data.as_bytes(), "risk", "outcome"),
            Err(Error::Parse { line: 2, .. })
        ));
        let data = "p,outcome\n0.1,1\n";
        assert!(matches!(
            parse_validation_csv::<f64, _>(data.as_bytes(), "risk", "outcome"),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn parse_header_only_is_empty_sample() {
        let data = "risk,outcome\n";
        assert!(matches!(
            parse_validation_csv::<f64, _>(data.as_bytes(), "risk", "outcome"),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn confusion_counts_hand_example() {
        let s = sample(&[(0.10, 1), (0.02, 0), (0.01, 0)]);
        let c = confusion_at_threshold(&s, z64(0.05));
        assert_eq!((c.n_tp, c.n_fn, c.n_tn, c.n_fp), (1, 0, 2, 0));
        assert_eq!(c.n(), 3);
    }

    #[test]
    fn threshold_below_all_risks_classifies_everyone_positive() {
        let s = sample(&[(0.5, 1), (0.9, 0), (0.7, 1)]);
        let c = confusion_at_threshold(&s, z64(0.1));
        assert_eq!(c.n_fn, 0);
        assert_eq!(c.n_tn, 0);
        assert_eq!(c.n_tp + c.n_fp, 3);
    }

    #[test]
    fn boundary_risk_is_positive() {
        let s = sample(&[(0.05, 0)]);
        let c = confusion_at_threshold(&s, z64(0.05));
        assert_eq!(c.n_fp, 1);
        assert_eq!(c.n_tn, 0);
    }

    #[test]
    fn theta_hat_hand_example() {
        let c = ConfusionCounts {
            n_tp: 9,
            n_fn: 1,
            n_tn: 60,
            n_fp: 30,
            z: 0.05,
        };
        let t: ThetaTriplet<f64> = theta_hat(&c).unwrap();
        assert!((t.prevalence - 0.10).abs() < 1e-15);
        assert!((t.sensitivity - 0.9).abs() < 1e-15);
        assert!((t.specificity - 60.0 / 90.0).abs() < 1e-15);
    }

    #[test]
    fn theta_hat_errors_without_events_or_non_events() {
        let c = ConfusionCounts {
            n_tp: 0,
            n_fn: 0,
            n_tn: 5,
            n_fp: 5,
            z: 0.1,
        };
        assert!(matches!(theta_hat::<f64>(&c), Err(Error::NoEvents)));
        let c = ConfusionCounts {
            n_tp: 5,
            n_fn: 5,
            n_tn: 0,
            n_fp: 0,
            z: 0.1,
        };
        assert!(matches!(theta_hat::<f64>(&c), Err(Error::NoNonEvents)));
    }

    #[test]
    fn theta_hat_symmetry() {
        let c = ConfusionCounts {
            n_tp: 4,
            n_fn: 4,
            n_tn: 4,
            n_fp: 4,
            z: 0.5,
        };
        let t: ThetaTriplet<f64> = theta_hat(&c).unwrap();
        assert_eq!(
            (t.prevalence, t.sensitivity, t.specificity),
            (0.5, 0.5, 0.5)
        );
    }

    #[test]
    fn curve_point_estimate_matches_theta_hat_bitwise() {
        let s = sample(&[
            (0.10, 1),
            (0.02, 0),
            (0.08, 1),
            (0.01, 0),
            (0.30, 0),
            (0.04, 0),
        ]);
        let z = z64(0.05);
        let curve = decision_curve(&s, &[z], 100, 1, 0.95).unwrap();
        let t: ThetaTriplet<f64> = theta_hat(&confusion_at_threshold(&s, z)).unwrap();
        let nb = net_benefits(&t, z);
        assert_eq!(curve.points[0].nb_model, nb[1]);
        assert_eq!(curve.points[0].nb_all, nb[2]);
        assert_eq!(curve.points[0].nb_none, 0.0);
    }

    #[test]
    fn all_negative_outcomes_yield_nonpositive_point_nbs() {
        let s = sample(&[(0.10, 0), (0.02, 0), (0.50, 0), (0.01, 0)]);
        let curve = decision_curve(&s, &[z64(0.02)], 50, 3, 0.95).unwrap();
        let p = &curve.points[0];
        assert_eq!(p.nb_none, 0.0);
        assert!(p.nb_model <= 0.0);
        assert!(p.nb_all <= 0.0);
    }

    #[test]
    fn curve_is_deterministic() {
        let s = sample(&[
            (0.10, 1),
            (0.02, 0),
            (0.08, 1),
            (0.01, 0),
            (0.30, 0),
            (0.04, 0),
            (0.07, 0),
            (0.12, 1),
        ]);
        let grid: Vec<_> = (1..=10).map(|i| z64(i as f64 / 100.0)).collect();
        let a = decision_curve(&s, &grid, 500, 99, 0.95).unwrap();
        let b = decision_curve(&s, &grid, 500, 99, 0.95).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn curve_ci_contains_point_estimate_at_large_n_boot() {
        // GUSTO-like toy sample with informative risks.
        let mut rows = Vec::new();
        for i in 0..200 {
            let risk = 0.01 + 0.10 * (i as f64 / 200.0);
            let outcome = u8::from(i % 13 == 0);
            rows.push((risk, outcome));
        }
        let s = sample(&rows);
        let grid: Vec<_> = (1..=10).map(|i| z64(i as f64 / 100.0)).collect();
        let curve = decision_curve(&s, &grid, 1000, 5, 0.95).unwrap();
        for p in &curve.points {
            assert!(p.ci_lo <= p.delta_nb + 1e-12, "z={} lo={}", p.z, p.ci_lo);
            assert!(p.ci_hi >= p.delta_nb - 1e-12, "z={} hi={}", p.z, p.ci_hi);
            assert!(p.ci_lo <= p.ci_hi);
        }
    }

    #[test]
    fn subsample_is_deterministic_and_sized() {
        let s = sample(&[(0.1, 0), (0.2, 1), (0.3, 0), (0.4, 1), (0.5, 0)]);
        let a = s.subsample(3, substream(7, 0)).unwrap();
        let b = s.subsample(3, substream(7, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(s.subsample(6, substream(7, 0)).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
    }

    proptest! {
        #[test]
        fn counts_partition_the_sample(
            rows in proptest::collection::vec((0.0..=1.0f64, 0..=1u8), 1..200),
            z in 0.001..=0.999f64,
        ) {
            let s = sample(&rows);
            let c = confusion_at_threshold(&s, z64(z));
            prop_assert_eq!(c.n() as usize, rows.len());
        }

        #[test]
        fn classified_positive_is_monotone_in_threshold(
            rows in proptest::collection::vec((0.0..=1.0f64, 0..=1u8), 1..100),
            z1 in 0.001..=0.998f64,
            dz in 0.0001..=0.5f64,
        ) {
            let z2 = (z1 + dz).min(0.999);
            let s = sample(&rows);
            let a = confusion_at_threshold(&s, z64(z1));
            let b = confusion_at_threshold(&s, z64(z2));
            prop_assert!(b.n_tp + b.n_fp <= a.n_tp + a.n_fp);
        }
    }
}
