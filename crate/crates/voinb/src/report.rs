//! Population scaling of per-decision VoI values and serialization of the
//! output tables.
//!
//! CSV output rounds headline VoI values to 5 decimals and population units
//! to whole counts; JSON keeps full precision. Column order is part of the
//! contract.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::DecisionCurve;
use crate::error::{Error, Result};
use crate::nb::Threshold;
use crate::scalar::Real;

/// How many comparable decisions the model informs, and over what horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationContext {
    pub decisions_per_year: u64,
    pub horizon_years: f64,
}

impl PopulationContext {
    pub fn new(decisions_per_year: u64, horizon_years: f64) -> Result<Self> {
        if decisions_per_year < 1 {
            return Err(Error::InvalidParam(
                "decisions_per_year must be at least 1".into(),
            ));
        }
        if !(horizon_years > 0.0) || !horizon_years.is_finite() {
            return Err(Error::InvalidParam(format!(
                "horizon_years must be positive, got {horizon_years}"
            )));
        }
        Ok(Self {
            decisions_per_year,
            horizon_years,
        })
    }
}

/// Per-decision VoI scaled to the population, in net true-positive units and
/// the equivalent false positives avoided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledVoi {
    pub nb_units_total: f64,
    pub true_positive_units: f64,
    pub false_positive_units: f64,
}

/// Scale a nonnegative per-decision VoI value to the population.
/// `false_positive_units` is `true_positive_units * (1-z)/z` by construction.
pub fn scale(
    voi_per_decision: f64,
    ctx: &PopulationContext,
    z: Threshold<f64>,
) -> Result<ScaledVoi> {
    if !(voi_per_decision >= 0.0) || !voi_per_decision.is_finite() {
        return Err(Error::InvalidParam(format!(
            "per-decision VoI must be nonnegative and finite, got {voi_per_decision}"
        )));
    }
    let tp = voi_per_decision * ctx.decisions_per_year as f64 * ctx.horizon_years;
    let fp = tp * ((1.0 - z.value()) / z.value());
    Ok(ScaledVoi {
        nb_units_total: tp,
        true_positive_units: tp,
        false_positive_units: fp,
    })
}

/// One output row of a VoI run: estimates, scaling, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiRow {
    pub z: f64,
    pub n_star: u64,
    pub evpi: f64,
    pub evsi: f64,
    pub mc_se_evpi: f64,
    pub mc_se_evsi: f64,
    pub tp_units: f64,
    pub fp_units: f64,
    pub engine: String,
    pub seed: u64,
    pub n_sims: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

const VOI_HEADER: [&str; 11] = [
    "z",
    "n_star",
    "evpi",
    "evsi",
    "mc_se_evpi",
    "mc_se_evsi",
    "tp_units",
    "fp_units",
    "engine",
    "seed",
    "n_sims",
];

/// Serialize VoI rows. CSV rounds `evpi`/`evsi` to 5 decimals and the
/// population units to integers; JSON is full precision.
pub fn emit_voi_rows(rows: &[VoiRow], format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(rows)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(VOI_HEADER)?;
            for r in rows {
                w.write_record(&[
                    format!("{}", r.z),
                    format!("{}", r.n_star),
                    format!("{:.5}", r.evpi),
                    format!("{:.5}", r.evsi),
                    format!("{:.6e}", r.mc_se_evpi),
                    format!("{:.6e}", r.mc_se_evsi),
                    format!("{:.0}", r.tp_units),
                    format!("{:.0}", r.fp_units),
                    r.engine.clone(),
                    format!("{}", r.seed),
                    format!("{}", r.n_sims),
                ])?;
            }
            w.into_inner()
                .map_err(|e| Error::InvalidParam(e.to_string()))
        }
    }
}

/// Parse VoI rows emitted by [`emit_voi_rows`].
pub fn parse_voi_rows(bytes: &[u8], format: OutputFormat) -> Result<Vec<VoiRow>> {
    match format {
        OutputFormat::Json => Ok(serde_json::from_slice(bytes)?),
        OutputFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(bytes);
            let headers = rdr.headers()?.clone();
            if headers.iter().ne(VOI_HEADER) {
                return Err(Error::InvalidParam(format!(
                    "unexpected VoI header: {headers:?}"
                )));
            }
            let mut rows = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                let line = rec.position().map_or(0, |p| p.line());
                let field = |i: usize| rec.get(i).unwrap_or("");
                let num = |i: usize| -> Result<f64> {
                    field(i).parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("`{}` is not a number", field(i)),
                    })
                };
                let int = |i: usize| -> Result<u64> {
                    field(i).parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("`{}` is not a count", field(i)),
                    })
                };
                rows.push(VoiRow {
                    z: num(0)?,
                    n_star: int(1)?,
                    evpi: num(2)?,
                    evsi: num(3)?,
                    mc_se_evpi: num(4)?,
                    mc_se_evsi: num(5)?,
                    tp_units: num(6)?,
                    fp_units: num(7)?,
                    engine: field(8).to_string(),
                    seed: int(9)?,
                    n_sims: int(10)?,
                });
            }
            Ok(rows)
        }
    }
}

/// Serialize a decision curve. CSV columns:
/// threshold, nb_none, nb_model, nb_all, delta_nb, ci_lo, ci_hi.
pub fn emit_curve<F: Real + Serialize>(
    curve: &DecisionCurve<F>,
    format: OutputFormat,
) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(curve)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        OutputFormat::Csv => {
            let mut out = Vec::new();
            writeln!(
                out,
                "threshold,nb_none,nb_model,nb_all,delta_nb,ci_lo,ci_hi"
            )?;
            for p in &curve.points {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    p.z, p.nb_none, p.nb_model, p.nb_all, p.delta_nb, p.ci_lo, p.ci_hi
                )?;
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx() -> PopulationContext {
        PopulationContext::new(800_000, 1.0).unwrap()
    }

    fn z02() -> Threshold<f64> {
        Threshold::new(0.02).unwrap()
    }

    #[test]
    fn scale_hand_values() {
        let s = scale(0.00125, &ctx(), z02()).unwrap();
        assert!((s.true_positive_units - 1000.0).abs() < 1e-9);
        assert!((s.false_positive_units - 49_000.0).abs() < 1e-6);

        let s = scale(0.00100, &ctx(), z02()).unwrap();
        assert!((s.true_positive_units - 800.0).abs() < 1e-9);
        assert!((s.false_positive_units - 39_200.0).abs() < 1e-6);
    }

    #[test]
    fn scale_zero_and_negative() {
        let s = scale(0.0, &ctx(), z02()).unwrap();
        assert_eq!(s.true_positive_units, 0.0);
        assert_eq!(s.false_positive_units, 0.0);
        assert_eq!(s.nb_units_total, 0.0);
        assert!(scale(-1e-9, &ctx(), z02()).is_err());
    }

    #[test]
    fn fp_tp_ratio_is_exact_by_construction() {
        let r = (1.0 - 0.02) / 0.02;
        assert_eq!(r, 49.0);
        let s = scale(0.00333, &ctx(), z02()).unwrap();
        assert_eq!(s.false_positive_units, s.true_positive_units * r);
    }

    #[test]
    fn population_context_validation() {
        assert!(PopulationContext::new(0, 1.0).is_err());
        assert!(PopulationContext::new(1, 0.0).is_err());
        assert!(PopulationContext::new(1, f64::NAN).is_err());
    }

    fn sample_row() -> VoiRow {
        VoiRow {
            z: 0.02,
            n_star: 500,
            evpi: 0.00125,
            evsi: 0.001,
            mc_se_evpi: 1.5e-6,
            mc_se_evsi: 1.2e-6,
            tp_units: 800.0,
            fp_units: 39_200.0,
            engine: "betabin".into(),
            seed: 42,
            n_sims: 1_000_000,
        }
    }

    #[test]
    fn empty_rows_emit_header_only_csv() {
        let bytes = emit_voi_rows(&[], OutputFormat::Csv).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("z,n_star,evpi,"));
    }

    #[test]
    fn single_row_emits_one_line_and_one_object() {
        let bytes = emit_voi_rows(&[sample_row()], OutputFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 2);
        let bytes = emit_voi_rows(&[sample_row()], OutputFormat::Json).unwrap();
        let rows: Vec<VoiRow> = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows = vec![sample_row()];
        let bytes = emit_voi_rows(&rows, OutputFormat::Json).unwrap();
        let parsed = parse_voi_rows(&bytes, OutputFormat::Json).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn csv_round_trip_is_idempotent() {
        let rows = vec![sample_row()];
        let bytes = emit_voi_rows(&rows, OutputFormat::Csv).unwrap();
        let once = parse_voi_rows(&bytes, OutputFormat::Csv).unwrap();
        let again = parse_voi_rows(
            &emit_voi_rows(&once, OutputFormat::Csv).unwrap(),
            OutputFormat::Csv,
        )
        .unwrap();
        assert_eq!(once, again);
    }

    proptest! {
        #[test]
        fn scaling_is_linear(v in 0.0..0.1f64, k in 1.0..10.0f64) {
            let a = scale(v, &ctx(), z02()).unwrap();
            let b = scale(k * v, &ctx(), z02()).unwrap();
            prop_assert!((b.true_positive_units - k * a.true_positive_units).abs()
                <= 1e-9 * (1.0 + b.true_positive_units.abs()));
            prop_assert!((b.false_positive_units - k * a.false_positive_units).abs()
                <= 1e-9 * (1.0 + b.false_positive_units.abs()));
        }

        #[test]
        fn json_round_trip_random_rows(
            z in 0.001..0.999f64,
            n_star in 0u64..10_000,
            evpi in 0.0..0.1f64,
            evsi in 0.0..0.1f64,
        ) {
            let row = VoiRow {
                z,
                n_star,
                evpi,
                evsi,
                mc_se_evpi: evpi / 100.0,
                mc_se_evsi: evsi / 100.0,
                tp_units: evsi * 800_000.0,
                fp_units: evsi * 800_000.0 * (1.0 - z) / z,
                engine: "bootstrap".into(),
                seed: 7,
                n_sims: 10_000,
            };
            let bytes = emit_voi_rows(std::slice::from_ref(&row), OutputFormat::Json).unwrap();
            let parsed = parse_voi_rows(&bytes, OutputFormat::Json).unwrap();
            prop_assert_eq!(parsed, vec![row]);
        }
    }
}
