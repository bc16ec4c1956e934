//! Command implementations behind the `voinb` binary: dataset ingestion,
//! engine orchestration, the current-information sweep, the synthetic
//! generator, and oracle checks.
//!
//! Every command writes through a temp file and atomic rename, so failed
//! runs leave no partial output. All randomness flows from one seed.

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::betabin::{self, BetaParams, BetaPriorSet, VoiEstimate};
use crate::bootstrap::{self, BootstrapKind};
use crate::dataset::{confusion_at_threshold, decision_curve, parse_validation_csv, ValidationSample};
use crate::error::{Error, Result};
use crate::nb::{Threshold, ThetaTriplet};
use crate::oracle::{self, DiscretePrior};
use crate::report::{
    emit_curve, emit_voi_rows, scale, OutputFormat, PopulationContext, VoiRow,
};
use crate::reweight::{self, PosteriorDraws};
use crate::rng::{derive_seed, substream};
use crate::synth::{generate, SynthConfig};

/// Which VoI engine a command drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EngineKind {
    Betabin,
    Bootstrap,
    Generic,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Betabin => "betabin",
            EngineKind::Bootstrap => "bootstrap",
            EngineKind::Generic => "generic",
        }
    }

    /// Engine-specific default for `n_sims`: the conjugate engine is cheap
    /// per iteration, the resampling engines are not.
    pub fn default_n_sims(self) -> u64 {
        match self {
            EngineKind::Betabin => 1_000_000,
            EngineKind::Bootstrap | EngineKind::Generic => 10_000,
        }
    }
}

/// Default threshold grid: 1% through 10% in 1% steps.
pub fn default_thresholds() -> Vec<f64> {
    (1..=10).map(|i| f64::from(i) / 100.0).collect()
}

/// Default future-sample-size grid.
pub fn default_n_star_grid() -> Vec<u64> {
    vec![0, 125, 250, 500, 1000, 2000, 4000, 8000]
}

/// Annual decision volume used when `--population` is not given.
pub const DEFAULT_DECISIONS_PER_YEAR: u64 = 800_000;

/// Run `f` on a dedicated rayon pool of `workers` threads (0 = default pool).
/// Engine results do not depend on the worker count.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(f)
    }
}

/// Write bytes via a temp file in the target directory plus atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn load_sample(path: &Path, risk_col: &str, outcome_col: &str) -> Result<ValidationSample<f64>> {
    let file = File::open(path)?;
    parse_validation_csv(file, risk_col, outcome_col)
}

fn parse_thresholds(raw: &[f64]) -> Result<Vec<Threshold<f64>>> {
    if raw.is_empty() {
        return Err(Error::InvalidParam("empty threshold grid".into()));
    }
    raw.iter().map(|&z| Threshold::new(z)).collect()
}

/// `out.csv` + `_n500` -> `out_n500.csv`.
fn suffixed_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = out.extension().and_then(|s| s.to_str());
    let name = match ext {
        Some(ext) => format!("{stem}{suffix}.{ext}"),
        None => format!("{stem}{suffix}"),
    };
    out.with_file_name(name)
}

// ---------------------------------------------------------------------------
// dca
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DcaConfig {
    pub input: PathBuf,
    pub risk_col: String,
    pub outcome_col: String,
    pub thresholds: Vec<f64>,
    pub n_boot: u64,
    pub ci_level: f64,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
}

pub fn cmd_dca(cfg: &DcaConfig) -> Result<()> {
    let sample = load_sample(&cfg.input, &cfg.risk_col, &cfg.outcome_col)?;
    let grid = parse_thresholds(&cfg.thresholds)?;
    let curve = with_workers(cfg.workers, || {
        decision_curve(&sample, &grid, cfg.n_boot, cfg.seed, cfg.ci_level)
    })?;
    write_atomic(&cfg.out, &emit_curve(&curve, cfg.format)?)
}

// ---------------------------------------------------------------------------
// voi
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct VoiConfig {
    pub engine: EngineKind,
    pub input: Option<PathBuf>,
    pub priors: Option<PathBuf>,
    pub draws: Option<PathBuf>,
    pub bootstrap_kind: BootstrapKind,
    pub risk_col: String,
    pub outcome_col: String,
    pub thresholds: Vec<f64>,
    pub n_star: Vec<u64>,
    pub n_sims: Option<u64>,
    pub seed: u64,
    pub population: PopulationContext,
    pub workers: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
}

/// JSON priors file: either three explicit Beta parameter pairs, or a
/// dataset reference (counts are then taken per threshold) with an optional
/// base prior defaulting to flat Beta(1, 1).
#[derive(Debug, Deserialize)]
struct PriorsFile {
    #[serde(default)]
    prevalence: Option<[f64; 2]>,
    #[serde(default)]
    sensitivity: Option<[f64; 2]>,
    #[serde(default)]
    specificity: Option<[f64; 2]>,
    #[serde(default)]
    dataset: Option<PathBuf>,
    #[serde(default)]
    base: Option<BasePriors>,
}

#[derive(Debug, Deserialize)]
struct BasePriors {
    prevalence: [f64; 2],
    sensitivity: [f64; 2],
    specificity: [f64; 2],
}

fn pairs_to_set(p: [f64; 2], se: [f64; 2], sp: [f64; 2]) -> Result<BetaPriorSet<f64>> {
    Ok(BetaPriorSet::new(
        BetaParams::new(p[0], p[1])?,
        BetaParams::new(se[0], se[1])?,
        BetaParams::new(sp[0], sp[1])?,
    ))
}

/// Where the conjugate engine's priors come from.
enum PriorSource {
    Explicit(BetaPriorSet<f64>),
    Data {
        sample: ValidationSample<f64>,
        base: BetaPriorSet<f64>,
    },
}

impl PriorSource {
    fn priors_at(&self, z: Threshold<f64>) -> BetaPriorSet<f64> {
        match self {
            PriorSource::Explicit(set) => *set,
            PriorSource::Data { sample, base } => {
                betabin::priors_from_sample(&confusion_at_threshold(sample, z), base)
            }
        }
    }
}

fn load_prior_source(cfg: &VoiConfig) -> Result<PriorSource> {
    if let Some(path) = &cfg.priors {
        let file: PriorsFile = serde_json::from_reader(File::open(path)?)?;
        if let Some(dataset) = file.dataset {
            let dataset = if dataset.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(dataset)
            } else {
                dataset
            };
            let sample = load_sample(&dataset, &cfg.risk_col, &cfg.outcome_col)?;
            let base = match file.base {
                Some(b) => pairs_to_set(b.prevalence, b.sensitivity, b.specificity)?,
                None => BetaPriorSet::flat(),
            };
            return Ok(PriorSource::Data { sample, base });
        }
        match (file.prevalence, file.sensitivity, file.specificity) {
            (Some(p), Some(se), Some(sp)) => Ok(PriorSource::Explicit(pairs_to_set(p, se, sp)?)),
            _ => Err(Error::InvalidParam(
                "priors file needs either `dataset` or all of `prevalence`, \
                 `sensitivity`, `specificity`"
                    .into(),
            )),
        }
    } else if let Some(input) = &cfg.input {
        Ok(PriorSource::Data {
            sample: load_sample(input, &cfg.risk_col, &cfg.outcome_col)?,
            base: BetaPriorSet::flat(),
        })
    } else {
        Err(Error::InvalidParam(
            "betabin engine needs --priors or --input".into(),
        ))
    }
}

fn estimate_to_row(
    est: &VoiEstimate<f64>,
    engine: EngineKind,
    seed: u64,
    population: &PopulationContext,
) -> Result<VoiRow> {
    let z = Threshold::new(est.z)?;
    let scaled = scale(est.evsi, population, z)?;
    Ok(VoiRow {
        z: est.z,
        n_star: est.n_star,
        evpi: est.evpi,
        evsi: est.evsi,
        mc_se_evpi: est.mc_se_evpi,
        mc_se_evsi: est.mc_se_evsi,
        tp_units: scaled.true_positive_units,
        fp_units: scaled.false_positive_units,
        engine: engine.name().to_string(),
        seed,
        n_sims: est.n_sims,
    })
}

pub fn cmd_voi(cfg: &VoiConfig) -> Result<()> {
    let grid = parse_thresholds(&cfg.thresholds)?;
    if cfg.n_star.is_empty() {
        return Err(Error::InvalidParam("empty n_star grid".into()));
    }
    let n_sims = cfg.n_sims.unwrap_or_else(|| cfg.engine.default_n_sims());

    enum Input {
        Priors(PriorSource),
        Sample(ValidationSample<f64>),
        Draws(PosteriorDraws<f64>),
    }
    let input = match cfg.engine {
        EngineKind::Betabin => Input::Priors(load_prior_source(cfg)?),
        EngineKind::Bootstrap => {
            let path = cfg.input.as_ref().ok_or_else(|| {
                Error::InvalidParam("bootstrap engine needs --input".into())
            })?;
            Input::Sample(load_sample(path, &cfg.risk_col, &cfg.outcome_col)?)
        }
        EngineKind::Generic => {
            let path = cfg.draws.as_ref().ok_or_else(|| {
                Error::InvalidParam("generic engine needs --draws".into())
            })?;
            Input::Draws(PosteriorDraws::from_csv(File::open(path)?)?)
        }
    };

    let rows = with_workers(cfg.workers, || -> Result<Vec<VoiRow>> {
        let mut rows = Vec::new();
        for &z in &grid {
            for &n_star in &cfg.n_star {
                let est = match &input {
                    Input::Priors(source) => {
                        betabin::run(&source.priors_at(z), z, n_star, n_sims, cfg.seed)?
                    }
                    Input::Sample(sample) => {
                        bootstrap::run(sample, z, n_star, n_sims, cfg.seed, cfg.bootstrap_kind)?
                    }
                    Input::Draws(draws) => reweight::run(draws, z, n_star, n_sims, cfg.seed)?,
                };
                rows.push(estimate_to_row(&est, cfg.engine, cfg.seed, &cfg.population)?);
            }
        }
        Ok(rows)
    })?;

    write_atomic(&cfg.out, &emit_voi_rows(&rows, cfg.format)?)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub input: PathBuf,
    pub risk_col: String,
    pub outcome_col: String,
    pub n_grid: Vec<u64>,
    pub reps: u64,
    pub thresholds: Vec<f64>,
    pub n_star: Vec<u64>,
    pub n_sims: Option<u64>,
    pub seed: u64,
    pub population: PopulationContext,
    pub workers: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
}

/// EVSI as a function of the current sample size: for each `n` in the grid,
/// repeatedly subsample the master dataset without replacement, build flat
/// priors from the subsample, run the conjugate engine over the
/// (threshold, n_star) grid, and average over repetitions. One output file
/// per `n`, suffixed `_n<size>`, in the same schema as `voi`.
pub fn cmd_sweep(cfg: &SweepConfig) -> Result<()> {
    let master = load_sample(&cfg.input, &cfg.risk_col, &cfg.outcome_col)?;
    let grid = parse_thresholds(&cfg.thresholds)?;
    if cfg.n_star.is_empty() {
        return Err(Error::InvalidParam("empty n_star grid".into()));
    }
    if cfg.n_grid.is_empty() {
        return Err(Error::InvalidParam("empty n grid".into()));
    }
    if cfg.reps < 1 {
        return Err(Error::InvalidParam("reps must be at least 1".into()));
    }
    for &n in &cfg.n_grid {
        if n as usize > master.len() {
            return Err(Error::InvalidParam(format!(
                "subsample size {n} exceeds master dataset size {}",
                master.len()
            )));
        }
    }
    let n_sims = cfg.n_sims.unwrap_or_else(|| EngineKind::Betabin.default_n_sims());

    with_workers(cfg.workers, || -> Result<()> {
        for (ni, &n) in cfg.n_grid.iter().enumerate() {
            let cells = grid.len() * cfg.n_star.len();
            let mut evsi_reps: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.reps as usize); cells];
            let mut evpi_reps: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.reps as usize); cells];

            for rep in 0..cfg.reps {
                let rep_seed = derive_seed(cfg.seed, ((ni as u64) << 32) | rep);
                let subsample = master.subsample(n as usize, substream(rep_seed, u64::MAX))?;
                for (zi, &z) in grid.iter().enumerate() {
                    let priors = betabin::priors_from_sample(
                        &confusion_at_threshold(&subsample, z),
                        &BetaPriorSet::flat(),
                    );
                    for (si, &n_star) in cfg.n_star.iter().enumerate() {
                        let est = betabin::run(&priors, z, n_star, n_sims, rep_seed)?;
                        let cell = zi * cfg.n_star.len() + si;
                        evsi_reps[cell].push(est.evsi);
                        evpi_reps[cell].push(est.evpi);
                    }
                }
            }

            let mut rows = Vec::with_capacity(cells);
            for (zi, &z) in grid.iter().enumerate() {
                for (si, &n_star) in cfg.n_star.iter().enumerate() {
                    let cell = zi * cfg.n_star.len() + si;
                    let (evsi, se_evsi) = crate::betabin::mean_and_se(&evsi_reps[cell]);
                    let (evpi, se_evpi) = crate::betabin::mean_and_se(&evpi_reps[cell]);
                    let scaled = scale(evsi, &cfg.population, z)?;
                    rows.push(VoiRow {
                        z: z.value(),
                        n_star,
                        evpi,
                        evsi,
                        mc_se_evpi: se_evpi,
                        mc_se_evsi: se_evsi,
                        tp_units: scaled.true_positive_units,
                        fp_units: scaled.false_positive_units,
                        engine: EngineKind::Betabin.name().to_string(),
                        seed: cfg.seed,
                        n_sims,
                    });
                }
            }
            let path = suffixed_path(&cfg.out, &format!("_n{n}"));
            write_atomic(&path, &emit_voi_rows(&rows, cfg.format)?)?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SynthCmdConfig {
    pub n: u64,
    pub prevalence: f64,
    pub slope: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_synth(cfg: &SynthCmdConfig) -> Result<()> {
    let sample = generate(
        &SynthConfig {
            n: cfg.n,
            prevalence: cfg.prevalence,
            slope: cfg.slope,
        },
        cfg.seed,
    )?;
    let mut out = Vec::new();
    writeln!(out, "risk,outcome")?;
    for r in sample.records() {
        writeln!(out, "{},{}", r.risk, r.outcome)?;
    }
    write_atomic(&cfg.out, &out)
}

// ---------------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OracleCheckConfig {
    pub prior: PathBuf,
    pub z: f64,
    pub n_star: u64,
    pub n_sims: u64,
    pub engines: Vec<EngineKind>,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct PriorAtomJson {
    theta_p: f64,
    theta_se: f64,
    theta_sp: f64,
    prob: f64,
}

#[derive(Debug, Deserialize)]
struct PriorFileJson {
    atoms: Vec<PriorAtomJson>,
}

/// Absolute floor added to the 3-standard-error band: covers floating-point
/// noise and the concentrated-prior approximation of a point mass.
pub const CHECK_ATOL: f64 = 1e-6;

/// One engine-vs-oracle comparison.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub engine: String,
    pub metric: String,
    pub exact: f64,
    pub estimate: f64,
    pub mc_se: f64,
    pub deviation_se_units: f64,
    pub pass: bool,
}

/// Compare an estimate against an exact value at the 3-standard-error level.
pub fn check_estimate(engine: &str, metric: &str, exact: f64, estimate: f64, se: f64) -> CheckRow {
    let diff = (estimate - exact).abs();
    let pass = diff <= 3.0 * se + CHECK_ATOL;
    CheckRow {
        engine: engine.to_string(),
        metric: metric.to_string(),
        exact,
        estimate,
        mc_se: se,
        deviation_se_units: if se > 0.0 { diff / se } else { 0.0 },
        pass,
    }
}

fn load_discrete_prior(path: &Path) -> Result<DiscretePrior<f64>> {
    let file: PriorFileJson = serde_json::from_reader(File::open(path)?)?;
    let atoms = file
        .atoms
        .into_iter()
        .map(|a| {
            ThetaTriplet::new(a.theta_p, a.theta_se, a.theta_sp).map(|t| (t, a.prob))
        })
        .collect::<Result<Vec<_>>>()?;
    DiscretePrior::new(atoms)
}

/// Run the requested engines against the exact oracle on one instance.
/// The generic engine consumes equal-probability atoms as posterior draws;
/// the betabin engine supports single-atom instances via a concentrated
/// prior. Bootstrap needs individual-level data and is not checkable here.
pub fn oracle_check(cfg: &OracleCheckConfig) -> Result<Vec<CheckRow>> {
    let prior = load_discrete_prior(&cfg.prior)?;
    let z = Threshold::new(cfg.z)?;
    let exact_evpi = oracle::evpi_exact(&prior, z);
    let exact_evsi = oracle::evsi_exact(&prior, z, cfg.n_star)?;

    let mut rows = Vec::new();
    for &engine in &cfg.engines {
        let est = match engine {
            EngineKind::Generic => {
                let m = prior.len() as f64;
                if prior
                    .atoms()
                    .iter()
                    .any(|(_, p)| (p - 1.0 / m).abs() > 1e-12)
                {
                    return Err(Error::InvalidParam(
                        "generic-engine checks need equal-probability atoms".into(),
                    ));
                }
                let mut draws: Vec<ThetaTriplet<f64>> =
                    prior.atoms().iter().map(|(t, _)| *t).collect();
                if draws.len() == 1 {
                    draws.push(draws[0]); // empirical law unchanged
                }
                let draws = PosteriorDraws::new(draws)?;
                with_workers(cfg.workers, || {
                    reweight::run(&draws, z, cfg.n_star, cfg.n_sims, cfg.seed)
                })?
            }
            EngineKind::Betabin => {
                if prior.len() != 1 {
                    return Err(Error::InvalidParam(
                        "betabin checks support single-atom priors only; \
                         multi-atom instances are covered by the generic engine"
                            .into(),
                    ));
                }
                let theta = prior.atoms()[0].0;
                let kappa = 1e12;
                let clamp = |v: f64| v.clamp(1e-9, 1.0 - 1e-9);
                let point = |v: f64| {
                    BetaParams::new(kappa * clamp(v), kappa * (1.0 - clamp(v))).expect("proper")
                };
                let priors = BetaPriorSet::new(
                    point(theta.prevalence),
                    point(theta.sensitivity),
                    point(theta.specificity),
                );
                with_workers(cfg.workers, || {
                    betabin::run(&priors, z, cfg.n_star, cfg.n_sims, cfg.seed)
                })?
            }
            EngineKind::Bootstrap => {
                return Err(Error::InvalidParam(
                    "bootstrap engine reads individual-level data and cannot \
                     target a discrete prior; request betabin or generic"
                        .into(),
                ));
            }
        };
        rows.push(check_estimate(
            engine.name(),
            "evpi",
            exact_evpi,
            est.evpi,
            est.mc_se_evpi,
        ));
        rows.push(check_estimate(
            engine.name(),
            "evsi",
            exact_evsi,
            est.evsi,
            est.mc_se_evsi,
        ));
    }
    Ok(rows)
}

pub fn cmd_oracle_check(cfg: &OracleCheckConfig) -> Result<()> {
    let rows = oracle_check(cfg)?;
    for r in &rows {
        println!(
            "engine={} metric={} exact={:.9} estimate={:.9} mc_se={:.3e} deviation_se={:.2} pass={}",
            r.engine, r.metric, r.exact, r.estimate, r.mc_se, r.deviation_se_units, r.pass
        );
    }
    if let Some(out) = &cfg.out {
        let mut bytes = serde_json::to_vec_pretty(&rows)?;
        bytes.push(b'\n');
        write_atomic(out, &bytes)?;
    }
    let failures: Vec<&CheckRow> = rows.iter().filter(|r| !r.pass).collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::CheckFailed(format!(
            "{} of {} comparisons deviated by more than 3 standard errors",
            failures.len(),
            rows.len()
        )))
    }
}
