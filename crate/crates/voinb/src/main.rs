//! `voinb`: decision curves and value-of-information analysis for external
//! validation of binary-outcome risk prediction models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use voinb::bootstrap::BootstrapKind;
use voinb::cli::{
    self, cmd_dca, cmd_oracle_check, cmd_sweep, cmd_synth, cmd_voi, DcaConfig, EngineKind,
    OracleCheckConfig, SweepConfig, SynthCmdConfig, VoiConfig,
};
use voinb::report::{OutputFormat, PopulationContext};
use voinb::rng::DEFAULT_SEED;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Betabin,
    Bootstrap,
    Generic,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Betabin => EngineKind::Betabin,
            EngineArg::Bootstrap => EngineKind::Bootstrap,
            EngineArg::Generic => EngineKind::Generic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Bayesian,
    Ordinary,
}

impl From<KindArg> for BootstrapKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Bayesian => BootstrapKind::Bayesian,
            KindArg::Ordinary => BootstrapKind::Ordinary,
        }
    }
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Random seed (env overridable).
    #[arg(long, env = "VOINB_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads for engine parallelism (0 = library default).
    /// Results do not depend on this setting.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output file path.
    #[arg(long)]
    out: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct ColumnArgs {
    /// Name of the predicted-risk column.
    #[arg(long, default_value = "risk")]
    risk_col: String,
    /// Name of the observed-outcome column.
    #[arg(long, default_value = "outcome")]
    outcome_col: String,
}

#[derive(Debug, Parser)]
#[command(
    name = "voinb",
    version,
    about = "Decision curves and value-of-information analysis (EVPI/EVSI) \
             for external validation of risk prediction models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decision curve with bootstrap percentile confidence intervals.
    Dca {
        /// Validation dataset CSV.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        columns: ColumnArgs,
        /// Risk thresholds (comma separated). Default: 0.01 through 0.10.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Bootstrap replicates for the confidence band.
        #[arg(long, default_value_t = 10_000)]
        n_boot: u64,
        /// Confidence level of the percentile interval.
        #[arg(long, default_value_t = 0.95)]
        ci_level: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// EVPI/EVSI over a (threshold, future-sample-size) grid.
    Voi {
        /// Engine: betabin (conjugate), bootstrap (resampling), or generic
        /// (posterior-draw reweighting).
        #[arg(long, value_enum, default_value_t = EngineArg::Betabin)]
        engine: EngineArg,
        /// Validation dataset CSV (betabin, bootstrap).
        #[arg(long)]
        input: Option<PathBuf>,
        /// JSON priors for the betabin engine.
        #[arg(long)]
        priors: Option<PathBuf>,
        /// Posterior-draws CSV for the generic engine
        /// (columns theta_p,theta_se,theta_sp).
        #[arg(long)]
        draws: Option<PathBuf>,
        /// Bootstrap flavor.
        #[arg(long, value_enum, default_value_t = KindArg::Bayesian)]
        bootstrap_kind: KindArg,
        #[command(flatten)]
        columns: ColumnArgs,
        /// Risk thresholds (comma separated). Default: 0.01 through 0.10.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Future sample sizes (comma separated).
        #[arg(long = "n-star", value_delimiter = ',')]
        n_star: Option<Vec<u64>>,
        /// Monte Carlo iterations (default: 1000000 for betabin, 10000
        /// otherwise).
        #[arg(long)]
        n_sims: Option<u64>,
        /// Annual number of decisions for population scaling.
        #[arg(long, default_value_t = cli::DEFAULT_DECISIONS_PER_YEAR)]
        population: u64,
        /// Scaling horizon in years.
        #[arg(long, default_value_t = 1.0)]
        horizon_years: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// EVSI as a function of the current sample size: subsample a master
    /// dataset, average engine runs over repetitions, one file per size.
    Sweep {
        /// Master dataset CSV to subsample.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        columns: ColumnArgs,
        /// Current-information sample sizes.
        #[arg(long = "n-grid", value_delimiter = ',', default_values_t = [500u64, 1000, 2000, 4000, 8000])]
        n_grid: Vec<u64>,
        /// Independent repetitions per size.
        #[arg(long, default_value_t = 100)]
        reps: u64,
        /// Risk thresholds (comma separated). Default: 0.01 and 0.02.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Future sample sizes (comma separated).
        #[arg(long = "n-star", value_delimiter = ',')]
        n_star: Option<Vec<u64>>,
        /// Monte Carlo iterations per engine run.
        #[arg(long)]
        n_sims: Option<u64>,
        /// Annual number of decisions for population scaling.
        #[arg(long, default_value_t = cli::DEFAULT_DECISIONS_PER_YEAR)]
        population: u64,
        /// Scaling horizon in years.
        #[arg(long, default_value_t = 1.0)]
        horizon_years: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a synthetic validation dataset (CSV).
    Synth {
        /// Number of individuals.
        #[arg(long, default_value_t = 500)]
        n: u64,
        /// Target event prevalence.
        #[arg(long, default_value_t = 0.086)]
        prevalence: f64,
        /// Spread of the linear predictor on the logit scale
        /// (0 = uninformative model).
        #[arg(long, default_value_t = 1.2)]
        slope: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare Monte Carlo engines against the exact enumeration oracle on
    /// a small discrete prior.
    OracleCheck {
        /// Discrete prior JSON: {"atoms": [{"theta_p": .., "theta_se": ..,
        /// "theta_sp": .., "prob": ..}, ..]}.
        #[arg(long)]
        prior: PathBuf,
        /// Risk threshold.
        #[arg(long)]
        z: f64,
        /// Future sample size (bounded by the enumeration guard).
        #[arg(long, default_value_t = 4)]
        n_star: u64,
        /// Monte Carlo iterations per engine.
        #[arg(long, default_value_t = 100_000)]
        n_sims: u64,
        /// Engines to check (comma separated).
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EngineArg::Betabin, EngineArg::Generic])]
        engines: Vec<EngineArg>,
        /// Random seed (env overridable).
        #[arg(long, env = "VOINB_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Worker threads (0 = library default).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(command: Command) -> voinb::Result<()> {
    match command {
        Command::Dca {
            input,
            columns,
            thresholds,
            n_boot,
            ci_level,
            common,
        } => cmd_dca(&DcaConfig {
            input,
            risk_col: columns.risk_col,
            outcome_col: columns.outcome_col,
            thresholds: thresholds.unwrap_or_else(cli::default_thresholds),
            n_boot,
            ci_level,
            seed: common.seed,
            workers: common.workers,
            out: common.out,
            format: common.format.into(),
        }),
        Command::Voi {
            engine,
            input,
            priors,
            draws,
            bootstrap_kind,
            columns,
            thresholds,
            n_star,
            n_sims,
            population,
            horizon_years,
            common,
        } => cmd_voi(&VoiConfig {
            engine: engine.into(),
            input,
            priors,
            draws,
            bootstrap_kind: bootstrap_kind.into(),
            risk_col: columns.risk_col,
            outcome_col: columns.outcome_col,
            thresholds: thresholds.unwrap_or_else(cli::default_thresholds),
            n_star: n_star.unwrap_or_else(cli::default_n_star_grid),
            n_sims,
            seed: common.seed,
            population: PopulationContext::new(population, horizon_years)?,
            workers: common.workers,
            out: common.out,
            format: common.format.into(),
        }),
        Command::Sweep {
            input,
            columns,
            n_grid,
            reps,
            thresholds,
            n_star,
            n_sims,
            population,
            horizon_years,
            common,
        } => cmd_sweep(&SweepConfig {
            input,
            risk_col: columns.risk_col,
            outcome_col: columns.outcome_col,
            n_grid,
            reps,
            thresholds: thresholds.unwrap_or_else(|| vec![0.01, 0.02]),
            n_star: n_star.unwrap_or_else(cli::default_n_star_grid),
            n_sims,
            seed: common.seed,
            population: PopulationContext::new(population, horizon_years)?,
            workers: common.workers,
            out: common.out,
            format: common.format.into(),
        }),
        Command::Synth {
            n,
            prevalence,
            slope,
            common,
        } => {
            if !matches!(common.format, FormatArg::Csv) {
                return Err(voinb::Error::InvalidParam(
                    "synth writes CSV datasets; use --format csv".into(),
                ));
            }
            cmd_synth(&SynthCmdConfig {
                n,
                prevalence,
                slope,
                seed: common.seed,
                out: common.out,
            })
        }
        Command::OracleCheck {
            prior,
            z,
            n_star,
            n_sims,
            engines,
            seed,
            workers,
            out,
        } => cmd_oracle_check(&OracleCheckConfig {
            prior,
            z,
            n_star,
            n_sims,
            engines: engines.into_iter().map(EngineKind::from).collect(),
            seed,
            workers,
            out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
