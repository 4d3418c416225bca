//! `sbcal`: simulation-based calibration checks and posterior recalibration
//! from the command line.

mod commands;
mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Method, Mode, ModelKind, Observed, SamplerKind};

const EXIT_USAGE: u8 = 2;
const EXIT_TOO_MANY_FAILURES: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sbcal",
    version,
    about = "Simulation-based calibration and posterior recalibration"
)]
struct Cli {
    /// Worker threads for replication fan-out (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run SBC replications and write diagnostics.
    Sbc(RunArgs),
    /// Estimate an adjustment and evaluate it on fresh replications.
    Calibrate(RunArgs),
    /// Apply a stored adjustment to posterior draws.
    Apply(ApplyArgs),
    /// Closed-form results for the normal models.
    #[command(subcommand)]
    Analytic(AnalyticCmd),
    /// Run a complete named experiment.
    Experiment(ExperimentArgs),
    /// Regenerate the report for a saved replication set.
    Report(ReportArgs),
}

/// Settings shared by every run; flags override the config file.
#[derive(Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerKind>,
    /// Narrow the fitted posterior about its mean by this factor.
    #[arg(long)]
    narrow: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Observed data for posterior mode (comma-separated for vectors).
    #[arg(long = "y-d", value_delimiter = ',', allow_hyphen_values = true)]
    y_d: Option<Vec<f64>>,
    #[arg(short = 'L', long)]
    replications: Option<usize>,
    #[arg(short = 'S', long)]
    draws: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Comma-separated interval levels alpha.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Scale grid LO:STEP:HI for the nominal-coverage method.
    #[arg(long)]
    grid: Option<String>,
    /// Evaluate on the replications used for fitting.
    #[arg(long)]
    in_sample: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field { cfg.$field = v.clone().into(); }
            )*};
        }
        set!(model, sampler, mode, method, alpha, grid);
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(f) = self.narrow {
            cfg.narrow_factor = Some(f);
        }
        if let Some(y) = &self.y_d {
            cfg.y_d = Some(match y.as_slice() {
                [v] => Observed::Scalar(*v),
                _ => Observed::Vector(y.clone()),
            });
        }
        if let Some(l) = self.replications {
            cfg.replications = Some(l);
        }
        if let Some(s) = self.draws {
            cfg.draws = Some(s);
        }
        if self.in_sample {
            cfg.in_sample = true;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct ApplyArgs {
    /// Adjustment record written by `calibrate`.
    #[arg(long)]
    adjustment: PathBuf,
    /// Draw file (header draw_1..draw_S, one posterior per row). Without it
    /// the configured sampler is fitted to `y_d`.
    #[arg(long)]
    draws_file: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum AnalyticCmd {
    /// Posterior of the normal-normal model.
    Posterior(SigmaY),
    /// Posterior of the conjugate model for a dataset.
    Conjugate {
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        y: Vec<f64>,
    },
    /// Law of posterior-mode z-scores.
    Zlaw(SigmaY),
    /// Law of prior-mode z-scores.
    PriorZlaw,
    /// Limit of the location-scale recalibrated posterior.
    RecalLimit(SigmaY),
    /// Monte Carlo check of the posterior-mode z-law.
    Verify {
        #[command(flatten)]
        at: SigmaY,
        #[arg(long, default_value_t = 100_000)]
        n_mc: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Args)]
struct SigmaY {
    #[arg(long)]
    sigma: f64,
    #[arg(long, allow_negative_numbers = true)]
    y: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: experiments::Name,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Replication set directory written by `sbc` or `calibrate`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

fn configure_workers(workers: Option<usize>) -> Result<()> {
    let Some(n) = workers else { return Ok(()) };
    anyhow::ensure!(n >= 1, "--workers must be at least 1");
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot size the worker pool")?;
    #[cfg(not(feature = "parallel"))]
    eprintln!("warning: built without parallelism; --workers {n} ignored");
    Ok(())
}

/// Errors that should exit with the usage status.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| UsageError(e).into())
}

fn checked(args: &RunArgs) -> Result<ExperimentConfig> {
    usage(args.resolve().and_then(|c| c.validate().map(|_| c)))
}

fn run(cli: Cli) -> Result<()> {
    usage(configure_workers(cli.workers))?;
    match cli.command {
        Command::Sbc(a) => commands::sbc(&checked(&a)?),
        Command::Calibrate(a) => commands::calibrate(&checked(&a)?),
        Command::Apply(a) => {
            let cfg = usage(a.run.resolve())?;
            let from_config =
                a.run.config.is_some() || a.run.model.is_some() || a.run.sampler.is_some();
            commands::apply(&cfg, &a.adjustment, a.draws_file.as_deref(), from_config)
        }
        Command::Analytic(c) => commands::analytic(c),
        Command::Experiment(a) => {
            let cfg = usage(a.run.resolve())?;
            usage(cfg.seed())?;
            experiments::run(a.name, &cfg)
        }
        Command::Report(a) => commands::report(&a.input, &a.out, a.bins),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else if matches!(
                e.downcast_ref::<sbcal::Error>(),
                Some(sbcal::Error::TooManyFailures { .. })
            ) {
                ExitCode::from(EXIT_TOO_MANY_FAILURES)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 1\nL = 100\nmethod = \"nominal\"\n").unwrap();
        let cli = Cli::try_parse_from([
            "sbcal",
            "sbc",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "7",
            "--alpha",
            "0.1,0.2",
            "--y-d",
            "-1.5",
            "--mode",
            "posterior",
            "--model",
            "normal-normal",
        ])
        .unwrap();
        let Command::Sbc(args) = cli.command else {
            panic!("wrong subcommand")
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.replications(), 100);
        assert_eq!(cfg.method, Method::Nominal);
        assert_eq!(cfg.alpha, vec![0.1, 0.2]);
        assert_eq!(cfg.y_d, Some(Observed::Scalar(-1.5)));
        cfg.validate().unwrap();
    }
}
