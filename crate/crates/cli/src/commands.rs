use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use sbcal::analytic::{self, GaussianLaw};
use sbcal::io;
use sbcal::model::{Dataset, GenerativeModel};
use sbcal::recal::{
    adjust_draws, adjust_replication_set, evaluate_adjustment, evaluate_per_alpha,
    location_scale_estimate, nominal_coverage_search, replicate_adjustment_distribution,
    zscore_scale_estimate, Adjustment, Provenance,
};
use sbcal::report::{
    emit_adjustment_scatter, emit_coverage_table, emit_sbc_bundle, ColumnKind, HistogramRange,
    HistogramSpec, ReportBundle, Table,
};
use sbcal::rng;
use sbcal::sampler::PosteriorSampler;
use sbcal::sbc::{
    diagnostics_with_alphas, run_replications, ReplicationSet, RunOptions, StartMode,
};
use sbcal::stats::mean_and_sd;

use crate::config::{ExperimentConfig, Method, Mode};
use crate::AnalyticCmd;

pub const DEFAULT_OUT: &str = "sbcal-out";

pub fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Creates the bundle and embeds the resolved config.
pub fn open_bundle(dir: &Path, cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let mut bundle = ReportBundle::create(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    bundle.write("config.toml", &cfg.to_toml()?)?;
    Ok(bundle)
}

/// Everything a replication run needs, built from a config.
pub struct Setup {
    pub model: Box<dyn GenerativeModel>,
    pub sampler: Box<dyn PosteriorSampler>,
    y_d: Option<Dataset>,
    reference: Option<Box<dyn PosteriorSampler>>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let (y_d, reference) = match cfg.mode {
            Mode::Prior => (None, None),
            Mode::Posterior => (Some(cfg.observed()?), Some(cfg.build_reference()?)),
        };
        Ok(Setup {
            model: cfg.build_model()?,
            sampler: cfg.build_sampler()?,
            y_d,
            reference,
        })
    }

    pub fn start(&self) -> StartMode<'_> {
        match (&self.y_d, &self.reference) {
            (Some(y_d), Some(reference)) => StartMode::Posterior {
                y_d,
                reference: reference.as_ref(),
            },
            _ => StartMode::Prior,
        }
    }

    pub fn run(&self, replications: usize, draws: usize, seed: u64) -> Result<ReplicationSet> {
        let reps = run_replications(
            self.model.as_ref(),
            self.sampler.as_ref(),
            self.start(),
            &RunOptions::new(replications, draws, seed),
        )?;
        if !reps.failures.is_empty() {
            eprintln!(
                "warning: {} of {} replications failed and were dropped",
                reps.failures.len(),
                reps.failures.len() + reps.len()
            );
        }
        if reps.flagged_fits > 0 {
            eprintln!(
                "warning: {} fits were flagged by the sampler",
                reps.flagged_fits
            );
        }
        Ok(reps)
    }

    pub fn provenance(
        &self,
        cfg: &ExperimentConfig,
        method: Method,
        alpha: Option<f64>,
    ) -> Result<Provenance> {
        Ok(Provenance {
            model: self.model.name().into(),
            sampler: self.sampler.name(),
            scalar: self.model.scalar_label().to_string(),
            mode: match cfg.mode {
                Mode::Prior => "prior".into(),
                Mode::Posterior => "posterior".into(),
            },
            method: method.name().into(),
            seed: cfg.seed()?,
            replications: cfg.replications(),
            draws: cfg.draws(),
            alpha,
        })
    }
}

pub fn hist_spec(cfg: &ExperimentConfig) -> Result<HistogramSpec> {
    Ok(HistogramSpec::new(cfg.hist_bins, HistogramRange::Unit)?)
}

/// Diagnostics bundle plus the saved replication set in `subdir`.
pub fn write_run(
    bundle: &mut ReportBundle,
    subdir: &str,
    reps: &ReplicationSet,
    cfg: &ExperimentConfig,
) -> Result<sbcal::sbc::SbcDiagnostics> {
    let diag = diagnostics_with_alphas(reps, &cfg.alpha)?;
    let mut sub = ReportBundle::create(bundle.dir().join(subdir))?;
    emit_sbc_bundle(reps, &diag, &hist_spec(cfg)?, &mut sub)?;
    let saved = if cfg.write_draws {
        reps.clone()
    } else {
        ReplicationSet {
            draws: None,
            ..reps.clone()
        }
    };
    io::write_replication_set(&sub.dir().join("replications"), &saved)?;
    Ok(diag)
}

pub fn print_summary(label: &str, diag: &sbcal::sbc::SbcDiagnostics) {
    let cov: Vec<String> = diag
        .coverage
        .iter()
        .map(|(a, c)| format!("{:.2}:{c:.3}", 1.0 - a))
        .collect();
    println!(
        "{label}: L={} D*sqrt(L)={:.3} z_mean={:.4} z_sd={:.4} coverage[{}]",
        diag.len(),
        diag.ks_scaled(),
        diag.z_mean,
        diag.z_sd,
        cov.join(" ")
    );
}

pub fn sbc(cfg: &ExperimentConfig) -> Result<()> {
    let mut bundle = open_bundle(&out_dir(cfg), cfg)?;
    let setup = Setup::new(cfg)?;
    let reps = setup.run(cfg.replications(), cfg.draws(), cfg.seed()?)?;
    let diag = write_run(&mut bundle, ".", &reps, cfg)?;
    print_summary("sbc", &diag);
    Ok(())
}

/// Adjustments by method: one per alpha for the nominal method, otherwise
/// one shared by every alpha.
pub fn estimate(
    reps: &ReplicationSet,
    cfg: &ExperimentConfig,
    setup: &Setup,
) -> Result<Vec<(f64, Adjustment)>> {
    Ok(match cfg.method {
        Method::Nominal => {
            let grid = cfg.scale_grid()?;
            cfg.alpha
                .iter()
                .map(|&a| {
                    let adj = nominal_coverage_search(reps, a, &grid)?;
                    Ok((
                        a,
                        adj.with_provenance(setup.provenance(cfg, cfg.method, Some(a))?),
                    ))
                })
                .collect::<Result<_>>()?
        }
        Method::Zscore | Method::Locscale => {
            let adj = if cfg.method == Method::Zscore {
                zscore_scale_estimate(reps)?
            } else {
                location_scale_estimate(reps)?
            };
            let adj = adj.with_provenance(setup.provenance(cfg, cfg.method, None)?);
            cfg.alpha.iter().map(|&a| (a, adj.clone())).collect()
        }
    })
}

pub fn adjustment_table(adjs: &[(f64, Adjustment)]) -> Table {
    let mut t = Table::new(&[
        ("alpha", ColumnKind::Real),
        ("scale", ColumnKind::Real),
        ("shift", ColumnKind::Real),
    ]);
    for (a, adj) in adjs {
        t.push(vec![*a, adj.scale, adj.shift_coefficient]);
    }
    t
}

pub fn calibrate(cfg: &ExperimentConfig) -> Result<()> {
    let mut bundle = open_bundle(&out_dir(cfg), cfg)?;
    let setup = Setup::new(cfg)?;
    let seed = cfg.seed()?;
    let fit = setup.run(cfg.replications(), cfg.draws(), seed)?;
    let fit_diag = write_run(&mut bundle, "fit", &fit, cfg)?;
    print_summary("fit", &fit_diag);

    let adjs = estimate(&fit, cfg, &setup)?;
    if cfg.method == Method::Nominal {
        for (a, adj) in &adjs {
            io::write_adjustment(
                &bundle.dir().join(format!("adjustment_alpha_{a}.toml")),
                adj,
            )?;
        }
    } else {
        io::write_adjustment(&bundle.dir().join("adjustment.toml"), &adjs[0].1)?;
    }
    bundle.write_table("adjustments.csv", &adjustment_table(&adjs))?;

    let eval = if cfg.in_sample {
        fit
    } else {
        setup.run(
            cfg.eval_replications(),
            cfg.draws(),
            rng::derive_named(seed, "eval"),
        )?
    };
    let table = evaluate_per_alpha(&eval, &adjs)?;
    emit_coverage_table(&table, &mut bundle, "coverage")?;
    let before = evaluate_adjustment(&eval, &Adjustment::identity(), &cfg.alpha)?;
    emit_coverage_table(&before, &mut bundle, "coverage_unadjusted")?;
    if cfg.method != Method::Nominal {
        let adjusted = adjust_replication_set(&eval, &adjs[0].1)?;
        let d = write_run(&mut bundle, "adjusted", &adjusted, cfg)?;
        print_summary("adjusted", &d);
    }
    for (row, (_, adj)) in table.rows.iter().zip(&adjs) {
        println!(
            "alpha={} scale={:.4} shift={:.4} coverage={:.4} (unadjusted {:.4})",
            row.alpha,
            adj.scale,
            adj.shift_coefficient,
            row.coverage,
            before.row(row.alpha).map_or(f64::NAN, |r| r.coverage)
        );
    }

    if let Some(r) = cfg.outer_replications {
        let opts = RunOptions::new(
            cfg.replications(),
            cfg.draws(),
            rng::derive_named(seed, "outer"),
        );
        let pairs = replicate_adjustment_distribution(
            setup.model.as_ref(),
            setup.sampler.as_ref(),
            setup.start(),
            r,
            &opts,
        )?;
        emit_adjustment_scatter(&pairs, &mut bundle, "adjustment_pairs")?;
    }
    Ok(())
}

fn warn_on_provenance(adj: &Adjustment, setup: &Setup) {
    let Some(p) = &adj.provenance else {
        eprintln!("warning: adjustment has no provenance; cannot check it matches the target");
        return;
    };
    let target = (
        setup.model.name().to_string(),
        setup.sampler.name(),
        setup.model.scalar_label().to_string(),
    );
    if (p.model.clone(), p.sampler.clone(), p.scalar.clone()) != target {
        eprintln!(
            "warning: adjustment was estimated for model {} / sampler {} / scalar {}, \
             but is applied to model {} / sampler {} / scalar {}",
            p.model, p.sampler, p.scalar, target.0, target.1, target.2
        );
    }
}

pub fn apply(
    cfg: &ExperimentConfig,
    adjustment: &Path,
    draws: Option<&Path>,
    from_config: bool,
) -> Result<()> {
    let adj = io::read_adjustment(adjustment)
        .with_context(|| format!("cannot read adjustment {}", adjustment.display()))?;
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out)?;
    let rows = match draws {
        Some(path) => {
            if from_config {
                warn_on_provenance(&adj, &Setup::new(cfg)?);
            }
            io::read_draws(path)?
        }
        None => {
            if !from_config {
                bail!("apply needs --draws-file or a model/sampler configuration");
            }
            let setup = Setup::new(cfg)?;
            warn_on_provenance(&adj, &setup);
            let y = cfg.observed()?;
            let mut stream = rng::stream(cfg.seed()?, &[rng::tag("apply")]);
            let fit = setup
                .sampler
                .fit(setup.model.as_ref(), &y, cfg.draws(), &mut stream)?;
            let rows = vec![fit.scalar];
            io::write_draws(&out.join("draws.csv"), &rows)?;
            rows
        }
    };
    let adjusted: Vec<Vec<f64>> = rows.iter().map(|r| adjust_draws(r, &adj)).collect();
    io::write_draws(&out.join("adjusted_draws.csv"), &adjusted)?;
    for (before, after) in rows.iter().zip(&adjusted) {
        let (m0, s0) = mean_and_sd(before);
        let (m1, s1) = mean_and_sd(after);
        println!("mean {m0:.6} -> {m1:.6}, sd {s0:.6} -> {s1:.6}");
    }
    Ok(())
}

fn print_law(law: &GaussianLaw) {
    println!("mean = {}\nsd = {}", law.mean, law.sd);
}

pub fn analytic(cmd: AnalyticCmd) -> Result<()> {
    match cmd {
        AnalyticCmd::Posterior(a) => print_law(&analytic::normal_normal_posterior(a.y, a.sigma)?),
        AnalyticCmd::Conjugate { y } => print_law(&analytic::conjugate_posterior(&y)?),
        AnalyticCmd::Zlaw(a) => print_law(&analytic::posterior_mode_z_law(a.y, a.sigma)?),
        AnalyticCmd::PriorZlaw => print_law(&analytic::prior_mode_z_law()),
        AnalyticCmd::RecalLimit(a) => {
            print_law(&analytic::posterior_recalibration_limit(a.y, a.sigma)?)
        }
        AnalyticCmd::Verify { at, n_mc, seed } => {
            let mut stream = rng::stream(seed, &[rng::tag("verify")]);
            let c = analytic::verify_z_derivation(at.sigma, at.y, n_mc, &mut stream)?;
            println!(
                "analytic_mean = {}\nanalytic_sd = {}\nempirical_mean = {}\nempirical_sd = {}\nmean_discrepancy = {}\nsd_discrepancy = {}",
                c.analytic.mean,
                c.analytic.sd,
                c.empirical.mean,
                c.empirical.sd,
                c.mean_discrepancy,
                c.sd_discrepancy
            );
        }
    }
    Ok(())
}

pub fn report(input: &Path, out: &Path, bins: usize) -> Result<()> {
    let reps = io::read_replication_set(input)
        .with_context(|| format!("cannot read replication set {}", input.display()))?;
    let alphas = if reps.draws.is_some() {
        sbcal::sbc::DEFAULT_ALPHAS.to_vec()
    } else {
        eprintln!(
            "note: {} has no draws.csv; coverage columns are omitted",
            input.display()
        );
        Vec::new()
    };
    let diag = diagnostics_with_alphas(&reps, &alphas)?;
    let mut bundle = ReportBundle::create(out)?;
    emit_sbc_bundle(
        &reps,
        &diag,
        &HistogramSpec::new(bins, HistogramRange::Unit)?,
        &mut bundle,
    )?;
    print_summary("report", &diag);
    Ok(())
}
