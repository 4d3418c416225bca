//! End-to-end experiments, each writing one bundle.

use anyhow::Result;
use rand::Rng;
use rand_distr::StandardNormal;

use sbcal::analytic;
use sbcal::model::{Dataset, ScalarLabel, CLASSICAL_GROUP_SDS};
use sbcal::recal::{
    adjust_draws, evaluate_per_alpha, nominal_coverage_search, replicate_adjustment_distribution,
    zscore_scale_estimate, Adjustment,
};
use sbcal::report::{
    emit_adjustment_scatter, emit_coverage_table, emit_posterior_comparison, ColumnKind,
    ReportBundle, Table,
};
use sbcal::rng;
use sbcal::sbc::{run_parameter_z_scores, RunOptions};
use sbcal::stats::mean_and_sd;

use crate::commands::{open_bundle, out_dir, print_summary, write_run, Setup};
use crate::config::{ExperimentConfig, Method, Mode, ModelKind, Observed, SamplerKind};

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Name {
    SimpleGaussian,
    EightSchools,
    NormalNormalFigures,
    HierarchicalPosteriorTrend,
}

/// Hyperparameters `(mu, tau)` used to simulate the observed data of the
/// trend experiment, with group spread comparable to the noise.
const TREND_HYPERPARAMETERS: (f64, f64) = (5.0, 10.0);

pub fn run(name: Name, cfg: &ExperimentConfig) -> Result<()> {
    let mut bundle = open_bundle(&out_dir(cfg), cfg)?;
    match name {
        Name::SimpleGaussian => simple_gaussian(cfg, &mut bundle),
        Name::EightSchools => eight_schools(cfg, &mut bundle),
        Name::NormalNormalFigures => normal_normal_figures(cfg, &mut bundle),
        Name::HierarchicalPosteriorTrend => hierarchical_trend(cfg, &mut bundle),
    }
}

/// Fits the z-score and per-alpha nominal adjustments on `fit_seed`, then
/// evaluates both on replications from the derived eval seed.
fn calibration_tables(
    cfg: &ExperimentConfig,
    setup: &Setup,
    bundle: &mut ReportBundle,
    fit: &sbcal::sbc::ReplicationSet,
    prefix: &str,
) -> Result<()> {
    let seed = cfg.seed()?;
    let grid = cfg.scale_grid()?;
    let z =
        zscore_scale_estimate(fit)?.with_provenance(setup.provenance(cfg, Method::Zscore, None)?);
    let nominal: Vec<(f64, Adjustment)> = cfg
        .alpha
        .iter()
        .map(|&a| {
            let adj = nominal_coverage_search(fit, a, &grid)?;
            Ok((
                a,
                adj.with_provenance(setup.provenance(cfg, Method::Nominal, Some(a))?),
            ))
        })
        .collect::<Result<_>>()?;
    let eval = setup.run(
        cfg.eval_replications(),
        cfg.draws(),
        rng::derive_named(seed, "eval"),
    )?;
    let zs: Vec<(f64, Adjustment)> = cfg.alpha.iter().map(|&a| (a, z.clone())).collect();
    emit_coverage_table(
        &evaluate_per_alpha(&eval, &zs)?,
        bundle,
        &format!("{prefix}_zscore"),
    )?;
    emit_coverage_table(
        &evaluate_per_alpha(&eval, &nominal)?,
        bundle,
        &format!("{prefix}_nominal"),
    )?;
    sbcal::io::write_adjustment(
        &bundle
            .dir()
            .join(format!("{prefix}_zscore_adjustment.toml")),
        &z,
    )?;
    println!("{prefix}: z-score k = {:.4}", z.scale);
    for (a, adj) in &nominal {
        println!("{prefix}: nominal k(alpha={a}) = {:.4}", adj.scale);
    }
    Ok(())
}

fn simple_gaussian(base: &ExperimentConfig, bundle: &mut ReportBundle) -> Result<()> {
    let mut cfg = base.clone();
    cfg.model = ModelKind::ConjugateNormal;
    cfg.sampler = SamplerKind::Exact;
    cfg.mode = Mode::Prior;
    let exact = Setup::new(&cfg)?;
    let seed = cfg.seed()?;
    let reps = exact.run(cfg.replications(), cfg.draws(), seed)?;
    print_summary("exact", &write_run(bundle, "exact", &reps, &cfg)?);

    cfg.narrow_factor = Some(base.narrow_factor.unwrap_or(3.0));
    let narrowed = Setup::new(&cfg)?;
    let reps = narrowed.run(cfg.replications(), cfg.draws(), seed)?;
    print_summary("narrowed", &write_run(bundle, "narrowed", &reps, &cfg)?);
    calibration_tables(&cfg, &narrowed, bundle, &reps, "narrowed")
}

fn eight_schools(base: &ExperimentConfig, bundle: &mut ReportBundle) -> Result<()> {
    let mut cfg = base.clone();
    cfg.model = ModelKind::EightSchools;
    cfg.mode = Mode::Prior;
    cfg.narrow_factor = None;
    let seed = cfg.seed()?;
    cfg.sampler = SamplerKind::Hmc;
    let hmc = Setup::new(&cfg)?;
    let hmc_reps = hmc.run(cfg.replications(), cfg.draws(), seed)?;
    print_summary("hmc", &write_run(bundle, "hmc", &hmc_reps, &cfg)?);

    cfg.sampler = SamplerKind::Vi;
    let vi = Setup::new(&cfg)?;
    let vi_reps = vi.run(cfg.replications(), cfg.draws(), seed)?;
    print_summary("vi", &write_run(bundle, "vi", &vi_reps, &cfg)?);
    // same seed, so replication l sees the same dataset in both runs
    emit_posterior_comparison(&vi_reps, &hmc_reps, ("vi", "hmc"), bundle, "vi_vs_hmc")?;
    calibration_tables(&cfg, &vi, bundle, &vi_reps, "vi")
}

fn normal_normal_figures(base: &ExperimentConfig, bundle: &mut ReportBundle) -> Result<()> {
    let mut cfg = base.clone();
    cfg.model = ModelKind::NormalNormal;
    cfg.sampler = SamplerKind::Exact;
    cfg.narrow_factor = None;
    let seed = cfg.seed()?;
    let y = match &base.y_d {
        Some(o) => o.values()[0],
        None => 1.0,
    };
    let sigma = cfg.sigma;

    let mut laws = Table::new(&[
        ("posterior_mode", ColumnKind::Integer),
        ("analytic_mean", ColumnKind::Real),
        ("analytic_sd", ColumnKind::Real),
        ("empirical_mean", ColumnKind::Real),
        ("empirical_sd", ColumnKind::Real),
    ]);
    let mut pairs_by_mode = Vec::new();
    for (flag, mode) in [(0.0, Mode::Prior), (1.0, Mode::Posterior)] {
        cfg.mode = mode;
        cfg.y_d = (mode == Mode::Posterior).then_some(Observed::Scalar(y));
        let setup = Setup::new(&cfg)?;
        let label = if flag == 0.0 { "prior" } else { "posterior" };
        let reps = setup.run(cfg.replications(), cfg.draws(), seed)?;
        let diag = write_run(bundle, label, &reps, &cfg)?;
        print_summary(label, &diag);
        let law = if flag == 0.0 {
            analytic::prior_mode_z_law()
        } else {
            analytic::posterior_mode_z_law(y, sigma)?
        };
        laws.push(vec![flag, law.mean, law.sd, diag.z_mean, diag.z_sd]);

        let outer = cfg.outer_replications.unwrap_or(50);
        let inner_l = base.replications.unwrap_or(200);
        let opts = RunOptions::new(inner_l, cfg.draws(), rng::derive_named(seed, "outer"));
        let pairs = replicate_adjustment_distribution(
            setup.model.as_ref(),
            setup.sampler.as_ref(),
            setup.start(),
            outer,
            &opts,
        )?;
        emit_adjustment_scatter(&pairs, bundle, &format!("{label}_adjustment_pairs"))?;
        pairs_by_mode.push((setup, pairs));
    }
    bundle.write_table("z_laws.csv", &laws)?;

    let mut grid = Table::new(&[
        ("sigma", ColumnKind::Real),
        ("y", ColumnKind::Real),
        ("mean", ColumnKind::Real),
        ("sd", ColumnKind::Real),
    ]);
    for s in [0.01, 0.5, 1.0, 2.0, 100.0] {
        for yy in [-1.0, 0.0, 1.0, 2.0] {
            let law = analytic::posterior_mode_z_law(yy, s)?;
            grid.push(vec![s, yy, law.mean, law.sd]);
        }
    }
    bundle.write_table("z_law_grid.csv", &grid)?;

    // posterior recalibration of p(theta | y) using the averaged adjustment
    let (setup, pairs) = &pairs_by_mode[1];
    let zbar = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let s_z = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let adj = Adjustment::location_scale(s_z, zbar)?;
    let mut stream = rng::stream(seed, &[rng::tag("target")]);
    let fit = setup.sampler.fit(
        setup.model.as_ref(),
        &Dataset::scalar(y),
        cfg.draws(),
        &mut stream,
    )?;
    let (m, s) = mean_and_sd(&adjust_draws(&fit.scalar, &adj));
    let limit = analytic::posterior_recalibration_limit(y, sigma)?;
    let mut t = Table::new(&[
        ("analytic_mean", ColumnKind::Real),
        ("analytic_sd", ColumnKind::Real),
        ("adjusted_mean", ColumnKind::Real),
        ("adjusted_sd", ColumnKind::Real),
    ]);
    t.push(vec![limit.mean, limit.sd, m, s]);
    bundle.write_table("recalibrated_posterior.csv", &t)?;
    println!(
        "recalibrated posterior: mean {m:.4} sd {s:.4} (limit {:.4}, {:.4})",
        limit.mean, limit.sd
    );
    Ok(())
}

/// Data for `j` groups drawn from the model at fixed hyperparameters.
/// Groups are generated in order from one stream, so the first groups of
/// a larger dataset coincide with a smaller one.
fn simulate_observed(j: usize, seed: u64) -> Dataset {
    let (mu, tau) = TREND_HYPERPARAMETERS;
    let mut stream = rng::stream(seed, &[rng::tag("observed")]);
    let values = CLASSICAL_GROUP_SDS
        .iter()
        .cycle()
        .take(j)
        .map(|sd| {
            let alpha = mu + tau * stream.sample::<f64, _>(StandardNormal);
            alpha + sd * stream.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Dataset::vector(values)
}

/// Groups compared by the trend experiment.
pub const TREND_GROUPS: [usize; 3] = [8, 32, 128];

fn hierarchical_trend(base: &ExperimentConfig, bundle: &mut ReportBundle) -> Result<()> {
    let mut cfg = base.clone();
    cfg.model = ModelKind::EightSchools;
    cfg.sampler = SamplerKind::Hmc;
    cfg.reference_sampler = Some(SamplerKind::Hmc);
    cfg.mode = Mode::Posterior;
    cfg.narrow_factor = None;
    cfg.group_sds = None;
    if cfg.scalar.is_none() {
        cfg.scalar = Some(ScalarLabel::Alpha(1).to_string());
    }
    let l = base.replications.unwrap_or(300);
    let s = base.draws.unwrap_or(500);
    cfg.replications = Some(l);
    cfg.draws = Some(s);
    let seed = cfg.seed()?;

    let columns = [
        ("groups", ColumnKind::Integer),
        ("z_mean", ColumnKind::Real),
        ("z_sd", ColumnKind::Real),
        ("se_z_mean", ColumnKind::Real),
        ("se_z_sd", ColumnKind::Real),
    ];
    let mut single = Table::new(&columns);
    let mut pooled = Table::new(&columns);
    let row = |j: usize, z: &[f64]| {
        let (m, sd) = mean_and_sd(z);
        let n = z.len() as f64;
        vec![j as f64, m, sd, sd / n.sqrt(), sd / (2.0 * n).sqrt()]
    };
    for j in TREND_GROUPS {
        cfg.n_groups = j;
        cfg.y_d = Some(Observed::Vector(simulate_observed(j, seed).values));
        let setup = Setup::new(&cfg)?;
        let run_seed = rng::derive_seed(seed, &[j as u64]);
        let reps = setup.run(l, s, run_seed)?;
        let diag = write_run(bundle, &format!("groups_{j}"), &reps, &cfg)?;
        print_summary(&format!("J={j}"), &diag);
        single.push(row(j, &diag.z_scores));

        // every local parameter alpha_1..alpha_J, pooled over groups
        let locals: Vec<usize> = (2..2 + j).collect();
        let z = run_parameter_z_scores(
            setup.model.as_ref(),
            setup.sampler.as_ref(),
            setup.start(),
            &RunOptions::new(l, s, run_seed),
            &locals,
        )?;
        let all: Vec<f64> = z.into_iter().flatten().collect();
        let r = row(j, &all);
        println!("J={j} pooled locals: z_mean={:.4} z_sd={:.4}", r[1], r[2]);
        pooled.push(r);
    }
    bundle.write_table("trend.csv", &single)?;
    bundle.write_table("trend_pooled.csv", &pooled)?;
    Ok(())
}
