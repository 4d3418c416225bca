use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Dataset, GenerativeModel};
use crate::rng::{self, ROLE_DATA, ROLE_FIT};
use crate::sampler::PosteriorSampler;
use crate::stats::mean_and_sd;

use super::rank_quantile;

/// Where step-1 parameter draws come from.
#[derive(Debug, Clone, Copy)]
pub enum StartMode<'a> {
    Prior,
    /// Draws from `reference` fitted to the observed data `y_d`.
    Posterior {
        y_d: &'a Dataset,
        reference: &'a dyn PosteriorSampler,
    },
}

/// Recorded form of [`StartMode`].
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicationMode {
    Prior,
    Posterior { y_d: Dataset, reference: String },
}

impl ReplicationMode {
    pub fn label(&self) -> &'static str {
        match self {
            ReplicationMode::Prior => "prior",
            ReplicationMode::Posterior { .. } => "posterior",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// L
    pub replications: usize,
    /// S
    pub draws: usize,
    pub seed: u64,
    /// Keep the full L x S draw matrix (needed for coverage and adjustment).
    pub keep_draws: bool,
    pub execution: Execution,
}

impl RunOptions {
    pub fn new(replications: usize, draws: usize, seed: u64) -> Self {
        RunOptions {
            replications,
            draws,
            seed,
            keep_draws: true,
            execution: Execution::default(),
        }
    }

    pub fn keep_draws(mut self, keep: bool) -> Self {
        self.keep_draws = keep;
        self
    }

    pub fn execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub reason: String,
}

/// L replications of (true scalar, dataset, S posterior draws).
#[derive(Debug, Clone)]
pub struct ReplicationSet {
    pub mode: ReplicationMode,
    pub seed: u64,
    /// S
    pub draws_per_replication: usize,
    /// Original replication index of each row (failed ones are absent).
    pub replication_ids: Vec<usize>,
    pub theta_true: Vec<f64>,
    pub datasets: Vec<Dataset>,
    pub post_mean: Vec<f64>,
    /// Population sd of each draw row.
    pub post_sd: Vec<f64>,
    pub rank_quantiles: Vec<f64>,
    pub draws: Option<Vec<Vec<f64>>>,
    pub failures: Vec<ReplicationFailure>,
    /// Fits whose sampler flagged a problem (e.g. divergences).
    pub flagged_fits: usize,
}

impl ReplicationSet {
    /// Builds a prior-mode set from true values and draw rows, e.g. for
    /// draws produced outside this crate.
    pub fn from_draws(theta_true: Vec<f64>, draws: Vec<Vec<f64>>) -> Result<Self> {
        if theta_true.len() != draws.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} true values but {} draw rows",
                theta_true.len(),
                draws.len()
            )));
        }
        let s = draws.first().map_or(0, Vec::len);
        if s == 0 || draws.iter().any(|r| r.len() != s) {
            return Err(Error::ShapeMismatch(
                "draw rows must be nonempty and equal length".into(),
            ));
        }
        let mut post_mean = Vec::with_capacity(draws.len());
        let mut post_sd = Vec::with_capacity(draws.len());
        let mut ranks = Vec::with_capacity(draws.len());
        for (row, &theta) in draws.iter().zip(&theta_true) {
            let (m, sd) = mean_and_sd(row);
            post_mean.push(m);
            post_sd.push(sd);
            ranks.push(rank_quantile(theta, row)?);
        }
        Ok(ReplicationSet {
            mode: ReplicationMode::Prior,
            seed: 0,
            draws_per_replication: s,
            replication_ids: (0..theta_true.len()).collect(),
            theta_true,
            datasets: Vec::new(),
            post_mean,
            post_sd,
            rank_quantiles: ranks,
            draws: Some(draws),
            failures: Vec::new(),
            flagged_fits: 0,
        })
    }

    /// Number of (successful) replications, L.
    pub fn len(&self) -> usize {
        self.theta_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_true.is_empty()
    }

    pub fn draws(&self) -> Result<&[Vec<f64>]> {
        self.draws.as_deref().ok_or(Error::DrawsUnavailable)
    }

    pub fn z_scores(&self) -> Result<Vec<f64>> {
        self.theta_true
            .iter()
            .zip(self.post_mean.iter().zip(&self.post_sd))
            .enumerate()
            .map(|(l, (&t, (&m, &s)))| {
                super::z_score(t, m, s).map_err(|_| Error::DegeneratePosterior {
                    replication: Some(self.replication_ids[l]),
                })
            })
            .collect()
    }
}

struct Row {
    theta: f64,
    data: Dataset,
    mean: f64,
    sd: f64,
    rank: f64,
    draws: Option<Vec<f64>>,
    flagged: bool,
}

/// Full parameter draws from the reference posterior, one per replication,
/// in posterior mode.
fn reference_draws(
    model: &dyn GenerativeModel,
    start: StartMode<'_>,
    opts: &RunOptions,
) -> Result<(Option<Vec<Vec<f64>>>, ReplicationMode)> {
    let l_total = opts.replications;
    Ok(match start {
        StartMode::Prior => (None, ReplicationMode::Prior),
        StartMode::Posterior { y_d, reference } => {
            let mut rng = rng::stream(opts.seed, &[rng::tag("reference")]);
            let fit = reference.fit(model, y_d, l_total, &mut rng)?;
            let dim = model.parameter_dimension();
            if fit.params.len() != l_total || fit.params.iter().any(|p| p.len() != dim) {
                return Err(Error::invalid(format!(
                    "reference sampler {} does not provide full parameter draws",
                    reference.name()
                )));
            }
            (
                Some(fit.params),
                ReplicationMode::Posterior {
                    y_d: y_d.clone(),
                    reference: reference.name(),
                },
            )
        }
    })
}

/// Like [`run_replications`], but returns for every replication the
/// z-scores of the parameter coordinates `indices`, computed from the full
/// parameter draws of each fit. Uses the same streams, so the coordinate of
/// the model's scalar reproduces the z-scores of [`run_replications`].
/// Any failed replication is an error.
pub fn run_parameter_z_scores(
    model: &dyn GenerativeModel,
    sampler: &dyn PosteriorSampler,
    start: StartMode<'_>,
    opts: &RunOptions,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    if opts.replications < 2 || opts.draws < 2 {
        return Err(Error::invalid("need L >= 2 and S >= 2"));
    }
    let dim = model.parameter_dimension();
    if let Some(&i) = indices.iter().find(|&&i| i >= dim) {
        return Err(Error::invalid(format!(
            "parameter index {i} out of range for dimension {dim}"
        )));
    }
    let (reference_params, _) = reference_draws(model, start, opts)?;
    let one = |l: usize| -> Result<Vec<f64>> {
        let mut data_rng = rng::stream(opts.seed, &[l as u64, ROLE_DATA]);
        let params = match &reference_params {
            Some(p) => p[l].clone(),
            None => model.prior_sample(&mut data_rng),
        };
        let data = model.simulate_data(&params, &mut data_rng)?;
        let mut fit_rng = rng::stream(opts.seed, &[l as u64, ROLE_FIT]);
        let fit = sampler.fit(model, &data, opts.draws, &mut fit_rng)?;
        if fit.params.len() != opts.draws {
            return Err(Error::SamplerFailed {
                sampler: sampler.name(),
                reason: "full parameter draws unavailable".into(),
            });
        }
        indices
            .iter()
            .map(|&i| {
                let column: Vec<f64> = fit.params.iter().map(|p| p[i]).collect();
                let (m, sd) = mean_and_sd(&column);
                super::z_score(params[i], m, sd).map_err(|_| Error::DegeneratePosterior {
                    replication: Some(l),
                })
            })
            .collect()
    };
    opts.execution
        .map_indexed(opts.replications, one)
        .into_iter()
        .collect()
}

/// Runs L independent draw-simulate-fit replications.
///
/// Replication `l` uses streams derived from `(seed, l)` only, so the result
/// is identical for any execution order or thread count.
pub fn run_replications(
    model: &dyn GenerativeModel,
    sampler: &dyn PosteriorSampler,
    start: StartMode<'_>,
    opts: &RunOptions,
) -> Result<ReplicationSet> {
    let l_total = opts.replications;
    if l_total < 2 || opts.draws < 2 {
        return Err(Error::invalid(format!(
            "need L >= 2 and S >= 2, got L = {l_total}, S = {}",
            opts.draws
        )));
    }

    let (reference_params, mode) = reference_draws(model, start, opts)?;

    let one = |l: usize| -> Result<Row> {
        let mut data_rng = rng::stream(opts.seed, &[l as u64, ROLE_DATA]);
        let params = match &reference_params {
            Some(p) => p[l].clone(),
            None => model.prior_sample(&mut data_rng),
        };
        let theta = model.extract_scalar(&params);
        let data = model.simulate_data(&params, &mut data_rng)?;
        let mut fit_rng = rng::stream(opts.seed, &[l as u64, ROLE_FIT]);
        let fit = sampler.fit(model, &data, opts.draws, &mut fit_rng)?;
        if fit.scalar.len() != opts.draws || fit.scalar.iter().any(|v| !v.is_finite()) {
            return Err(Error::SamplerFailed {
                sampler: sampler.name(),
                reason: "wrong number of draws or non-finite draws".into(),
            });
        }
        let (mean, sd) = mean_and_sd(&fit.scalar);
        let rank = rank_quantile(theta, &fit.scalar)?;
        Ok(Row {
            theta,
            data,
            mean,
            sd,
            rank,
            draws: opts.keep_draws.then_some(fit.scalar),
            flagged: fit.meta.flagged,
        })
    };
    let rows = opts.execution.map_indexed(l_total, one);

    let mut set = ReplicationSet {
        mode,
        seed: opts.seed,
        draws_per_replication: opts.draws,
        replication_ids: Vec::with_capacity(l_total),
        theta_true: Vec::with_capacity(l_total),
        datasets: Vec::with_capacity(l_total),
        post_mean: Vec::with_capacity(l_total),
        post_sd: Vec::with_capacity(l_total),
        rank_quantiles: Vec::with_capacity(l_total),
        draws: opts.keep_draws.then(|| Vec::with_capacity(l_total)),
        failures: Vec::new(),
        flagged_fits: 0,
    };
    for (l, row) in rows.into_iter().enumerate() {
        match row {
            Ok(r) => {
                set.replication_ids.push(l);
                set.theta_true.push(r.theta);
                set.datasets.push(r.data);
                set.post_mean.push(r.mean);
                set.post_sd.push(r.sd);
                set.rank_quantiles.push(r.rank);
                if let (Some(all), Some(d)) = (set.draws.as_mut(), r.draws) {
                    all.push(d);
                }
                set.flagged_fits += usize::from(r.flagged);
            }
            Err(e) => set.failures.push(ReplicationFailure {
                replication: l,
                reason: e.to_string(),
            }),
        }
    }
    if set.failures.len() as f64 > 0.01 * l_total as f64 {
        return Err(Error::TooManyFailures {
            failed: set.failures.len(),
            total: l_total,
            first: set.failures[0].reason.clone(),
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConjugateNormalModel, NormalNormalModel};
    use crate::rng::Stream;
    use crate::sampler::{ExactSampler, Fit};

    #[test]
    fn deterministic_and_schedule_independent() {
        let m = ConjugateNormalModel::new(2).unwrap();
        let opts = RunOptions::new(64, 50, 17);
        let a = run_replications(&m, &ExactSampler, StartMode::Prior, &opts).unwrap();
        let b = run_replications(
            &m,
            &ExactSampler,
            StartMode::Prior,
            &opts.clone().execution(Execution::Sequential),
        )
        .unwrap();
        assert_eq!(a.theta_true, b.theta_true);
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.datasets, b.datasets);
        assert_eq!(a.len(), 64);
        assert_eq!(a.draws().unwrap()[3].len(), 50);
    }

    #[test]
    fn summaries_are_row_moments() {
        let m = ConjugateNormalModel::new(1).unwrap();
        let set = run_replications(
            &m,
            &ExactSampler,
            StartMode::Prior,
            &RunOptions::new(5, 20, 3),
        )
        .unwrap();
        for (l, row) in set.draws().unwrap().iter().enumerate() {
            let (mean, sd) = mean_and_sd(row);
            assert_eq!(set.post_mean[l], mean);
            assert_eq!(set.post_sd[l], sd);
            assert!(sd >= 0.0);
        }
    }

    #[test]
    fn rejects_tiny_runs() {
        let m = ConjugateNormalModel::new(1).unwrap();
        for (l, s) in [(1, 10), (10, 1)] {
            assert!(run_replications(
                &m,
                &ExactSampler,
                StartMode::Prior,
                &RunOptions::new(l, s, 0)
            )
            .is_err());
        }
    }

    #[test]
    fn posterior_mode_needs_full_parameter_draws() {
        #[derive(Debug)]
        struct ScalarOnly;
        impl PosteriorSampler for ScalarOnly {
            fn name(&self) -> String {
                "scalar-only".into()
            }
            fn fit(
                &self,
                _: &dyn GenerativeModel,
                _: &Dataset,
                n: usize,
                _: &mut Stream,
            ) -> Result<Fit> {
                Ok(Fit {
                    scalar: vec![0.0; n],
                    ..Default::default()
                })
            }
        }
        let m = NormalNormalModel::new(1.0).unwrap();
        let y = Dataset::scalar(1.0);
        let start = StartMode::Posterior {
            y_d: &y,
            reference: &ScalarOnly,
        };
        assert!(run_replications(&m, &ExactSampler, start, &RunOptions::new(10, 10, 0)).is_err());
    }

    #[derive(Debug)]
    struct Flaky {
        fail_every: usize,
    }
    impl PosteriorSampler for Flaky {
        fn name(&self) -> String {
            "flaky".into()
        }
        fn fit(
            &self,
            m: &dyn GenerativeModel,
            y: &Dataset,
            n: usize,
            rng: &mut Stream,
        ) -> Result<Fit> {
            let fit = ExactSampler.fit(m, y, n, rng)?;
            // fail deterministically on a fraction of datasets
            if ((y.values[0].abs() * 1e6) as usize).is_multiple_of(self.fail_every) {
                return Err(Error::SamplerFailed {
                    sampler: self.name(),
                    reason: "synthetic".into(),
                });
            }
            Ok(fit)
        }
    }

    #[test]
    fn failure_policy() {
        let m = NormalNormalModel::new(1.0).unwrap();
        let opts = RunOptions::new(1000, 10, 4);
        // roughly 10% failures abort the run
        let err = run_replications(&m, &Flaky { fail_every: 10 }, StartMode::Prior, &opts);
        assert!(matches!(err, Err(Error::TooManyFailures { .. })));
        // a handful of failures are reported and dropped
        let set =
            run_replications(&m, &Flaky { fail_every: 400 }, StartMode::Prior, &opts).unwrap();
        assert!(set.failures.len() <= 10);
        assert_eq!(set.len() + set.failures.len(), 1000);
    }

    #[test]
    fn parameter_z_scores_match_scalar_run() {
        use crate::model::{EightSchoolsModel, ScalarLabel};
        use crate::sampler::{HmcSampler, HmcSettings};
        let m = EightSchoolsModel::with_groups(8, ScalarLabel::Alpha(2)).unwrap();
        let hmc = HmcSampler::new(HmcSettings {
            warmup_iterations: 100,
            ..HmcSettings::default()
        })
        .unwrap();
        let y = crate::model::Dataset::vector(vec![5.0, -2.0, 8.0, 1.0, 0.0, 3.0, 12.0, 4.0]);
        let start = StartMode::Posterior {
            y_d: &y,
            reference: &hmc,
        };
        let opts = RunOptions::new(6, 50, 17);
        let reps = run_replications(&m, &hmc, start, &opts).unwrap();
        let z = run_parameter_z_scores(&m, &hmc, start, &opts, &[3, 0]).unwrap();
        let expected = reps.z_scores().unwrap();
        for (row, e) in z.iter().zip(&expected) {
            assert!((row[0] - e).abs() < 1e-12);
        }
        assert!(run_parameter_z_scores(&m, &hmc, start, &opts, &[10]).is_err());
    }
}
