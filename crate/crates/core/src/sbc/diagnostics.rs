use crate::error::{Error, Result};
use crate::stats::{central_interval, mean_and_sd, sorted_copy};

use super::ReplicationSet;

/// Interval levels reported by default.
pub const DEFAULT_ALPHAS: [f64; 4] = [0.05, 0.1, 0.2, 0.5];

/// Fraction of draws strictly below `theta`.
pub fn rank_quantile(theta: f64, draws: &[f64]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyInput("rank quantile needs at least one draw"));
    }
    let below = draws.iter().filter(|&&d| theta > d).count();
    Ok(below as f64 / draws.len() as f64)
}

pub fn z_score(theta: f64, mean: f64, sd: f64) -> Result<f64> {
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::DegeneratePosterior { replication: None });
    }
    Ok((theta - mean) / sd)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `values` and U(0, 1).
pub fn ks_uniformity(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("KS statistic needs at least one value"));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("value {v} outside [0, 1]")));
    }
    let sorted = sorted_copy(values);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let above = (i + 1) as f64 / n - v;
            let below = v - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct SbcDiagnostics {
    pub quantiles: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub z_mean: f64,
    /// Population sd of the z-scores.
    pub z_sd: f64,
    pub ks_distance: f64,
    /// `(alpha, coverage)` of central `(1 - alpha)` intervals; empty when the
    /// set was run without keeping draws.
    pub coverage: Vec<(f64, f64)>,
    /// True when all z-scores coincide (`z_sd == 0`).
    pub degenerate_spread: bool,
}

impl SbcDiagnostics {
    pub fn len(&self) -> usize {
        self.quantiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantiles.is_empty()
    }

    /// `D * sqrt(L)`, compared against the asymptotic critical value.
    pub fn ks_scaled(&self) -> f64 {
        self.ks_distance * (self.len() as f64).sqrt()
    }

    pub fn coverage_at(&self, alpha: f64) -> Option<f64> {
        self.coverage
            .iter()
            .find(|(a, _)| (a - alpha).abs() < 1e-12)
            .map(|&(_, c)| c)
    }
}

pub fn diagnostics(reps: &ReplicationSet) -> Result<SbcDiagnostics> {
    diagnostics_with_alphas(reps, &DEFAULT_ALPHAS)
}

pub fn diagnostics_with_alphas(reps: &ReplicationSet, alphas: &[f64]) -> Result<SbcDiagnostics> {
    if reps.is_empty() {
        return Err(Error::EmptyInput("replication set"));
    }
    let z_scores = reps.z_scores()?;
    let (z_mean, z_sd) = mean_and_sd(&z_scores);
    let ks_distance = ks_uniformity(&reps.rank_quantiles)?;
    let coverage = match &reps.draws {
        Some(rows) => {
            let sorted: Vec<Vec<f64>> = rows.iter().map(|r| sorted_copy(r)).collect();
            alphas
                .iter()
                .map(|&alpha| {
                    crate::stats::check_alpha(alpha)?;
                    let inside = sorted
                        .iter()
                        .zip(&reps.theta_true)
                        .filter(|(row, &t)| {
                            let (lo, hi) = central_interval(row, alpha);
                            lo <= t && t <= hi
                        })
                        .count();
                    Ok((alpha, inside as f64 / reps.len() as f64))
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    Ok(SbcDiagnostics {
        quantiles: reps.rank_quantiles.clone(),
        z_scores,
        z_mean,
        z_sd,
        ks_distance,
        coverage,
        degenerate_spread: z_sd == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConjugateNormalModel;
    use crate::rng::stream;
    use crate::sampler::{narrow, ExactSampler};
    use crate::sbc::{run_replications, RunOptions, StartMode};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn rank_quantile_examples() {
        let d = [0.1, 0.2, 0.9, 1.0];
        assert_eq!(rank_quantile(0.5, &d).unwrap(), 0.5);
        assert_eq!(rank_quantile(-3.0, &d).unwrap(), 0.0);
        assert_eq!(rank_quantile(3.0, &d).unwrap(), 1.0);
        // ties do not count as exceeded
        assert_eq!(rank_quantile(0.2, &d).unwrap(), 0.25);
        assert!(rank_quantile(0.0, &[]).is_err());
    }

    #[test]
    fn z_score_examples() {
        assert_eq!(z_score(1.0, 0.0, 0.5).unwrap(), 2.0);
        assert_eq!(z_score(0.3, 0.3, 1.0).unwrap(), 0.0);
        assert!(z_score(1.0, 0.0, 0.0).is_err());
        assert!(z_score(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_uniformity(&[0.5]).unwrap(), 0.5);
        let l = 99;
        let grid: Vec<f64> = (1..=l).map(|i| i as f64 / (l + 1) as f64).collect();
        assert!(ks_uniformity(&grid).unwrap() <= 1.0 / (l + 1) as f64 + 1e-12);
        assert!(ks_uniformity(&[]).is_err());
        assert!(ks_uniformity(&[1.5]).is_err());

        let mut rng = stream(81, &[]);
        let u: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_uniformity(&u).unwrap() * 100.0 < 1.63);
    }

    #[test]
    fn minimal_set() {
        let set = ReplicationSet::from_draws(vec![0.3], vec![vec![0.0, 1.0]]).unwrap();
        let d = diagnostics(&set).unwrap();
        assert!(d.z_mean.is_finite() && d.ks_distance.is_finite());
        assert_eq!(d.z_sd, 0.0);
        assert!(d.degenerate_spread);
    }

    #[test]
    fn zero_posterior_sd_names_replication() {
        let set = ReplicationSet::from_draws(vec![0.0, 0.0], vec![vec![0.0, 1.0], vec![2.0, 2.0]])
            .unwrap();
        match diagnostics(&set) {
            Err(Error::DegeneratePosterior { replication }) => assert_eq!(replication, Some(1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_is_uniform_narrowed_is_not() {
        let m = ConjugateNormalModel::new(4).unwrap();
        let opts = RunOptions::new(1000, 400, 82);
        let exact = run_replications(&m, &ExactSampler, StartMode::Prior, &opts).unwrap();
        let d = diagnostics(&exact).unwrap();
        assert!(d.ks_scaled() < 1.63, "{}", d.ks_scaled());

        let narrowed = narrow(Box::new(ExactSampler), 3.0).unwrap();
        let bad = run_replications(&m, &narrowed, StartMode::Prior, &opts).unwrap();
        let d = diagnostics(&bad).unwrap();
        assert!(d.ks_scaled() > 1.63);
        // a 95% interval a third as wide as it should be covers about 50%
        assert!(d.coverage_at(0.05).unwrap() < 0.7);
    }

    proptest! {
        #[test]
        fn rank_is_monotone(
            draws in prop::collection::vec(-10.0f64..10.0, 1..40),
            a in -12.0f64..12.0,
            b in -12.0f64..12.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rank_quantile(lo, &draws).unwrap() <= rank_quantile(hi, &draws).unwrap());
        }
    }
}
