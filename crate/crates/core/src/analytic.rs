//! Closed-form results for the conjugate normal models.
//!
//! These serve as oracles for the Monte Carlo pipeline: exact posteriors,
//! the law of z-scores under prior and posterior replication, and the
//! large-L limit of location-scale recalibration under posterior replication.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::stats::mean_and_sd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianLaw {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !sd.is_finite() || sd < 0.0 {
            return Err(Error::invalid(format!(
                "invalid gaussian law ({mean}, {sd})"
            )));
        }
        Ok(GaussianLaw { mean, sd })
    }

    pub fn standard() -> Self {
        GaussianLaw { mean: 0.0, sd: 1.0 }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.sd * z
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "sigma must be positive and finite, got {sigma}"
        )))
    }
}

fn check_y(y: f64) -> Result<()> {
    if y.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "observation must be finite, got {y}"
        )))
    }
}

/// Posterior of `theta` under `theta ~ N(0, 1)`, `y_i ~ N(theta, 1)`.
pub fn conjugate_posterior(y: &[f64]) -> Result<GaussianLaw> {
    if y.is_empty() {
        return Err(Error::EmptyInput(
            "conjugate posterior needs at least one observation",
        ));
    }
    let n = y.len() as f64;
    let sum: f64 = y.iter().sum();
    GaussianLaw::new(sum / (n + 1.0), 1.0 / (n + 1.0).sqrt())
}

/// Posterior of `theta` under `theta ~ N(0, 1)`, `y ~ N(theta, sigma)`.
pub fn normal_normal_posterior(y: f64, sigma: f64) -> Result<GaussianLaw> {
    check_sigma(sigma)?;
    check_y(y)?;
    let s2 = sigma * sigma;
    GaussianLaw::new(y / (1.0 + s2), sigma / (1.0 + s2).sqrt())
}

/// Law of z-scores when replications start from the prior: standard normal.
pub fn prior_mode_z_law() -> GaussianLaw {
    GaussianLaw::standard()
}

/// Law of z-scores when replications start from the exact posterior given `y`.
pub fn posterior_mode_z_law(y: f64, sigma: f64) -> Result<GaussianLaw> {
    check_sigma(sigma)?;
    check_y(y)?;
    let s2 = sigma * sigma;
    let one = 1.0 + s2;
    GaussianLaw::new(sigma * y / one.powf(1.5), (s2 * s2 + s2 + 1.0).sqrt() / one)
}

/// Adjusted posterior obtained by location-scale recalibration from posterior
/// replications, in the limit of many replications and draws.
pub fn posterior_recalibration_limit(y: f64, sigma: f64) -> Result<GaussianLaw> {
    let post = normal_normal_posterior(y, sigma)?;
    let z = posterior_mode_z_law(y, sigma)?;
    GaussianLaw::new(post.mean + z.mean * post.sd, z.sd * post.sd)
}

/// Monte Carlo check of the posterior-mode z-law: simulates
/// `theta ~ p(theta | y)`, `y' ~ p(y | theta)`, `z = (theta - E[theta|y']) / sd`.
#[derive(Debug, Clone, Copy)]
pub struct ZLawCheck {
    pub empirical: GaussianLaw,
    pub analytic: GaussianLaw,
    pub mean_discrepancy: f64,
    pub sd_discrepancy: f64,
}

pub fn verify_z_derivation(sigma: f64, y: f64, n_mc: usize, rng: &mut Stream) -> Result<ZLawCheck> {
    if n_mc < 1000 {
        return Err(Error::invalid("verify_z_derivation needs n_mc >= 1000"));
    }
    let analytic = posterior_mode_z_law(y, sigma)?;
    let post = normal_normal_posterior(y, sigma)?;
    let s2 = sigma * sigma;
    let zs: Vec<f64> = (0..n_mc)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let theta = post.mean + post.sd * z1;
            let y_rep = theta + sigma * z2;
            (theta - y_rep / (1.0 + s2)) / post.sd
        })
        .collect();
    let (m, sd) = mean_and_sd(&zs);
    let empirical = GaussianLaw::new(m, sd)?;
    Ok(ZLawCheck {
        empirical,
        analytic,
        mean_discrepancy: (m - analytic.mean).abs(),
        sd_discrepancy: (sd - analytic.sd).abs(),
    })
}
