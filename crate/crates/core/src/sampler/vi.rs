//! Mean-field Gaussian variational inference.
//!
//! Maximizes the evidence lower bound over a fully factorized Gaussian on the
//! unconstrained (centered) coordinates. Gradients use the reparameterization
//! `x = m + exp(omega) * eps`. Step sizes follow the per-coordinate rule
//! `eta * k^(-1/2) / (1 + sqrt(s_k))` where `s_k` is an exponential moving
//! average of squared gradients. The returned Gaussian is the Polyak average
//! of the iterates over the second half of the run.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_draws, Fit, FitMeta, PosteriorSampler};
use crate::error::{Error, Result};
use crate::model::{Dataset, GenerativeModel, LogDensity, Parameterization};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldViSettings {
    pub iterations: usize,
    pub mc_gradient_samples: usize,
    pub base_step_size: f64,
    /// How many times the step size is halved after a non-finite ELBO.
    pub max_retries: usize,
}

impl Default for MeanFieldViSettings {
    fn default() -> Self {
        MeanFieldViSettings {
            iterations: 4000,
            mc_gradient_samples: 10,
            base_step_size: 0.5,
            max_retries: 6,
        }
    }
}

impl MeanFieldViSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if self.mc_gradient_samples == 0 {
            return Err(Error::invalid("mc_gradient_samples must be positive"));
        }
        if !(self.base_step_size > 0.0 && self.base_step_size.is_finite()) {
            return Err(Error::invalid("base_step_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct MeanFieldVi {
    pub settings: MeanFieldViSettings,
}

impl MeanFieldVi {
    pub fn new(settings: MeanFieldViSettings) -> Result<Self> {
        settings.validate()?;
        Ok(MeanFieldVi { settings })
    }
}

/// Fitted factorized Gaussian on the unconstrained space.
#[derive(Debug, Clone)]
pub struct MeanFieldGaussian {
    pub mean: Vec<f64>,
    pub log_sd: Vec<f64>,
    pub elbo: f64,
}

struct NonFinite;

fn optimize(
    density: &dyn LogDensity,
    s: &MeanFieldViSettings,
    eta: f64,
    rng: &mut Stream,
) -> std::result::Result<MeanFieldGaussian, NonFinite> {
    const DECAY: f64 = 0.1;
    let d = density.dim();
    let mut m = vec![0.0f64; d];
    let mut w = vec![0.0f64; d];
    let mut acc_m = vec![0.0; d];
    let mut acc_w = vec![0.0; d];
    let mut g_m = vec![0.0; d];
    let mut g_w = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut eps = vec![0.0; d];
    let mut avg_m = vec![0.0; d];
    let mut avg_w = vec![0.0; d];
    let mut n_avg = 0.0;
    let mut elbo = f64::NAN;
    let k_samples = s.mc_gradient_samples as f64;
    let burn = s.iterations / 2;

    for k in 1..=s.iterations {
        g_m.iter_mut().for_each(|v| *v = 0.0);
        g_w.iter_mut().for_each(|v| *v = 0.0);
        let mut lp_sum = 0.0;
        for _ in 0..s.mc_gradient_samples {
            for i in 0..d {
                eps[i] = StandardNormal.sample(rng);
                x[i] = m[i] + w[i].exp() * eps[i];
            }
            let lp = density.log_density_and_grad(&x, &mut grad);
            if !lp.is_finite() {
                return Err(NonFinite);
            }
            lp_sum += lp;
            for i in 0..d {
                g_m[i] += grad[i];
                g_w[i] += grad[i] * eps[i] * w[i].exp();
            }
        }
        elbo = lp_sum / k_samples + w.iter().sum::<f64>();
        let rate = eta / (k as f64).sqrt();
        for i in 0..d {
            let gm = g_m[i] / k_samples;
            let gw = g_w[i] / k_samples + 1.0;
            if !(gm.is_finite() && gw.is_finite()) {
                return Err(NonFinite);
            }
            if k == 1 {
                acc_m[i] = gm * gm;
                acc_w[i] = gw * gw;
            } else {
                acc_m[i] = DECAY * gm * gm + (1.0 - DECAY) * acc_m[i];
                acc_w[i] = DECAY * gw * gw + (1.0 - DECAY) * acc_w[i];
            }
            m[i] += rate / (1.0 + acc_m[i].sqrt()) * gm;
            w[i] += rate / (1.0 + acc_w[i].sqrt()) * gw;
        }
        if k > burn {
            n_avg += 1.0;
            for i in 0..d {
                avg_m[i] += (m[i] - avg_m[i]) / n_avg;
                avg_w[i] += (w[i] - avg_w[i]) / n_avg;
            }
        }
    }
    if !elbo.is_finite() || avg_m.iter().chain(&avg_w).any(|v| !v.is_finite()) {
        return Err(NonFinite);
    }
    Ok(MeanFieldGaussian {
        mean: avg_m,
        log_sd: avg_w,
        elbo,
    })
}

impl MeanFieldVi {
    /// Runs the optimizer, halving the step size after each non-finite run.
    pub fn approximate<'m>(
        &self,
        model: &'m dyn GenerativeModel,
        data: &Dataset,
        rng: &mut Stream,
    ) -> Result<(MeanFieldGaussian, Box<dyn LogDensity + 'm>)> {
        let s = &self.settings;
        s.validate()?;
        let density = model.posterior_density(data, Parameterization::Centered)?;
        let mut eta = s.base_step_size;
        for _ in 0..=s.max_retries {
            if let Ok(q) = optimize(density.as_ref(), s, eta, rng) {
                return Ok((q, density));
            }
            eta *= 0.5;
        }
        Err(Error::SamplerFailed {
            sampler: self.name(),
            reason: format!(
                "ELBO stayed non-finite after {} step-size halvings",
                s.max_retries
            ),
        })
    }
}

impl PosteriorSampler for MeanFieldVi {
    fn name(&self) -> String {
        "vi".into()
    }

    fn fit(
        &self,
        model: &dyn GenerativeModel,
        data: &Dataset,
        draws: usize,
        rng: &mut Stream,
    ) -> Result<Fit> {
        check_draws(draws)?;
        let (q, density) = self.approximate(model, data, rng)?;
        let sd: Vec<f64> = q.log_sd.iter().map(|w| w.exp()).collect();
        let mut fit = Fit {
            scalar: Vec::with_capacity(draws),
            params: Vec::with_capacity(draws),
            meta: FitMeta {
                elbo: Some(q.elbo),
                ..Default::default()
            },
        };
        let mut x = vec![0.0; q.mean.len()];
        for _ in 0..draws {
            for i in 0..x.len() {
                let e: f64 = StandardNormal.sample(rng);
                x[i] = q.mean[i] + sd[i] * e;
            }
            let params = density.to_parameters(&x);
            fit.scalar.push(model.extract_scalar(&params));
            fit.params.push(params);
        }
        if fit.scalar.iter().any(|v| !v.is_finite()) {
            return Err(Error::SamplerFailed {
                sampler: self.name(),
                reason: "non-finite draw".into(),
            });
        }
        Ok(fit)
    }
}
