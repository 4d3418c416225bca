//! Static-trajectory Hamiltonian Monte Carlo with an identity mass matrix.
//!
//! The number of leapfrog steps is fixed; the step size is tuned during
//! warmup by dual averaging toward a target acceptance rate and then frozen.
//! Each iteration jitters the frozen step size uniformly by
//! `±step_jitter` to break periodic trajectories. Hierarchical models are
//! sampled in their non-centered coordinates.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_draws, Fit, FitMeta, PosteriorSampler};
use crate::error::{Error, Result};
use crate::model::{Dataset, GenerativeModel, LogDensity, Parameterization};
use crate::rng::Stream;

/// Energy error beyond which a trajectory counts as divergent.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcSettings {
    pub leapfrog_steps: usize,
    /// Initial step size; warmup adapts it.
    pub step_size: f64,
    pub warmup_iterations: usize,
    pub target_accept: f64,
    pub step_jitter: f64,
    /// Fraction of divergent post-warmup iterations that flags a fit.
    pub max_divergence_fraction: f64,
}

impl Default for HmcSettings {
    fn default() -> Self {
        HmcSettings {
            leapfrog_steps: 20,
            step_size: 0.1,
            warmup_iterations: 500,
            target_accept: 0.8,
            step_jitter: 0.1,
            max_divergence_fraction: 0.01,
        }
    }
}

impl HmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.leapfrog_steps == 0 {
            return Err(Error::invalid("leapfrog_steps must be positive"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return Err(Error::invalid("step_jitter must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct HmcSampler {
    pub settings: HmcSettings,
}

impl HmcSampler {
    pub fn new(settings: HmcSettings) -> Result<Self> {
        settings.validate()?;
        Ok(HmcSampler { settings })
    }
}

/// Nesterov dual averaging of the log step size.
struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    count: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps).ln(),
            h_bar: 0.0,
            log_eps: eps.ln(),
            log_eps_bar: 0.0,
            count: 0.0,
            target,
        }
    }

    fn update(&mut self, accept_prob: f64) -> f64 {
        self.count += 1.0;
        let w = 1.0 / (self.count + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - self.count.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.count.powf(-Self::KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        self.log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

struct State {
    x: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
}

fn initial_state(density: &dyn LogDensity, rng: &mut Stream) -> Result<State> {
    let d = density.dim();
    for _ in 0..100 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut grad = vec![0.0; d];
        let lp = density.log_density_and_grad(&x, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(State { x, grad, lp });
        }
    }
    Err(Error::SamplerFailed {
        sampler: "hmc".into(),
        reason: "no finite initial point found".into(),
    })
}

/// One HMC transition. Returns the acceptance probability and whether the
/// trajectory diverged; `state` is updated in place on acceptance.
fn transition(
    density: &dyn LogDensity,
    state: &mut State,
    eps: f64,
    steps: usize,
    rng: &mut Stream,
) -> (f64, bool) {
    let d = state.x.len();
    let mut p: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let h0 = -state.lp + 0.5 * p.iter().map(|v| v * v).sum::<f64>();

    let mut x = state.x.clone();
    let mut grad = state.grad.clone();
    let mut lp = state.lp;
    for (pi, gi) in p.iter_mut().zip(&grad) {
        *pi += 0.5 * eps * gi;
    }
    for step in 0..steps {
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += eps * pi;
        }
        lp = density.log_density_and_grad(&x, &mut grad);
        if !lp.is_finite() {
            break;
        }
        let scale = if step + 1 == steps { 0.5 } else { 1.0 };
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += scale * eps * gi;
        }
    }
    let h1 = -lp + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let delta = h1 - h0;
    if !delta.is_finite() || delta > DIVERGENCE_THRESHOLD {
        return (0.0, true);
    }
    let accept_prob = (-delta).exp().min(1.0);
    if rng.random::<f64>() < accept_prob {
        state.x = x;
        state.grad = grad;
        state.lp = lp;
    }
    (accept_prob, false)
}

impl PosteriorSampler for HmcSampler {
    fn name(&self) -> String {
        "hmc".into()
    }

    fn fit(
        &self,
        model: &dyn GenerativeModel,
        data: &Dataset,
        draws: usize,
        rng: &mut Stream,
    ) -> Result<Fit> {
        check_draws(draws)?;
        let s = &self.settings;
        s.validate()?;
        let density = model.posterior_density(data, Parameterization::NonCentered)?;
        let mut state = initial_state(density.as_ref(), rng)?;

        let mut eps = s.step_size;
        let mut adapt = DualAveraging::new(eps, s.target_accept);
        for _ in 0..s.warmup_iterations {
            let jittered = eps * (1.0 + s.step_jitter * rng.random_range(-1.0..=1.0));
            let (a, _) = transition(
                density.as_ref(),
                &mut state,
                jittered,
                s.leapfrog_steps,
                rng,
            );
            eps = adapt.update(a);
        }
        if s.warmup_iterations > 0 {
            eps = adapt.final_step();
        }

        let mut fit = Fit {
            scalar: Vec::with_capacity(draws),
            params: Vec::with_capacity(draws),
            meta: FitMeta::default(),
        };
        let mut accept_sum = 0.0;
        for _ in 0..draws {
            let jittered = eps * (1.0 + s.step_jitter * rng.random_range(-1.0..=1.0));
            let (a, divergent) = transition(
                density.as_ref(),
                &mut state,
                jittered,
                s.leapfrog_steps,
                rng,
            );
            accept_sum += a;
            fit.meta.divergences += usize::from(divergent);
            let params = density.to_parameters(&state.x);
            fit.scalar.push(model.extract_scalar(&params));
            fit.params.push(params);
        }
        fit.meta.accept_rate = Some(accept_sum / draws as f64);
        fit.meta.step_size = Some(eps);
        fit.meta.flagged = fit.meta.divergences as f64 > s.max_divergence_fraction * draws as f64;
        if fit.scalar.iter().any(|v| !v.is_finite()) {
            return Err(Error::SamplerFailed {
                sampler: self.name(),
                reason: "non-finite draw".into(),
            });
        }
        Ok(fit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConjugateNormalModel, EightSchoolsModel};
    use crate::rng::stream;
    use crate::stats::{effective_sample_size, mean_and_sd};

    #[test]
    fn recovers_conjugate_posterior() {
        let m = ConjugateNormalModel::new(1).unwrap();
        let y = Dataset::vector(vec![0.0]);
        let fit = HmcSampler::default()
            .fit(&m, &y, 4000, &mut stream(61, &[]))
            .unwrap();
        assert_eq!(fit.scalar.len(), 4000);
        let (mean, sd) = mean_and_sd(&fit.scalar);
        let ess = effective_sample_size(&fit.scalar);
        let target_sd = 0.5f64.sqrt();
        assert!(
            mean.abs() < 4.0 * target_sd / ess.sqrt(),
            "mean {mean}, ess {ess}"
        );
        assert!(
            (sd - target_sd).abs() < 4.0 * target_sd / (2.0 * ess).sqrt(),
            "sd {sd}"
        );
        let acc = fit.meta.accept_rate.unwrap();
        assert!(acc > 0.6, "{acc}");
    }

    #[test]
    fn rejects_zero_step() {
        let settings = HmcSettings {
            step_size: 0.0,
            ..Default::default()
        };
        assert!(HmcSampler::new(settings.clone()).is_err());
        let m = ConjugateNormalModel::new(1).unwrap();
        let s = HmcSampler { settings };
        assert!(s
            .fit(&m, &Dataset::vector(vec![0.0]), 10, &mut stream(1, &[]))
            .is_err());
    }

    #[test]
    fn deterministic_given_stream() {
        let m = EightSchoolsModel::default();
        let y = Dataset::vector(vec![28.0, 8.0, -3.0, 7.0, -1.0, 1.0, 18.0, 12.0]);
        let sampler = HmcSampler::default();
        let a = sampler.fit(&m, &y, 200, &mut stream(9, &[])).unwrap();
        let b = sampler.fit(&m, &y, 200, &mut stream(9, &[])).unwrap();
        assert_eq!(a.scalar, b.scalar);
        assert_eq!(a.params.len(), 200);
        assert!(a.params.iter().all(|p| p.len() == 10 && p[1] >= 0.0));
    }

    #[test]
    fn classical_eight_schools_mu() {
        // With mu ~ N(0, 5) the classical data pull mu to roughly 4 +/- 3.
        let m = EightSchoolsModel::default();
        let y = Dataset::vector(vec![28.0, 8.0, -3.0, 7.0, -1.0, 1.0, 18.0, 12.0]);
        let fit = HmcSampler::default()
            .fit(&m, &y, 4000, &mut stream(62, &[]))
            .unwrap();
        let (mean, sd) = mean_and_sd(&fit.scalar);
        assert!(mean > 2.0 && mean < 6.0, "{mean}");
        assert!(sd > 2.0 && sd < 4.5, "{sd}");
        assert!(!fit.meta.flagged, "{:?}", fit.meta);
    }
}
