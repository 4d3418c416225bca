use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_finite, Dataset, GenerativeModel, LogDensity, Parameterization, ScalarLabel};
use crate::analytic::{self, GaussianLaw};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// `theta ~ normal(0, 1)`, `y_i | theta ~ normal(theta, 1)` for `i = 1..N`.
#[derive(Debug, Clone)]
pub struct ConjugateNormalModel {
    n_obs: usize,
}

impl ConjugateNormalModel {
    pub fn new(n_obs: usize) -> Result<Self> {
        if n_obs == 0 {
            return Err(Error::invalid("conjugate normal model needs N >= 1"));
        }
        Ok(ConjugateNormalModel { n_obs })
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }
}

impl GenerativeModel for ConjugateNormalModel {
    fn name(&self) -> &'static str {
        "conjugate-normal"
    }

    fn parameter_dimension(&self) -> usize {
        1
    }

    fn scalar_label(&self) -> ScalarLabel {
        ScalarLabel::Theta
    }

    fn prior_sample(&self, rng: &mut Stream) -> Vec<f64> {
        vec![StandardNormal.sample(rng)]
    }

    fn simulate_data(&self, params: &[f64], rng: &mut Stream) -> Result<Dataset> {
        check_finite(self.name(), params, 1)?;
        let theta = params[0];
        let values = (0..self.n_obs)
            .map(|_| theta + rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Dataset::vector(values))
    }

    fn extract_scalar(&self, params: &[f64]) -> f64 {
        params[0]
    }

    fn posterior_density(
        &self,
        data: &Dataset,
        _parameterization: Parameterization,
    ) -> Result<Box<dyn LogDensity + '_>> {
        if data.len() != self.n_obs {
            return Err(Error::ShapeMismatch(format!(
                "expected {} observations, got {}",
                self.n_obs,
                data.len()
            )));
        }
        Ok(Box::new(ConjugateDensity {
            sum: data.values.iter().sum(),
            n: data.len() as f64,
        }))
    }

    fn exact_posterior(&self, data: &Dataset) -> Result<GaussianLaw> {
        if data.len() != self.n_obs {
            return Err(Error::ShapeMismatch(format!(
                "expected {} observations, got {}",
                self.n_obs,
                data.len()
            )));
        }
        analytic::conjugate_posterior(&data.values)
    }
}

struct ConjugateDensity {
    sum: f64,
    n: f64,
}

impl LogDensity for ConjugateDensity {
    fn dim(&self) -> usize {
        1
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = x[0];
        // sum_i (y_i - t)^2 = const - 2 t sum + n t^2
        grad[0] = -t + self.sum - self.n * t;
        -0.5 * t * t + self.sum * t - 0.5 * self.n * t * t
    }

    fn to_parameters(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}
