use rand_distr::{Distribution, StandardNormal};

use super::{check_finite, Dataset, GenerativeModel, LogDensity, Parameterization, ScalarLabel};
use crate::analytic::{self, GaussianLaw};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// `theta ~ normal(0, 1)`, `y | theta ~ normal(theta, sigma)` with known `sigma`.
#[derive(Debug, Clone)]
pub struct NormalNormalModel {
    sigma: f64,
}

impl NormalNormalModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(NormalNormalModel { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl GenerativeModel for NormalNormalModel {
    fn name(&self) -> &'static str {
        "normal-normal"
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
        let z: f64 = StandardNormal.sample(rng);
        Ok(Dataset::scalar(params[0] + self.sigma * z))
    }

    fn extract_scalar(&self, params: &[f64]) -> f64 {
        params[0]
    }

    fn posterior_density(
        &self,
        data: &Dataset,
        _parameterization: Parameterization,
    ) -> Result<Box<dyn LogDensity + '_>> {
        let y = single_observation(data)?;
        Ok(Box::new(NormalNormalDensity {
            y,
            precision: 1.0 / (self.sigma * self.sigma),
        }))
    }

    fn exact_posterior(&self, data: &Dataset) -> Result<GaussianLaw> {
        analytic::normal_normal_posterior(single_observation(data)?, self.sigma)
    }
}

fn single_observation(data: &Dataset) -> Result<f64> {
    if data.len() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "normal-normal model takes one observation, got {}",
            data.len()
        )));
    }
    Ok(data.values[0])
}

struct NormalNormalDensity {
    y: f64,
    precision: f64,
}

impl LogDensity for NormalNormalDensity {
    fn dim(&self) -> usize {
        1
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = x[0];
        let r = self.y - t;
        grad[0] = -t + self.precision * r;
        -0.5 * t * t - 0.5 * self.precision * r * r
    }

    fn to_parameters(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}
