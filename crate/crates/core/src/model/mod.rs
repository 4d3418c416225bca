//! Generative models: prior, data simulator and scalar of interest.
//!
//! Each model also exposes its unnormalized log posterior on an
//! unconstrained space, which the gradient-based samplers consume.

mod conjugate;
mod eight_schools;
mod normal_normal;

use std::fmt;

pub use conjugate::ConjugateNormalModel;
pub use eight_schools::{EightSchoolsModel, CLASSICAL_GROUP_SDS};
pub use normal_normal::NormalNormalModel;

use crate::analytic::GaussianLaw;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Observed or simulated data: a flat vector plus its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Dataset {
    pub fn vector(values: Vec<f64>) -> Self {
        let shape = vec![values.len()];
        Dataset { values, shape }
    }

    pub fn scalar(value: f64) -> Self {
        Dataset {
            values: vec![value],
            shape: vec![1],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Coordinates used when a model is handed to a gradient-based sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    Centered,
    NonCentered,
}

/// Unnormalized log posterior on an unconstrained space.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Maps an unconstrained point back to the model's parameter vector.
    fn to_parameters(&self, x: &[f64]) -> Vec<f64>;
}

/// The scalar of interest `theta = g(Theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarLabel {
    Theta,
    Mu,
    Tau,
    /// A local parameter, 1-based as in `alpha[3]`.
    Alpha(usize),
}

impl ScalarLabel {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "theta" => return Ok(ScalarLabel::Theta),
            "mu" => return Ok(ScalarLabel::Mu),
            "tau" => return Ok(ScalarLabel::Tau),
            _ => {}
        }
        let idx = s
            .strip_prefix("alpha[")
            .and_then(|r| r.strip_suffix(']'))
            .or_else(|| s.strip_prefix("alpha_"))
            .ok_or_else(|| Error::Config(format!("unknown scalar label `{s}`")))?;
        let j: usize = idx
            .parse()
            .map_err(|_| Error::Config(format!("bad local index in `{s}`")))?;
        if j == 0 {
            return Err(Error::Config("local indices are 1-based".into()));
        }
        Ok(ScalarLabel::Alpha(j))
    }
}

impl fmt::Display for ScalarLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarLabel::Theta => f.write_str("theta"),
            ScalarLabel::Mu => f.write_str("mu"),
            ScalarLabel::Tau => f.write_str("tau"),
            ScalarLabel::Alpha(j) => write!(f, "alpha[{j}]"),
        }
    }
}

pub trait GenerativeModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Length of the parameter vector `Theta`.
    fn parameter_dimension(&self) -> usize;

    fn scalar_label(&self) -> ScalarLabel;

    fn prior_sample(&self, rng: &mut Stream) -> Vec<f64>;

    fn simulate_data(&self, params: &[f64], rng: &mut Stream) -> Result<Dataset>;

    fn extract_scalar(&self, params: &[f64]) -> f64;

    fn posterior_density(
        &self,
        data: &Dataset,
        parameterization: Parameterization,
    ) -> Result<Box<dyn LogDensity + '_>>;

    /// Closed-form posterior of the scalar of interest, when one exists.
    /// Only meaningful for one-parameter models where `Theta = theta`.
    fn exact_posterior(&self, data: &Dataset) -> Result<GaussianLaw> {
        let _ = data;
        Err(Error::NoClosedForm(self.name().to_string()))
    }
}

pub(crate) fn check_finite(model: &str, params: &[f64], expected: usize) -> Result<()> {
    if params.len() != expected {
        return Err(Error::InvalidParameters {
            model: model.into(),
            reason: format!("expected {expected} parameters, got {}", params.len()),
        });
    }
    if let Some(i) = params.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameters {
            model: model.into(),
            reason: format!("parameter {i} is not finite"),
        });
    }
    Ok(())
}
