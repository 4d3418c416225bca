//! Posterior samplers.

mod exact;
mod hmc;
mod narrow;
mod vi;

pub use exact::{fit_exact_conjugate, fit_normal_normal_exact, ExactSampler};
pub use hmc::{HmcSampler, HmcSettings};
pub use narrow::{narrow, NarrowedSampler};
pub use vi::{MeanFieldVi, MeanFieldViSettings};

use std::fmt;

use crate::error::Result;
use crate::model::{Dataset, GenerativeModel};
use crate::rng::Stream;

/// Draws produced by one fit.
#[derive(Debug, Clone, Default)]
pub struct Fit {
    /// S draws of the scalar of interest.
    pub scalar: Vec<f64>,
    /// S full parameter vectors, when the sampler tracks them.
    pub params: Vec<Vec<f64>>,
    pub meta: FitMeta,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitMeta {
    pub accept_rate: Option<f64>,
    pub step_size: Option<f64>,
    pub divergences: usize,
    /// Set when divergences exceed the sampler's tolerated fraction.
    pub flagged: bool,
    pub elbo: Option<f64>,
}

pub trait PosteriorSampler: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// Returns exactly `draws` finite scalar draws targeting `p(theta | data)`.
    fn fit(
        &self,
        model: &dyn GenerativeModel,
        data: &Dataset,
        draws: usize,
        rng: &mut Stream,
    ) -> Result<Fit>;
}

pub(crate) fn check_draws(draws: usize) -> Result<()> {
    if draws == 0 {
        Err(crate::error::Error::invalid(
            "number of draws must be positive",
        ))
    } else {
        Ok(())
    }
}
