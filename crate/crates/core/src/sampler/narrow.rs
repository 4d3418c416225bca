use super::{Fit, PosteriorSampler};
use crate::error::{Error, Result};
use crate::model::{Dataset, GenerativeModel};
use crate::rng::Stream;
use crate::stats::mean;

/// Shrinks an inner sampler's draws toward their mean by a fixed factor.
#[derive(Debug)]
pub struct NarrowedSampler {
    inner: Box<dyn PosteriorSampler>,
    factor: f64,
}

pub fn narrow(inner: Box<dyn PosteriorSampler>, factor: f64) -> Result<NarrowedSampler> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!(
            "narrowing factor must be positive, got {factor}"
        )));
    }
    Ok(NarrowedSampler { inner, factor })
}

impl NarrowedSampler {
    pub fn factor(&self) -> f64 {
        self.factor
    }
}

/// `mu + (d - mu) / factor` for every draw, `mu` the draw mean.
pub(crate) fn narrow_draws(draws: &mut [f64], factor: f64) {
    let mu = mean(draws);
    for d in draws.iter_mut() {
        *d += (1.0 / factor - 1.0) * (*d - mu);
    }
}

impl PosteriorSampler for NarrowedSampler {
    fn name(&self) -> String {
        format!("{}/narrow({})", self.inner.name(), self.factor)
    }

    fn fit(
        &self,
        model: &dyn GenerativeModel,
        data: &Dataset,
        draws: usize,
        rng: &mut Stream,
    ) -> Result<Fit> {
        let mut fit = self.inner.fit(model, data, draws, rng)?;
        narrow_draws(&mut fit.scalar, self.factor);
        // full parameter draws only stay meaningful when Theta is the scalar itself
        fit.params = if model.parameter_dimension() == 1 {
            fit.scalar.iter().map(|&t| vec![t]).collect()
        } else {
            Vec::new()
        };
        Ok(fit)
    }
}
