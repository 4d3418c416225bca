use super::{check_draws, Fit, PosteriorSampler};
use crate::analytic::GaussianLaw;
use crate::error::{Error, Result};
use crate::model::{ConjugateNormalModel, Dataset, GenerativeModel, NormalNormalModel};
use crate::rng::Stream;

/// Independent draws from a model's closed-form posterior.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactSampler;

impl PosteriorSampler for ExactSampler {
    fn name(&self) -> String {
        "exact".into()
    }

    fn fit(
        &self,
        model: &dyn GenerativeModel,
        data: &Dataset,
        draws: usize,
        rng: &mut Stream,
    ) -> Result<Fit> {
        check_draws(draws)?;
        let law = model.exact_posterior(data)?;
        Ok(iid_fit(law, draws, rng))
    }
}

fn iid_fit(law: GaussianLaw, draws: usize, rng: &mut Stream) -> Fit {
    let scalar: Vec<f64> = (0..draws).map(|_| law.sample(rng)).collect();
    let params = scalar.iter().map(|&t| vec![t]).collect();
    Fit {
        scalar,
        params,
        meta: Default::default(),
    }
}

pub fn fit_exact_conjugate(
    model: &ConjugateNormalModel,
    y: &Dataset,
    draws: usize,
    rng: &mut Stream,
) -> Result<Fit> {
    if y.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    ExactSampler.fit(model, y, draws, rng)
}

pub fn fit_normal_normal_exact(
    model: &NormalNormalModel,
    y: f64,
    draws: usize,
    rng: &mut Stream,
) -> Result<Fit> {
    ExactSampler.fit(model, &Dataset::scalar(y), draws, rng)
}
