//! Flat TOML experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use sbcal::model::{
    ConjugateNormalModel, Dataset, EightSchoolsModel, GenerativeModel, NormalNormalModel,
    ScalarLabel, CLASSICAL_GROUP_SDS,
};
use sbcal::recal::ScaleGrid;
use sbcal::sampler::{
    narrow, ExactSampler, HmcSampler, HmcSettings, MeanFieldVi, MeanFieldViSettings,
    PosteriorSampler,
};
use sbcal::sbc::DEFAULT_ALPHAS;

pub const DEFAULT_GRID: &str = "0.50:0.01:5.00";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ConjugateNormal,
    NormalNormal,
    EightSchools,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Exact,
    Hmc,
    Vi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Prior,
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nominal,
    Zscore,
    Locscale,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nominal => "nominal",
            Method::Zscore => "zscore",
            Method::Locscale => "locscale",
        }
    }
}

/// Observed data: a single value or a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observed {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Observed {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Observed::Scalar(v) => vec![*v],
            Observed::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    /// Observations per dataset for the conjugate model.
    pub n_obs: usize,
    /// Prior sd of the data for the normal-normal model.
    pub sigma: f64,
    pub n_groups: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_sds: Option<Vec<f64>>,
    pub mu_prior_scale: f64,
    pub tau_prior_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scalar: Option<String>,

    pub sampler: SamplerKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub narrow_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_sampler: Option<SamplerKind>,
    pub hmc_leapfrog_steps: usize,
    pub hmc_step_size: f64,
    pub hmc_warmup: usize,
    pub hmc_target_accept: f64,
    pub vi_iterations: usize,
    pub vi_mc_samples: usize,
    pub vi_step_size: f64,

    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_d: Option<Observed>,
    #[serde(alias = "L", skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(alias = "S", skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_replications: Option<usize>,

    pub method: Method,
    pub alpha: Vec<f64>,
    pub grid: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_replications: Option<usize>,
    pub in_sample: bool,
    pub write_draws: bool,
    pub hist_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hmc = HmcSettings::default();
        let vi = MeanFieldViSettings::default();
        ExperimentConfig {
            model: ModelKind::ConjugateNormal,
            n_obs: 4,
            sigma: 1.0,
            n_groups: 8,
            group_sds: None,
            mu_prior_scale: 5.0,
            tau_prior_scale: 5.0,
            scalar: None,
            sampler: SamplerKind::Exact,
            narrow_factor: None,
            reference_sampler: None,
            hmc_leapfrog_steps: hmc.leapfrog_steps,
            hmc_step_size: hmc.step_size,
            hmc_warmup: hmc.warmup_iterations,
            hmc_target_accept: hmc.target_accept,
            vi_iterations: vi.iterations,
            vi_mc_samples: vi.mc_gradient_samples,
            vi_step_size: vi.base_step_size,
            mode: Mode::Prior,
            y_d: None,
            replications: None,
            draws: None,
            seed: None,
            eval_replications: None,
            method: Method::Zscore,
            alpha: DEFAULT_ALPHAS.to_vec(),
            grid: DEFAULT_GRID.into(),
            outer_replications: None,
            in_sample: false,
            write_draws: false,
            hist_bins: 20,
            out: None,
        }
    }
}

pub const DEFAULT_REPLICATIONS: usize = 1000;
pub const DEFAULT_DRAWS: usize = 1000;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .context("a seed is required (set `seed` in the config or pass --seed)")
    }

    pub fn replications(&self) -> usize {
        self.replications.unwrap_or(DEFAULT_REPLICATIONS)
    }

    pub fn draws(&self) -> usize {
        self.draws.unwrap_or(DEFAULT_DRAWS)
    }

    pub fn eval_replications(&self) -> usize {
        self.eval_replications
            .unwrap_or_else(|| self.replications())
    }

    pub fn scale_grid(&self) -> Result<ScaleGrid> {
        Ok(ScaleGrid::parse(&self.grid)?)
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        ensure!(
            self.replications() >= 2,
            "replications (L) must be at least 2"
        );
        ensure!(self.draws() >= 2, "draws (S) must be at least 2");
        ensure!(
            self.eval_replications() >= 2,
            "eval_replications must be at least 2"
        );
        ensure!(!self.alpha.is_empty(), "alpha list is empty");
        for &a in &self.alpha {
            ensure!(a > 0.0 && a < 1.0, "alpha must lie in (0, 1), got {a}");
        }
        self.scale_grid()?;
        ensure!(self.hist_bins >= 2, "hist_bins must be at least 2");
        if let Some(f) = self.narrow_factor {
            ensure!(f > 0.0 && f.is_finite(), "narrow_factor must be positive");
        }
        if let Some(r) = self.outer_replications {
            ensure!(r >= 1, "outer_replications must be positive");
        }
        let model = self.build_model()?;
        self.build_sampler()?;
        if self.mode == Mode::Posterior {
            let y = self.observed()?;
            let expected = self.data_len();
            ensure!(
                y.len() == expected,
                "y_d has {} values but {} expects {expected}",
                y.len(),
                model.name()
            );
            self.build_reference()?;
        }
        Ok(())
    }

    fn data_len(&self) -> usize {
        match self.model {
            ModelKind::ConjugateNormal => self.n_obs,
            ModelKind::NormalNormal => 1,
            ModelKind::EightSchools => self.group_sds.as_ref().map_or(self.n_groups, Vec::len),
        }
    }

    fn scalar_label(&self) -> Result<ScalarLabel> {
        let default = match self.model {
            ModelKind::EightSchools => ScalarLabel::Mu,
            _ => ScalarLabel::Theta,
        };
        let label = match &self.scalar {
            Some(s) => ScalarLabel::parse(s)?,
            None => default,
        };
        if self.model != ModelKind::EightSchools && label != ScalarLabel::Theta {
            bail!("one-parameter models only have the scalar `theta`");
        }
        Ok(label)
    }

    pub fn build_model(&self) -> Result<Box<dyn GenerativeModel>> {
        let scalar = self.scalar_label()?;
        Ok(match self.model {
            ModelKind::ConjugateNormal => Box::new(ConjugateNormalModel::new(self.n_obs)?),
            ModelKind::NormalNormal => Box::new(NormalNormalModel::new(self.sigma)?),
            ModelKind::EightSchools => {
                let sds = match &self.group_sds {
                    Some(s) => s.clone(),
                    None => CLASSICAL_GROUP_SDS
                        .iter()
                        .copied()
                        .cycle()
                        .take(self.n_groups)
                        .collect(),
                };
                Box::new(EightSchoolsModel::new(
                    sds,
                    self.mu_prior_scale,
                    self.tau_prior_scale,
                    scalar,
                )?)
            }
        })
    }

    fn hmc_settings(&self) -> HmcSettings {
        HmcSettings {
            leapfrog_steps: self.hmc_leapfrog_steps,
            step_size: self.hmc_step_size,
            warmup_iterations: self.hmc_warmup,
            target_accept: self.hmc_target_accept,
            ..HmcSettings::default()
        }
    }

    fn vi_settings(&self) -> MeanFieldViSettings {
        MeanFieldViSettings {
            iterations: self.vi_iterations,
            mc_gradient_samples: self.vi_mc_samples,
            base_step_size: self.vi_step_size,
            ..MeanFieldViSettings::default()
        }
    }

    fn sampler_of(&self, kind: SamplerKind) -> Result<Box<dyn PosteriorSampler>> {
        Ok(match kind {
            SamplerKind::Exact => {
                ensure!(
                    self.model != ModelKind::EightSchools,
                    "the hierarchical model has no exact sampler; use hmc or vi"
                );
                Box::new(ExactSampler)
            }
            SamplerKind::Hmc => Box::new(HmcSampler::new(self.hmc_settings())?),
            SamplerKind::Vi => Box::new(MeanFieldVi::new(self.vi_settings())?),
        })
    }

    /// The fitted sampler, narrowed when `narrow_factor` is set.
    pub fn build_sampler(&self) -> Result<Box<dyn PosteriorSampler>> {
        let base = self.sampler_of(self.sampler)?;
        Ok(match self.narrow_factor {
            Some(f) => Box::new(narrow(base, f)?),
            None => base,
        })
    }

    /// Sampler for posterior-mode starting draws: exact when the model
    /// has a closed form, HMC otherwise.
    pub fn build_reference(&self) -> Result<Box<dyn PosteriorSampler>> {
        let kind = self.reference_sampler.unwrap_or(match self.model {
            ModelKind::EightSchools => SamplerKind::Hmc,
            _ => SamplerKind::Exact,
        });
        self.sampler_of(kind)
    }

    pub fn observed(&self) -> Result<Dataset> {
        let y = self
            .y_d
            .as_ref()
            .context("posterior mode needs observed data y_d")?;
        Ok(Dataset::vector(y.values()))
    }
}
