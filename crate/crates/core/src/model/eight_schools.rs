//! Hierarchical normal model for J groups with known group noise.
//!
//! `mu ~ normal(0, s_mu)`, `tau ~ half-normal(0, s_tau)`,
//! `alpha_j ~ normal(mu, tau)`, `y_j ~ normal(alpha_j, sigma_j)`.
//! The parameter vector is `(mu, tau, alpha_1, ..., alpha_J)`.
//!
//! Both samplers work on `(mu, log tau, ...)`. The centered density keeps the
//! `alpha_j` as coordinates; the non-centered one uses `eta_j` with
//! `alpha_j = mu + tau * eta_j`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_finite, Dataset, GenerativeModel, LogDensity, Parameterization, ScalarLabel};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Standard errors of the classical eight-schools data.
pub const CLASSICAL_GROUP_SDS: [f64; 8] = [15.0, 10.0, 16.0, 11.0, 9.0, 11.0, 10.0, 18.0];

#[derive(Debug, Clone)]
pub struct EightSchoolsModel {
    group_sds: Vec<f64>,
    mu_scale: f64,
    tau_scale: f64,
    scalar: ScalarLabel,
}

impl Default for EightSchoolsModel {
    fn default() -> Self {
        EightSchoolsModel {
            group_sds: CLASSICAL_GROUP_SDS.to_vec(),
            mu_scale: 5.0,
            tau_scale: 5.0,
            scalar: ScalarLabel::Mu,
        }
    }
}

impl EightSchoolsModel {
    pub fn new(
        group_sds: Vec<f64>,
        mu_scale: f64,
        tau_scale: f64,
        scalar: ScalarLabel,
    ) -> Result<Self> {
        if group_sds.is_empty() {
            return Err(Error::invalid(
                "hierarchical model needs at least one group",
            ));
        }
        if group_sds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("group sds must be positive and finite"));
        }
        for (name, v) in [("mu", mu_scale), ("tau", tau_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} prior scale must be positive"
                )));
            }
        }
        match scalar {
            ScalarLabel::Mu | ScalarLabel::Tau => {}
            ScalarLabel::Alpha(j) if j <= group_sds.len() => {}
            other => {
                return Err(Error::invalid(format!(
                    "scalar `{other}` is not a parameter of a {}-group model",
                    group_sds.len()
                )))
            }
        }
        Ok(EightSchoolsModel {
            group_sds,
            mu_scale,
            tau_scale,
            scalar,
        })
    }

    /// `J` groups whose sds cycle through the classical values.
    pub fn with_groups(n_groups: usize, scalar: ScalarLabel) -> Result<Self> {
        let sds = CLASSICAL_GROUP_SDS
            .iter()
            .copied()
            .cycle()
            .take(n_groups)
            .collect();
        Self::new(sds, 5.0, 5.0, scalar)
    }

    pub fn n_groups(&self) -> usize {
        self.group_sds.len()
    }

    pub fn group_sds(&self) -> &[f64] {
        &self.group_sds
    }

    pub fn hyperprior_scales(&self) -> (f64, f64) {
        (self.mu_scale, self.tau_scale)
    }

    fn validate(&self, params: &[f64]) -> Result<()> {
        check_finite(self.name(), params, self.parameter_dimension())?;
        if params[1] < 0.0 {
            return Err(Error::InvalidParameters {
                model: self.name().into(),
                reason: format!("tau must be nonnegative, got {}", params[1]),
            });
        }
        Ok(())
    }
}

impl GenerativeModel for EightSchoolsModel {
    fn name(&self) -> &'static str {
        "eight-schools"
    }

    fn parameter_dimension(&self) -> usize {
        self.group_sds.len() + 2
    }

    fn scalar_label(&self) -> ScalarLabel {
        self.scalar
    }

    fn prior_sample(&self, rng: &mut Stream) -> Vec<f64> {
        let mut z = || -> f64 { StandardNormal.sample(rng) };
        let mu = self.mu_scale * z();
        let tau = (self.tau_scale * z()).abs();
        let mut params = Vec::with_capacity(self.parameter_dimension());
        params.push(mu);
        params.push(tau);
        params.extend((0..self.group_sds.len()).map(|_| mu + tau * z()));
        params
    }

    fn simulate_data(&self, params: &[f64], rng: &mut Stream) -> Result<Dataset> {
        self.validate(params)?;
        let values = params[2..]
            .iter()
            .zip(&self.group_sds)
            .map(|(alpha, sd)| alpha + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Dataset::vector(values))
    }

    fn extract_scalar(&self, params: &[f64]) -> f64 {
        match self.scalar {
            ScalarLabel::Mu | ScalarLabel::Theta => params[0],
            ScalarLabel::Tau => params[1],
            ScalarLabel::Alpha(j) => params[1 + j],
        }
    }

    fn posterior_density(
        &self,
        data: &Dataset,
        parameterization: Parameterization,
    ) -> Result<Box<dyn LogDensity + '_>> {
        if data.len() != self.group_sds.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} group estimates, got {}",
                self.group_sds.len(),
                data.len()
            )));
        }
        Ok(Box::new(HierarchicalDensity {
            y: data.values.clone(),
            precision: self.group_sds.iter().map(|s| 1.0 / (s * s)).collect(),
            mu_precision: 1.0 / (self.mu_scale * self.mu_scale),
            tau_precision: 1.0 / (self.tau_scale * self.tau_scale),
            parameterization,
        }))
    }
}

struct HierarchicalDensity {
    y: Vec<f64>,
    precision: Vec<f64>,
    mu_precision: f64,
    tau_precision: f64,
    parameterization: Parameterization,
}

impl LogDensity for HierarchicalDensity {
    fn dim(&self) -> usize {
        self.y.len() + 2
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mu = x[0];
        let log_tau = x[1];
        let tau = log_tau.exp();
        // hyperpriors plus the log-Jacobian of tau = exp(log_tau)
        let mut lp =
            -0.5 * self.mu_precision * mu * mu - 0.5 * self.tau_precision * tau * tau + log_tau;
        let mut g_mu = -self.mu_precision * mu;
        let mut g_log_tau = -self.tau_precision * tau * tau + 1.0;

        match self.parameterization {
            Parameterization::Centered => {
                let inv_tau2 = (-2.0 * log_tau).exp();
                for j in 0..self.y.len() {
                    let alpha = x[2 + j];
                    let d = alpha - mu;
                    let r = self.y[j] - alpha;
                    lp += -0.5 * d * d * inv_tau2 - log_tau - 0.5 * self.precision[j] * r * r;
                    g_mu += d * inv_tau2;
                    g_log_tau += d * d * inv_tau2 - 1.0;
                    grad[2 + j] = -d * inv_tau2 + self.precision[j] * r;
                }
            }
            Parameterization::NonCentered => {
                for j in 0..self.y.len() {
                    let eta = x[2 + j];
                    let r = self.y[j] - mu - tau * eta;
                    let pr = self.precision[j] * r;
                    lp += -0.5 * eta * eta - 0.5 * pr * r;
                    g_mu += pr;
                    g_log_tau += pr * tau * eta;
                    grad[2 + j] = -eta + pr * tau;
                }
            }
        }
        grad[0] = g_mu;
        grad[1] = g_log_tau;
        lp
    }

    fn to_parameters(&self, x: &[f64]) -> Vec<f64> {
        let mu = x[0];
        let tau = x[1].exp();
        let mut params = Vec::with_capacity(x.len());
        params.push(mu);
        params.push(tau);
        match self.parameterization {
            Parameterization::Centered => params.extend_from_slice(&x[2..]),
            Parameterization::NonCentered => params.extend(x[2..].iter().map(|e| mu + tau * e)),
        }
        params
    }
}
