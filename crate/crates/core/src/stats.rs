//! Small numerical helpers shared by the diagnostics and samplers.

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, var.sqrt())
}

/// Empirical quantile of already sorted values, order statistics with linear
/// interpolation (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Central `(1 - alpha)` interval of a sample.
pub fn central_interval(sorted: &[f64], alpha: f64) -> (f64, f64) {
    (
        quantile_sorted(sorted, alpha / 2.0),
        quantile_sorted(sorted, 1.0 - alpha / 2.0),
    )
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Effective sample size of a single chain, using the initial monotone
/// positive sequence estimator on the autocovariances.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(chain);
    let acov = |lag: usize| -> f64 {
        chain[..n - lag]
            .iter()
            .zip(&chain[lag..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum::<f64>()
            / n as f64
    };
    let c0 = acov(0);
    if c0 <= 0.0 {
        return n as f64;
    }
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = (acov(lag) + acov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    (n as f64 / tau.max(1e-12)).min(n as f64 * (n as f64).log10().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&s, 1.0 / 3.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn population_sd_divides_by_n() {
        assert!((population_sd(&[0.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(population_sd(&[5.0]), 0.0);
    }

    #[test]
    fn ess_of_iid_is_near_n() {
        use rand::Rng;
        let mut rng = crate::rng::stream(1, &[]);
        let xs: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 3000.0 && ess < 5500.0, "{ess}");
    }

    #[test]
    fn ess_of_sticky_chain_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i / 50) as f64).collect();
        assert!(effective_sample_size(&xs) < 50.0);
    }
}
