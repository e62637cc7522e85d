//! Posterior summaries of the pooled draws: means, strict exceedance
//! probabilities, and linearly interpolated sample quantiles.

use serde::{Deserialize, Serialize};

use crate::diagnostics::mu_diagnostics;
use crate::error::{Error, Result};
use crate::sampler::PosteriorSamples;

/// Posterior summaries for one quality vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Posterior mean of the pooled effect `mu`.
    pub mean_mu: f64,
    /// `(threshold, P(mu > threshold))` pairs, strict exceedance.
    pub exceedance: Vec<(f64, f64)>,
    /// `(level, quantile)` pairs of the pooled `mu` draws.
    pub percentiles_mu: Vec<(f64, f64)>,
    /// Posterior mean of each study effect `delta_i`.
    pub mean_delta: Vec<f64>,
    /// Per-study `(level, quantile)` pairs, same levels as `percentiles_mu`.
    pub percentiles_delta: Vec<Vec<(f64, f64)>>,
    /// Effective sample size of the pooled `mu` draws.
    #[serde(with = "crate::persist::nan_as_null")]
    pub ess_mu: f64,
    /// Split potential scale reduction of the `mu` draws.
    #[serde(with = "crate::persist::nan_as_null")]
    pub rhat_mu: f64,
}

/// Linearly interpolated sample quantile (the "type 7" rule: with `n`
/// sorted points, the `p`-quantile sits at fractional index `(n - 1) p`).
///
/// Expects `sorted` ascending and non-empty, and `p` in `[0, 1]`.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    assert!(
        (0.0..=1.0).contains(&p),
        "quantile level {p} outside [0, 1]"
    );
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = h - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn summarize_draws(draws: &[f64], levels: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    levels
        .iter()
        .map(|&p| (p, quantile_type7(&sorted, p)))
        .collect()
}

/// Summarizes pooled posterior draws.
///
/// `thresholds` are exceedance cut points for `mu` (strict `>`); `levels`
/// are quantile levels applied to `mu` and to every `delta_i`. Draws are
/// pooled across chains in chain-major order.
pub fn summarize(
    samples: &PosteriorSamples,
    thresholds: &[f64],
    levels: &[f64],
) -> Result<PosteriorSummary> {
    if samples.chains.is_empty() || samples.n_samples == 0 {
        return Err(Error::Sampler(
            "cannot summarize an empty sample set".into(),
        ));
    }
    for &p in levels {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Sampler(format!("quantile level {p} outside [0, 1]")));
        }
    }

    let mu = samples.pooled_mu();
    let n = mu.len() as f64;
    let exceedance = thresholds
        .iter()
        .map(|&t| (t, mu.iter().filter(|&&x| x > t).count() as f64 / n))
        .collect();
    let percentiles_mu = summarize_draws(&mu, levels);

    let k = samples.n_studies;
    let mut mean_delta = Vec::with_capacity(k);
    let mut percentiles_delta = Vec::with_capacity(k);
    for site in 0..k {
        let d = samples.pooled_delta(site);
        mean_delta.push(mean(&d));
        percentiles_delta.push(summarize_draws(&d, levels));
    }

    let (rhat_mu, ess_mu) = mu_diagnostics(samples);
    Ok(PosteriorSummary {
        mean_mu: mean(&mu),
        exceedance,
        percentiles_mu,
        mean_delta,
        percentiles_delta,
        ess_mu,
        rhat_mu,
    })
}
