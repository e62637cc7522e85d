//! Metropolis-within-Gibbs MCMC for the bias-adjusted model.
//!
//! Both `mu` and `sigma2_theta` have closed-form full conditionals under the
//! model's priors (normal and inverse-gamma respectively), so each sweep
//! draws them exactly and applies univariate adaptive random-walk Metropolis
//! updates to the remaining `2K` sites (`beta_i`, `delta_i`):
//!
//! * `mu | delta, sigma2_theta ~ Normal(m, v)` with
//!   `1/v = 1/sigma_mu^2 + sum_i q_i/sigma2_theta` and
//!   `m = v (mu_mu/sigma_mu^2 + sum_i q_i delta_i / sigma2_theta)`;
//! * `sigma2_theta | delta, mu ~ InvGamma(alpha + K/2, lambda + (1/2) sum_i q_i (delta_i - mu)^2)`;
//! * `beta_i` and `delta_i` are updated by a Gaussian random walk whose step
//!   size adapts during burn-in only (Robbins-Monro on the log step size,
//!   targeting an acceptance rate suited to univariate proposals) and is
//!   frozen afterwards, preserving detailed balance over the retained draws.
//!
//! Chains are deterministic functions of `(seed, settings, data, q)`: chain
//! `c` owns stream `c` of a ChaCha8 generator, so distinct chains and
//! distinct quality vectors may run on any number of workers without
//! affecting results.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    control_arm_log_likelihood, ln_normal_pdf, treatment_arm_log_likelihood, Hyperparameters,
    ParameterState, QualityVector, StudyData,
};
use crate::rng::chain_rng;

/// Sampler configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    /// Number of independent chains.
    pub n_chains: usize,
    /// Burn-in sweeps per chain (adaptation happens here and only here).
    pub n_burnin: usize,
    /// Retained draws per chain.
    pub n_samples: usize,
    /// Keep every `thin`-th post-burn-in sweep.
    pub thin: usize,
    /// Master seed; per-chain streams are derived from it.
    pub seed: u64,
    /// Initial random-walk step size for every `beta_i`.
    pub initial_step_beta: f64,
    /// Initial random-walk step size for every `delta_i`.
    pub initial_step_delta: f64,
    /// Sweeps between step-size adaptations during burn-in.
    pub adapt_window: usize,
    /// Target acceptance rate for the univariate random-walk sites.
    pub target_accept: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_burnin: 5_000,
            n_samples: 20_000,
            thin: 1,
            seed: 42,
            initial_step_beta: 0.5,
            initial_step_delta: 0.5,
            adapt_window: 50,
            target_accept: 0.44,
        }
    }
}

impl McmcSettings {
    /// Checks the structural invariants of the settings.
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::Sampler("n_chains must be >= 1".into()));
        }
        if self.n_samples < 1 {
            return Err(Error::Sampler("n_samples must be >= 1".into()));
        }
        if self.thin < 1 {
            return Err(Error::Sampler("thin must be >= 1".into()));
        }
        if self.adapt_window < 1 {
            return Err(Error::Sampler("adapt_window must be >= 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Sampler(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        for (name, v) in [
            ("initial_step_beta", self.initial_step_beta),
            ("initial_step_delta", self.initial_step_delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Sampler(format!(
                    "{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Random-walk step sizes for every Metropolis site of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
}

/// Everything one chain produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    /// Retained draws of `mu`, length `n_samples`.
    pub mu: Vec<f64>,
    /// Retained draws of `sigma2_theta`, length `n_samples`.
    pub sigma2_theta: Vec<f64>,
    /// Retained draws of `beta`, row-major `[sample][site]`, length `n_samples * K`.
    pub beta: Vec<f64>,
    /// Retained draws of `delta`, row-major `[sample][site]`, length `n_samples * K`.
    pub delta: Vec<f64>,
    /// Post-burn-in acceptance fraction per `beta_i` site.
    pub accept_beta: Vec<f64>,
    /// Post-burn-in acceptance fraction per `delta_i` site.
    pub accept_delta: Vec<f64>,
    /// Step sizes at the end of burn-in.
    pub step_sizes_burnin_end: StepSizes,
    /// Step sizes at the end of the chain (identical to the burn-in values by
    /// construction; recorded separately so the freeze is checkable).
    pub step_sizes_final: StepSizes,
}

/// Posterior draws from all chains for one quality vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    /// Number of studies `K`.
    pub n_studies: usize,
    /// Retained draws per chain.
    pub n_samples: usize,
    pub chains: Vec<ChainSamples>,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// `beta_i` draw for (chain, sample, site).
    pub fn beta_at(&self, chain: usize, sample: usize, site: usize) -> f64 {
        self.chains[chain].beta[sample * self.n_studies + site]
    }

    /// `delta_i` draw for (chain, sample, site).
    pub fn delta_at(&self, chain: usize, sample: usize, site: usize) -> f64 {
        self.chains[chain].delta[sample * self.n_studies + site]
    }

    /// Per-chain views of the `mu` draws.
    pub fn mu_by_chain(&self) -> Vec<&[f64]> {
        self.chains.iter().map(|c| c.mu.as_slice()).collect()
    }

    /// All `mu` draws pooled in chain-major order.
    pub fn pooled_mu(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_chains() * self.n_samples);
        for c in &self.chains {
            out.extend_from_slice(&c.mu);
        }
        out
    }

    /// All `delta_i` draws for study `site`, pooled in chain-major order.
    pub fn pooled_delta(&self, site: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_chains() * self.n_samples);
        for c in &self.chains {
            for s in 0..self.n_samples {
                out.push(c.delta[s * self.n_studies + site]);
            }
        }
        out
    }
}

/// Mean and variance of the full conditional of `mu`.
pub fn mu_conditional(
    state: &ParameterState,
    hyper: &Hyperparameters,
    q: &QualityVector,
) -> (f64, f64) {
    let sm2 = hyper.sigma_mu * hyper.sigma_mu;
    let mut precision = 1.0 / sm2;
    let mut weighted = hyper.mu_mu / sm2;
    for (i, &qi) in q.q.iter().enumerate() {
        precision += qi / state.sigma2_theta;
        weighted += qi * state.delta[i] / state.sigma2_theta;
    }
    let v = 1.0 / precision;
    (v * weighted, v)
}

/// Draws `mu` from its full conditional.
pub fn gibbs_update_mu<R: Rng + ?Sized>(
    state: &ParameterState,
    hyper: &Hyperparameters,
    q: &QualityVector,
    rng: &mut R,
) -> f64 {
    let (m, v) = mu_conditional(state, hyper, q);
    let z: f64 = rng.sample(StandardNormal);
    m + v.sqrt() * z
}

/// Shape and rate of the full conditional of `sigma2_theta`.
pub fn sigma2_conditional(
    state: &ParameterState,
    hyper: &Hyperparameters,
    q: &QualityVector,
) -> (f64, f64) {
    let k = q.len();
    let mut rate = hyper.lambda;
    for (i, &qi) in q.q.iter().enumerate() {
        let d = state.delta[i] - state.mu;
        rate += 0.5 * qi * d * d;
    }
    (hyper.alpha + k as f64 / 2.0, rate)
}

/// Draws `sigma2_theta` from its full conditional (inverse-gamma via the
/// reciprocal of a gamma draw; strictly positive by construction).
pub fn gibbs_update_sigma2<R: Rng + ?Sized>(
    state: &ParameterState,
    hyper: &Hyperparameters,
    q: &QualityVector,
    rng: &mut R,
) -> f64 {
    let (shape, rate) = sigma2_conditional(state, hyper, q);
    let gamma = Gamma::new(shape, 1.0 / rate).expect("conditional shape and rate are positive");
    // A gamma draw can underflow to zero for tiny shapes; redraw in that
    // (measure-zero in practice) case so the result is strictly positive.
    loop {
        let g = gamma.sample(rng);
        if g > 0.0 {
            return 1.0 / g;
        }
    }
}

/// One univariate Metropolis site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    /// Control-arm log-odds of study `i`.
    Beta(usize),
    /// Treatment effect of study `i`.
    Delta(usize),
}

/// The site-local unnormalized log-density: exactly the terms of the full
/// log-posterior that contain the site, evaluated at `value`.
///
/// * `Beta(i)`: both arms of study `i`'s likelihood plus the `beta_i` prior
///   (the control arm depends on `beta_i` alone, the treatment arm on
///   `beta_i + delta_i`).
/// * `Delta(i)`: the treatment-arm likelihood of study `i` plus the
///   `Normal(mu, sigma2_theta / q_i)` prior — the control arm does not
///   involve `delta_i` and is omitted.
pub fn site_log_density(
    site: Site,
    value: f64,
    state: &ParameterState,
    data: &StudyData,
    hyper: &Hyperparameters,
    q: &QualityVector,
) -> f64 {
    match site {
        Site::Beta(i) => {
            let record = &data.studies[i];
            control_arm_log_likelihood(record, value)
                + treatment_arm_log_likelihood(record, value, state.delta[i])
                + ln_normal_pdf(value, hyper.mu_beta, hyper.sigma_beta * hyper.sigma_beta)
        }
        Site::Delta(i) => {
            treatment_arm_log_likelihood(&data.studies[i], state.beta[i], value)
                + ln_normal_pdf(value, state.mu, state.sigma2_theta / q.q[i])
        }
    }
}

/// One random-walk Metropolis update of `site`: proposes
/// `value + step * z` with standard normal `z` and accepts with probability
/// `min(1, exp(delta log-density))`. Returns the new value and whether the
/// proposal was accepted (rejections return the old value).
pub fn mh_update_site<R: Rng + ?Sized>(
    site: Site,
    state: &ParameterState,
    data: &StudyData,
    hyper: &Hyperparameters,
    q: &QualityVector,
    step: f64,
    rng: &mut R,
) -> (f64, bool) {
    let current = match site {
        Site::Beta(i) => state.beta[i],
        Site::Delta(i) => state.delta[i],
    };
    let z: f64 = rng.sample(StandardNormal);
    let proposal = current + step * z;
    let log_ratio = site_log_density(site, proposal, state, data, hyper, q)
        - site_log_density(site, current, state, data, hyper, q);
    let accept = log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp();
    if accept {
        (proposal, true)
    } else {
        (current, false)
    }
}

fn empirical_logit(r: u64, n: u64) -> f64 {
    // Half-count continuity correction only when the proportion sits on the
    // boundary of (0, 1).
    let p = if r == 0 || r == n {
        (r as f64 + 0.5) / (n as f64 + 1.0)
    } else {
        r as f64 / n as f64
    };
    (p / (1.0 - p)).ln()
}

/// Data-driven starting point: `beta_i` at the empirical control-arm
/// log-odds, `delta_i` at the empirical log-odds ratio, `mu` at the mean of
/// the initial `delta`, and `sigma2_theta` at their sample variance floored
/// at 0.01. Per-chain overdispersion is added separately (seeded jitter).
pub fn initial_state(data: &StudyData) -> ParameterState {
    let k = data.n_studies();
    let mut beta = Vec::with_capacity(k);
    let mut delta = Vec::with_capacity(k);
    for s in &data.studies {
        let b = empirical_logit(s.r_control, s.n_control);
        let t = empirical_logit(s.r_treatment, s.n_treatment);
        beta.push(b);
        delta.push(t - b);
    }
    let mu = delta.iter().sum::<f64>() / k as f64;
    let var = if k > 1 {
        delta.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / (k - 1) as f64
    } else {
        0.0
    };
    ParameterState {
        beta,
        delta,
        mu,
        sigma2_theta: var.max(0.01),
    }
}

/// Which parameter blocks a sweep updates. Only tests restrict this; real
/// runs update everything.
#[derive(Debug, Clone, Copy)]
struct UpdateMask {
    beta: bool,
    delta: bool,
    mu: bool,
    sigma2: bool,
}

impl UpdateMask {
    fn all() -> Self {
        Self {
            beta: true,
            delta: true,
            mu: true,
            sigma2: true,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep_once<R: Rng + ?Sized>(
    state: &mut ParameterState,
    data: &StudyData,
    hyper: &Hyperparameters,
    q: &QualityVector,
    step_beta: &[f64],
    step_delta: &[f64],
    mask: UpdateMask,
    rng: &mut R,
    acc_beta: &mut [u64],
    acc_delta: &mut [u64],
) {
    let k = data.n_studies();
    if mask.beta {
        for i in 0..k {
            let (v, accepted) =
                mh_update_site(Site::Beta(i), state, data, hyper, q, step_beta[i], rng);
            state.beta[i] = v;
            acc_beta[i] += accepted as u64;
        }
    }
    if mask.delta {
        for i in 0..k {
            let (v, accepted) =
                mh_update_site(Site::Delta(i), state, data, hyper, q, step_delta[i], rng);
            state.delta[i] = v;
            acc_delta[i] += accepted as u64;
        }
    }
    if mask.mu {
        state.mu = gibbs_update_mu(state, hyper, q, rng);
    }
    if mask.sigma2 {
        state.sigma2_theta = gibbs_update_sigma2(state, hyper, q, rng);
    }
}

/// Runs all chains for one quality vector.
///
/// Each chain: start from the empirical initial state plus seeded
/// overdispersion jitter (`Normal(0, 0.1^2)` added to every `beta_i`,
/// `delta_i`, and `mu`, and to `ln sigma2_theta`), then sweep
/// `{beta sites, delta sites, Gibbs mu, Gibbs sigma2_theta}` for
/// `n_burnin + n_samples * thin` iterations, adapting Metropolis step sizes
/// during burn-in only and retaining every `thin`-th post-burn-in state.
/// Deterministic given `(seed, settings, data, q)`.
pub fn run_chain(
    data: &StudyData,
    hyper: &Hyperparameters,
    q: &QualityVector,
    settings: &McmcSettings,
) -> Result<PosteriorSamples> {
    run_chain_masked(data, hyper, q, settings, UpdateMask::all(), None)
}

fn run_chain_masked(
    data: &StudyData,
    hyper: &Hyperparameters,
    q: &QualityVector,
    settings: &McmcSettings,
    mask: UpdateMask,
    init_override: Option<&ParameterState>,
) -> Result<PosteriorSamples> {
    settings.validate()?;
    data.validate()?;
    hyper.validate()?;
    q.validate()?;
    let k = data.n_studies();
    if q.len() != k {
        return Err(Error::Sampler(format!(
            "quality vector has {} components but the data has {} studies",
            q.len(),
            k
        )));
    }

    let base = match init_override {
        Some(s) => s.clone(),
        None => initial_state(data),
    };
    let total_kept_sweeps = settings.n_samples * settings.thin;

    let mut chains = Vec::with_capacity(settings.n_chains);
    for chain_idx in 0..settings.n_chains {
        let mut rng = chain_rng(settings.seed, chain_idx as u64);
        let mut state = base.clone();
        if init_override.is_none() {
            for b in state.beta.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *b += 0.1 * z;
            }
            for d in state.delta.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *d += 0.1 * z;
            }
            let z: f64 = rng.sample(StandardNormal);
            state.mu += 0.1 * z;
            let z: f64 = rng.sample(StandardNormal);
            state.sigma2_theta = (state.sigma2_theta.ln() + 0.1 * z).exp();
        }

        let mut step_beta = vec![settings.initial_step_beta; k];
        let mut step_delta = vec![settings.initial_step_delta; k];
        let mut win_beta = vec![0u64; k];
        let mut win_delta = vec![0u64; k];
        let mut window_index = 0u64;

        for sweep in 0..settings.n_burnin {
            sweep_once(
                &mut state,
                data,
                hyper,
                q,
                &step_beta,
                &step_delta,
                mask,
                &mut rng,
                &mut win_beta,
                &mut win_delta,
            );
            if (sweep + 1) % settings.adapt_window == 0 {
                window_index += 1;
                // Robbins-Monro on the log step size with gain 1/sqrt(window).
                let gain = 1.0 / (window_index as f64).sqrt();
                let w = settings.adapt_window as f64;
                for i in 0..k {
                    let rate = win_beta[i] as f64 / w;
                    step_beta[i] =
                        (step_beta[i].ln() + gain * (rate - settings.target_accept)).exp();
                    win_beta[i] = 0;
                    let rate = win_delta[i] as f64 / w;
                    step_delta[i] =
                        (step_delta[i].ln() + gain * (rate - settings.target_accept)).exp();
                    win_delta[i] = 0;
                }
            }
        }
        let step_sizes_burnin_end = StepSizes {
            beta: step_beta.clone(),
            delta: step_delta.clone(),
        };

        let mut mu_draws = Vec::with_capacity(settings.n_samples);
        let mut sigma2_draws = Vec::with_capacity(settings.n_samples);
        let mut beta_draws = Vec::with_capacity(settings.n_samples * k);
        let mut delta_draws = Vec::with_capacity(settings.n_samples * k);
        let mut acc_beta = vec![0u64; k];
        let mut acc_delta = vec![0u64; k];
        for sweep in 0..total_kept_sweeps {
            sweep_once(
                &mut state,
                data,
                hyper,
                q,
                &step_beta,
                &step_delta,
                mask,
                &mut rng,
                &mut acc_beta,
                &mut acc_delta,
            );
            if (sweep + 1) % settings.thin == 0 {
                mu_draws.push(state.mu);
                sigma2_draws.push(state.sigma2_theta);
                beta_draws.extend_from_slice(&state.beta);
                delta_draws.extend_from_slice(&state.delta);
            }
        }
        let denom = total_kept_sweeps as f64;
        chains.push(ChainSamples {
            mu: mu_draws,
            sigma2_theta: sigma2_draws,
            beta: beta_draws,
            delta: delta_draws,
            accept_beta: acc_beta.iter().map(|&a| a as f64 / denom).collect(),
            accept_delta: acc_delta.iter().map(|&a| a as f64 / denom).collect(),
            step_sizes_burnin_end,
            step_sizes_final: StepSizes {
                beta: step_beta,
                delta: step_delta,
            },
        });
    }

    Ok(PosteriorSamples {
        n_studies: k,
        n_samples: settings.n_samples,
        chains,
    })
}
