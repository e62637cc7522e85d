//! The statistical model: data types, link functions, and the unnormalized
//! log-posterior of the bias-adjusted random-effects meta-analysis model.
//!
//! The model for `K` studies with binary outcomes is
//!
//! ```text
//! r_i1 ~ Binomial(p_i1, N_i1)        logit(p_i1) = beta_i          (control arm)
//! r_i2 ~ Binomial(p_i2, N_i2)        logit(p_i2) = beta_i + delta_i (treatment arm)
//! delta_i | mu, sigma2_theta ~ Normal(mu, sigma2_theta / q_i)
//! beta_i ~ Normal(mu_beta, sigma_beta^2)
//! mu ~ Normal(mu_mu, sigma_mu^2)
//! sigma2_theta ~ InvGamma(alpha, lambda)
//! ```
//!
//! `q_i` in (0, 1] is the quality of study `i`: `q_i = 1` means the study
//! contributes an unbiased estimate of the overall effect (the variance of
//! `delta_i` is exactly the between-study variance), while small `q_i`
//! inflates the variance of `delta_i` by `1/q_i` to absorb suspected bias.
//!
//! Everything in this module is a pure function of its inputs; no sampling
//! logic lives here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Natural log of 2*pi, used by the normal log-density.
const LN_2PI: f64 = 1.8378770664093453;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before taking
/// logs in the likelihood, so extreme random-walk proposals produce large
/// negative log-likelihoods instead of `-inf`/NaN. The clamp is far outside
/// the region any accepted state visits, so Metropolis ratios are unaffected
/// in practice.
const PROB_FLOOR: f64 = 1e-15;

/// Arm counts for a single study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRecord {
    /// Study label, e.g. `"REFLEX"`.
    pub name: String,
    /// Patients in the control arm (`N_i1 >= 1`).
    pub n_control: u64,
    /// Responders in the control arm (`0 <= r_i1 <= N_i1`).
    pub r_control: u64,
    /// Patients in the treatment arm (`N_i2 >= 1`).
    pub n_treatment: u64,
    /// Responders in the treatment arm (`0 <= r_i2 <= N_i2`).
    pub r_treatment: u64,
}

/// The observed evidence: one record per study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyData {
    pub studies: Vec<StudyRecord>,
}

impl StudyData {
    /// Number of studies `K`.
    pub fn n_studies(&self) -> usize {
        self.studies.len()
    }

    /// Checks the structural invariants: `K >= 1`, `N_ij >= 1`, and
    /// `0 <= r_ij <= N_ij` for every study and arm.
    pub fn validate(&self) -> Result<()> {
        if self.studies.is_empty() {
            return Err(Error::Model("no studies: K >= 1 required".into()));
        }
        for s in &self.studies {
            if s.n_control == 0 || s.n_treatment == 0 {
                return Err(Error::Model(format!(
                    "study {}: every arm needs at least one patient",
                    s.name
                )));
            }
            if s.r_control > s.n_control {
                return Err(Error::Model(format!(
                    "study {}: r_control {} exceeds n_control {}",
                    s.name, s.r_control, s.n_control
                )));
            }
            if s.r_treatment > s.n_treatment {
                return Err(Error::Model(format!(
                    "study {}: r_treatment {} exceeds n_treatment {}",
                    s.name, s.r_treatment, s.n_treatment
                )));
            }
        }
        Ok(())
    }
}

/// Hyperparameters of the prior distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// Mean of the `beta_i` prior.
    pub mu_beta: f64,
    /// Standard deviation of the `beta_i` prior (strictly positive).
    pub sigma_beta: f64,
    /// Mean of the `mu` prior.
    pub mu_mu: f64,
    /// Standard deviation of the `mu` prior (strictly positive).
    pub sigma_mu: f64,
    /// Shape of the `sigma2_theta` prior (strictly positive).
    pub alpha: f64,
    /// Rate of the `sigma2_theta` prior (strictly positive).
    pub lambda: f64,
}

impl Default for Hyperparameters {
    /// The weakly informative defaults used throughout: diffuse normals for
    /// the location parameters and `InvGamma(0.01, 0.01)` for the
    /// between-study variance.
    fn default() -> Self {
        Self {
            mu_beta: 0.0,
            sigma_beta: 10.0,
            mu_mu: 0.0,
            sigma_mu: 10.0,
            alpha: 0.01,
            lambda: 0.01,
        }
    }
}

impl Hyperparameters {
    /// Checks that every scale parameter is strictly positive and finite.
    pub fn validate(&self) -> Result<()> {
        let scales = [
            ("sigma_beta", self.sigma_beta),
            ("sigma_mu", self.sigma_mu),
            ("alpha", self.alpha),
            ("lambda", self.lambda),
        ];
        for (name, v) in scales {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Model(format!(
                    "hyperparameter {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        if !self.mu_beta.is_finite() || !self.mu_mu.is_finite() {
            return Err(Error::Model("prior means must be finite".into()));
        }
        Ok(())
    }
}

/// One point of the parameter space visited by the sampler.
///
/// The per-study random effect and bias error are marginalized into
/// `delta_i`; only the four blocks below are ever represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    /// Control-arm log-odds `beta_i`, length `K`.
    pub beta: Vec<f64>,
    /// Study-specific treatment effects `delta_i` (log-odds-ratio scale), length `K`.
    pub delta: Vec<f64>,
    /// Overall effect `mu` (log-odds-ratio scale).
    pub mu: f64,
    /// Between-study variance `sigma2_theta` (strictly positive).
    pub sigma2_theta: f64,
}

/// One vector of study qualities `q = (q_1, ..., q_K)`, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVector {
    pub q: Vec<f64>,
}

impl QualityVector {
    /// The all-ones vector of length `k`: the unadjusted model.
    pub fn ones(k: usize) -> Self {
        Self { q: vec![1.0; k] }
    }

    /// Checks that every component lies in `(0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (i, &v) in self.q.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Model(format!(
                    "quality q_{} = {v} outside (0, 1]",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Log-odds transform `ln(p / (1 - p))`.
///
/// Errors on `p <= 0` or `p >= 1` (the transform leaves the real line).
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Model(format!(
            "logit domain error: p = {p} not in (0, 1)"
        )));
    }
    Ok((p / (1.0 - p)).ln())
}

/// Inverse log-odds transform `1 / (1 + exp(-x))`.
///
/// Uses the branch that never exponentiates a large positive argument, so it
/// cannot overflow for any finite input.
pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x * ln(y)` with the convention `0 * ln(y) = 0`, so zero-count terms of
/// the binomial log-likelihood never produce NaN.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Binomial log-likelihood of one study (both arms), without the
/// parameter-free binomial coefficients:
///
/// ```text
/// r_i1 ln p_i1 + (N_i1 - r_i1) ln(1 - p_i1) + r_i2 ln p_i2 + (N_i2 - r_i2) ln(1 - p_i2)
/// ```
///
/// with `p_i1 = inv_logit(beta_i)` and `p_i2 = inv_logit(beta_i + delta_i)`.
/// The coefficients are constant in the parameters and cancel in every
/// Metropolis ratio, so they are deliberately omitted.
pub fn study_log_likelihood(record: &StudyRecord, beta_i: f64, delta_i: f64) -> f64 {
    control_arm_log_likelihood(record, beta_i)
        + treatment_arm_log_likelihood(record, beta_i, delta_i)
}

/// Control-arm terms of [`study_log_likelihood`] (depend on `beta_i` only).
pub fn control_arm_log_likelihood(record: &StudyRecord, beta_i: f64) -> f64 {
    let p1 = clamp_prob(inv_logit(beta_i));
    xlny(record.r_control as f64, p1) + xlny((record.n_control - record.r_control) as f64, 1.0 - p1)
}

/// Treatment-arm terms of [`study_log_likelihood`] (the only likelihood terms
/// that involve `delta_i`).
pub fn treatment_arm_log_likelihood(record: &StudyRecord, beta_i: f64, delta_i: f64) -> f64 {
    let p2 = clamp_prob(inv_logit(beta_i + delta_i));
    xlny(record.r_treatment as f64, p2)
        + xlny((record.n_treatment - record.r_treatment) as f64, 1.0 - p2)
}

/// Normal log-density with mean `mean` and variance `var`, including the
/// normalizing constant.
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Unnormalized inverse-gamma log-density with shape `shape` and rate `rate`:
/// `-(shape + 1) ln x - rate / x`. The `x`-free normalizing terms are
/// dropped (consistently with how this density is consumed: only
/// differences at fixed hyperparameters matter).
pub fn ln_inv_gamma_unnorm(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -(shape + 1.0) * x.ln() - rate / x
}

/// The unnormalized log-posterior of the full model:
///
/// ```text
/// sum_i [ study log-likelihood_i
///         + ln Normal(beta_i; mu_beta, sigma_beta^2)
///         + ln Normal(delta_i; mu, sigma2_theta / q_i) ]
/// + ln Normal(mu; mu_mu, sigma_mu^2)
/// + ln InvGamma(sigma2_theta; alpha, lambda)
/// ```
///
/// Additive constants are dropped consistently (binomial coefficients and the
/// inverse-gamma normalizer). Returns `-inf` when `sigma2_theta <= 0`.
///
/// Panics if the state or quality dimensions do not match the data.
pub fn log_posterior_unnorm(
    state: &ParameterState,
    data: &StudyData,
    hyper: &Hyperparameters,
    q: &QualityVector,
) -> f64 {
    let k = data.n_studies();
    assert_eq!(
        state.beta.len(),
        k,
        "beta length must match the number of studies"
    );
    assert_eq!(
        state.delta.len(),
        k,
        "delta length must match the number of studies"
    );
    assert_eq!(
        q.len(),
        k,
        "quality vector length must match the number of studies"
    );

    if state.sigma2_theta <= 0.0 {
        return f64::NEG_INFINITY;
    }

    let sb2 = hyper.sigma_beta * hyper.sigma_beta;
    let sm2 = hyper.sigma_mu * hyper.sigma_mu;
    let mut lp = 0.0;
    for i in 0..k {
        lp += study_log_likelihood(&data.studies[i], state.beta[i], state.delta[i]);
        lp += ln_normal_pdf(state.beta[i], hyper.mu_beta, sb2);
        lp += ln_normal_pdf(state.delta[i], state.mu, state.sigma2_theta / q.q[i]);
    }
    lp += ln_normal_pdf(state.mu, hyper.mu_mu, sm2);
    lp += ln_inv_gamma_unnorm(state.sigma2_theta, hyper.alpha, hyper.lambda);
    lp
}
