//! Convergence diagnostics: split-chain potential scale reduction and an
//! effective sample size built on the initial-positive-sequence estimator.
//!
//! Both diagnostics first split every chain in half (dropping the middle
//! element of odd-length chains), which makes within-chain drift visible to
//! the between-"chain" variance term.

/// Splits each chain in half. Chains shorter than 2 draws are dropped by the
/// callers' precondition checks before we get here.
fn split_halves(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        let n = chain.len();
        let half = n / 2;
        out.push(chain[..half].to_vec());
        out.push(chain[n - half..].to_vec());
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Split-chain potential scale reduction factor.
///
/// Returns `NaN` when the input cannot support the diagnostic (fewer than
/// two chains, fewer than ten draws per chain, or all sequences constant
/// and identical) and `+inf` when every sequence is constant but the
/// constants differ (zero within-sequence variance, positive between).
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 10) {
        return f64::NAN;
    }
    let seqs = split_halves(chains);
    let l = seqs.iter().map(|s| s.len()).min().unwrap();
    let seqs: Vec<&[f64]> = seqs.iter().map(|s| &s[..l]).collect();

    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let b = l as f64 * sample_var(&means);
    let w = mean(&seqs.iter().map(|s| sample_var(s)).collect::<Vec<_>>());

    if w == 0.0 {
        return if b == 0.0 { f64::NAN } else { f64::INFINITY };
    }
    let var_plus = (l as f64 - 1.0) / l as f64 * w + b / l as f64;
    (var_plus / w).sqrt()
}

/// Effective sample size of the pooled draws via the initial positive
/// sequence of pairwise autocorrelation sums, computed on split chains with
/// multi-chain variance pooling.
///
/// Returns `NaN` under the same degenerate conditions as [`split_rhat`].
pub fn ess_mean(chains: &[&[f64]]) -> f64 {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 10) {
        return f64::NAN;
    }
    let seqs = split_halves(chains);
    let l = seqs.iter().map(|s| s.len()).min().unwrap();
    let seqs: Vec<&[f64]> = seqs.iter().map(|s| &s[..l]).collect();
    let m = seqs.len();

    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let w = mean(&seqs.iter().map(|s| sample_var(s)).collect::<Vec<_>>());
    let b = l as f64 * sample_var(&means);
    if w == 0.0 {
        return f64::NAN;
    }
    let var_plus = (l as f64 - 1.0) / l as f64 * w + b / l as f64;

    // Biased within-sequence autocovariance at lag t, averaged over
    // sequences; evaluated lazily because the positive-sequence rule usually
    // stops after a handful of lags.
    let autocov = |t: usize| -> f64 {
        let mut acc = 0.0;
        for (s, seq_mean) in seqs.iter().zip(&means) {
            let mut c = 0.0;
            for i in 0..(l - t) {
                c += (s[i] - seq_mean) * (s[i + t] - seq_mean);
            }
            acc += c / l as f64;
        }
        acc / m as f64
    };

    let rho = |t: usize| 1.0 - (w - autocov(t)) / var_plus;

    // Initial positive sequence with the monotonicity correction: sum the
    // paired terms P_k = rho_{2k} + rho_{2k+1} until the first non-positive
    // pair, clamping each to the running minimum.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < l {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = tau.max(1.0 / (m * l) as f64);
    (m * l) as f64 / tau
}

/// Convenience wrapper producing `(split R-hat, ESS)` of the `mu` draws.
pub fn mu_diagnostics(samples: &crate::sampler::PosteriorSamples) -> (f64, f64) {
    let chains = samples.mu_by_chain();
    (split_rhat(&chains), ess_mean(&chains))
}
