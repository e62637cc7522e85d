//! Wall-clock and effective-sample-size benchmark for the sampler on the
//! bundled rituximab data, across candidate settings. Guides the choice of
//! chain counts and lengths for large bound searches.
//!
//! Run: `cargo run --release --example bench_sampling`

use std::time::Instant;

use robustmeta::diagnostics::mu_diagnostics;
use robustmeta::ingest::ingest_study_data;
use robustmeta::model::{Hyperparameters, QualityVector};
use robustmeta::sampler::{run_chain, McmcSettings};
use robustmeta::summary::summarize;

fn main() {
    let data =
        ingest_study_data(std::path::Path::new("data/rituximab_acr50.csv")).expect("bundled data");
    let hyper = Hyperparameters::default();
    let k = data.studies.len();

    let candidates = [
        ("full default: 4 x (5000 + 20000)", McmcSettings::default()),
        (
            "economized:   4 x (1000 + 6000)",
            McmcSettings {
                n_burnin: 1000,
                n_samples: 6000,
                ..McmcSettings::default()
            },
        ),
        (
            "economized:   4 x (1000 + 4000)",
            McmcSettings {
                n_burnin: 1000,
                n_samples: 4000,
                ..McmcSettings::default()
            },
        ),
        (
            "light:        2 x (1000 + 6000)",
            McmcSettings {
                n_chains: 2,
                n_burnin: 1000,
                n_samples: 6000,
                ..McmcSettings::default()
            },
        ),
    ];
    let vectors = [
        ("q = 1 (unadjusted)", QualityVector { q: vec![1.0; k] }),
        ("q = 0.10 (worst mixing)", QualityVector { q: vec![0.1; k] }),
    ];

    for (vec_label, q) in &vectors {
        println!("--- {vec_label} ---");
        for (label, settings) in &candidates {
            // Replicate over seeds to expose Monte Carlo spread.
            let mut means = Vec::new();
            let mut exceed = Vec::new();
            let mut p5 = Vec::new();
            let mut ess_min: f64 = f64::INFINITY;
            let start = Instant::now();
            const REPS: u64 = 8;
            for rep in 0..REPS {
                let s = McmcSettings {
                    seed: 1000 + rep,
                    ..*settings
                };
                let samples = run_chain(&data, &hyper, q, &s).expect("sampler");
                let summary = summarize(&samples, &[1.0], &[0.05, 0.025, 0.975]).expect("summary");
                let (_, ess) = mu_diagnostics(&samples);
                ess_min = ess_min.min(ess);
                means.push(summary.mean_mu);
                exceed.push(summary.exceedance[0].1);
                p5.push(summary.percentiles_mu[0].1);
            }
            let per_run = start.elapsed().as_secs_f64() / REPS as f64;
            let spread = |v: &[f64]| {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &x in v {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                (v.iter().sum::<f64>() / v.len() as f64, hi - lo)
            };
            let (em, es) = spread(&means);
            let (pm, ps) = spread(&exceed);
            let (qm, qs) = spread(&p5);
            println!(
                "{label}: {per_run:7.4} s/run  min ESS(mu) {ess_min:7.0}\n    E(mu)   {em:.4} (spread {es:.4})\n    P(mu>1) {pm:.4} (spread {ps:.4})\n    P5      {qm:.4} (spread {qs:.4})"
            );
        }
    }
}
