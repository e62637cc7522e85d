//! Acceptance suite: end-to-end checks of the analysis pipeline on the
//! bundled rituximab ACR50 dataset.
//!
//! Each test covers one acceptance item and prints one `[ok]`/`[FAIL]` line
//! per verified fact; a test panics at the end if any of its facts failed.
//! Expensive bound searches are computed once and shared between tests, and
//! every Monte Carlo result is fully determined by the fixed master seed,
//! so the suite's outcome is reproducible run to run.
//!
//! Runtime note: the large quality-set scans (domains 1-2 and 3) dominate;
//! expect the whole suite to take on the order of twenty minutes on a
//! single core, much less with more cores (the scans parallelize).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPoolBuilder;

use robustmeta::config::RunConfig;
use robustmeta::ingest::{ingest_rob_table, ingest_study_data};
use robustmeta::model::{
    inv_logit, log_posterior_unnorm, logit, Hyperparameters, ParameterState, QualityVector,
    StudyData,
};
use robustmeta::quality::{
    build_set_spec, enumerate_quality_vectors, extreme_points, BlockBound, ConstraintBlock,
    CutoffPolicy, EnumerationConfig, ExtraConstraints, QualitySetSpec, RoBTable,
};
use robustmeta::report::build_forestplot_model;
use robustmeta::robust::{
    analyze_over_set, quantity_estimate, BoundRow, QuantityKind, QuantitySpec, RobustBounds, Target,
};
use robustmeta::sampler::{
    mu_conditional, sigma2_conditional, site_log_density, McmcSettings, Site,
};
use robustmeta::summary::PosteriorSummary;

const E_MU: QuantitySpec = QuantitySpec {
    kind: QuantityKind::Expectation,
    target: Target::Mu,
};
const P_GT_1: QuantitySpec = QuantitySpec {
    kind: QuantityKind::Exceedance { threshold: 1.0 },
    target: Target::Mu,
};
const P5_MU: QuantitySpec = QuantitySpec {
    kind: QuantityKind::Percentile { level: 0.05 },
    target: Target::Mu,
};
const P2_5_MU: QuantitySpec = QuantitySpec {
    kind: QuantityKind::Percentile { level: 0.025 },
    target: Target::Mu,
};

// ---------------------------------------------------------------------------
// Check bookkeeping: print every fact, fail the test at the end if any failed.

struct Checker {
    title: &'static str,
    failures: usize,
}

impl Checker {
    fn new(title: &'static str) -> Self {
        println!("== {title}");
        Self { title, failures: 0 }
    }

    fn record(&mut self, ok: bool, detail: String) {
        println!("{} {detail}", if ok { "[ok]  " } else { "[FAIL]" });
        if !ok {
            self.failures += 1;
        }
    }

    fn close_abs(&mut self, label: &str, actual: f64, expected: f64, tol: f64) {
        let ok = (actual - expected).abs() <= tol;
        self.record(
            ok,
            format!("{label}: {actual:.4} (expected {expected} within +-{tol})"),
        );
    }

    fn exact_count(&mut self, label: &str, actual: usize, expected: usize) {
        self.record(
            actual == expected,
            format!("{label}: {actual} (expected exactly {expected})"),
        );
    }

    fn is_true(&mut self, detail: &str, ok: bool) {
        self.record(ok, detail.to_string());
    }

    fn finish(self) {
        assert!(
            self.failures == 0,
            "{}: {} check(s) failed",
            self.title,
            self.failures
        );
    }
}

// ---------------------------------------------------------------------------
// Shared fixtures and analysis runs.

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn fixtures() -> &'static (StudyData, RoBTable) {
    static FIXTURES: OnceLock<(StudyData, RoBTable)> = OnceLock::new();
    FIXTURES.get_or_init(|| {
        let data =
            ingest_study_data(&data_dir().join("rituximab_acr50.csv")).expect("bundled study data");
        let rob = ingest_rob_table(&data_dir().join("rituximab_rob.json"), &data)
            .expect("bundled risk-of-bias table");
        (data, rob)
    })
}

/// The default quantity list: mu quantities plus per-study effects, exactly
/// what a default command-line run computes.
fn standard_quantities(k: usize) -> Vec<QuantitySpec> {
    RunConfig::new("data.csv", "rob.json").expand_quantities(k)
}

/// Reference sampler settings: 4 chains x (5 000 burn-in + 20 000 retained).
fn full_settings() -> McmcSettings {
    McmcSettings::default()
}

/// Scan settings for the large bound searches: shorter but still
/// well-converged chains, 4 x (1 500 burn-in + 12 000 retained).
fn scan_settings() -> McmcSettings {
    McmcSettings {
        n_burnin: 1_500,
        n_samples: 12_000,
        ..McmcSettings::default()
    }
}

fn set_spec_for(domains: &[u8], extra: Option<&ExtraConstraints>) -> QualitySetSpec {
    let (_, rob) = fixtures();
    build_set_spec(rob, domains, &CutoffPolicy::default(), extra).expect("quality-set spec")
}

fn vectors_for(domains: &[u8], extra: Option<&ExtraConstraints>) -> Vec<QualityVector> {
    enumerate_quality_vectors(&set_spec_for(domains, extra), &EnumerationConfig::default())
        .expect("quality-set enumeration")
}

/// Order constraints used when all six domains are considered at once:
/// WA16291 is the best-rated study, DANCER and SERENE share their rating
/// profile, and REFLEX is not comparable to them.
fn all_domain_constraints() -> ExtraConstraints {
    ExtraConstraints {
        blocks: vec![
            ConstraintBlock {
                studies: vec!["WA16291".into()],
                lower: 0.1,
                upper: BlockBound::Const(0.95),
            },
            ConstraintBlock {
                studies: vec!["REFLEX".into()],
                lower: 0.1,
                upper: BlockBound::Block { block: 0 },
            },
            ConstraintBlock {
                studies: vec!["DANCER".into(), "SERENE".into()],
                lower: 0.1,
                upper: BlockBound::Block { block: 0 },
            },
        ],
    }
}

fn bounds_over(vectors: &[QualityVector], settings: &McmcSettings) -> RobustBounds {
    let (data, _) = fixtures();
    let quantities = standard_quantities(data.n_studies());
    analyze_over_set(
        data,
        &Hyperparameters::default(),
        vectors,
        settings,
        &quantities,
    )
    .expect("bound analysis")
}

fn unadjusted() -> &'static PosteriorSummary {
    static UNADJ: OnceLock<PosteriorSummary> = OnceLock::new();
    UNADJ.get_or_init(|| {
        let (data, _) = fixtures();
        let ones = vec![QualityVector::ones(data.n_studies())];
        bounds_over(&ones, &full_settings())
            .trace
            .swap_remove(0)
            .summary
    })
}

fn d12_bounds() -> &'static RobustBounds {
    static B: OnceLock<RobustBounds> = OnceLock::new();
    B.get_or_init(|| bounds_over(&vectors_for(&[1], None), &scan_settings()))
}

fn d3_bounds() -> &'static RobustBounds {
    static B: OnceLock<RobustBounds> = OnceLock::new();
    B.get_or_init(|| bounds_over(&vectors_for(&[3], None), &scan_settings()))
}

fn d4_bounds() -> &'static RobustBounds {
    static B: OnceLock<RobustBounds> = OnceLock::new();
    B.get_or_init(|| bounds_over(&vectors_for(&[4], None), &scan_settings()))
}

fn d56_bounds() -> &'static RobustBounds {
    static B: OnceLock<RobustBounds> = OnceLock::new();
    B.get_or_init(|| bounds_over(&vectors_for(&[5], None), &full_settings()))
}

fn dall_bounds() -> &'static RobustBounds {
    static B: OnceLock<RobustBounds> = OnceLock::new();
    B.get_or_init(|| {
        bounds_over(
            &vectors_for(&[1, 2, 3, 4, 5, 6], Some(&all_domain_constraints())),
            &scan_settings(),
        )
    })
}

fn bound_row(bounds: &RobustBounds, spec: QuantitySpec) -> &BoundRow {
    bounds
        .rows
        .iter()
        .find(|r| r.quantity == spec)
        .expect("requested quantity present in the bounds")
}

fn check_mu_bounds(
    c: &mut Checker,
    label: &str,
    bounds: &RobustBounds,
    rows: &[(QuantitySpec, &str, f64, f64, f64)],
) {
    for &(spec, name, lo, up, tol) in rows {
        let row = bound_row(bounds, spec);
        c.close_abs(&format!("{label} {name} lower bound"), row.lower, lo, tol);
        c.close_abs(&format!("{label} {name} upper bound"), row.upper, up, tol);
    }
}

// ---------------------------------------------------------------------------
// 1. Bias-unadjusted model.

#[test]
fn acceptance_01_unadjusted_model() {
    let mut c = Checker::new("unadjusted model (q = 1), 4 chains x 20 000 retained draws");
    let s = unadjusted();
    let p = |spec: QuantitySpec| quantity_estimate(s, &spec).expect("summary quantity");
    c.close_abs("E(mu)", s.mean_mu, 1.471, 0.05);
    c.close_abs("P(mu > 1)", p(P_GT_1), 0.998, 0.01);
    c.close_abs("5% percentile of mu", p(P5_MU), 1.029, 0.05);
    c.finish();
}

// ---------------------------------------------------------------------------
// 2. Enumeration counts.

#[test]
fn acceptance_02_enumeration_counts() {
    let mut c = Checker::new("quality-set enumeration counts per domain group");
    let all = all_domain_constraints();
    c.exact_count(
        "domain 1 (all unclear)",
        vectors_for(&[1], None).len(),
        10_000,
    );
    c.exact_count(
        "domain 2 (all unclear)",
        vectors_for(&[2], None).len(),
        10_000,
    );
    c.exact_count(
        "domain 3 (two low, two unclear)",
        vectors_for(&[3], None).len(),
        736,
    );
    c.exact_count(
        "domain 4 (three low, one unclear)",
        vectors_for(&[4], None).len(),
        286,
    );
    c.exact_count("domain 5 (all low)", vectors_for(&[5], None).len(), 10);
    c.exact_count("domain 6 (all low)", vectors_for(&[6], None).len(), 10);
    c.exact_count(
        "all domains with order constraints",
        vectors_for(&[1, 2, 3, 4, 5, 6], Some(&all)).len(),
        839,
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 3. Extreme-point lists.

#[test]
fn acceptance_03_extreme_point_lists() {
    let mut c = Checker::new("extreme points of the constrained quality sets");

    fn check_vertices(
        c: &mut Checker,
        label: &str,
        domains: &[u8],
        extra: Option<&ExtraConstraints>,
        expected: &[[f64; 4]],
    ) {
        let got = extreme_points(&set_spec_for(domains, extra)).expect("extreme points");
        let mut got: Vec<[f64; 4]> = got
            .iter()
            .map(|v| [v.q[0], v.q[1], v.q[2], v.q[3]])
            .collect();
        let mut want = expected.to_vec();
        got.sort_by_key(|a| a.map(f64::to_bits));
        want.sort_by_key(|a| a.map(f64::to_bits));
        let ok = got == want;
        c.is_true(
            &format!(
                "{label}: {} vertices matching the reference list exactly",
                expected.len()
            ),
            ok,
        );
        if !ok {
            println!("       got:      {got:?}");
            println!("       expected: {want:?}");
        }
    }

    check_vertices(
        &mut c,
        "domain 3",
        &[3],
        None,
        &[
            [0.50, 0.50, 0.10, 0.10],
            [0.95, 0.95, 0.10, 0.10],
            [0.50, 0.50, 0.10, 0.50],
            [0.95, 0.95, 0.10, 0.95],
            [0.50, 0.50, 0.50, 0.10],
            [0.95, 0.95, 0.95, 0.10],
            [0.50, 0.50, 0.50, 0.50],
            [0.95, 0.95, 0.95, 0.95],
        ],
    );
    check_vertices(
        &mut c,
        "domain 4",
        &[4],
        None,
        &[
            [0.10, 0.95, 0.95, 0.95],
            [0.10, 0.50, 0.50, 0.50],
            [0.50, 0.50, 0.50, 0.50],
            [0.95, 0.95, 0.95, 0.95],
        ],
    );
    check_vertices(
        &mut c,
        "all domains",
        &[1, 2, 3, 4, 5, 6],
        Some(&all_domain_constraints()),
        &[
            [0.10, 0.10, 0.10, 0.10],
            [0.10, 0.95, 0.10, 0.10],
            [0.10, 0.95, 0.95, 0.95],
            [0.95, 0.95, 0.10, 0.10],
            [0.95, 0.95, 0.95, 0.95],
        ],
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 4-7. Posterior bounds per domain group.

#[test]
fn acceptance_04_domain_5_6_bounds() {
    let mut c = Checker::new("domains 5 and 6: bounds over the 10-point equal-quality grid");
    check_mu_bounds(
        &mut c,
        "domains 5-6",
        d56_bounds(),
        &[
            (E_MU, "E(mu)", 1.462, 1.478, 0.05),
            (P_GT_1, "P(mu > 1)", 0.945, 0.955, 0.015),
            (P5_MU, "5% percentile", 0.982, 1.020, 0.05),
        ],
    );
    c.finish();
}

#[test]
fn acceptance_05_domain_3_bounds() {
    let mut c = Checker::new("domain 3: bounds over the convex-combination grid");
    check_mu_bounds(
        &mut c,
        "domain 3",
        d3_bounds(),
        &[
            (E_MU, "E(mu)", 1.461, 1.634, 0.05),
            (P_GT_1, "P(mu > 1)", 0.945, 0.982, 0.015),
            (P5_MU, "5% percentile", 0.982, 1.159, 0.05),
        ],
    );
    c.finish();
}

#[test]
fn acceptance_06_domain_1_2_bounds() {
    let mut c = Checker::new("domains 1 and 2: bounds over the full 10 000-vector grid");
    check_mu_bounds(
        &mut c,
        "domains 1-2",
        d12_bounds(),
        &[
            (E_MU, "E(mu)", 1.328, 1.646, 0.05),
            (P_GT_1, "P(mu > 1)", 0.886, 0.983, 0.015),
            (P5_MU, "5% percentile", 0.826, 1.169, 0.05),
        ],
    );
    c.finish();
}

#[test]
fn acceptance_07_domain_4_and_all_domain_bounds() {
    let mut c = Checker::new("domain 4 and the all-domain group: posterior bounds");
    check_mu_bounds(
        &mut c,
        "domain 4",
        d4_bounds(),
        &[
            (E_MU, "E(mu)", 1.350, 1.476, 0.05),
            (P_GT_1, "P(mu > 1)", 0.902, 0.956, 0.015),
            (P5_MU, "5% percentile", 0.881, 1.025, 0.05),
        ],
    );
    check_mu_bounds(
        &mut c,
        "all domains",
        dall_bounds(),
        &[
            (E_MU, "E(mu)", 1.356, 1.638, 0.05),
            (P_GT_1, "P(mu > 1)", 0.905, 0.982, 0.015),
            (P5_MU, "5% percentile", 0.847, 1.161, 0.05),
        ],
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 8. Structural property suite (no reference numbers from any single run).

/// Mean and variance of the density `exp(log_dens)` on a uniform grid over
/// `[lo, hi]` (trapezoid rule with a max-shift for overflow safety).
fn grid_moments<F: Fn(f64) -> f64>(log_dens: F, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let h = (hi - lo) / n as f64;
    let lps: Vec<(f64, f64)> = (0..=n)
        .map(|t| {
            let x = lo + t as f64 * h;
            (x, log_dens(x))
        })
        .collect();
    let max_lp = lps
        .iter()
        .map(|&(_, lp)| lp)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (t, &(x, lp)) in lps.iter().enumerate() {
        let w = if t == 0 || t == n { 0.5 } else { 1.0 };
        let d = w * (lp - max_lp).exp();
        z += d;
        s1 += d * x;
        s2 += d * x * x;
    }
    let mean = s1 / z;
    (mean, s2 / z - mean * mean)
}

/// `E[x]` and `E[1/x]` of the density `exp(log_dens)` over `x > 0`,
/// integrated on a uniform grid in `y = ln x`.
fn log_grid_means<F: Fn(f64) -> f64>(log_dens: F, y_lo: f64, y_hi: f64, n: usize) -> (f64, f64) {
    let h = (y_hi - y_lo) / n as f64;
    let lws: Vec<(f64, f64)> = (0..=n)
        .map(|t| {
            let y = y_lo + t as f64 * h;
            let x = y.exp();
            // Jacobian of x = e^y contributes + y to the log-weight.
            (x, log_dens(x) + y)
        })
        .collect();
    let max_lw = lws
        .iter()
        .map(|&(_, lw)| lw)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut sx, mut sinv) = (0.0, 0.0, 0.0);
    for (t, &(x, lw)) in lws.iter().enumerate() {
        let w = if t == 0 || t == n { 0.5 } else { 1.0 };
        let d = w * (lw - max_lw).exp();
        z += d;
        sx += d * x;
        sinv += d / x;
    }
    (sx / z, sinv / z)
}

fn random_state<R: Rng>(k: usize, rng: &mut R) -> ParameterState {
    ParameterState {
        beta: (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        delta: (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        mu: rng.gen_range(-2.0..2.0),
        sigma2_theta: rng.gen_range(0.05..4.0),
    }
}

fn random_quality<R: Rng>(k: usize, rng: &mut R) -> QualityVector {
    QualityVector {
        q: (0..k).map(|_| rng.gen_range(0.05..1.0)).collect(),
    }
}

#[test]
fn acceptance_08_property_suite() {
    let mut c = Checker::new("structural property suite");
    let hyper = Hyperparameters::default();

    // (a) Gibbs full conditionals against 1-D quadrature on random fixtures.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(1001);
        let mut worst_mu_mean = 0.0f64;
        let mut worst_mu_var = 0.0f64;
        let mut worst_prec_mean = 0.0f64;
        let mut worst_s2_mean = 0.0f64;
        let mut bad = 0usize;
        for _ in 0..100 {
            let k = rng.gen_range(1..=6);
            let state = random_state(k, &mut rng);
            let q = random_quality(k, &mut rng);

            // mu | rest is normal; compare its (mean, variance) to grid
            // moments of the independently written conditional density.
            let (m, v) = mu_conditional(&state, &hyper, &q);
            let mu_log_dens = |x: f64| {
                let mut lp = -(x - hyper.mu_mu).powi(2) / (2.0 * hyper.sigma_mu * hyper.sigma_mu);
                for i in 0..k {
                    let var = state.sigma2_theta / q.q[i];
                    lp -= (state.delta[i] - x).powi(2) / (2.0 * var);
                }
                lp
            };
            let (qm, qv) = grid_moments(mu_log_dens, -80.0, 80.0, 64_000);
            let mean_err = (qm - m).abs() / m.abs().max(v.sqrt());
            let var_err = (qv - v).abs() / v;
            worst_mu_mean = worst_mu_mean.max(mean_err);
            worst_mu_var = worst_mu_var.max(var_err);

            // sigma2 | rest is inverse-gamma with our (shape, rate); compare
            // E[1/sigma2] = shape/rate always, and E[sigma2] = rate/(shape-1)
            // where that mean exists (shape > 1, i.e. k >= 3 here).
            let (shape, rate) = sigma2_conditional(&state, &hyper, &q);
            let s2_log_dens = |x: f64| {
                let mut lp = -(hyper.alpha + 1.0) * x.ln() - hyper.lambda / x;
                for i in 0..k {
                    let var = x / q.q[i];
                    lp += -0.5 * var.ln() - (state.delta[i] - state.mu).powi(2) / (2.0 * var);
                }
                lp
            };
            let (qs2, qprec) = log_grid_means(s2_log_dens, -45.0, 160.0, 80_000);
            let prec_err = (qprec - shape / rate).abs() / (shape / rate);
            worst_prec_mean = worst_prec_mean.max(prec_err);
            if k >= 3 {
                let s2_err = (qs2 - rate / (shape - 1.0)).abs() / (rate / (shape - 1.0));
                worst_s2_mean = worst_s2_mean.max(s2_err);
            }
            if mean_err > 0.005 || var_err > 0.005 || prec_err > 0.005 {
                bad += 1;
            }
        }
        c.is_true(
            &format!(
                "mu conditional matches quadrature on 100 fixtures \
                 (worst mean err {worst_mu_mean:.2e}, variance err {worst_mu_var:.2e}; \
                 tolerance 0.5%)"
            ),
            worst_mu_mean <= 0.005 && worst_mu_var <= 0.005,
        );
        c.is_true(
            &format!(
                "sigma2 conditional matches quadrature on 100 fixtures \
                 (worst E[1/s2] err {worst_prec_mean:.2e}, E[s2] err {worst_s2_mean:.2e}; \
                 tolerance 0.5%)"
            ),
            worst_prec_mean <= 0.005 && worst_s2_mean <= 0.005 && bad == 0,
        );
    }

    // (b) Metropolis site-local densities against the full log posterior.
    {
        let (data, _) = fixtures();
        let k = data.n_studies();
        let mut rng = ChaCha8Rng::seed_from_u64(2002);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let state = random_state(k, &mut rng);
            let q = random_quality(k, &mut rng);
            let site = if rng.gen::<bool>() {
                Site::Beta(rng.gen_range(0..k))
            } else {
                Site::Delta(rng.gen_range(0..k))
            };
            let old = match site {
                Site::Beta(i) => state.beta[i],
                Site::Delta(i) => state.delta[i],
            };
            let new = old + rng.gen_range(-1.5..1.5);
            let local = site_log_density(site, new, &state, data, &hyper, &q)
                - site_log_density(site, old, &state, data, &hyper, &q);
            let mut moved = state.clone();
            match site {
                Site::Beta(i) => moved.beta[i] = new,
                Site::Delta(i) => moved.delta[i] = new,
            }
            let full = log_posterior_unnorm(&moved, data, &hyper, &q)
                - log_posterior_unnorm(&state, data, &hyper, &q);
            worst = worst.max((local - full).abs());
        }
        c.is_true(
            &format!(
                "site-local density differences equal full log-posterior differences \
                 on 100 random moves (worst gap {worst:.2e}, tolerance 1e-9)"
            ),
            worst <= 1e-9,
        );
    }

    // (c) inv_logit after logit is the identity.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(3003);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let p: f64 = rng.gen_range(1e-9..1.0 - 1e-9);
            worst = worst.max((inv_logit(logit(p).expect("p in (0,1)")) - p).abs());
        }
        for &p in &[1e-9, 1e-6, 0.5, 1.0 - 1e-6, 1.0 - 1e-9] {
            worst = worst.max((inv_logit(logit(p).expect("p in (0,1)")) - p).abs());
        }
        c.is_true(
            &format!(
                "inv_logit(logit(p)) = p on 1005 probabilities \
                 (worst |err| {worst:.2e}, tolerance 1e-12)"
            ),
            worst <= 1e-12,
        );
    }

    // (d) Enumeration: constraint satisfaction, exact dedup, determinism.
    {
        let all = all_domain_constraints();
        let groups: [(&str, Vec<u8>, Option<&ExtraConstraints>); 5] = [
            ("domain 1", vec![1], None),
            ("domain 3", vec![3], None),
            ("domain 4", vec![4], None),
            ("domain 5", vec![5], None),
            ("all domains", vec![1, 2, 3, 4, 5, 6], Some(&all)),
        ];
        for (label, domains, extra) in groups {
            let spec = set_spec_for(&domains, extra);
            let vectors =
                enumerate_quality_vectors(&spec, &EnumerationConfig::default()).expect("enumerate");
            let again =
                enumerate_quality_vectors(&spec, &EnumerationConfig::default()).expect("enumerate");
            let unique: BTreeSet<Vec<u64>> = vectors
                .iter()
                .map(|v| v.q.iter().map(|x| x.to_bits()).collect())
                .collect();
            let mut satisfied = true;
            for v in &vectors {
                for block in &spec.blocks {
                    let val = v.q[block.members[0]];
                    for &m in &block.members {
                        satisfied &= v.q[m].to_bits() == val.to_bits();
                    }
                    let upper = match block.upper {
                        BlockBound::Const(u) => u,
                        BlockBound::Block { block: parent } => v.q[spec.blocks[parent].members[0]],
                    };
                    satisfied &= val >= block.lower - 1e-12 && val <= upper + 1e-12;
                }
                for &x in &v.q {
                    satisfied &= x > 0.0 && x <= 1.0;
                }
            }
            c.is_true(
                &format!(
                    "{label}: {} vectors, all satisfying their block constraints, \
                     duplicate-free ({} unique), enumeration repeatable",
                    vectors.len(),
                    unique.len()
                ),
                satisfied && unique.len() == vectors.len() && vectors == again,
            );
        }
    }

    // (e) Determinism of the full analysis across reruns and worker counts.
    {
        let vectors = vectors_for(&[5], None);
        let small = McmcSettings {
            n_chains: 2,
            n_burnin: 300,
            n_samples: 800,
            ..McmcSettings::default()
        };
        let first = bounds_over(&vectors, &small);
        let second = bounds_over(&vectors, &small);
        let one_worker = ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("thread pool")
            .install(|| bounds_over(&vectors, &small));
        let four_workers = ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .expect("thread pool")
            .install(|| bounds_over(&vectors, &small));
        c.is_true(
            "full analysis output is identical across reruns and 1/4-worker pools",
            first == second && first == one_worker && first == four_workers,
        );
    }

    // (f) Bound intervals only widen as the vector set grows.
    {
        let b = d3_bounds();
        let n = b.trace.len();
        let diagonal: Vec<usize> = (0..n)
            .filter(|&i| {
                let q = &b.trace[i].q.q;
                q.iter().all(|x| x.to_bits() == q[0].to_bits())
            })
            .collect();
        let mut middle: BTreeSet<usize> = diagonal.iter().copied().collect();
        middle.extend(0..3 * n / 5);
        c.is_true(
            &format!(
                "diagonal subset of the domain-3 grid is non-empty ({} points)",
                diagonal.len()
            ),
            !diagonal.is_empty(),
        );
        let interval = |idx: &[usize], spec: QuantitySpec| -> (f64, f64) {
            let mut lo = f64::INFINITY;
            let mut up = f64::NEG_INFINITY;
            for &i in idx {
                let v = quantity_estimate(&b.trace[i].summary, &spec).expect("trace quantity");
                lo = lo.min(v);
                up = up.max(v);
            }
            (lo, up)
        };
        let middle: Vec<usize> = middle.into_iter().collect();
        for (spec, name) in [
            (E_MU, "E(mu)"),
            (P_GT_1, "P(mu > 1)"),
            (P5_MU, "5% percentile"),
            (P2_5_MU, "2.5% percentile"),
        ] {
            let (lo_d, up_d) = interval(&diagonal, spec);
            let (lo_m, up_m) = interval(&middle, spec);
            let row = bound_row(b, spec);
            c.is_true(
                &format!(
                    "{name}: intervals nest as the set grows \
                     ([{lo_d:.4}, {up_d:.4}] in [{lo_m:.4}, {up_m:.4}] in [{:.4}, {:.4}])",
                    row.lower, row.upper
                ),
                row.lower <= lo_m && lo_m <= lo_d && up_d <= up_m && up_m <= row.upper,
            );
        }
    }

    // (g) The unadjusted sampler against a sampler-free numerical anchor:
    // these reference numbers were computed once by deterministic quadrature
    // of the exact posterior (per-study integrals of the likelihood against
    // the random-effect kernel, accumulated over a dense grid on the overall
    // effect and the log between-study variance; no Monte Carlo involved).
    {
        let s = unadjusted();
        let p = |spec: QuantitySpec| quantity_estimate(s, &spec).expect("summary quantity");
        c.close_abs("E(mu) vs quadrature anchor", s.mean_mu, 1.5031, 0.02);
        c.close_abs("P(mu > 1) vs quadrature anchor", p(P_GT_1), 0.9610, 0.01);
        c.close_abs("5% percentile vs quadrature anchor", p(P5_MU), 1.0495, 0.02);
        c.close_abs(
            "2.5% percentile vs quadrature anchor",
            p(P2_5_MU),
            0.9192,
            0.02,
        );
    }

    c.finish();
}

// ---------------------------------------------------------------------------
// 9. Forest-plot summaries.

#[test]
fn acceptance_09_forestplot_summaries() {
    let mut c = Checker::new("forest-plot overall-row summaries");
    let (data, _) = fixtures();
    let names: Vec<String> = data.studies.iter().map(|s| s.name.clone()).collect();
    let unadj = unadjusted();
    let d12 = d12_bounds();

    let e_row = bound_row(d12, E_MU);
    c.close_abs(
        "domains 1-2 adjusted mean, lower bound",
        e_row.lower,
        1.33,
        0.05,
    );
    c.close_abs(
        "domains 1-2 adjusted mean, upper bound",
        e_row.upper,
        1.65,
        0.05,
    );

    let p = |spec: QuantitySpec| quantity_estimate(unadj, &spec).expect("summary quantity");
    c.close_abs("unadjusted 2.5% percentile", p(P2_5_MU), 0.89, 0.05);
    let p25_row = bound_row(d12, P2_5_MU);
    c.close_abs(
        "domains 1-2 lower bound of the 2.5% percentile",
        p25_row.lower,
        0.63,
        0.05,
    );

    for (label, b) in [
        ("domains 1-2", d12),
        ("domain 3", d3_bounds()),
        ("domain 4", d4_bounds()),
        ("domains 5-6", d56_bounds()),
        ("all domains", dall_bounds()),
    ] {
        let row = bound_row(b, P2_5_MU);
        c.record(
            row.lower > 0.0,
            format!(
                "{label}: lower bound of the 2.5% percentile stays above 0 ({:.4})",
                row.lower
            ),
        );
    }

    let model = build_forestplot_model(d12, unadj, &names).expect("forest-plot model");
    c.is_true(
        "forest-plot model passes its internal consistency validation",
        model.validate().is_ok(),
    );
    c.is_true(
        "forest-plot overall row carries the bound values verbatim",
        model.overall.adjusted_mean_lower.to_bits() == e_row.lower.to_bits()
            && model.overall.adjusted_mean_upper.to_bits() == e_row.upper.to_bits()
            && model.overall.adjusted_lower_bound.to_bits() == p25_row.lower.to_bits(),
    );
    c.finish();
}
