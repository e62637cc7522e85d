//! The robust bound search: posterior inference for every quality vector in
//! an enumerated set, reduced to per-quantity lower/upper bounds with the
//! quality vectors that achieve them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, QualityVector, StudyData};
use crate::rng::derive_quality_seed;
use crate::sampler::{run_chain, McmcSettings};
use crate::summary::{summarize, PosteriorSummary};

/// What to summarize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QuantityKind {
    /// Posterior mean.
    Expectation,
    /// Strict exceedance probability `P(. > threshold)`.
    Exceedance { threshold: f64 },
    /// Posterior quantile at `level` in `(0, 1)`.
    Percentile { level: f64 },
}

/// Which parameter a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "parameter", rename_all = "snake_case")]
pub enum Target {
    /// The overall effect `mu`.
    Mu,
    /// The study effect `delta_i` of the study at data index `study`.
    Delta { study: usize },
}

/// One summary quantity to bound over the quality set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantitySpec {
    pub kind: QuantityKind,
    pub target: Target,
}

impl QuantitySpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            QuantityKind::Exceedance { threshold } => {
                if !threshold.is_finite() {
                    return Err(Error::Robust(format!(
                        "exceedance threshold {threshold} must be finite"
                    )));
                }
                if self.target != Target::Mu {
                    return Err(Error::Robust(
                        "exceedance probabilities are tracked for the overall effect only".into(),
                    ));
                }
            }
            QuantityKind::Percentile { level } => {
                if !(level > 0.0 && level < 1.0) {
                    return Err(Error::Robust(format!(
                        "percentile level {level} outside (0, 1)"
                    )));
                }
            }
            QuantityKind::Expectation => {}
        }
        Ok(())
    }

    /// Human-readable label, used in tables and error messages.
    pub fn label(&self, study_names: &[String]) -> String {
        let target = match self.target {
            Target::Mu => "mu".to_string(),
            Target::Delta { study } => match study_names.get(study) {
                Some(name) => format!("delta[{name}]"),
                None => format!("delta[{study}]"),
            },
        };
        match self.kind {
            QuantityKind::Expectation => format!("E({target})"),
            QuantityKind::Exceedance { threshold } => format!("P({target} > {threshold})"),
            QuantityKind::Percentile { level } => {
                format!("{}% percentile of {target}", level * 100.0)
            }
        }
    }
}

/// Lower/upper bound of one quantity over the quality set, with the first
/// enumerated vectors achieving them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub quantity: QuantitySpec,
    pub lower: f64,
    pub q_lower: QualityVector,
    pub upper: f64,
    pub q_upper: QualityVector,
}

/// The summary computed for one enumerated quality vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub q: QualityVector,
    pub summary: PosteriorSummary,
}

/// Bounds for every requested quantity plus the full per-vector trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustBounds {
    pub rows: Vec<BoundRow>,
    pub trace: Vec<TraceEntry>,
}

/// Reads one quantity's Monte Carlo estimate out of a summary. Thresholds
/// and levels are matched bitwise against what the summary was built with.
pub fn quantity_estimate(summary: &PosteriorSummary, spec: &QuantitySpec) -> Result<f64> {
    let percentile_of = |pairs: &[(f64, f64)], level: f64| -> Result<f64> {
        pairs
            .iter()
            .find(|(l, _)| l.to_bits() == level.to_bits())
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::Robust(format!("summary does not carry the {level} percentile")))
    };
    match (spec.kind, spec.target) {
        (QuantityKind::Expectation, Target::Mu) => Ok(summary.mean_mu),
        (QuantityKind::Expectation, Target::Delta { study }) => summary
            .mean_delta
            .get(study)
            .copied()
            .ok_or_else(|| Error::Robust(format!("summary has no study index {study}"))),
        (QuantityKind::Exceedance { threshold }, Target::Mu) => summary
            .exceedance
            .iter()
            .find(|(t, _)| t.to_bits() == threshold.to_bits())
            .map(|&(_, p)| p)
            .ok_or_else(|| {
                Error::Robust(format!("summary does not carry exceedance at {threshold}"))
            }),
        (QuantityKind::Exceedance { .. }, Target::Delta { .. }) => Err(Error::Robust(
            "exceedance probabilities are tracked for the overall effect only".into(),
        )),
        (QuantityKind::Percentile { level }, Target::Mu) => {
            percentile_of(&summary.percentiles_mu, level)
        }
        (QuantityKind::Percentile { level }, Target::Delta { study }) => {
            let pairs = summary
                .percentiles_delta
                .get(study)
                .ok_or_else(|| Error::Robust(format!("summary has no study index {study}")))?;
            percentile_of(pairs, level)
        }
    }
}

/// Deduplicates while preserving first-occurrence order, comparing by bits.
fn dedup_by_bits(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.iter().any(|x| x.to_bits() == v.to_bits()) {
            out.push(v);
        }
    }
    out
}

fn bounds_from_trace(trace: &[TraceEntry], quantities: &[QuantitySpec]) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::with_capacity(quantities.len());
    for spec in quantities {
        let first = quantity_estimate(&trace[0].summary, spec)?;
        let mut lower = first;
        let mut upper = first;
        let mut q_lower = &trace[0].q;
        let mut q_upper = &trace[0].q;
        for entry in &trace[1..] {
            let est = quantity_estimate(&entry.summary, spec)?;
            // Strict comparisons keep the first achiever on ties.
            if est < lower {
                lower = est;
                q_lower = &entry.q;
            }
            if est > upper {
                upper = est;
                q_upper = &entry.q;
            }
        }
        rows.push(BoundRow {
            quantity: *spec,
            lower,
            q_lower: q_lower.clone(),
            upper,
            q_upper: q_upper.clone(),
        });
    }
    Ok(rows)
}

/// Runs the sampler for every quality vector and reduces the per-vector
/// summaries to lower/upper bounds per quantity.
///
/// Each vector runs with a seed derived deterministically from the master
/// seed and the vector's own content, so results are independent of worker
/// count and of the vector's position in the list; the reduction is a
/// sequential fold in enumeration order with first-achiever tie-breaking.
/// Any single failure aborts the whole analysis: bounds must cover the
/// complete set.
pub fn analyze_over_set(
    data: &StudyData,
    hyper: &Hyperparameters,
    vectors: &[QualityVector],
    settings: &McmcSettings,
    quantities: &[QuantitySpec],
) -> Result<RobustBounds> {
    if vectors.is_empty() {
        return Err(Error::Robust("no quality vectors to analyze".into()));
    }
    if quantities.is_empty() {
        return Err(Error::Robust("no quantities requested".into()));
    }
    for spec in quantities {
        spec.validate()?;
    }
    let thresholds = dedup_by_bits(quantities.iter().filter_map(|s| match s.kind {
        QuantityKind::Exceedance { threshold } => Some(threshold),
        _ => None,
    }));
    let levels = dedup_by_bits(quantities.iter().filter_map(|s| match s.kind {
        QuantityKind::Percentile { level } => Some(level),
        _ => None,
    }));

    let trace: Vec<TraceEntry> = vectors
        .par_iter()
        .map(|q| {
            let per_q = McmcSettings {
                seed: derive_quality_seed(settings.seed, &q.q),
                ..*settings
            };
            let samples = run_chain(data, hyper, q, &per_q)?;
            let summary = summarize(&samples, &thresholds, &levels)?;
            Ok(TraceEntry {
                q: q.clone(),
                summary,
            })
        })
        .collect::<Result<_>>()?;

    let rows = bounds_from_trace(&trace, quantities)?;
    Ok(RobustBounds { rows, trace })
}

/// How the bias adjustment relates the bounds to the unadjusted conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasImpact {
    /// Lower bound, upper bound, and unadjusted estimate coincide exactly.
    NoBiasImpact,
    /// The conclusion against the reference value is the same at both
    /// bounds as without adjustment.
    Robust,
    /// Some admissible bias adjustment flips the conclusion.
    Sensitive,
}

/// One row of the bounds-versus-unadjusted comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub quantity: QuantitySpec,
    pub unadjusted: f64,
    pub lower: f64,
    pub upper: f64,
    pub flag: BiasImpact,
}

/// Compares each bound row against the unadjusted summary and flags whether
/// the qualitative conclusion survives every admissible bias adjustment.
///
/// The reference value is `decision_certainty` for exceedance probabilities
/// (is the decision maker still certain enough?) and 0 for expectations and
/// percentiles (does the effect keep its sign?).
pub fn compare_to_unadjusted(
    bounds: &RobustBounds,
    unadjusted: &PosteriorSummary,
    decision_certainty: f64,
) -> Result<Vec<ComparisonRow>> {
    if !(decision_certainty > 0.0 && decision_certainty < 1.0) {
        return Err(Error::Robust(format!(
            "decision certainty {decision_certainty} outside (0, 1)"
        )));
    }
    let mut rows = Vec::with_capacity(bounds.rows.len());
    for row in &bounds.rows {
        let base = quantity_estimate(unadjusted, &row.quantity).map_err(|e| {
            Error::Robust(format!(
                "unadjusted summary lacks a quantity present in the bounds: {e}"
            ))
        })?;
        let reference = match row.quantity.kind {
            QuantityKind::Exceedance { .. } => decision_certainty,
            _ => 0.0,
        };
        let conclusion = |v: f64| v > reference;
        let flag = if row.lower == base && row.upper == base {
            BiasImpact::NoBiasImpact
        } else if conclusion(row.lower) == conclusion(base)
            && conclusion(row.upper) == conclusion(base)
        {
            BiasImpact::Robust
        } else {
            BiasImpact::Sensitive
        };
        rows.push(ComparisonRow {
            quantity: row.quantity,
            unadjusted: base,
            lower: row.lower,
            upper: row.upper,
            flag,
        });
    }
    Ok(rows)
}
