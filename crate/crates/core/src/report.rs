//! Reporting: the forest plot (SVG plus a machine-readable sidecar) and the
//! plain-text bounds table.
//!
//! Rendering never recomputes statistics: the plot model is built by
//! copying values out of the analysis results, the sidecar JSON serializes
//! that model with exact-round-trip floats, and the SVG prints the same
//! numbers with display rounding.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persist::to_pretty_json;
use crate::robust::{
    quantity_estimate, BoundRow, ComparisonRow, QuantityKind, QuantitySpec, RobustBounds, Target,
};
use crate::summary::PosteriorSummary;

/// One forest-plot row (a study effect, or the overall effect), log
/// odds-ratio scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub label: String,
    /// Bias-unadjusted posterior mean.
    pub unadjusted_mean: f64,
    /// Bias-unadjusted 2.5th percentile.
    pub unadjusted_lower: f64,
    /// Bias-unadjusted 97.5th percentile.
    pub unadjusted_upper: f64,
    /// Minimum over the quality set of the posterior mean.
    pub adjusted_mean_lower: f64,
    /// Maximum over the quality set of the posterior mean.
    pub adjusted_mean_upper: f64,
    /// Minimum over the quality set of the 2.5th percentile.
    pub adjusted_lower_bound: f64,
    /// Maximum over the quality set of the 97.5th percentile.
    pub adjusted_upper_bound: f64,
}

impl ForestRow {
    fn validate(&self) -> Result<()> {
        if !(self.unadjusted_lower <= self.unadjusted_mean
            && self.unadjusted_mean <= self.unadjusted_upper)
        {
            return Err(Error::Io(format!(
                "forest row {}: unadjusted mean {} outside its interval [{}, {}]",
                self.label, self.unadjusted_mean, self.unadjusted_lower, self.unadjusted_upper
            )));
        }
        if self.adjusted_mean_lower > self.adjusted_mean_upper {
            return Err(Error::Io(format!(
                "forest row {}: adjusted mean bounds out of order",
                self.label
            )));
        }
        if !(self.adjusted_lower_bound <= self.adjusted_mean_lower
            && self.adjusted_mean_upper <= self.adjusted_upper_bound)
        {
            return Err(Error::Io(format!(
                "forest row {}: adjusted mean interval [{}, {}] escapes the percentile \
                 envelope [{}, {}]",
                self.label,
                self.adjusted_mean_lower,
                self.adjusted_mean_upper,
                self.adjusted_lower_bound,
                self.adjusted_upper_bound
            )));
        }
        Ok(())
    }
}

/// Everything the forest plot displays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestplotModel {
    pub study_rows: Vec<ForestRow>,
    pub overall: ForestRow,
    /// Vertical reference line position (log odds-ratio 0: no effect).
    pub reference_value: f64,
}

impl ForestplotModel {
    pub fn validate(&self) -> Result<()> {
        for row in self.study_rows.iter().chain(std::iter::once(&self.overall)) {
            row.validate()?;
        }
        Ok(())
    }
}

fn find_row<'a>(bounds: &'a RobustBounds, spec: &QuantitySpec) -> Result<&'a BoundRow> {
    bounds
        .rows
        .iter()
        .find(|r| r.quantity == *spec)
        .ok_or_else(|| {
            Error::Io(format!(
                "analysis results carry no bounds for a quantity the forest plot needs \
             (study index and kind: {spec:?}); include the 2.5%/97.5% percentile levels"
            ))
        })
}

fn forest_row(
    label: String,
    bounds: &RobustBounds,
    unadjusted: &PosteriorSummary,
    target: Target,
) -> Result<ForestRow> {
    let expectation = QuantitySpec {
        kind: QuantityKind::Expectation,
        target,
    };
    let lower_tail = QuantitySpec {
        kind: QuantityKind::Percentile { level: 0.025 },
        target,
    };
    let upper_tail = QuantitySpec {
        kind: QuantityKind::Percentile { level: 0.975 },
        target,
    };
    let mean_bounds = find_row(bounds, &expectation)?;
    Ok(ForestRow {
        label,
        unadjusted_mean: quantity_estimate(unadjusted, &expectation)?,
        unadjusted_lower: quantity_estimate(unadjusted, &lower_tail)?,
        unadjusted_upper: quantity_estimate(unadjusted, &upper_tail)?,
        adjusted_mean_lower: mean_bounds.lower,
        adjusted_mean_upper: mean_bounds.upper,
        adjusted_lower_bound: find_row(bounds, &lower_tail)?.lower,
        adjusted_upper_bound: find_row(bounds, &upper_tail)?.upper,
    })
}

/// Assembles the plot model by copying values out of the bounds and the
/// unadjusted summary — no arithmetic, so the sidecar JSON stays
/// bit-identical to the analysis results.
pub fn build_forestplot_model(
    bounds: &RobustBounds,
    unadjusted: &PosteriorSummary,
    study_names: &[String],
) -> Result<ForestplotModel> {
    let mut study_rows = Vec::with_capacity(study_names.len());
    for (i, name) in study_names.iter().enumerate() {
        study_rows.push(forest_row(
            name.clone(),
            bounds,
            unadjusted,
            Target::Delta { study: i },
        )?);
    }
    let overall = forest_row("Overall".to_string(), bounds, unadjusted, Target::Mu)?;
    let model = ForestplotModel {
        study_rows,
        overall,
        reference_value: 0.0,
    };
    model.validate()?;
    Ok(model)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders the model to a standalone SVG document.
pub fn render_forestplot(model: &ForestplotModel) -> Result<String> {
    model.validate()?;

    const WIDTH: f64 = 900.0;
    const LABEL_W: f64 = 110.0;
    const VALUES_W: f64 = 300.0;
    const MARGIN: f64 = 16.0;
    const ROW_H: f64 = 44.0;
    const HEADER_H: f64 = 58.0;
    const AXIS_H: f64 = 46.0;

    let rows: Vec<&ForestRow> = model
        .study_rows
        .iter()
        .chain(std::iter::once(&model.overall))
        .collect();
    let height = HEADER_H + rows.len() as f64 * ROW_H + AXIS_H + MARGIN;

    // Horizontal scale over every displayed value plus the reference line.
    let mut lo = model.reference_value;
    let mut hi = model.reference_value;
    for r in &rows {
        lo = lo.min(r.unadjusted_lower).min(r.adjusted_lower_bound);
        hi = hi.max(r.unadjusted_upper).max(r.adjusted_upper_bound);
    }
    let pad = 0.08 * (hi - lo).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_x0 = MARGIN + LABEL_W;
    let plot_x1 = WIDTH - MARGIN - VALUES_W;
    let x = |v: f64| plot_x0 + (v - lo) / (hi - lo) * (plot_x1 - plot_x0);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" role="img">
<style>
  text {{ font-family: Helvetica, Arial, sans-serif; font-size: 12px; fill: #222; }}
  .title {{ font-size: 14px; font-weight: bold; }}
  .legend {{ font-size: 11px; fill: #555; }}
  .whisker {{ stroke: #222; stroke-width: 1.4; }}
  .mean-marker {{ fill: #222; }}
  .adjusted-envelope {{ stroke: #9467bd; stroke-width: 2.6; }}
  .adjusted-mean-band {{ fill: #9467bd; fill-opacity: 0.85; }}
  .ref-line {{ stroke: #b22222; stroke-width: 1; stroke-dasharray: 4 3; }}
  .axis {{ stroke: #222; stroke-width: 1; }}
  .tick {{ stroke: #222; stroke-width: 1; }}
</style>
<text class="title" x="{MARGIN}" y="22">Treatment effect with bias-adjustment bounds</text>
<text class="legend" x="{MARGIN}" y="40">point + whiskers: unadjusted mean and 95% interval; band: bounds on the adjusted mean; thick line: bounds on the adjusted 95% interval</text>
"#
    )?;

    // Reference line across the data region.
    let ref_x = x(model.reference_value);
    let rows_top = HEADER_H;
    let rows_bottom = HEADER_H + rows.len() as f64 * ROW_H;
    let _ = write!(
        svg,
        "<line class=\"ref-line\" x1=\"{ref_x:.2}\" y1=\"{rows_top:.2}\" x2=\"{ref_x:.2}\" y2=\"{rows_bottom:.2}\"/>\n"
    )?;

    for (i, r) in rows.iter().enumerate() {
        let cy = HEADER_H + (i as f64 + 0.5) * ROW_H;
        let label = xml_escape(&r.label);
        let values = format!(
            "{:.3} [{:.3}, {:.3}]; mean bounds [{:.3}, {:.3}]; interval bounds [{:.3}, {:.3}]",
            r.unadjusted_mean,
            r.unadjusted_lower,
            r.unadjusted_upper,
            r.adjusted_mean_lower,
            r.adjusted_mean_upper,
            r.adjusted_lower_bound,
            r.adjusted_upper_bound
        );
        let (x_lo, x_hi) = (x(r.unadjusted_lower), x(r.unadjusted_upper));
        let x_mean = x(r.unadjusted_mean);
        let (x_ml, x_mu) = (x(r.adjusted_mean_lower), x(r.adjusted_mean_upper));
        let (x_el, x_eu) = (x(r.adjusted_lower_bound), x(r.adjusted_upper_bound));
        let y_unadj = cy - 7.0;
        let y_adj = cy + 9.0;
        let _ = write!(
            svg,
            r#"<g class="data-row">
  <text x="{MARGIN}" y="{label_y:.2}">{label}</text>
  <line class="whisker" x1="{x_lo:.2}" y1="{y_unadj:.2}" x2="{x_hi:.2}" y2="{y_unadj:.2}"/>
  <line class="whisker" x1="{x_lo:.2}" y1="{cap_lo_a:.2}" x2="{x_lo:.2}" y2="{cap_lo_b:.2}"/>
  <line class="whisker" x1="{x_hi:.2}" y1="{cap_lo_a:.2}" x2="{x_hi:.2}" y2="{cap_lo_b:.2}"/>
  <rect class="mean-marker" x="{marker_x:.2}" y="{marker_y:.2}" width="8" height="8"/>
  <line class="adjusted-envelope" x1="{x_el:.2}" y1="{y_adj:.2}" x2="{x_eu:.2}" y2="{y_adj:.2}"/>
  <rect class="adjusted-mean-band" x="{x_ml:.2}" y="{band_y:.2}" width="{band_w:.2}" height="10"/>
  <text class="legend" x="{values_x:.2}" y="{label_y:.2}">{values}</text>
</g>
"#,
            label_y = cy + 4.0,
            cap_lo_a = y_unadj - 4.0,
            cap_lo_b = y_unadj + 4.0,
            marker_x = x_mean - 4.0,
            marker_y = y_unadj - 4.0,
            band_y = y_adj - 5.0,
            band_w = (x_mu - x_ml).max(1.0),
            values_x = plot_x1 + 12.0,
        )?;
    }

    // Axis with ticks at a readable spacing.
    let axis_y = rows_bottom + 10.0;
    let _ = write!(
        svg,
        "<line class=\"axis\" x1=\"{plot_x0:.2}\" y1=\"{axis_y:.2}\" x2=\"{plot_x1:.2}\" y2=\"{axis_y:.2}\"/>\n"
    )?;
    let span = hi - lo;
    let step = if span <= 2.0 {
        0.5
    } else if span <= 6.0 {
        1.0
    } else {
        2.0
    };
    let mut tick = (lo / step).ceil() * step;
    while tick <= hi + 1e-12 {
        let tx = x(tick);
        let _ = write!(
            svg,
            "<line class=\"tick\" x1=\"{tx:.2}\" y1=\"{axis_y:.2}\" x2=\"{tx:.2}\" y2=\"{tick_y:.2}\"/>\n<text class=\"legend\" x=\"{tx:.2}\" y=\"{text_y:.2}\" text-anchor=\"middle\">{tick}</text>\n",
            tick_y = axis_y + 5.0,
            text_y = axis_y + 18.0,
        )?;
        tick += step;
    }
    let _ = write!(
        svg,
        "<text x=\"{mid:.2}\" y=\"{caption_y:.2}\" text-anchor=\"middle\">log odds ratio</text>\n</svg>\n",
        mid = (plot_x0 + plot_x1) / 2.0,
        caption_y = axis_y + 34.0,
    )?;
    Ok(svg)
}

impl From<std::fmt::Error> for Error {
    fn from(e: std::fmt::Error) -> Self {
        Error::Io(format!("formatting SVG: {e}"))
    }
}

/// Writes `forestplot.svg` and its machine-readable sidecar
/// `forestplot_values.json` (the serialized model, exact floats) into `dir`.
pub fn write_forestplot(dir: &Path, model: &ForestplotModel) -> Result<()> {
    let svg = render_forestplot(model)?;
    let svg_path = dir.join("forestplot.svg");
    std::fs::write(&svg_path, svg)
        .map_err(|e| Error::Io(format!("writing {}: {e}", svg_path.display())))?;
    let json = to_pretty_json(model)?;
    let json_path = dir.join("forestplot_values.json");
    std::fs::write(&json_path, json)
        .map_err(|e| Error::Io(format!("writing {}: {e}", json_path.display())))?;
    Ok(())
}

fn fmt_q(q: &[f64]) -> String {
    let inner: Vec<String> = q.iter().map(|v| format!("{v:.2}")).collect();
    format!("({})", inner.join(", "))
}

fn flag_text(row: &ComparisonRow) -> &'static str {
    match row.flag {
        crate::robust::BiasImpact::NoBiasImpact => "no bias impact",
        crate::robust::BiasImpact::Robust => "robust",
        crate::robust::BiasImpact::Sensitive => "sensitive",
    }
}

/// Renders the bounds-versus-unadjusted comparison as a fixed-width text
/// table: one row per quantity with the bound interval, the achieving
/// quality vectors, and the sensitivity flag.
pub fn render_summary_table(
    comparison: &[ComparisonRow],
    bounds: &RobustBounds,
    study_names: &[String],
) -> String {
    let mut label_w = "quantity".len();
    let mut q_w = "q at lower".len();
    let labels: Vec<String> = comparison
        .iter()
        .map(|c| c.quantity.label(study_names))
        .collect();
    for label in &labels {
        label_w = label_w.max(label.len());
    }
    for row in &bounds.rows {
        q_w = q_w
            .max(fmt_q(&row.q_lower.q).len())
            .max(fmt_q(&row.q_upper.q).len());
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<label_w$}  {:>10}  {:>8}  {:<q_w$}  {:>8}  {:<q_w$}  {}",
        "quantity", "unadjusted", "lower", "q at lower", "upper", "q at upper", "flag"
    );
    let dash_len = label_w + q_w * 2 + 10 + 8 * 2 + 14 + 12;
    let _ = writeln!(out, "{}", "-".repeat(dash_len));
    for (c, label) in comparison.iter().zip(&labels) {
        let bound_row = bounds.rows.iter().find(|r| r.quantity == c.quantity);
        let (ql, qu) = match bound_row {
            Some(r) => (fmt_q(&r.q_lower.q), fmt_q(&r.q_upper.q)),
            None => ("-".to_string(), "-".to_string()),
        };
        let _ = writeln!(
            out,
            "{label:<label_w$}  {:>10.3}  {:>8.3}  {ql:<q_w$}  {:>8.3}  {qu:<q_w$}  {}",
            c.unadjusted,
            c.lower,
            c.upper,
            flag_text(c)
        );
    }
    out
}
