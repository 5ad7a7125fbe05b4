//! Report emission: CSV tables, a JSON summary, and SVG histograms.
//!
//! Everything written here is a pure function of a [`MetricsReport`] — no
//! timestamps, hostnames, or other run-local state — so re-running an
//! experiment with the same config and master seed reproduces every output
//! file byte for byte. Floats are rendered with their shortest round-trip
//! representation, undefined cells as `N/A`. Field values never contain
//! commas or XML metacharacters (method labels are fixed lowercase words),
//! so the CSV and SVG writers do no quoting or escaping.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{CellReport, ExperimentConfig, MeanStd, Method, MethodSummary, MetricsReport};
use crate::io::write_pretty;

use std::collections::BTreeMap;

/// Bin count of every histogram.
pub const HIST_BINS: usize = 20;

const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;

const PER_DATASET_HEADER: &str = "epsilon,episodes,method,dataset,q_star_metric";

/// Renders one cell's accuracy table: one row per method, `N/A` where a
/// component had no defined value on any dataset.
pub fn accuracy_csv(cell: &CellReport) -> String {
    let mut out = String::from(
        "method,det_acc_mean,det_acc_std,stoch_acc_mean,stoch_acc_std,\
         mistake_ball_rate_mean,mistake_ball_rate_std\n",
    );
    for (method, summary) in &cell.summaries {
        let (dm, ds) = mean_std_fields(summary.det_acc);
        let (sm, ss) = mean_std_fields(summary.stoch_acc);
        let (bm, bs) = mean_std_fields(summary.mistake_ball_rate);
        writeln!(out, "{method},{dm},{ds},{sm},{ss},{bm},{bs}").expect("string write");
    }
    out
}

/// Renders one cell's planning-regret table: mean, std, and the number of
/// datasets each method was scored on.
pub fn qstar_csv(cell: &CellReport) -> String {
    let mut out = String::from("method,q_star_mean,q_star_std,n\n");
    for (method, summary) in &cell.summaries {
        match summary.q_star_metric {
            Some(MeanStd { mean, std, n }) => {
                writeln!(out, "{method},{mean},{std},{n}").expect("string write")
            }
            None => writeln!(out, "{method},N/A,N/A,0").expect("string write"),
        }
    }
    out
}

/// Renders every raw per-dataset regret value across all cells, one row per
/// `(cell, dataset, method)` with a scored record.
pub fn per_dataset_csv(report: &MetricsReport) -> String {
    let mut out = String::from(PER_DATASET_HEADER);
    out.push('\n');
    for cell in &report.cells {
        for outcome in &cell.datasets {
            for (method, record) in &outcome.methods {
                writeln!(
                    out,
                    "{},{},{method},{},{}",
                    cell.epsilon, cell.episodes, outcome.dataset, record.q_star_metric
                )
                .expect("string write");
            }
        }
    }
    out
}

fn mean_std_fields(value: Option<MeanStd>) -> (String, String) {
    match value {
        Some(MeanStd { mean, std, .. }) => (mean.to_string(), std.to_string()),
        None => ("N/A".into(), "N/A".into()),
    }
}

/// A dataset the constrained sampler gave up on, with the failure it hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedDataset {
    pub dataset: usize,
    pub error: String,
}

/// One cell's aggregates as stored in the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub epsilon: f64,
    pub episodes: usize,
    pub flagged: Vec<FlaggedDataset>,
    pub methods: BTreeMap<Method, MethodSummary>,
}

/// The JSON summary: identifying hashes, the resolved config, and per-cell
/// aggregates. Raw per-dataset values live in the CSV outputs instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub config_hash: String,
    pub env_hash: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
}

/// Builds the JSON summary for a finished run.
pub fn summary_document(report: &MetricsReport) -> SummaryDocument {
    let cells = report
        .cells
        .iter()
        .map(|cell| CellSummary {
            epsilon: cell.epsilon,
            episodes: cell.episodes,
            flagged: cell
                .datasets
                .iter()
                .filter_map(|d| {
                    d.flagged
                        .as_ref()
                        .map(|error| FlaggedDataset { dataset: d.dataset, error: error.clone() })
                })
                .collect(),
            methods: cell.summaries.clone(),
        })
        .collect();
    SummaryDocument {
        config_hash: report.config_hash.clone(),
        env_hash: report.env_hash.clone(),
        config: report.config.clone(),
        cells,
    }
}

fn bin_values(values: &[f64]) -> Result<(f64, f64, Vec<usize>)> {
    if values.is_empty() {
        return Err(Error::contract("histogram needs at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("histogram values must be finite"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // A single distinct value still deserves a visible bar: widen the range.
    let (lo, hi) = if min == max { (min - 0.5, max + 0.5) } else { (min, max) };
    let width = (hi - lo) / HIST_BINS as f64;
    let mut counts = vec![0usize; HIST_BINS];
    for &v in values {
        let bin = (((v - lo) / width) as usize).min(HIST_BINS - 1);
        counts[bin] += 1;
    }
    Ok((lo, hi, counts))
}

/// Renders the inner markup of one histogram panel, translated down by
/// `y_offset`. Every bar carries its count and bin edges as data attributes.
fn histogram_panel(title: &str, values: &[f64], y_offset: f64) -> Result<String> {
    let (lo, hi, counts) = bin_values(values)?;
    let max_count = *counts.iter().max().expect("HIST_BINS > 0") as f64;
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let bar_w = plot_w / HIST_BINS as f64;
    let bin_span = (hi - lo) / HIST_BINS as f64;

    let mut g = format!("  <g transform=\"translate(0,{y_offset:.2})\">\n");
    writeln!(
        g,
        "    <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" font-size=\"15\">{title}</text>",
        SVG_WIDTH / 2.0
    )
    .expect("string write");
    for (i, &count) in counts.iter().enumerate() {
        let h = if max_count > 0.0 { plot_h * count as f64 / max_count } else { 0.0 };
        let x = MARGIN_LEFT + i as f64 * bar_w;
        let y = MARGIN_TOP + plot_h - h;
        let b_lo = lo + i as f64 * bin_span;
        let b_hi = lo + (i + 1) as f64 * bin_span;
        writeln!(
            g,
            "    <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{h:.2}\" \
             fill=\"#4878a8\" data-count=\"{count}\" data-lo=\"{b_lo:.4}\" \
             data-hi=\"{b_hi:.4}\"/>",
            bar_w - 1.0
        )
        .expect("string write");
    }
    let base = MARGIN_TOP + plot_h;
    writeln!(
        g,
        "    <line x1=\"{MARGIN_LEFT:.2}\" y1=\"{base:.2}\" x2=\"{:.2}\" y2=\"{base:.2}\" \
         stroke=\"#333333\"/>",
        MARGIN_LEFT + plot_w
    )
    .expect("string write");
    writeln!(
        g,
        "    <text x=\"{MARGIN_LEFT:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" \
         font-size=\"12\">{lo:.2}</text>",
        base + 18.0
    )
    .expect("string write");
    writeln!(
        g,
        "    <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" \
         font-family=\"sans-serif\" font-size=\"12\">{hi:.2}</text>",
        MARGIN_LEFT + plot_w,
        base + 18.0
    )
    .expect("string write");
    writeln!(
        g,
        "    <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" \
         font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        MARGIN_LEFT - 6.0,
        MARGIN_TOP + 4.0,
        max_count as usize
    )
    .expect("string write");
    g.push_str("  </g>\n");
    Ok(g)
}

fn svg_open(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH:.0}\" \
         height=\"{height:.0}\" viewBox=\"0 0 {SVG_WIDTH:.0} {height:.0}\">\n  \
         <rect width=\"{SVG_WIDTH:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>\n"
    )
}

/// Renders one standalone histogram with [`HIST_BINS`] bars.
pub fn histogram_svg(title: &str, values: &[f64]) -> Result<String> {
    let mut svg = svg_open(SVG_HEIGHT);
    svg.push_str(&histogram_panel(title, values, 0.0)?);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Parses a per-dataset CSV (the [`per_dataset_csv`] format) and renders one
/// histogram panel per `(epsilon, episodes, method)` group, stacked
/// vertically in CSV appearance order.
pub fn plot_from_csv(csv: &str) -> Result<String> {
    let mut lines = csv.lines();
    match lines.next() {
        Some(header) if header == PER_DATASET_HEADER => {}
        other => {
            return Err(Error::invalid(format!(
                "expected per-dataset CSV header '{PER_DATASET_HEADER}', got {other:?}"
            )))
        }
    }
    let mut groups: Vec<((String, String, String), Vec<f64>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::invalid(format!(
                "CSV line {}: expected 5 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let value: f64 = fields[4]
            .parse()
            .map_err(|e| Error::invalid(format!("CSV line {}: bad metric value: {e}", i + 2)))?;
        let key = (fields[0].to_string(), fields[1].to_string(), fields[2].to_string());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, values)) => values.push(value),
            None => groups.push((key, vec![value])),
        }
    }
    if groups.is_empty() {
        return Err(Error::invalid("per-dataset CSV contains no data rows"));
    }
    let mut svg = svg_open(SVG_HEIGHT * groups.len() as f64);
    for (i, ((eps, k, method), values)) in groups.iter().enumerate() {
        let title = format!("{method}, eps {eps}, {k} episodes");
        svg.push_str(&histogram_panel(&title, values, i as f64 * SVG_HEIGHT)?);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// File name fragment for one cell, e.g. `eps3_k300`.
fn cell_tag(cell: &CellReport) -> String {
    format!("eps{}_k{}", cell.epsilon, cell.episodes)
}

/// Writes every report artifact into `out_dir` (created if missing) and
/// returns the written paths in emission order: the JSON summary, the raw
/// per-dataset CSV, then per cell an accuracy table, a regret table, and one
/// histogram per method that scored at least one dataset.
pub fn emit_outputs(report: &MetricsReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let summary = out_dir.join("summary.json");
    write_pretty(&summary, &summary_document(report))?;
    written.push(summary);

    let per_dataset = out_dir.join("qstar_per_dataset.csv");
    fs::write(&per_dataset, per_dataset_csv(report))?;
    written.push(per_dataset);

    for cell in &report.cells {
        let tag = cell_tag(cell);
        let accuracy = out_dir.join(format!("accuracy_{tag}.csv"));
        fs::write(&accuracy, accuracy_csv(cell))?;
        written.push(accuracy);

        let qstar = out_dir.join(format!("qstar_{tag}.csv"));
        fs::write(&qstar, qstar_csv(cell))?;
        written.push(qstar);

        for &method in cell.summaries.keys() {
            let values: Vec<f64> =
                cell.q_star_values(method).into_iter().map(|(_, v)| v).collect();
            if values.is_empty() {
                continue;
            }
            let title = format!("{method}, eps {}, {} episodes", cell.epsilon, cell.episodes);
            let path = out_dir.join(format!("qstar_hist_{tag}_{method}.svg"));
            fs::write(&path, histogram_svg(&title, &values)?)?;
            written.push(path);
        }
    }
    Ok(written)
}
