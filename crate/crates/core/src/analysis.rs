//! Metrics for comparing inferred profiles against references, and
//! aggregation of many fits into summary tables and plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineJson;
use crate::error::{Error, Result};
use crate::exposure::ExposureCurve;
use crate::inference::{EventProfile, InferenceResult, NodeSplit, ResultJson};
use crate::rate_table::{RatePoint, RateTable};
use crate::simulator::GroundTruth;

/// Default prominence floor for [`detect_peaks`], relative to the global max.
pub const DEFAULT_PROMINENCE: f64 = 0.1;

/// Number of grid points used by [`evaluate`].
pub const EVALUATION_GRID: usize = 200;

pub const REPORT_HEADER: &str =
    "category,n,rho1_mean,rho1_se,rho2_mean,rho2_se,duration_mean,duration_se,ext_frac_mean,ext_frac_se";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeFit {
    pub distance: f64,
    /// Scale applied to the second series; `None` when it is identically zero.
    pub alpha: Option<f64>,
}

/// Squared L2 distance between `a` and the best non-negative rescaling of `b`.
pub fn shape_l2(a: &[f64], b: &[f64]) -> Result<ShapeFit> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "shape comparison needs two series of equal length >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let bb: f64 = b.iter().map(|y| y * y).sum();
    if bb == 0.0 {
        return Ok(ShapeFit {
            distance: a.iter().map(|x| x * x).sum(),
            alpha: None,
        });
    }
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let alpha = (ab / bb).max(0.0);
    let distance = a.iter().zip(b).map(|(x, y)| (x - alpha * y).powi(2)).sum();
    Ok(ShapeFit {
        distance,
        alpha: Some(alpha),
    })
}

/// `n` evenly spaced points covering `[start, end]`.
pub fn uniform_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Linear interpolation through `points` (sorted by `t`), zero outside them.
pub fn resample(points: &[RatePoint], grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&t| {
            let k = points.partition_point(|p| p.t < t);
            if k == points.len() {
                return match points.last() {
                    Some(p) if p.t == t => p.value,
                    _ => 0.0,
                };
            }
            if points[k].t == t {
                return points[k].value;
            }
            if k == 0 {
                return 0.0;
            }
            let (a, b) = (points[k - 1], points[k]);
            a.value + (b.value - a.value) * (t - a.t) / (b.t - a.t)
        })
        .collect()
}

/// Topographic prominence of the maximum spanning `[start, end]`.
fn prominence(series: &[f64], start: usize, end: usize) -> f64 {
    let height = series[start];
    let mut left_min = height;
    for &v in series[..start].iter().rev() {
        if v > height {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = height;
    for &v in &series[end + 1..] {
        if v > height {
            break;
        }
        right_min = right_min.min(v);
    }
    height - left_min.max(right_min)
}

/// Indices of strict local maxima whose prominence is at least
/// `min_prominence` times the global maximum. A flat top counts once, at its
/// middle. The end points are never peaks.
pub fn detect_peaks(series: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = series.len();
    if n < 3 {
        return Vec::new();
    }
    let global = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if global <= 0.0 {
        return Vec::new();
    }
    let floor = min_prominence * global;
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if series[i] > series[i - 1] {
            let mut j = i;
            while j + 1 < n && series[j + 1] == series[i] {
                j += 1;
            }
            if j + 1 < n && series[j + 1] < series[i] && prominence(series, i, j) >= floor {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Number of `truth` times that have a `found` time within `tolerance`, each
/// found time matching at most one true time.
pub fn match_peaks(truth: &[f64], found: &[f64], tolerance: f64) -> usize {
    let mut used = vec![false; found.len()];
    let mut matched = 0;
    for &t in truth {
        let best = found
            .iter()
            .enumerate()
            .filter(|&(k, &f)| !used[k] && (f - t).abs() <= tolerance)
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()));
        if let Some((k, _)) = best {
            used[k] = true;
            matched += 1;
        }
    }
    matched
}

/// Peak times of an inferred profile. Each anchor's rate applies to the
/// segment ending at it, so peaks are placed at segment midpoints.
pub fn profile_peak_times(profile: &EventProfile, min_prominence: f64) -> Vec<f64> {
    let rates = profile.rates();
    let times = profile.times();
    detect_peaks(&rates, min_prominence)
        .into_iter()
        .map(|m| segment_midpoint(times, m))
        .collect()
}

fn segment_midpoint(times: &[f64], m: usize) -> f64 {
    let start = if m == 0 { 0.0 } else { times[m - 1] };
    0.5 * (start + times[m])
}

/// The profile as a rate series: each segment's average rate placed at the
/// segment midpoint, where it is a second-order estimate of `λ_ext`.
pub fn profile_rate_points(profile: &EventProfile) -> Vec<RatePoint> {
    let times = profile.times();
    profile
        .rates()
        .into_iter()
        .enumerate()
        .map(|(m, value)| RatePoint {
            t: segment_midpoint(times, m),
            value,
        })
        .collect()
}

/// Peak times of a sampled series.
pub fn series_peak_times(points: &[RatePoint], min_prominence: f64) -> Vec<f64> {
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    detect_peaks(&values, min_prominence)
        .into_iter()
        .map(|k| points[k].t)
        .collect()
}

/// Evaluate JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub l2_model: f64,
    pub l2_baseline: Option<f64>,
    pub peak_times_model: Vec<f64>,
    pub peak_times_truth: Vec<f64>,
    pub rho1_rel_err: f64,
    pub rho2_exact: bool,
}

/// Compares a fit against simulator ground truth (and optionally a naive
/// baseline) on a uniform grid over `[0, last anchor]`.
pub fn evaluate(
    result: &ResultJson,
    truth: &GroundTruth,
    baseline: Option<&BaselineJson>,
) -> Result<Evaluation> {
    let profile = result.profile()?;
    let truth_table = truth.profile()?;
    let end = *profile.times().last().unwrap();
    let grid = uniform_grid(0.0, end, EVALUATION_GRID);
    let truth_series: Vec<f64> = grid.iter().map(|&t| truth_table.rate(t)).collect();
    let model_series = resample(&profile_rate_points(&profile), &grid);
    let l2_model = shape_l2(&truth_series, &model_series)?.distance;
    let l2_baseline = match baseline {
        Some(b) => Some(shape_l2(&truth_series, &resample(&b.lambda_naive, &grid))?.distance),
        None => None,
    };
    Ok(Evaluation {
        l2_model,
        l2_baseline,
        peak_times_model: profile_peak_times(&profile, DEFAULT_PROMINENCE),
        peak_times_truth: table_peak_times(&truth_table, end),
        rho1_rel_err: (result.rho1 - truth.rho1).abs() / truth.rho1,
        rho2_exact: result.rho2 as f64 == truth.rho2,
    })
}

/// Peak times of a tabulated rate restricted to `[0, end]`.
pub fn table_peak_times(table: &RateTable, end: f64) -> Vec<f64> {
    let points: Vec<RatePoint> = table.points().into_iter().filter(|p| p.t <= end).collect();
    series_peak_times(&points, DEFAULT_PROMINENCE)
}

/// Per-contagion quantities entering the aggregate report.
#[derive(Debug, Clone, PartialEq)]
pub struct ContagionSummary {
    pub name: String,
    pub rho1: f64,
    pub rho2: f64,
    pub duration_hours: f64,
    /// Share of expected exposures that came from outside the network.
    pub external_fraction: f64,
    /// Per-node exposure split, when available.
    pub nodes: Vec<NodeSplit>,
}

impl ContagionSummary {
    pub fn from_json(name: impl Into<String>, json: &ResultJson) -> Self {
        ContagionSummary {
            name: name.into(),
            rho1: json.rho1,
            rho2: json.rho2 as f64,
            duration_hours: json.duration_hours,
            external_fraction: json.external_fraction,
            nodes: Vec::new(),
        }
    }

    pub fn from_result(name: impl Into<String>, result: &InferenceResult) -> Self {
        ContagionSummary {
            nodes: result.splits.clone(),
            ..Self::from_json(name, &result.to_json())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

/// Mean and standard error (`sd / √n`, zero for a single value). Values are
/// summed in sorted order so the result does not depend on input order.
pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe {
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, se: 0.0 };
    }
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - mean).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    let var = dev.iter().sum::<f64>() / (n - 1) as f64;
    MeanSe {
        mean,
        se: (var / n as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub category: String,
    pub n: usize,
    pub rho1: MeanSe,
    pub rho2: MeanSe,
    pub duration: MeanSe,
    /// In percent.
    pub external_percent: MeanSe,
}

fn row(category: &str, items: &[&ContagionSummary]) -> ReportRow {
    let col =
        |f: fn(&ContagionSummary) -> f64| mean_se(&items.iter().map(|s| f(s)).collect::<Vec<_>>());
    ReportRow {
        category: category.to_string(),
        n: items.len(),
        rho1: col(|s| s.rho1),
        rho2: col(|s| s.rho2),
        duration: col(|s| s.duration_hours),
        external_percent: col(|s| 100.0 * s.external_fraction),
    }
}

/// Category label for summaries without one.
pub const UNLABELED: &str = "unlabeled";
/// Row covering every contagion.
pub const ALL: &str = "all";

/// One row per category (alphabetical), followed by an `all` row. Without
/// labels only the `all` row is produced.
pub fn aggregate_report(
    summaries: &[ContagionSummary],
    labels: Option<&BTreeMap<String, String>>,
) -> Result<Vec<ReportRow>> {
    if summaries.is_empty() {
        return Err(Error::Empty("no results to aggregate".into()));
    }
    let mut rows = Vec::new();
    if let Some(labels) = labels {
        let mut groups: BTreeMap<&str, Vec<&ContagionSummary>> = BTreeMap::new();
        for s in summaries {
            let cat = labels.get(&s.name).map_or(UNLABELED, |c| c.as_str());
            groups.entry(cat).or_default().push(s);
        }
        rows.extend(groups.iter().map(|(cat, items)| row(cat, items)));
    }
    let everything: Vec<&ContagionSummary> = summaries.iter().collect();
    rows.push(row(ALL, &everything));
    Ok(rows)
}

pub fn format_report(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.category,
            r.n,
            r.rho1.mean,
            r.rho1.se,
            r.rho2.mean,
            r.rho2.se,
            r.duration.mean,
            r.duration.se,
            r.external_percent.mean,
            r.external_percent.se
        );
    }
    out
}

/// Parses a `file,category` CSV with header.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, String>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "file,category" => {}
        _ => {
            return Err(Error::InvalidConfig(
                "labels CSV must start with the header \"file,category\"".into(),
            ))
        }
    }
    let mut out = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let Some((file, cat)) = line.split_once(',') else {
            return Err(Error::InvalidConfig(format!(
                "labels CSV line {}: expected \"file,category\"",
                i + 1
            )));
        };
        out.insert(file.trim().to_string(), cat.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Histogram of `ρ1` over `bins` log-spaced bins spanning `[1e-6, 1]`.
pub fn rho1_histogram(summaries: &[ContagionSummary], bins: usize) -> Vec<HistogramBin> {
    let (lo, hi) = (-6.0f64, 0.0f64);
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lo: 10f64.powf(lo + k as f64 * width),
            hi: 10f64.powf(lo + (k + 1) as f64 * width),
            count: 0,
        })
        .collect();
    for s in summaries {
        let k = ((s.rho1.log10() - lo) / width)
            .floor()
            .clamp(0.0, (bins - 1) as f64) as usize;
        out[k].count += 1;
    }
    out
}

/// Count of contagions at each integer `ρ2` from 1 to the largest seen.
pub fn rho2_histogram(summaries: &[ContagionSummary]) -> Vec<(u32, usize)> {
    let max = summaries
        .iter()
        .map(|s| s.rho2.round() as u32)
        .max()
        .unwrap_or(0);
    let mut counts = vec![0usize; max as usize + 1];
    for s in summaries {
        counts[s.rho2.round() as usize] += 1;
    }
    (1..=max).map(|r| (r, counts[r as usize])).collect()
}

/// One point per infected node: position in infection order (as a fraction of
/// the contagion's infections) against the share of its expected exposures
/// that came from inside the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderPoint {
    pub order_fraction: f64,
    pub internal_fraction: f64,
}

pub fn order_vs_internal(summaries: &[ContagionSummary]) -> Vec<OrderPoint> {
    let mut out = Vec::new();
    for s in summaries {
        let n = s.nodes.len();
        for (k, node) in s.nodes.iter().enumerate() {
            let total = node.external + node.internal;
            out.push(OrderPoint {
                order_fraction: (k + 1) as f64 / n as f64,
                internal_fraction: if total > 0.0 {
                    node.internal / total
                } else {
                    0.0
                },
            });
        }
    }
    out
}

/// One point per infected node: expected exposures at infection scaled by the
/// contagion's `ρ2`, against the fitted infection probability at that count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposurePoint {
    pub exposures_over_rho2: f64,
    pub infection_probability: f64,
}

pub fn exposure_scatter(summaries: &[ContagionSummary]) -> Vec<ExposurePoint> {
    let mut out = Vec::new();
    for s in summaries {
        let curve = ExposureCurve {
            rho1: s.rho1,
            rho2: s.rho2,
        };
        for node in &s.nodes {
            let x = node.external + node.internal;
            out.push(ExposurePoint {
                exposures_over_rho2: x / s.rho2,
                infection_probability: curve.eta(x),
            });
        }
    }
    out
}

pub fn format_rho1_histogram(bins: &[HistogramBin]) -> String {
    let mut out = String::from("rho1_lo,rho1_hi,count\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{}", b.lo, b.hi, b.count);
    }
    out
}

pub fn format_rho2_histogram(counts: &[(u32, usize)]) -> String {
    let mut out = String::from("rho2,count\n");
    for (r, c) in counts {
        let _ = writeln!(out, "{r},{c}");
    }
    out
}

pub fn format_order_points(points: &[OrderPoint]) -> String {
    let mut out = String::from("order_fraction,internal_fraction\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.order_fraction, p.internal_fraction);
    }
    out
}

pub fn format_exposure_points(points: &[ExposurePoint]) -> String {
    let mut out = String::from("exposures_over_rho2,infection_probability\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.exposures_over_rho2, p.infection_probability);
    }
    out
}

/// Per-node exposure split as CSV, in infection order.
pub fn format_node_splits(splits: &[NodeSplit]) -> String {
    let mut out = String::from("node,time,external,internal\n");
    for s in splits {
        let _ = writeln!(out, "{},{},{},{}", s.node, s.time, s.external, s.internal);
    }
    out
}

pub fn parse_node_splits(text: &str) -> Result<Vec<NodeSplit>> {
    let bad =
        |i: usize, msg: &str| Error::InvalidConfig(format!("node split CSV line {}: {msg}", i + 1));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(i, "expected 4 columns"));
        }
        out.push(NodeSplit {
            node: f[0].trim().parse().map_err(|_| bad(i, "bad node id"))?,
            time: f[1].trim().parse().map_err(|_| bad(i, "bad time"))?,
            external: f[2]
                .trim()
                .parse()
                .map_err(|_| bad(i, "bad external value"))?,
            internal: f[3]
                .trim()
                .parse()
                .map_err(|_| bad(i, "bad internal value"))?,
        });
    }
    Ok(out)
}
