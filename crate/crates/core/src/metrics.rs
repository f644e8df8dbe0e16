//! Planar tracking-error statistics per run and across runs.

use serde::Serialize;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::runlog::RunLog;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub rmse_xy: f64,
    pub mae_xy: f64,
    pub p95_xy: f64,
    pub max_xy: f64,
    pub n_samples: usize,
}

impl ErrorStats {
    pub const NAMES: [&'static str; 4] = ["rmse_xy", "mae_xy", "p95_xy", "max_xy"];

    pub fn values(&self) -> [f64; 4] {
        [self.rmse_xy, self.mae_xy, self.p95_xy, self.max_xy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; `None` for a single run.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateStats {
    pub rmse_xy: MeanStd,
    pub mae_xy: MeanStd,
    pub p95_xy: MeanStd,
    pub max_xy: MeanStd,
    pub runs: usize,
}

impl AggregateStats {
    pub fn values(&self) -> [MeanStd; 4] {
        [self.rmse_xy, self.mae_xy, self.p95_xy, self.max_xy]
    }
}

/// `|p_xy - p_d,xy|` for rows with `t >= t_start`.
pub fn planar_error_series(log: &RunLog, t_start: f64) -> Result<Vec<f64>> {
    log.rows
        .iter()
        .filter(|r| r.t() >= t_start)
        .map(|r| {
            if (r.reference.t - r.state.t).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "reference at t = {} is not aligned with state at t = {}",
                    r.reference.t, r.state.t
                )));
            }
            let e = r.state.p - r.reference.p_d;
            Ok(e.x.hypot(e.y))
        })
        .collect()
}

/// Linear interpolation between order statistics at rank `q (N - 1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn compute_stats(series: &[f64]) -> Result<ErrorStats> {
    if series.is_empty() {
        return Err(Error::Data("cannot compute statistics of an empty series".into()));
    }
    if series.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Data("error series must be finite and non-negative".into()));
    }
    let n = series.len() as f64;
    let mae = series.iter().sum::<f64>() / n;
    let rmse = (series.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = sorted[sorted.len() - 1];
    let stats = ErrorStats {
        // Rounding can push the mean a hair above the RMS on constant series.
        rmse_xy: rmse.max(mae).min(max),
        mae_xy: mae.min(max),
        p95_xy: percentile(&sorted, 0.95),
        max_xy: max,
        n_samples: series.len(),
    };
    debug_assert!(stats.mae_xy <= stats.rmse_xy && stats.rmse_xy <= stats.max_xy);
    debug_assert!(stats.p95_xy <= stats.max_xy);
    Ok(stats)
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let rough = xs.iter().sum::<f64>() / n;
    // Second pass removes the rounding error of the first.
    let mean = rough + xs.iter().map(|x| x - rough).sum::<f64>() / n;
    let std = (xs.len() >= 2)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    MeanStd { mean, std }
}

pub fn aggregate(stats: &[ErrorStats]) -> Result<AggregateStats> {
    if stats.is_empty() {
        return Err(Error::Data("no runs to aggregate".into()));
    }
    // Sort each metric first so the result does not depend on run order.
    let col = |k: usize| {
        let mut v: Vec<f64> = stats.iter().map(|s| s.values()[k]).collect();
        v.sort_by(f64::total_cmp);
        mean_std(&v)
    };
    Ok(AggregateStats {
        rmse_xy: col(0),
        mae_xy: col(1),
        p95_xy: col(2),
        max_xy: col(3),
        runs: stats.len(),
    })
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub trajectory: String,
    pub controller: String,
    /// `None` when every run crashed.
    pub stats: Option<AggregateStats>,
    pub runs: usize,
    pub crashes: usize,
}

fn fmt_ms(m: &MeanStd) -> String {
    match m.std {
        Some(s) => format!("{:.4} ± {:.4}", m.mean, s),
        None => format!("{:.4}", m.mean),
    }
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("trajectory,controller,runs,crashes");
    for name in ErrorStats::NAMES {
        let _ = write!(out, ",{name}_mean,{name}_std");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{}", r.trajectory, r.controller, r.runs, r.crashes);
        match &r.stats {
            Some(stats) => {
                for m in stats.values() {
                    let std = m.std.map(|s| format!("{s:.16e}")).unwrap_or_default();
                    let _ = write!(out, ",{:.16e},{}", m.mean, std);
                }
            }
            None => out.push_str(&",".repeat(8)),
        }
        out.push('\n');
    }
    out
}

pub fn table_text(rows: &[TableRow]) -> String {
    let header = [
        "Trajectory", "Controller", "RMSE_xy [m]", "MAE_xy [m]", "P95_xy [m]", "Max_xy [m]", "Runs",
        "Crashes",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.trajectory.clone(), r.controller.clone()];
            match &r.stats {
                Some(stats) => cells.extend(stats.values().iter().map(fmt_ms)),
                None => cells.extend(std::iter::repeat_n("n/a".to_string(), 4)),
            }
            cells.push(r.runs.to_string());
            cells.push(r.crashes.to_string());
            cells
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|j| {
            body.iter()
                .map(|c| c[j].chars().count())
                .chain([header[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for cells in &body {
        out.push_str(&line(cells.iter().map(String::as_str).collect()));
    }
    out
}
