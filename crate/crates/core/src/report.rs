//! Histograms, Wilson intervals and the CSV / JSON output formats.
//!
//! | file            | header                                          |
//! |-----------------|-------------------------------------------------|
//! | sweep / escape  | `R,sigma,p_hat,ci_low,ci_high,n_paths,n_escaped` |
//! | histogram       | `bin_left,bin_right,count`                      |
//! | path statistics | `t,mean,std`                                    |
//! | trajectories    | `t,X,Y,path_id`                                 |
//!
//! Floats are written in Rust's shortest round-trip notation, which never
//! depends on the locale. JSON summaries carry `params`, `grid`, `seed`,
//! `results` and `tool_version`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::ensemble::{EscapeEstimate, PathStatistics, SweepTable};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scheme::{TimeGrid, TrajectoryPoint};

/// Version string embedded in every JSON summary.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("JACOBI_TIP_BUILD_TAG"));

/// Counts of values per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_total: u64,
    pub n_out_of_range: u64,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Index of the fullest bin, first one on ties.
    pub fn mode_bin(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        if max == 0 {
            return None;
        }
        self.counts.iter().position(|&c| c == max)
    }

    /// Number of bins holding at least one value.
    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// `bins` equal-width bins over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect()
}

/// Bins `values` into `[e_i, e_{i+1})`, the last bin closed on the right.
/// Values outside the edges (and NaN) are tallied in `n_out_of_range`.
pub fn build_histogram(values: &[f64], bin_edges: &[f64]) -> Result<Histogram> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::BinEdges);
    }
    let n_bins = bin_edges.len() - 1;
    let (first, last) = (bin_edges[0], bin_edges[n_bins]);
    let mut counts = vec![0u64; n_bins];
    let mut n_out_of_range = 0;
    for &v in values {
        if !(v >= first && v <= last) {
            n_out_of_range += 1;
            continue;
        }
        // number of edges <= v, minus one, is the bin index
        let idx = bin_edges.partition_point(|&e| e <= v).saturating_sub(1).min(n_bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram {
        bin_edges: bin_edges.to_vec(),
        counts,
        n_total: values.len() as u64,
        n_out_of_range,
    })
}

/// Two-sided standard normal quantile for a confidence level.
pub fn z_for_level(level: f64) -> f64 {
    let normal = Normal::standard();
    normal.inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Wilson score interval for `k` successes out of `n` trials.
pub fn wilson_interval(k: u64, n: u64, level: f64) -> (f64, f64) {
    assert!(n >= 1 && k <= n, "wilson_interval needs 0 <= k <= n and n >= 1");
    let nf = n as f64;
    let p = k as f64 / nf;
    let z = z_for_level(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let low = if k == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let high = if k == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    (low, high)
}

/// `0.0058 -> "0.58"`, the way the tables print percentages.
pub fn format_percent(p: f64) -> String {
    format!("{:.2}", 100.0 * p)
}

/// One line of the sweep / escape CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "R")]
    pub rate: f64,
    pub sigma: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: u64,
    pub n_escaped: u64,
}

impl SweepRow {
    pub fn new(rate: f64, sigma: f64, est: &EscapeEstimate) -> Self {
        Self {
            rate,
            sigma,
            p_hat: est.p_hat,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            n_paths: est.n_paths,
            n_escaped: est.n_escaped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct HistogramRow {
    bin_left: f64,
    bin_right: f64,
    count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct StatsRow {
    t: f64,
    mean: f64,
    std: f64,
}

/// One line of the trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub path_id: u64,
}

impl TrajectoryRow {
    pub fn new(path_id: u64, pt: &TrajectoryPoint) -> Self {
        Self {
            t: pt.t,
            x: pt.x,
            y: pt.y,
            path_id,
        }
    }
}

fn write_rows<W: Write, T: Serialize>(dest: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(dest);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Like [`write_rows`] but emits the header even when there are no rows.
fn write_rows_with_header<W: Write, T: Serialize>(dest: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(dest);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(src: R, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(src);
    let found: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::Format(format!("expected header {header:?}, found {found:?}")));
    }
    Ok(r.deserialize().collect::<Result<Vec<T>, csv::Error>>()?)
}

pub const SWEEP_HEADER: [&str; 7] = ["R", "sigma", "p_hat", "ci_low", "ci_high", "n_paths", "n_escaped"];
pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_left", "bin_right", "count"];
pub const STATS_HEADER: [&str; 3] = ["t", "mean", "std"];
pub const TRAJECTORY_HEADER: [&str; 4] = ["t", "X", "Y", "path_id"];

/// Writes one row per cell, R-major.
pub fn write_sweep_csv<W: Write>(table: &SweepTable, dest: W) -> Result<()> {
    write_rows_with_header(dest, &SWEEP_HEADER, &table.rows())
}

pub fn write_sweep_rows_csv<W: Write>(rows: &[SweepRow], dest: W) -> Result<()> {
    write_rows_with_header(dest, &SWEEP_HEADER, rows)
}

pub fn read_sweep_rows_csv<R: Read>(src: R) -> Result<Vec<SweepRow>> {
    read_rows(src, &SWEEP_HEADER)
}

/// Rebuilds a sweep table. The confidence level is not stored in the CSV.
pub fn read_sweep_csv<R: Read>(src: R, ci_level: f64) -> Result<SweepTable> {
    let rows = read_sweep_rows_csv(src)?;
    SweepTable::from_rows(&rows, ci_level).ok_or_else(|| Error::Format("sweep rows do not form a full R x sigma grid".into()))
}

pub fn write_histogram_csv<W: Write>(hist: &Histogram, dest: W) -> Result<()> {
    let rows: Vec<HistogramRow> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistogramRow {
            bin_left: hist.bin_edges[i],
            bin_right: hist.bin_edges[i + 1],
            count,
        })
        .collect();
    write_rows_with_header(dest, &HISTOGRAM_HEADER, &rows)
}

/// Reads bins back. Out-of-range counts are not part of the CSV, so the
/// result has `n_out_of_range = 0` and `n_total` equal to the binned mass.
pub fn read_histogram_csv<R: Read>(src: R) -> Result<Histogram> {
    let rows: Vec<HistogramRow> = read_rows(src, &HISTOGRAM_HEADER)?;
    if rows.is_empty() {
        return Err(Error::Format("histogram has no bins".into()));
    }
    let mut bin_edges = vec![rows[0].bin_left];
    for (i, row) in rows.iter().enumerate() {
        if i > 0 && row.bin_left != rows[i - 1].bin_right {
            return Err(Error::Format(format!("bin {i} does not start where bin {} ends", i - 1)));
        }
        bin_edges.push(row.bin_right);
    }
    let counts: Vec<u64> = rows.iter().map(|r| r.count).collect();
    Ok(Histogram {
        bin_edges,
        n_total: counts.iter().sum(),
        counts,
        n_out_of_range: 0,
    })
}

pub fn write_stats_csv<W: Write>(stats: &PathStatistics, dest: W) -> Result<()> {
    let rows: Vec<StatsRow> = (0..stats.times.len())
        .map(|i| StatsRow {
            t: stats.times[i],
            mean: stats.mean[i],
            std: stats.std[i],
        })
        .collect();
    write_rows_with_header(dest, &STATS_HEADER, &rows)
}

pub fn read_stats_csv<R: Read>(src: R) -> Result<PathStatistics> {
    let rows: Vec<StatsRow> = read_rows(src, &STATS_HEADER)?;
    Ok(PathStatistics {
        times: rows.iter().map(|r| r.t).collect(),
        mean: rows.iter().map(|r| r.mean).collect(),
        std: rows.iter().map(|r| r.std).collect(),
    })
}

pub fn write_trajectories_csv<W: Write>(rows: &[TrajectoryRow], dest: W) -> Result<()> {
    if rows.is_empty() {
        return write_rows_with_header::<_, TrajectoryRow>(dest, &TRAJECTORY_HEADER, &[]);
    }
    write_rows(dest, rows.iter())
}

pub fn read_trajectories_csv<R: Read>(src: R) -> Result<Vec<TrajectoryRow>> {
    read_rows(src, &TRAJECTORY_HEADER)
}

/// Self-describing JSON record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub params: ModelParams,
    pub grid: Option<TimeGrid>,
    pub seed: Option<u64>,
    pub results: serde_json::Value,
    pub tool_version: String,
}

impl RunSummary {
    pub fn new<T: Serialize>(
        command: &str,
        params: ModelParams,
        grid: Option<TimeGrid>,
        seed: Option<u64>,
        results: &T,
    ) -> Result<Self> {
        Ok(Self {
            command: command.to_owned(),
            params,
            grid,
            seed,
            results: serde_json::to_value(results)?,
            tool_version: TOOL_VERSION.to_owned(),
        })
    }
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut dest: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut dest, value)?;
    dest.write_all(b"\n")?;
    dest.flush()?;
    Ok(())
}

pub fn read_json<R: Read, T: for<'de> Deserialize<'de>>(src: R) -> Result<T> {
    Ok(serde_json::from_reader(src)?)
}
