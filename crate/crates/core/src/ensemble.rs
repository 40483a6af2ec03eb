//! Monte Carlo driver over many independent paths.
//!
//! Path `i` of a run with master seed `s` always draws from stream `(s, i)`,
//! and every reduction is either an integer tally or is merged in path-index
//! order, so results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::model::ModelParams;
use crate::report::{wilson_interval, SweepRow};
use crate::rng::{derive_seed, StreamKey};
use crate::scheme::{PathSimulator, TimeGrid};

/// Paths per accumulation batch in [`path_statistics`]. Fixed so that the
/// merge tree does not depend on the thread count.
const STATS_BATCH: usize = 256;

/// Estimated escape probability of one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub n_paths: u64,
    pub n_escaped: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
}

impl EscapeEstimate {
    /// Point estimate plus Wilson score interval.
    pub fn from_counts(n_escaped: u64, n_paths: u64, ci_level: f64) -> Self {
        let (ci_low, ci_high) = wilson_interval(n_escaped, n_paths, ci_level);
        Self {
            n_paths,
            n_escaped,
            p_hat: n_escaped as f64 / n_paths as f64,
            ci_low,
            ci_high,
            ci_level,
        }
    }
}

fn check_paths(n_paths: usize, min: usize) -> Result<(), ParamError> {
    if n_paths < min {
        return Err(ParamError::new("n_paths", n_paths as f64, if min == 1 { "must be >= 1" } else { "must be >= 2" }));
    }
    Ok(())
}

fn check_level(ci_level: f64) -> Result<(), ParamError> {
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(ParamError::new("ci_level", ci_level, "must lie in (0, 1)"));
    }
    Ok(())
}

/// Fraction of `n_paths` paths that reach the upper boundary within the horizon.
pub fn estimate_escape(
    params: ModelParams,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    ci_level: f64,
) -> Result<EscapeEstimate, ParamError> {
    check_paths(n_paths, 1)?;
    check_level(ci_level)?;
    let sim = PathSimulator::new(params, grid)?;
    let escaped = (0..n_paths as u64)
        .into_par_iter()
        .filter(|&i| sim.run(StreamKey::new(master_seed, i), None).escaped)
        .count();
    Ok(EscapeEstimate::from_counts(escaped as u64, n_paths as u64, ci_level))
}

/// Hitting times of the escaped paths, in path-index order.
pub fn collect_hitting_times(
    params: ModelParams,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<f64>, ParamError> {
    check_paths(n_paths, 1)?;
    let sim = PathSimulator::new(params, grid)?;
    Ok((0..n_paths as u64)
        .into_par_iter()
        .filter_map(|i| sim.run(StreamKey::new(master_seed, i), None).hit_time)
        .collect())
}

/// [`estimate_escape`] and [`collect_hitting_times`] from a single pass.
pub fn escape_with_hitting_times(
    params: ModelParams,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    ci_level: f64,
) -> Result<(EscapeEstimate, Vec<f64>), ParamError> {
    check_level(ci_level)?;
    let times = collect_hitting_times(params, grid, n_paths, master_seed)?;
    let est = EscapeEstimate::from_counts(times.len() as u64, n_paths as u64, ci_level);
    Ok((est, times))
}

/// Streaming mean and variance (Welford), mergeable with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * (other.count as f64 / n as f64);
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64 / n as f64);
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (`n - 1` denominator); 0 below two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Cross-sectional mean and standard deviation of `X` over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStatistics {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Mean and sample standard deviation of `X` across paths at about
/// `n_sample_points` evenly spaced times. Absorbed paths count as `X = 1`.
pub fn path_statistics(
    params: ModelParams,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    n_sample_points: usize,
) -> Result<PathStatistics, ParamError> {
    check_paths(n_paths, 2)?;
    let sim = PathSimulator::new(params, grid)?;
    let stride = grid.stride_for_points(n_sample_points);
    let steps = grid.sample_steps(stride);
    let n_points = steps.len();

    let batches: Vec<Vec<RunningStats>> = (0..n_paths.div_ceil(STATS_BATCH))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![RunningStats::new(); n_points];
            let start = b * STATS_BATCH;
            let end = (start + STATS_BATCH).min(n_paths);
            for i in start..end {
                let mut slot = 0;
                sim.run_sampled(StreamKey::new(master_seed, i as u64), Some(stride), |_, x| {
                    acc[slot].push(x);
                    slot += 1;
                });
                debug_assert_eq!(slot, n_points);
            }
            acc
        })
        .collect();

    let mut total = vec![RunningStats::new(); n_points];
    for batch in &batches {
        for (t, b) in total.iter_mut().zip(batch) {
            t.merge(b);
        }
    }

    Ok(PathStatistics {
        times: steps.iter().map(|&s| grid.time(s)).collect(),
        mean: total.iter().map(RunningStats::mean).collect(),
        std: total.iter().map(RunningStats::std_dev).collect(),
    })
}

/// Escape probabilities over an `R x sigma` grid, rows indexed by `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub sigma_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub cells: Vec<Vec<EscapeEstimate>>,
}

impl SweepTable {
    pub fn cell(&self, rate: f64, sigma: f64) -> Option<&EscapeEstimate> {
        let i = self.r_values.iter().position(|&r| r == rate)?;
        let j = self.sigma_values.iter().position(|&s| s == sigma)?;
        Some(&self.cells[i][j])
    }

    /// Flattened rows, R-major.
    pub fn rows(&self) -> Vec<SweepRow> {
        self.r_values
            .iter()
            .zip(&self.cells)
            .flat_map(|(&r, row)| {
                self.sigma_values
                    .iter()
                    .zip(row)
                    .map(move |(&s, est)| SweepRow::new(r, s, est))
            })
            .collect()
    }

    /// Inverse of [`SweepTable::rows`]; `None` unless the rows form a full
    /// R-major grid.
    pub fn from_rows(rows: &[SweepRow], ci_level: f64) -> Option<Self> {
        let mut r_values: Vec<f64> = Vec::new();
        let mut sigma_values: Vec<f64> = Vec::new();
        for row in rows {
            if r_values.last() != Some(&row.rate) {
                r_values.push(row.rate);
            }
            if r_values.len() == 1 {
                sigma_values.push(row.sigma);
            }
        }
        if r_values.is_empty() || rows.len() != r_values.len() * sigma_values.len() {
            return None;
        }
        let mut cells = Vec::with_capacity(r_values.len());
        for (i, chunk) in rows.chunks(sigma_values.len()).enumerate() {
            let mut row_cells = Vec::with_capacity(chunk.len());
            for (j, row) in chunk.iter().enumerate() {
                if row.rate != r_values[i] || row.sigma != sigma_values[j] {
                    return None;
                }
                row_cells.push(EscapeEstimate {
                    n_paths: row.n_paths,
                    n_escaped: row.n_escaped,
                    p_hat: row.p_hat,
                    ci_low: row.ci_low,
                    ci_high: row.ci_high,
                    ci_level,
                });
            }
            cells.push(row_cells);
        }
        Some(Self {
            sigma_values,
            r_values,
            cells,
        })
    }
}

/// Master seed of the sweep cell at `(rate, sigma)`.
///
/// Keyed on the parameter values, not their positions, so reshaping the
/// sweep leaves existing cells untouched.
pub fn cell_seed(master_seed: u64, rate: f64, sigma: f64) -> u64 {
    derive_seed(master_seed, &[rate.to_bits(), sigma.to_bits()])
}

/// Runs [`estimate_escape`] for every `(R, sigma)` pair.
pub fn sweep(
    sigma_values: &[f64],
    r_values: &[f64],
    template: ModelParams,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    ci_level: f64,
) -> Result<SweepTable, ParamError> {
    sweep_with_progress(sigma_values, r_values, template, grid, n_paths, master_seed, ci_level, |_, _, _| {})
}

/// [`sweep`] with a callback after each finished cell.
#[allow(clippy::too_many_arguments)]
pub fn sweep_with_progress<F>(
    sigma_values: &[f64],
    r_values: &[f64],
    template: ModelParams,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    ci_level: f64,
    mut on_cell: F,
) -> Result<SweepTable, ParamError>
where
    F: FnMut(f64, f64, &EscapeEstimate),
{
    if sigma_values.is_empty() {
        return Err(ParamError::new("sigma", f64::NAN, "sweep needs at least one value"));
    }
    if r_values.is_empty() {
        return Err(ParamError::new("R", f64::NAN, "sweep needs at least one value"));
    }
    let mut cells = Vec::with_capacity(r_values.len());
    for &rate in r_values {
        let mut row = Vec::with_capacity(sigma_values.len());
        for &sigma in sigma_values {
            let params = template.with_rate(rate).with_sigma(sigma);
            let est = estimate_escape(params, grid, n_paths, cell_seed(master_seed, rate, sigma), ci_level)?;
            on_cell(rate, sigma, &est);
            row.push(est);
        }
        cells.push(row);
    }
    Ok(SweepTable {
        sigma_values: sigma_values.to_vec(),
        r_values: r_values.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(sigma: f64, rate: f64) -> ModelParams {
        ModelParams::new(sigma, rate, 0.5, 0.1)
    }

    fn small_grid() -> TimeGrid {
        TimeGrid::new(5e-3, 2000)
    }

    #[test]
    fn estimate_is_consistent_with_hitting_times() {
        let p = base(0.4, 0.2);
        let est = estimate_escape(p, small_grid(), 2000, 9, 0.95).unwrap();
        let times = collect_hitting_times(p, small_grid(), 2000, 9).unwrap();
        assert_eq!(est.n_escaped, times.len() as u64);
        assert!(est.n_escaped > 0);
        assert!(est.ci_low <= est.p_hat && est.p_hat <= est.ci_high);
        assert!(times.iter().all(|&t| t > 0.0 && t <= small_grid().horizon()));

        let (est2, times2) = escape_with_hitting_times(p, small_grid(), 2000, 9, 0.95).unwrap();
        assert_eq!(est2, est);
        assert_eq!(times2, times);
    }

    #[test]
    fn no_escapes_give_empty_times() {
        let p = base(0.1, 0.5);
        let times = collect_hitting_times(p, small_grid(), 500, 1).unwrap();
        assert!(times.is_empty());
        let est = estimate_escape(p, small_grid(), 500, 1, 0.95).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert_eq!(est.ci_low, 0.0);
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(estimate_escape(base(0.2, 0.2), small_grid(), 0, 1, 0.95).is_err());
        assert!(estimate_escape(base(0.2, 0.2), small_grid(), 10, 1, 1.0).is_err());
        assert!(path_statistics(base(0.2, 0.2), small_grid(), 1, 1, 10).is_err());
        assert!(sweep(&[], &[0.1], base(0.2, 0.2), small_grid(), 10, 1, 0.95).is_err());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let p = base(0.4, 0.2);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                (
                    estimate_escape(p, small_grid(), 1500, 3, 0.95).unwrap(),
                    collect_hitting_times(p, small_grid(), 1500, 3).unwrap(),
                    path_statistics(p, small_grid(), 700, 3, 40).unwrap(),
                )
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn statistics_at_start_and_without_noise() {
        let stats = path_statistics(base(0.3, 0.3), small_grid(), 300, 5, 50).unwrap();
        assert_eq!(stats.times[0], 0.0);
        assert_eq!(stats.mean[0], 0.1);
        assert_eq!(stats.std[0], 0.0);
        assert_eq!(stats.times.len(), stats.mean.len());
        assert_eq!(stats.times.len(), stats.std.len());
        assert!(stats.std.iter().all(|&s| s >= 0.0));

        let flat = path_statistics(base(0.0, 0.3), small_grid(), 300, 5, 50).unwrap();
        assert!(flat.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn welford_matches_two_pass() {
        // X at the final sample of 1000 paths, accumulated both ways
        let p = base(0.4, 0.3);
        let grid = small_grid();
        let sim = PathSimulator::new(p, grid).unwrap();
        let stride = grid.stride_for_points(20);
        let n_points = grid.sample_steps(stride).len();
        let mut samples = vec![Vec::new(); n_points];
        for i in 0..1000 {
            let mut slot = 0;
            sim.run_sampled(StreamKey::new(77, i), Some(stride), |_, x| {
                samples[slot].push(x);
                slot += 1;
            });
        }
        let stats = path_statistics(p, grid, 1000, 77, 20).unwrap();
        for (k, xs) in samples.iter().enumerate() {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            let std = var.sqrt();
            assert!((stats.mean[k] - mean).abs() <= 1e-12 * mean.abs().max(1e-300), "mean at {k}");
            // the two-pass oracle itself rounds to ~1e-15 when all values coincide
            let scale = std.max(mean);
            assert!((stats.std[k] - std).abs() <= 1e-12 * scale, "std at {k}: {} vs {std}", stats.std[k]);
        }
    }

    #[test]
    fn running_stats_merge_equals_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 997.0).collect();
        let mut seq = RunningStats::new();
        xs.iter().for_each(|&x| seq.push(x));
        let mut merged = RunningStats::new();
        for chunk in xs.chunks(77) {
            let mut part = RunningStats::new();
            chunk.iter().for_each(|&x| part.push(x));
            merged.merge(&part);
        }
        assert_eq!(merged.count(), 1000);
        assert!((merged.mean() - seq.mean()).abs() < 1e-14);
        assert!((merged.variance() - seq.variance()).abs() < 1e-14);
    }

    #[test]
    fn single_cell_sweep_equals_estimate() {
        let template = base(0.0, 1.0);
        let table = sweep(&[0.4], &[0.2], template, small_grid(), 800, 42, 0.95).unwrap();
        assert_eq!(table.cells.len(), 1);
        assert_eq!(table.cells[0].len(), 1);
        let direct = estimate_escape(base(0.4, 0.2), small_grid(), 800, cell_seed(42, 0.2, 0.4), 0.95).unwrap();
        assert_eq!(table.cells[0][0], direct);
        assert_eq!(table.cell(0.2, 0.4), Some(&direct));
    }

    #[test]
    fn sweep_cells_survive_reshaping() {
        let template = base(0.0, 1.0);
        let small = sweep(&[0.4], &[0.2, 0.3], template, small_grid(), 300, 42, 0.95).unwrap();
        let big = sweep(&[0.8, 0.4], &[0.1, 0.2, 0.3], template, small_grid(), 300, 42, 0.95).unwrap();
        assert_eq!(small.cell(0.2, 0.4), big.cell(0.2, 0.4));
        assert_eq!(small.cell(0.3, 0.4), big.cell(0.3, 0.4));
        assert_eq!(big.rows().len(), 6);
        assert_eq!(big.rows()[1].rate, 0.1);
        assert_eq!(big.rows()[1].sigma, 0.4);
        assert_eq!(SweepTable::from_rows(&big.rows(), 0.95).unwrap(), big);
        assert!(SweepTable::from_rows(&big.rows()[..5], 0.95).is_none());
    }
}
