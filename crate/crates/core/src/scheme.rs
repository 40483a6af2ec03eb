//! Truncated Euler–Maruyama discretization and single-path simulation.
//!
//! ```text
//! X[n+1] = X[n] + (Y[n] - X[n]) h + sigma sqrt(X[n] (1 - X[n])) sqrt(h) W[n]   if X[n] < 1
//! X[n+1] = X[n]                                                             if X[n] >= 1
//! Y[n+1] = Y[n] + R Y[n] (1 - Y[n] / (1 - delta)) h
//! ```
//!
//! A path escapes at the first step whose raw Euler value reaches 1; the
//! stored state is then exactly 1 for the rest of the horizon while `Y` keeps
//! evolving. Raw values below 0 are floored to 0 (not absorbing) and counted.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::model::{diffusion_amplitude, drift, source_rhs, validate, ModelParams};
use crate::rng::{NormalStream, StreamKey};

/// Number of trajectory points kept per path when no stride is given.
pub const DEFAULT_TRAJECTORY_POINTS: usize = 200;

/// Uniform time grid `t_n = n h`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub h: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(h: f64, n_steps: usize) -> Self {
        Self { h, n_steps }
    }

    /// `h = 10 / 200_000` over 200,000 steps.
    pub fn paper() -> Self {
        Self::new(10.0 / 200_000.0, 200_000)
    }

    /// `h = 1e-3` over 10,000 steps; same horizon as [`TimeGrid::paper`].
    pub fn desk() -> Self {
        Self::new(1e-3, 10_000)
    }

    /// Grid with `n_steps` steps covering `[0, horizon]`.
    pub fn with_horizon(horizon: f64, n_steps: usize) -> Self {
        Self::new(horizon / n_steps as f64, n_steps)
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, step: usize) -> f64 {
        self.h * step as f64
    }

    pub fn validate(self) -> Result<Self, ParamError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(ParamError::new("h", self.h, "must be finite and > 0"));
        }
        if self.n_steps == 0 {
            return Err(ParamError::new("steps", 0.0, "must be >= 1"));
        }
        Ok(self)
    }

    /// Stride that yields roughly `points` samples over the grid.
    pub fn stride_for_points(&self, points: usize) -> usize {
        (self.n_steps / points.max(1)).max(1)
    }

    /// Sampled step indices for a stride: `0, s, 2s, ...` and always the last step.
    pub fn sample_steps(&self, stride: usize) -> Vec<usize> {
        let stride = stride.max(1);
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(stride).collect();
        if steps.last() != Some(&self.n_steps) {
            steps.push(self.n_steps);
        }
        steps
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::paper()
    }
}

/// One recorded point of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Result of simulating one path over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub escaped: bool,
    pub hit_step: Option<usize>,
    pub hit_time: Option<f64>,
    /// Number of steps whose raw value fell below 0 and was floored.
    pub floor_events: u64,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

/// Euler increment without truncation.
#[inline(always)]
fn euler_raw(x: f64, y: f64, h: f64, sigma: f64, sqrt_h: f64, w: f64) -> f64 {
    x + drift(x, y) * h + diffusion_amplitude(x, sigma) * sqrt_h * w
}

/// One truncated Euler–Maruyama step of the demand process.
///
/// States at or above 1 are held; raw values below 0 are floored to 0.
pub fn em_step(x: f64, y: f64, h: f64, sigma: f64, w: f64) -> f64 {
    if x >= 1.0 {
        return x;
    }
    euler_raw(x, y, h, sigma, h.sqrt(), w).max(0.0)
}

/// One explicit Euler step of the logistic source rate.
#[inline]
pub fn logistic_step(y: f64, h: f64, rate: f64, delta: f64) -> f64 {
    y + source_rhs(y, rate, delta) * h
}

/// Simulates many paths that share the same parameters and grid.
///
/// The source rate is deterministic, so its Euler sequence is computed once
/// and reused by every path.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    params: ModelParams,
    grid: TimeGrid,
    sqrt_h: f64,
    source: Vec<f64>,
}

impl PathSimulator {
    pub fn new(params: ModelParams, grid: TimeGrid) -> Result<Self, ParamError> {
        let params = validate(params)?;
        let grid = grid.validate()?;
        let mut source = Vec::with_capacity(grid.n_steps + 1);
        let mut y = params.y0;
        source.push(y);
        for _ in 0..grid.n_steps {
            y = logistic_step(y, grid.h, params.rate, params.delta);
            source.push(y);
        }
        Ok(Self {
            params,
            grid,
            sqrt_h: grid.h.sqrt(),
            source,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Euler sequence `Y[0..=N]` of the source rate.
    pub fn source_path(&self) -> &[f64] {
        &self.source
    }

    /// Runs one path; with `Some(stride)` the trajectory is kept at the
    /// steps of [`TimeGrid::sample_steps`].
    pub fn run(&self, key: StreamKey, record: Option<usize>) -> PathOutcome {
        match record {
            None => self.run_sampled(key, None, |_, _| {}),
            Some(stride) => {
                let mut traj = Vec::with_capacity(self.grid.n_steps / stride.max(1) + 2);
                let mut outcome = self.run_sampled(key, Some(stride), |step, x| {
                    traj.push(TrajectoryPoint {
                        t: self.grid.time(step),
                        x,
                        y: self.source[step],
                    })
                });
                outcome.trajectory = Some(traj);
                outcome
            }
        }
    }

    /// Runs one path and reports `(step, X)` at every sampled step.
    ///
    /// Samples after an escape report exactly 1. The `trajectory` field of
    /// the returned outcome is left empty.
    pub fn run_sampled<F>(&self, key: StreamKey, stride: Option<usize>, mut on_sample: F) -> PathOutcome
    where
        F: FnMut(usize, f64),
    {
        let n_steps = self.grid.n_steps;
        let h = self.grid.h;
        let sigma = self.params.sigma;
        let stride = stride.map(|s| s.max(1));
        let mut stream = NormalStream::new(key);

        let mut x = self.params.x0;
        let mut floor_events = 0u64;
        let mut hit_step = None;

        if stride.is_some() {
            on_sample(0, x);
        }
        for n in 0..n_steps {
            let w = if sigma == 0.0 { 0.0 } else { stream.next_normal() };
            let raw = euler_raw(x, self.source[n], h, sigma, self.sqrt_h, w);
            let step = n + 1;
            if raw >= 1.0 {
                hit_step = Some(step);
                break;
            }
            if raw < 0.0 {
                floor_events += 1;
                x = 0.0;
            } else {
                x = raw;
            }
            if let Some(s) = stride {
                if step % s == 0 || step == n_steps {
                    on_sample(step, x);
                }
            }
        }

        if let (Some(hit), Some(s)) = (hit_step, stride) {
            // absorbed: every remaining sample sits at the boundary
            let first = hit.div_ceil(s) * s;
            for step in (first..=n_steps).step_by(s) {
                on_sample(step, 1.0);
            }
            if n_steps % s != 0 {
                on_sample(n_steps, 1.0);
            }
        }

        PathOutcome {
            escaped: hit_step.is_some(),
            hit_step,
            hit_time: hit_step.map(|s| self.grid.time(s)),
            floor_events,
            trajectory: None,
        }
    }
}

/// Simulates a single path. `record` is the trajectory stride, if any.
pub fn simulate_path(
    params: ModelParams,
    grid: TimeGrid,
    key: StreamKey,
    record: Option<usize>,
) -> Result<PathOutcome, ParamError> {
    Ok(PathSimulator::new(params, grid)?.run(key, record))
}
