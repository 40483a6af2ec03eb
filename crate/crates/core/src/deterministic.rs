//! Noise-free system: RK4 integration, tipping detection and the critical rate.
//!
//! With `sigma = 0` the demand follows `dX/dt = Y - X` behind the logistic
//! source rate. For slow decay (small `R`) `X` catches up with `Y` while
//! `Y > 1` and crosses the upper boundary; above a critical rate `R_c` the
//! source rate drops below 1 first and `X` peaks strictly inside `(0, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{BracketError, Error, ParamError};
use crate::model::{drift, source_rhs, validate, ModelParams};
use crate::scheme::{TimeGrid, TrajectoryPoint};

/// Outcome of one deterministic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicRun {
    /// Peak of `X` over the horizon; exactly 1 when the run tips.
    pub max_x: f64,
    pub tipped: bool,
    /// First time `X` reaches 1, refined by linear interpolation.
    pub t_c: Option<f64>,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

#[inline]
fn rk4_step(x: f64, y: f64, h: f64, rate: f64, delta: f64) -> (f64, f64) {
    let fx = |x: f64, y: f64| drift(x, y);
    let fy = |y: f64| source_rhs(y, rate, delta);

    let (kx1, ky1) = (fx(x, y), fy(y));
    let (x2, y2) = (x + 0.5 * h * kx1, y + 0.5 * h * ky1);
    let (kx2, ky2) = (fx(x2, y2), fy(y2));
    let (x3, y3) = (x + 0.5 * h * kx2, y + 0.5 * h * ky2);
    let (kx3, ky3) = (fx(x3, y3), fy(y3));
    let (x4, y4) = (x + h * kx3, y + h * ky3);
    let (kx4, ky4) = (fx(x4, y4), fy(y4));

    (
        x + h / 6.0 * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4),
        y + h / 6.0 * (ky1 + 2.0 * ky2 + 2.0 * ky3 + ky4),
    )
}

/// Maximum over `[0, 1]` of the cubic Hermite interpolant with end values
/// `x0, x1` and end slopes `d0, d1` (slopes per unit time, step `h`).
fn hermite_peak(x0: f64, x1: f64, d0: f64, d1: f64, h: f64) -> f64 {
    let eval = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * x0
            + (s3 - 2.0 * s2 + s) * h * d0
            + (-2.0 * s3 + 3.0 * s2) * x1
            + (s3 - s2) * h * d1
    };
    // p'(s) = a s^2 + b s + c
    let a = 6.0 * x0 + 3.0 * h * d0 - 6.0 * x1 + 3.0 * h * d1;
    let b = -6.0 * x0 - 4.0 * h * d0 + 6.0 * x1 - 2.0 * h * d1;
    let c = h * d0;

    let mut best = x0.max(x1);
    let mut consider = |s: f64| {
        if (0.0..=1.0).contains(&s) {
            best = best.max(eval(s));
        }
    };
    if a.abs() <= 1e-14 * (b.abs() + c.abs()) {
        if b != 0.0 {
            consider(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // numerically stable quadratic roots
            let q = -0.5 * (b + b.signum() * sq);
            if q != 0.0 {
                consider(q / a);
                consider(c / q);
            } else {
                consider(0.0);
            }
        }
    }
    best
}

/// Integrates the noise-free system on `grid` with classical RK4.
///
/// `sigma` in `params` is ignored. After the first up-crossing of 1 the
/// demand is held at 1 while the source rate keeps evolving. With
/// `Some(stride)` the trajectory is kept at the grid's sampled steps.
pub fn integrate_deterministic(
    params: ModelParams,
    grid: TimeGrid,
    record: Option<usize>,
) -> Result<DeterministicRun, ParamError> {
    let params = validate(params.with_sigma(0.0))?;
    let grid = grid.validate()?;
    let ModelParams { rate, delta, .. } = params;
    let h = grid.h;
    let stride = record.map(|s| s.max(1));

    let mut traj = stride.map(|s| Vec::with_capacity(grid.n_steps / s + 2));
    let push = |traj: &mut Option<Vec<TrajectoryPoint>>, step: usize, x: f64, y: f64| {
        if let (Some(traj), Some(s)) = (traj.as_mut(), stride) {
            if step % s == 0 || step == grid.n_steps {
                traj.push(TrajectoryPoint {
                    t: grid.time(step),
                    x,
                    y,
                });
            }
        }
    };

    let (mut x, mut y) = (params.x0, params.y0);
    let mut max_x = x;
    let mut t_c = None;
    push(&mut traj, 0, x, y);

    for n in 0..grid.n_steps {
        let (x_next, y_next) = rk4_step(x, y, h, rate, delta);
        if t_c.is_none() {
            if x_next >= 1.0 {
                let frac = (1.0 - x) / (x_next - x);
                t_c = Some(grid.time(n) + frac * h);
                max_x = 1.0;
                x = 1.0;
            } else {
                let (d0, d1) = (drift(x, y), drift(x_next, y_next));
                let peak = if d0 > 0.0 && d1 <= 0.0 {
                    hermite_peak(x, x_next, d0, d1, h)
                } else {
                    x_next
                };
                max_x = max_x.max(peak);
                x = x_next;
            }
        } else if record.is_none() {
            break;
        }
        y = y_next;
        push(&mut traj, n + 1, x, y);
    }

    Ok(DeterministicRun {
        max_x,
        tipped: t_c.is_some(),
        t_c,
        trajectory: traj,
    })
}

/// Settings for the bisection search of the critical rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRateSearch {
    pub horizon: f64,
    /// Requested RK4 step; rounded so that it divides the horizon.
    pub step: f64,
    /// Probe rate expected to tip.
    pub r_min: f64,
    /// Probe rate expected not to tip.
    pub r_max: f64,
    pub tolerance: f64,
}

impl Default for CriticalRateSearch {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            step: 1e-4,
            r_min: 0.01,
            r_max: 1.0,
            tolerance: 1e-4,
        }
    }
}

impl CriticalRateSearch {
    pub fn grid(&self) -> TimeGrid {
        let n = (self.horizon / self.step).ceil().max(1.0) as usize;
        TimeGrid::with_horizon(self.horizon, n)
    }
}

/// Final bisection bracket around the critical rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRateResult {
    /// Largest rate seen to tip.
    pub r_low: f64,
    /// Smallest rate seen not to tip.
    pub r_high: f64,
    pub width: f64,
    /// Bisection evaluations after the two probes.
    pub evaluations: usize,
    /// Tipping time at `r_low`.
    pub t_c: f64,
    pub horizon: f64,
}

/// Bisects on "does the noise-free run tip" between the probe rates.
pub fn critical_rate(template: ModelParams, search: CriticalRateSearch) -> Result<CriticalRateResult, Error> {
    if !(search.tolerance > 0.0) {
        return Err(ParamError::new("tolerance", search.tolerance, "must be > 0").into());
    }
    if !(search.horizon > 0.0 && search.horizon.is_finite()) {
        return Err(ParamError::new("horizon", search.horizon, "must be finite and > 0").into());
    }
    if !(search.r_min < search.r_max) {
        return Err(ParamError::new("r_min", search.r_min, "must be below r_max").into());
    }
    let grid = search.grid();
    let run = |rate: f64| integrate_deterministic(template.with_rate(rate), grid, None);

    let low = run(search.r_min)?;
    let high = run(search.r_max)?;
    if !low.tipped || high.tipped {
        return Err(BracketError {
            r_low: search.r_min,
            r_high: search.r_max,
            low_tips: low.tipped,
            high_tips: high.tipped,
        }
        .into());
    }

    let (mut r_low, mut r_high) = (search.r_min, search.r_max);
    let mut t_c = low.t_c.expect("tipped run has a tipping time");
    let mut evaluations = 0;
    while r_high - r_low > search.tolerance {
        let mid = 0.5 * (r_low + r_high);
        let probe = run(mid)?;
        evaluations += 1;
        match probe.t_c {
            Some(t) => {
                r_low = mid;
                t_c = t;
            }
            None => r_high = mid,
        }
    }

    Ok(CriticalRateResult {
        r_low,
        r_high,
        width: r_high - r_low,
        evaluations,
        t_c,
        horizon: grid.horizon(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rate: f64) -> ModelParams {
        ModelParams::new(0.0, rate, 0.5, 0.1)
    }

    #[test]
    fn tipping_examples() {
        let grid = TimeGrid::with_horizon(10.0, 100_000);
        let slow = integrate_deterministic(params(0.1), grid, None).unwrap();
        assert!(slow.tipped);
        assert_eq!(slow.max_x, 1.0);
        let t_c = slow.t_c.unwrap();
        assert!(t_c > 0.0 && t_c < 10.0);

        let fast = integrate_deterministic(params(0.5), grid, None).unwrap();
        assert!(!fast.tipped);
        assert!(fast.t_c.is_none());
        assert!(fast.max_x < 1.0 && fast.max_x > 0.1);
    }

    #[test]
    fn start_next_to_boundary_tips_immediately() {
        let p = ModelParams::new(0.0, 0.5, 0.5, 1.0 - 1e-9);
        let run = integrate_deterministic(p, TimeGrid::with_horizon(10.0, 100_000), None).unwrap();
        assert!(run.tipped);
        assert!(run.t_c.unwrap() < 1e-4);
    }

    #[test]
    fn interpolated_crossing_is_consistent_across_steps() {
        let coarse = integrate_deterministic(params(0.1), TimeGrid::with_horizon(10.0, 10_000), None).unwrap();
        let fine = integrate_deterministic(params(0.1), TimeGrid::with_horizon(10.0, 100_000), None).unwrap();
        assert!((coarse.t_c.unwrap() - fine.t_c.unwrap()).abs() < 1e-5);
    }

    #[test]
    fn recorded_trajectory_holds_boundary() {
        let grid = TimeGrid::with_horizon(10.0, 10_000);
        let run = integrate_deterministic(params(0.1), grid, Some(100)).unwrap();
        let traj = run.trajectory.unwrap();
        assert_eq!(traj.len(), 101);
        let t_c = run.t_c.unwrap();
        for pt in &traj {
            if pt.t >= t_c {
                assert_eq!(pt.x, 1.0);
            } else {
                assert!(pt.x < 1.0);
            }
        }
        // source rate keeps decaying after the tip
        assert!(traj.last().unwrap().y < 0.7);
    }

    #[test]
    fn peak_converges_at_fourth_order() {
        let peak = |n: usize| {
            integrate_deterministic(params(0.5), TimeGrid::with_horizon(10.0, n), None)
                .unwrap()
                .max_x
        };
        let (a, b, c) = (peak(200), peak(400), peak(800));
        let ratio = (a - b) / (b - c);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn hermite_peak_of_a_parabola() {
        // x(t) = 1 - (t - 0.3)^2 on [0, 1]; the cubic interpolant is exact
        let x = |t: f64| 1.0 - (t - 0.3) * (t - 0.3);
        let d = |t: f64| -2.0 * (t - 0.3);
        let p = hermite_peak(x(0.0), x(1.0), d(0.0), d(1.0), 1.0);
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn critical_rate_brackets_transition() {
        let res = critical_rate(params(0.3), CriticalRateSearch::default()).unwrap();
        assert!(res.r_low > 0.1 && res.r_high < 0.2, "{res:?}");
        assert!(res.width <= 1e-4);
        assert!(res.evaluations <= 15);

        let grid = CriticalRateSearch::default().grid();
        let below = integrate_deterministic(params(res.r_low - 1e-3), grid, None).unwrap();
        let above = integrate_deterministic(params(res.r_high), grid, None).unwrap();
        assert!(below.tipped);
        assert!(!above.tipped);
    }

    #[test]
    fn critical_rate_rejects_bad_bracket() {
        let search = CriticalRateSearch {
            r_min: 0.5,
            r_max: 1.0,
            ..CriticalRateSearch::default()
        };
        match critical_rate(params(0.3), search) {
            Err(Error::Bracket(b)) => assert!(!b.low_tips && !b.high_tips),
            other => panic!("expected bracket error, got {other:?}"),
        }
        let search = CriticalRateSearch {
            tolerance: 0.0,
            ..CriticalRateSearch::default()
        };
        assert!(matches!(critical_rate(params(0.3), search), Err(Error::Param(_))));
    }

    #[test]
    fn tipping_is_a_single_step_in_rate() {
        let grid = CriticalRateSearch::default().grid();
        let flags: Vec<bool> = (1..=20)
            .map(|i| integrate_deterministic(params(0.05 * i as f64), grid, None).unwrap().tipped)
            .collect();
        let switches = flags.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(switches, 1, "{flags:?}");
        assert!(flags[0] && !flags[19]);
    }
}
