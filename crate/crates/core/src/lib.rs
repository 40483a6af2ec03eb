//! Simulation of a Jacobi (Pearson) diffusion driven by a logistically
//! decaying source rate, and of the rate-induced tipping it exhibits.
//!
//! * [`model`]: coefficients, parameter validation, Feller boundary test.
//! * [`rng`]: keyed per-path normal streams.
//! * [`scheme`]: truncated Euler–Maruyama paths with escape detection.
//! * [`ensemble`]: escape probabilities, hitting times, path statistics, sweeps.
//! * [`deterministic`]: noise-free RK4 runs and the critical rate.
//! * [`report`]: histograms, Wilson intervals, CSV/JSON output.
//! * [`cli`]: the `jacobi-tip` command-line harness.

pub mod cli;
pub mod deterministic;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod report;
pub mod rng;
pub mod scheme;

pub use error::{Error, ParamError, Result};
pub use model::{feller_classify, BoundaryClassification, ModelParams};
pub use rng::StreamKey;
pub use scheme::{simulate_path, PathOutcome, PathSimulator, TimeGrid};
