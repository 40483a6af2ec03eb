//! Command-line harness.
//!
//! Every simulation subcommand resolves its settings in three layers:
//! preset defaults, then an optional TOML file given with `--config`, then
//! explicit flags. Primary output goes to `--out` (or stdout), an optional
//! JSON summary to `--json`, and progress messages to stderr.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::deterministic::{critical_rate, CriticalRateSearch};
use crate::ensemble::{escape_with_hitting_times, estimate_escape, path_statistics, sweep_with_progress};
use crate::model::{feller_classify, validate, ModelParams};
use crate::report::{
    build_histogram, format_percent, uniform_edges, write_histogram_csv, write_json, write_stats_csv,
    write_sweep_csv, write_sweep_rows_csv, write_trajectories_csv, RunSummary, SweepRow, TrajectoryRow,
};
use crate::scheme::{PathSimulator, TimeGrid, DEFAULT_TRAJECTORY_POINTS};
use crate::StreamKey;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
pub const DEFAULT_HIST_BINS: usize = 50;
pub const DEFAULT_STATS_POINTS: usize = 200;
pub const DEFAULT_PATHS_COUNT: usize = 10;
pub const TABLE_SIGMAS: [f64; 4] = [0.1, 0.2, 0.4, 0.8];
pub const TABLE_RATES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Parser)]
#[command(name = "jacobi-tip", version, about = "Rate-induced tipping of a Jacobi diffusion with a decaying logistic source rate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Feller boundary classification for a frozen source level
    Classify(ClassifyArgs),
    /// Sample trajectories (t, X, Y) of a few paths
    Paths(SingleArgs),
    /// Escape probability with a Wilson confidence interval
    Escape(SingleArgs),
    /// Escape probabilities over an R x sigma grid
    Sweep(SweepArgs),
    /// Histogram of first hitting times of the upper boundary
    Hist(SingleArgs),
    /// Cross-sectional mean and standard deviation of X over time
    Stats(SingleArgs),
    /// Bisection for the critical rate of the noise-free system
    CriticalRate(CriticalRateArgs),
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Frozen source level r
    #[arg(long = "r")]
    pub r: f64,
    /// Noise amplitude
    #[arg(long)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// h = 10/200000, 200000 steps, 200000 paths
    Paper,
    /// h = 1e-3, 10000 steps, 10000 paths
    Desk,
}

/// Flags shared by every simulation subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Source decay offset, in (0, 1)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Initial state, in (0, 1)
    #[arg(long)]
    pub x0: Option<f64>,
    /// Initial source rate (default 1 + delta)
    #[arg(long)]
    pub y0: Option<f64>,
    /// Time step
    #[arg(long)]
    pub h: Option<f64>,
    /// Number of time steps
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    /// Number of Monte Carlo paths
    #[arg(long = "n-paths", value_parser = clap::value_parser!(u64).range(1..))]
    pub n_paths: Option<u64>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence level of the Wilson interval
    #[arg(long = "ci-level")]
    pub ci_level: Option<f64>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Worker threads (default: available parallelism)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    /// TOML file with default settings; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Primary output file (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary file
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Histogram bins (hist)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub bins: Option<u64>,
    /// Approximate number of sampled time points (paths, stats)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub points: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SingleArgs {
    /// Noise amplitude
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Logistic rate of the source
    #[arg(long = "R")]
    pub rate: Option<f64>,
    /// Alias of --n-paths
    #[arg(short = 'n', long = "n", value_parser = clap::value_parser!(u64).range(1..), conflicts_with = "n_paths")]
    pub n: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated volatilities
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub sigma: Option<Vec<f64>>,
    /// Comma-separated rates
    #[arg(long = "R", value_delimiter = ',', num_args = 1..)]
    pub rate: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CriticalRateArgs {
    /// Source decay offset, in (0, 1)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Initial state, in (0, 1)
    #[arg(long)]
    pub x0: Option<f64>,
    /// Initial source rate (default 1 + delta)
    #[arg(long)]
    pub y0: Option<f64>,
    /// Comma-separated horizons; one bracket per horizon
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub horizon: Vec<f64>,
    /// RK4 step
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Lower end of the initial bracket (must not tip)
    #[arg(long = "r-min", default_value_t = 0.01)]
    pub r_min: f64,
    /// Upper end of the initial bracket (must tip)
    #[arg(long = "r-max", default_value_t = 1.0)]
    pub r_max: f64,
    /// Stop once the bracket is narrower than this
    #[arg(long = "tol", default_value_t = 1e-4)]
    pub tolerance: f64,
    /// JSON output file (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Either one number or a list, as accepted in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sigma: Option<OneOrMany>,
    #[serde(rename = "R")]
    pub rate: Option<OneOrMany>,
    pub delta: Option<f64>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub h: Option<f64>,
    pub steps: Option<u64>,
    pub n_paths: Option<u64>,
    pub seed: Option<u64>,
    pub ci_level: Option<f64>,
    pub preset: Option<Preset>,
    pub threads: Option<u64>,
    pub bins: Option<u64>,
    pub points: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved settings of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub sigma: Vec<f64>,
    pub rate: Vec<f64>,
    pub delta: f64,
    pub x0: f64,
    pub y0: f64,
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub threads: Option<usize>,
    pub bins: usize,
    pub points: usize,
}

impl RunConfig {
    /// Layers preset defaults, config file and flags.
    ///
    /// `default_paths` overrides the preset's path count for commands that
    /// only want a handful of paths.
    pub fn resolve(
        common: &CommonArgs,
        sigma_flag: Option<Vec<f64>>,
        rate_flag: Option<Vec<f64>>,
        n_flag: Option<u64>,
        defaults: (Vec<f64>, Vec<f64>),
        default_paths: Option<usize>,
    ) -> anyhow::Result<Self> {
        let file = match &common.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let preset = common.preset.or(file.preset).unwrap_or(Preset::Paper);
        let (grid, preset_paths) = match preset {
            Preset::Paper => (TimeGrid::paper(), 200_000),
            Preset::Desk => (TimeGrid::desk(), 10_000),
        };

        let sigma = sigma_flag
            .or(file.sigma.map(OneOrMany::into_vec))
            .unwrap_or(defaults.0);
        let rate = rate_flag.or(file.rate.map(OneOrMany::into_vec)).unwrap_or(defaults.1);
        let delta = common.delta.or(file.delta).unwrap_or(0.5);
        let x0 = common.x0.or(file.x0).unwrap_or(0.1);
        let y0 = common.y0.or(file.y0).unwrap_or(1.0 + delta);
        let h = common.h.or(file.h).unwrap_or(grid.h);
        let steps = common.steps.or(file.steps).unwrap_or(grid.n_steps as u64);
        let n_paths = n_flag
            .or(common.n_paths)
            .or(file.n_paths)
            .map(|n| n as usize)
            .unwrap_or(default_paths.unwrap_or(preset_paths));
        let cfg = Self {
            sigma,
            rate,
            delta,
            x0,
            y0,
            grid: TimeGrid::new(h, steps as usize),
            n_paths,
            seed: common.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            ci_level: common.ci_level.or(file.ci_level).unwrap_or(DEFAULT_CI_LEVEL),
            threads: common.threads.or(file.threads).map(|t| t as usize),
            bins: common.bins.or(file.bins).unwrap_or(DEFAULT_HIST_BINS as u64) as usize,
            points: common.points.or(file.points).unwrap_or(DEFAULT_STATS_POINTS as u64) as usize,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> anyhow::Result<()> {
        if self.sigma.is_empty() || self.rate.is_empty() {
            bail!("at least one sigma and one R value are required");
        }
        for &sigma in &self.sigma {
            for &rate in &self.rate {
                validate(self.params(sigma, rate))?;
            }
        }
        self.grid.validate()?;
        if self.n_paths == 0 {
            bail!("n_paths must be >= 1");
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            bail!("ci-level must lie in (0, 1), got {}", self.ci_level);
        }
        if self.threads == Some(0) || self.bins == 0 || self.points == 0 {
            bail!("threads, bins and points must be >= 1");
        }
        Ok(())
    }

    pub fn params(&self, sigma: f64, rate: f64) -> ModelParams {
        ModelParams {
            sigma,
            rate,
            delta: self.delta,
            x0: self.x0,
            y0: self.y0,
        }
    }

    /// Parameters of a single-cell command.
    pub fn single(&self) -> ModelParams {
        self.params(self.sigma[0], self.rate[0])
    }
}

fn single_config(args: &SingleArgs, default_paths: Option<usize>) -> anyhow::Result<RunConfig> {
    RunConfig::resolve(
        &args.common,
        args.sigma.map(|s| vec![s]),
        args.rate.map(|r| vec![r]),
        args.n,
        (vec![0.2], vec![0.1]),
        default_paths,
    )
}

/// Runs `f` on a pool with the requested worker count.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    Ok(pool.install(f))
}

/// Writes to the file or, without one, to stdout.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> crate::Result<()>) -> anyhow::Result<()> {
    match path {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write(&mut w).with_context(|| format!("writing {}", path.display()))?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn emit_summary(path: Option<&Path>, summary: &RunSummary) -> anyhow::Result<()> {
    if let Some(path) = path {
        emit(Some(path), |w| write_json(summary, w))?;
    }
    Ok(())
}

/// Text report for `classify`.
pub fn classify_report(r: f64, sigma: f64) -> String {
    let c = feller_classify(r, sigma);
    let s2 = sigma * sigma;
    let verdict = match (c.lower_attainable, c.upper_attainable) {
        (false, false) => "confined",
        (true, false) => "lower boundary attainable",
        (false, true) => "upper boundary attainable",
        (true, true) => "both boundaries attainable",
    };
    format!(
        "{verdict}\n2r >= sigma^2: {} ({} vs {})\n2(1-r) >= sigma^2: {} ({} vs {})\n",
        !c.lower_attainable,
        2.0 * r,
        s2,
        !c.upper_attainable,
        2.0 * (1.0 - r),
        s2
    )
}

fn cmd_classify(args: &ClassifyArgs) -> anyhow::Result<()> {
    if !(args.sigma >= 0.0) {
        bail!("sigma must be >= 0");
    }
    print!("{}", classify_report(args.r, args.sigma));
    Ok(())
}

fn cmd_paths(args: &SingleArgs) -> anyhow::Result<()> {
    let cfg = single_config(args, Some(DEFAULT_PATHS_COUNT))?;
    let params = cfg.single();
    let points = args.common.points.map(|p| p as usize).unwrap_or(DEFAULT_TRAJECTORY_POINTS);
    let stride = cfg.grid.stride_for_points(points);
    let sim = PathSimulator::new(params, cfg.grid)?;
    let outcomes = with_threads(cfg.threads, || {
        use rayon::prelude::*;
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| sim.run(StreamKey::new(cfg.seed, i), Some(stride)))
            .collect::<Vec<_>>()
    })?;
    let rows: Vec<TrajectoryRow> = outcomes
        .iter()
        .enumerate()
        .flat_map(|(i, o)| {
            o.trajectory
                .iter()
                .flatten()
                .map(move |pt| TrajectoryRow::new(i as u64, pt))
        })
        .collect();
    let escaped = outcomes.iter().filter(|o| o.escaped).count();
    eprintln!("{} paths, {} escaped", outcomes.len(), escaped);

    emit(args.common.out.as_deref(), |w| write_trajectories_csv(&rows, w))?;
    let results: Vec<_> = outcomes
        .iter()
        .map(|o| (o.escaped, o.hit_time, o.floor_events))
        .collect();
    let summary = RunSummary::new("paths", params, Some(cfg.grid), Some(cfg.seed), &results)?;
    emit_summary(args.common.json.as_deref(), &summary)
}

fn cmd_escape(args: &SingleArgs) -> anyhow::Result<()> {
    let cfg = single_config(args, None)?;
    let params = cfg.single();
    let est = with_threads(cfg.threads, || estimate_escape(params, cfg.grid, cfg.n_paths, cfg.seed, cfg.ci_level))??;
    eprintln!(
        "sigma={} R={}: p = {}% ({}% CI {}..{}%), {}/{} paths",
        params.sigma,
        params.rate,
        format_percent(est.p_hat),
        100.0 * cfg.ci_level,
        format_percent(est.ci_low),
        format_percent(est.ci_high),
        est.n_escaped,
        est.n_paths
    );
    let row = SweepRow::new(params.rate, params.sigma, &est);
    emit(args.common.out.as_deref(), |w| write_sweep_rows_csv(&[row], w))?;
    let summary = RunSummary::new("escape", params, Some(cfg.grid), Some(cfg.seed), &est)?;
    emit_summary(args.common.json.as_deref(), &summary)
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(
        &args.common,
        args.sigma.clone(),
        args.rate.clone(),
        None,
        (TABLE_SIGMAS.to_vec(), TABLE_RATES.to_vec()),
        None,
    )?;
    let template = cfg.params(cfg.sigma[0], cfg.rate[0]);
    let table = with_threads(cfg.threads, || {
        sweep_with_progress(
            &cfg.sigma,
            &cfg.rate,
            template,
            cfg.grid,
            cfg.n_paths,
            cfg.seed,
            cfg.ci_level,
            |r, s, est| eprintln!("R={r} sigma={s}: {}%", format_percent(est.p_hat)),
        )
    })??;

    eprintln!("{}", sweep_table_text(&table));
    emit(args.common.out.as_deref(), |w| write_sweep_csv(&table, w))?;
    let summary = RunSummary::new("sweep", template, Some(cfg.grid), Some(cfg.seed), &table)?;
    emit_summary(args.common.json.as_deref(), &summary)
}

/// Percent table laid out like the published one: rows R, columns sigma.
pub fn sweep_table_text(table: &crate::ensemble::SweepTable) -> String {
    let mut out = String::from("R \\ sigma");
    for s in &table.sigma_values {
        out.push_str(&format!("\t{s}"));
    }
    for (r, row) in table.r_values.iter().zip(&table.cells) {
        out.push_str(&format!("\n{r}"));
        for est in row {
            out.push_str(&format!("\t{}", format_percent(est.p_hat)));
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct HistResults<'a> {
    estimate: &'a crate::ensemble::EscapeEstimate,
    histogram: &'a crate::report::Histogram,
    hitting_time_mean: Option<f64>,
    hitting_time_std: Option<f64>,
}

fn cmd_hist(args: &SingleArgs) -> anyhow::Result<()> {
    let cfg = single_config(args, None)?;
    let params = cfg.single();
    let (est, times) =
        with_threads(cfg.threads, || escape_with_hitting_times(params, cfg.grid, cfg.n_paths, cfg.seed, cfg.ci_level))??;
    let hist = build_histogram(&times, &uniform_edges(0.0, cfg.grid.horizon(), cfg.bins))?;

    let mut acc = crate::ensemble::RunningStats::new();
    times.iter().for_each(|&t| acc.push(t));
    eprintln!(
        "sigma={} R={}: {} hitting times, p = {}%",
        params.sigma,
        params.rate,
        times.len(),
        format_percent(est.p_hat)
    );
    emit(args.common.out.as_deref(), |w| write_histogram_csv(&hist, w))?;
    let results = HistResults {
        estimate: &est,
        histogram: &hist,
        hitting_time_mean: (acc.count() > 0).then(|| acc.mean()),
        hitting_time_std: (acc.count() > 1).then(|| acc.std_dev()),
    };
    let summary = RunSummary::new("hist", params, Some(cfg.grid), Some(cfg.seed), &results)?;
    emit_summary(args.common.json.as_deref(), &summary)
}

fn cmd_stats(args: &SingleArgs) -> anyhow::Result<()> {
    let cfg = single_config(args, None)?;
    if cfg.n_paths < 2 {
        bail!("stats needs n_paths >= 2");
    }
    let params = cfg.single();
    let stats = with_threads(cfg.threads, || path_statistics(params, cfg.grid, cfg.n_paths, cfg.seed, cfg.points))??;
    eprintln!("{} sample times over {} paths", stats.times.len(), cfg.n_paths);
    emit(args.common.out.as_deref(), |w| write_stats_csv(&stats, w))?;
    let summary = RunSummary::new("stats", params, Some(cfg.grid), Some(cfg.seed), &stats)?;
    emit_summary(args.common.json.as_deref(), &summary)
}

fn cmd_critical_rate(args: &CriticalRateArgs) -> anyhow::Result<()> {
    let delta = args.delta.unwrap_or(0.5);
    let template = ModelParams {
        sigma: 0.0,
        rate: args.r_max,
        delta,
        x0: args.x0.unwrap_or(0.1),
        y0: args.y0.unwrap_or(1.0 + delta),
    };
    validate(template)?;
    if args.horizon.is_empty() {
        bail!("at least one horizon is required");
    }
    let searches: Vec<CriticalRateSearch> = args
        .horizon
        .iter()
        .map(|&horizon| CriticalRateSearch {
            horizon,
            step: args.step,
            r_min: args.r_min,
            r_max: args.r_max,
            tolerance: args.tolerance,
        })
        .collect();
    if !(args.step > 0.0) {
        bail!("step must be > 0");
    }
    let mut results = Vec::with_capacity(searches.len());
    for search in &searches {
        let res = critical_rate(template, *search)?;
        eprintln!(
            "T={}: R_c in ({}, {}), t_c at lower end = {}",
            res.horizon, res.r_low, res.r_high, res.t_c
        );
        results.push(res);
    }
    let grid = (searches.len() == 1).then(|| searches[0].grid());
    let summary = RunSummary::new("critical-rate", template, grid, None, &results)?;
    emit(args.out.as_deref(), |w| write_json(&summary, w))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Classify(a) => cmd_classify(a),
        Command::Paths(a) => cmd_paths(a),
        Command::Escape(a) => cmd_escape(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Hist(a) => cmd_hist(a),
        Command::Stats(a) => cmd_stats(a),
        Command::CriticalRate(a) => cmd_critical_rate(a),
    }
}
