//! Experiment orchestration: configuration, the four commands behind the
//! `readout` binary, output files and run manifests.
//!
//! A configuration is plain `key = value` text; `#` starts a comment. Every
//! key can also be overridden from the command line. Outputs are CSV for
//! curves and JSON for scalars. Each output directory gets a
//! `manifest.json` whose `config_text` regenerates byte-identical CSV files.
//!
//! | file                | columns / contents                                   |
//! |---------------------|------------------------------------------------------|
//! | `trajectories.csv`  | `t,mean_ln_delta,stderr`                             |
//! | `first_passage.csv` | `epsilon,mean_T,stderr,censored_frac`                |
//! | `summary.json`      | fitted slopes, speed-ups, bounds, censoring          |
//! | `sweep.csv`         | `policy,n,speedup,stderr,bound_lo,bound_hi`          |
//! | `sweep.json`        | sweep points and a linear fit per policy             |
//! | `manifest.json`     | config echo, version, wall time, censoring, file list |

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::control::{load_cycle_file, ControlPolicy, PolicyKind};
use crate::ensemble::{
    asymptotic_speedup, default_epsilon_grid, epsilon_grid, fit_sweep, mean_time_slope,
    protocol_bounds, run_ensemble, speedup_fixed_epsilon, EnsembleStats, SpeedupEstimate,
    SweepPoint, DEFAULT_MASTER_SEED, MAX_CENSORED_FRACTION,
};
use crate::error::{ReadoutError, Result};
use crate::sde::{Integrator, SimulationParams, DEFAULT_DT_GAMMA, DEFAULT_STOP_EPSILON};
use crate::stats::LineFit;
use crate::theory::{
    mean_random_hamming_distance, permutation_sum_identities, speedup_bounds_lo,
    speedup_bounds_rp, IdentityReport, SpeedupBounds,
};

pub const DEFAULT_COUNT: usize = 10_000;
pub const DEFAULT_OUT: &str = "readout-out";
/// Largest register a sweep accepts without `--unsafe-large-n`.
pub const SWEEP_SAFE_MAX_N: usize = 5;
/// Regression range for asymptotic speed-ups.
pub const DEFAULT_EPS_RANGE: (f64, f64) = (1e-6, 1e-4);
/// Infidelity at which the fixed-epsilon speed-up is reported.
pub const FIXED_EPSILON: f64 = 1e-5;

/// Relative tolerance of the uncontrolled `-16γ` and `1/16γ` checks.
pub const COLLAPSE_TOLERANCE: f64 = 0.05;
/// Relative tolerance of the H-ordering `0.718 n` check.
pub const LO_TOLERANCE: f64 = 0.15;
/// Tolerance on the slope of the random-permutation sweep fit.
pub const RP_SLOPE_TOLERANCE: f64 = 0.05;
/// Empirical fits of the asymptotic speed-up versus register size.
pub const RP_FIT: (f64, f64) = (0.397, 0.53);
pub const LO_FIT_SLOPE: f64 = 0.718;

const CONFIG_KEYS: &[&str] = &[
    "n",
    "gamma",
    "dt",
    "max_time",
    "curve_time",
    "stop_epsilon",
    "sample_stride",
    "integrator",
    "policy",
    "cycle_file",
    "epsilons",
    "count",
    "seed",
    "out",
    "n_values",
    "policies",
    "eps_lo",
    "eps_hi",
];

/// Everything needed to reproduce a run or a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub gamma: f64,
    /// Defaults to `6.25e-4 / gamma`.
    pub dt: Option<f64>,
    /// Defaults to `10 / gamma`.
    pub max_time: Option<f64>,
    /// Length of the sampled `<ln Δ>` curve; defaults to `1 / gamma` for
    /// `run` and to no curve for `sweep`.
    pub curve_time: Option<f64>,
    pub stop_epsilon: f64,
    pub sample_stride: usize,
    pub integrator: Integrator,
    pub policy: String,
    pub cycle_file: Option<PathBuf>,
    /// Decreasing first-passage targets.
    pub epsilons: Vec<f64>,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Register sizes for `sweep`.
    pub n_values: Vec<usize>,
    /// Policies for `sweep`.
    pub policies: Vec<String>,
    pub eps_lo: f64,
    pub eps_hi: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 1,
            gamma: 1.0,
            dt: None,
            max_time: None,
            curve_time: None,
            stop_epsilon: DEFAULT_STOP_EPSILON,
            sample_stride: 16,
            integrator: Integrator::Exact,
            policy: "none".into(),
            cycle_file: None,
            epsilons: default_epsilon_grid(),
            count: DEFAULT_COUNT,
            seed: DEFAULT_MASTER_SEED,
            out: PathBuf::from(DEFAULT_OUT),
            n_values: vec![2, 3, 4, 5],
            policies: vec!["random_permutation".into()],
            eps_lo: DEFAULT_EPS_RANGE.0,
            eps_hi: DEFAULT_EPS_RANGE.1,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse list entry '{s}'")))
        .collect()
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("invalid value '{value}' for '{key}'"))
}

/// `default`, `grid FIRST LAST PER_DECADE`, or a comma-separated list.
fn parse_epsilons(value: &str) -> std::result::Result<Vec<f64>, String> {
    let value = value.trim();
    if value == "default" {
        return Ok(default_epsilon_grid());
    }
    if let Some(rest) = value.strip_prefix("grid") {
        let parts: Vec<u32> = rest
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| format!("bad grid field '{s}'")))
            .collect::<std::result::Result<_, _>>()?;
        return match parts.as_slice() {
            [first, last, per] if first < last && *per > 0 => Ok(epsilon_grid(*first, *last, *per)),
            _ => Err("expected 'grid FIRST LAST PER_DECADE' with FIRST < LAST".into()),
        };
    }
    let eps: Vec<f64> = parse_list(value)?;
    if eps.is_empty() {
        return Err("epsilon list is empty".into());
    }
    Ok(eps)
}

fn format_list<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "n" => self.n = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "dt" => self.dt = Some(parse_value(key, value)?),
            "max_time" => self.max_time = Some(parse_value(key, value)?),
            "curve_time" => self.curve_time = Some(parse_value(key, value)?),
            "stop_epsilon" => self.stop_epsilon = parse_value(key, value)?,
            "sample_stride" => self.sample_stride = parse_value(key, value)?,
            "integrator" => {
                self.integrator = value.parse().map_err(|e: ReadoutError| e.to_string())?
            }
            "policy" => {
                ControlPolicy::kind_from_name(value).map_err(|e| e.to_string())?;
                self.policy = value.to_string();
            }
            "cycle_file" => self.cycle_file = Some(PathBuf::from(value)),
            "epsilons" => self.epsilons = parse_epsilons(value)?,
            "count" => self.count = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "n_values" => self.n_values = parse_list(value)?,
            "policies" => {
                let names: Vec<String> = parse_list(value)?;
                for name in &names {
                    ControlPolicy::kind_from_name(name).map_err(|e| e.to_string())?;
                }
                self.policies = names;
            }
            "eps_lo" => self.eps_lo = parse_value(key, value)?,
            "eps_hi" => self.eps_hi = parse_value(key, value)?,
            other => {
                return Err(format!(
                    "unknown key '{other}' (known keys: {})",
                    CONFIG_KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. Errors name
    /// `source` and the offending line. A relative `cycle_file` is resolved
    /// against `base_dir` when one is given.
    pub fn parse(text: &str, source: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ReadoutError::Config {
                path: source.to_string(),
                line: lineno + 1,
                message,
            };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', found '{content}'")))?;
            config.set(key.trim(), value).map_err(err)?;
        }
        if let (Some(base), Some(cycle)) = (base_dir, config.cycle_file.as_mut()) {
            if cycle.is_relative() {
                *cycle = base.join(&*cycle);
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ReadoutError::Config {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    /// Applies a command-line override, reported against the flag name.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        self.set(key, value).map_err(|message| {
            ReadoutError::InvalidParams(format!("--{}: {message}", key.replace('_', "-")))
        })
    }

    /// Renders the configuration as text that [`ExperimentConfig::parse`]
    /// reads back to an equal value.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("n", self.n.to_string());
        line("gamma", self.gamma.to_string());
        if let Some(dt) = self.dt {
            line("dt", dt.to_string());
        }
        if let Some(t) = self.max_time {
            line("max_time", t.to_string());
        }
        if let Some(t) = self.curve_time {
            line("curve_time", t.to_string());
        }
        line("stop_epsilon", self.stop_epsilon.to_string());
        line("sample_stride", self.sample_stride.to_string());
        line("integrator", self.integrator.name().to_string());
        line("policy", self.policy.clone());
        if let Some(c) = &self.cycle_file {
            line("cycle_file", c.display().to_string());
        }
        if self.epsilons == default_epsilon_grid() {
            line("epsilons", "default".into());
        } else {
            line("epsilons", format_list(&self.epsilons));
        }
        line("count", self.count.to_string());
        line("seed", self.seed.to_string());
        line("out", self.out.display().to_string());
        line("n_values", format_list(&self.n_values));
        line("policies", self.policies.join(", "));
        line("eps_lo", self.eps_lo.to_string());
        line("eps_hi", self.eps_hi.to_string());
        s
    }

    /// Simulation parameters for register size `n`, with the curve sampled
    /// up to `curve_time` (or `default_curve` when unset).
    pub fn simulation_params(&self, n: usize, default_curve: f64) -> SimulationParams {
        let mut p = SimulationParams::new(n, self.gamma);
        p.dt = self.dt.unwrap_or(DEFAULT_DT_GAMMA / self.gamma);
        p.max_time = self.max_time.unwrap_or(10.0 / self.gamma);
        p.min_time = self.curve_time.unwrap_or(default_curve);
        p.integrator = self.integrator;
        p.stop_epsilon = self.stop_epsilon;
        p.sample_stride = self.sample_stride;
        p
    }

    /// Builds the named policy, loading the cycle file when needed.
    pub fn build_policy(&self, name: &str) -> Result<ControlPolicy> {
        let cycle = if ControlPolicy::kind_from_name(name)? == PolicyKind::FixedCycle {
            let path = self.cycle_file.as_ref().ok_or_else(|| {
                ReadoutError::InvalidParams("policy fixed_cycle requires cycle_file".into())
            })?;
            if !path.exists() {
                return Err(ReadoutError::Config {
                    path: path.display().to_string(),
                    line: 0,
                    message: "cycle file does not exist".into(),
                });
            }
            Some(load_cycle_file(path)?)
        } else {
            None
        };
        ControlPolicy::from_name(name, cycle)
    }

    /// Checks everything that can be checked before simulating.
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(ReadoutError::InvalidParams(format!(
                "count = {} but an ensemble needs at least 2 trajectories",
                self.count
            )));
        }
        self.simulation_params(self.n, 0.0).validate()?;
        if self.epsilons.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(ReadoutError::InvalidParams(
                "epsilons must be strictly decreasing".into(),
            ));
        }
        if let Some(bad) = self
            .epsilons
            .iter()
            .find(|&&e| !(e >= self.stop_epsilon * (1.0 - 1e-12) && e < 1.0))
        {
            return Err(ReadoutError::InvalidParams(format!(
                "epsilon {bad:e} outside [stop_epsilon, 1)"
            )));
        }
        if !(self.eps_lo > 0.0 && self.eps_lo < self.eps_hi && self.eps_hi < 1.0) {
            return Err(ReadoutError::InvalidParams(format!(
                "regression range [{}, {}] is not an interval in (0, 1)",
                self.eps_lo, self.eps_hi
            )));
        }
        Ok(())
    }
}

/// One pass/fail line of a `--check` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub slope: f64,
    pub stderr: f64,
    pub from: f64,
    pub to: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub n: usize,
    pub gamma: f64,
    pub integrator: Integrator,
    pub trajectory_count: usize,
    pub master_seed: u64,
    /// Fit of `<ln Δ>` over the latter half of the sampled curve.
    pub slope: Option<SlopeSummary>,
    /// The uncontrolled long-time value, `-16 γ`.
    pub reference_slope: f64,
    /// Regression slope of `<T>` against `ln(1/ε)` (ε range in `from`/`to`).
    pub mean_time_slope: Option<SlopeSummary>,
    /// The uncontrolled value `1 / 16γ`.
    pub reference_mean_time_slope: f64,
    /// Against a paired uncontrolled ensemble, for controlled policies.
    pub asymptotic_speedup: Option<SpeedupEstimate>,
    pub fixed_epsilon_speedup: Option<SpeedupEstimate>,
    pub bounds: Option<SpeedupBounds>,
    pub max_censored_fraction: f64,
    pub excessive_censoring: bool,
    /// Why a field above is missing, if one is.
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoringRecord {
    pub ensemble: String,
    pub n: usize,
    pub max_censored_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub integrator: Integrator,
    pub config: ExperimentConfig,
    /// Feed back through `--config` to reproduce the outputs byte for byte.
    pub config_text: String,
    pub epsilon_grid: String,
    pub first_passage: String,
    pub seeding: String,
    pub wall_time_seconds: f64,
    pub censoring: Vec<CensoringRecord>,
    pub files: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: &ExperimentConfig) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            integrator: config.integrator,
            config: config.clone(),
            config_text: config.to_config_text(),
            epsilon_grid: format!(
                "{} targets from {:e} to {:e}",
                config.epsilons.len(),
                config.epsilons.first().copied().unwrap_or(f64::NAN),
                config.epsilons.last().copied().unwrap_or(f64::NAN)
            ),
            first_passage: "first step with infidelity <= epsilon, linearly interpolated in ln(infidelity); \
                            censored trajectories contribute max_time"
                .into(),
            seeding: "trajectory k uses ChaCha8 streams 2k (noise) and 2k+1 (control) of the master seed; \
                      control and uncontrolled ensembles share seeds"
                .into(),
            wall_time_seconds: 0.0,
            censoring: Vec::new(),
            files: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct CurveRow {
    t: f64,
    mean_ln_delta: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct PassageRow {
    epsilon: f64,
    #[serde(rename = "mean_T")]
    mean_t: f64,
    stderr: f64,
    censored_frac: f64,
}

#[derive(Serialize)]
struct SweepRow<'a> {
    policy: &'a str,
    n: usize,
    speedup: f64,
    stderr: f64,
    bound_lo: Option<f64>,
    bound_hi: Option<f64>,
}

fn prepare_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| {
        ReadoutError::Io(std::io::Error::new(
            e.kind(),
            format!("cannot create output directory {}: {e}", out.display()),
        ))
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the mean log-infidelity curve.
pub fn write_trajectories_csv(path: &Path, stats: &EnsembleStats) -> Result<()> {
    write_csv(
        path,
        stats
            .sample_times
            .iter()
            .zip(&stats.mean_ln_delta)
            .zip(&stats.stderr_ln_delta)
            .map(|((&t, &m), &s)| CurveRow {
                t,
                mean_ln_delta: m,
                stderr: s,
            }),
    )
}

/// Writes the per-epsilon first-passage statistics.
pub fn write_first_passage_csv(path: &Path, stats: &EnsembleStats) -> Result<()> {
    write_csv(
        path,
        stats.first_passage.iter().map(|p| PassageRow {
            epsilon: p.epsilon,
            mean_t: p.mean_time,
            stderr: p.stderr,
            censored_frac: p.censored_fraction,
        }),
    )
}

pub struct RunOutcome {
    pub stats: EnsembleStats,
    pub baseline: Option<EnsembleStats>,
    pub summary: RunSummary,
    pub manifest: RunManifest,
    pub checks: Vec<Check>,
}

fn summarize(config: &ExperimentConfig, stats: &EnsembleStats, baseline: Option<&EnsembleStats>, policy: &ControlPolicy) -> RunSummary {
    let mut notes = Vec::new();
    let slope = if stats.sample_times.len() >= 3 {
        match stats.asymptotic_ln_delta_slope() {
            Ok(fit) => Some(SlopeSummary {
                slope: fit.slope,
                stderr: fit.slope_stderr,
                from: stats.sample_times.last().unwrap() / 2.0,
                to: *stats.sample_times.last().unwrap(),
            }),
            Err(e) => {
                notes.push(format!("ln-infidelity slope: {e}"));
                None
            }
        }
    } else {
        notes.push("no infidelity curve sampled (curve_time = 0)".into());
        None
    };
    let mean_time = match mean_time_slope(stats, config.eps_lo, config.eps_hi) {
        Ok((slope, stderr)) => Some(SlopeSummary {
            slope,
            stderr,
            from: config.eps_lo,
            to: config.eps_hi,
        }),
        Err(e) => {
            notes.push(format!("mean-time slope: {e}"));
            None
        }
    };
    let (asymptotic, fixed) = match baseline {
        Some(nc) => {
            let a = asymptotic_speedup(nc, stats, config.eps_lo, config.eps_hi)
                .map_err(|e| notes.push(format!("asymptotic speed-up: {e}")))
                .ok();
            let f = if nc.passage(FIXED_EPSILON).is_some() {
                speedup_fixed_epsilon(nc, stats, FIXED_EPSILON)
                    .map_err(|e| notes.push(format!("fixed-epsilon speed-up: {e}")))
                    .ok()
            } else {
                None
            };
            (a, f)
        }
        None => (None, None),
    };
    let max_censored = baseline
        .map(EnsembleStats::max_censored_fraction)
        .unwrap_or(0.0)
        .max(stats.max_censored_fraction());
    RunSummary {
        policy: stats.policy.clone(),
        n: stats.n,
        gamma: stats.gamma,
        integrator: stats.integrator,
        trajectory_count: stats.trajectory_count,
        master_seed: stats.master_seed,
        slope,
        reference_slope: -16.0 * stats.gamma,
        mean_time_slope: mean_time,
        reference_mean_time_slope: 1.0 / (16.0 * stats.gamma),
        asymptotic_speedup: asymptotic,
        fixed_epsilon_speedup: fixed,
        bounds: protocol_bounds(policy, stats.n),
        max_censored_fraction: max_censored,
        excessive_censoring: stats.excessive_censoring
            || baseline.is_some_and(|b| b.excessive_censoring),
        notes,
    }
}

fn relative_check(name: &str, value: Option<f64>, target: f64, tol: f64) -> Check {
    match value {
        Some(v) => {
            let rel = (v / target - 1.0).abs();
            Check::new(
                name,
                rel <= tol,
                format!("{v:.5} vs {target:.5} (relative deviation {rel:.4}, tolerance {tol})"),
            )
        }
        None => Check::new(name, false, "not available".into()),
    }
}

fn band_check(name: &str, est: &SpeedupEstimate, bounds: SpeedupBounds) -> Check {
    let slack = 3.0 * est.stderr;
    Check::new(
        name,
        est.value + slack >= bounds.lower && est.value - slack <= bounds.upper,
        format!(
            "{:.4} ± {:.4} against [{:.4}, {:.4}] (3 stderr)",
            est.value, est.stderr, bounds.lower, bounds.upper
        ),
    )
}

fn run_checks(summary: &RunSummary) -> Vec<Check> {
    let mut checks = vec![Check::new(
        "censoring",
        summary.max_censored_fraction < MAX_CENSORED_FRACTION,
        format!(
            "largest censored fraction {:.5} (limit {MAX_CENSORED_FRACTION})",
            summary.max_censored_fraction
        ),
    )];
    if summary.policy == "none" {
        checks.push(relative_check(
            "collapse slope",
            summary.slope.as_ref().map(|s| s.slope),
            summary.reference_slope,
            COLLAPSE_TOLERANCE,
        ));
        // the 1/16γ mean-time law is exact only for a single qubit
        if summary.n == 1 {
            checks.push(relative_check(
                "mean-time slope",
                summary.mean_time_slope.as_ref().map(|s| s.slope),
                summary.reference_mean_time_slope,
                COLLAPSE_TOLERANCE,
            ));
        }
    } else if let Some(bounds) = summary.bounds {
        match &summary.asymptotic_speedup {
            Some(est) => checks.push(band_check("speed-up within bounds", est, bounds)),
            None => checks.push(Check::new("speed-up within bounds", false, "not available".into())),
        }
    }
    checks
}

/// `run`: one ensemble (plus a paired uncontrolled ensemble for controlled
/// policies), written to `config.out`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let policy = config.build_policy(&config.policy)?;
    let params = config.simulation_params(config.n, 1.0 / config.gamma);
    params.validate()?;
    prepare_out_dir(&config.out)?;

    let stats = run_ensemble(&params, &policy, &config.epsilons, config.count, config.seed)?;
    let baseline = if matches!(policy, ControlPolicy::None) {
        None
    } else {
        let mut p = params.clone();
        p.min_time = 0.0;
        Some(run_ensemble(&p, &ControlPolicy::None, &config.epsilons, config.count, config.seed)?)
    };
    let summary = summarize(config, &stats, baseline.as_ref(), &policy);
    let checks = run_checks(&summary);

    let files = ["trajectories.csv", "first_passage.csv", "summary.json", "manifest.json"];
    write_trajectories_csv(&config.out.join(files[0]), &stats)?;
    write_first_passage_csv(&config.out.join(files[1]), &stats)?;
    write_json(&config.out.join(files[2]), &summary)?;

    let mut manifest = RunManifest::new("run", config);
    manifest.censoring.push(CensoringRecord {
        ensemble: stats.policy.clone(),
        n: stats.n,
        max_censored_fraction: stats.max_censored_fraction(),
    });
    if let Some(b) = &baseline {
        manifest.censoring.push(CensoringRecord {
            ensemble: "none (paired baseline)".into(),
            n: b.n,
            max_censored_fraction: b.max_censored_fraction(),
        });
    }
    manifest.files = files.iter().map(|s| s.to_string()).collect();
    manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    write_json(&config.out.join(files[3]), &manifest)?;

    Ok(RunOutcome {
        stats,
        baseline,
        summary,
        manifest,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySweep {
    pub policy: String,
    pub points: Vec<SweepPoint>,
    /// Weighted linear fit of speed-up against n (at least two points).
    pub fit: Option<LineFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub n_values: Vec<usize>,
    pub trajectory_count: usize,
    pub eps_range: (f64, f64),
    pub sweeps: Vec<PolicySweep>,
}

pub struct SweepOutcome {
    pub report: SweepReport,
    pub manifest: RunManifest,
    pub checks: Vec<Check>,
}

fn sweep_checks(report: &SweepReport) -> Vec<Check> {
    let mut checks = Vec::new();
    for sweep in &report.sweeps {
        for point in &sweep.points {
            let label = format!("{} n={}", sweep.policy, point.n);
            match sweep.policy.as_str() {
                "none" => {
                    let est = &point.speedup;
                    checks.push(Check::new(
                        format!("{label} self speed-up"),
                        (est.value - 1.0).abs() <= 3.0 * est.stderr.max(1e-12),
                        format!("{:.4} ± {:.4}", est.value, est.stderr),
                    ));
                }
                "h_ordering" => checks.push(relative_check(
                    &format!("{label} speed-up vs {LO_FIT_SLOPE}n"),
                    Some(point.speedup.value),
                    LO_FIT_SLOPE * point.n as f64,
                    LO_TOLERANCE,
                )),
                _ => {}
            }
            if let Some(bounds) = point.bounds {
                if sweep.policy != "none" {
                    checks.push(band_check(&format!("{label} within bounds"), &point.speedup, bounds));
                }
            }
            checks.push(Check::new(
                format!("{label} censoring"),
                point.censored_fraction < MAX_CENSORED_FRACTION,
                format!("{:.5}", point.censored_fraction),
            ));
        }
        if sweep.policy == "random_permutation" && sweep.points.len() >= 3 {
            if let Some(fit) = &sweep.fit {
                checks.push(Check::new(
                    "random_permutation fit slope",
                    (fit.slope - RP_FIT.0).abs() <= RP_SLOPE_TOLERANCE,
                    format!(
                        "{:.4} ± {:.4} (intercept {:.3}) vs {} ± {RP_SLOPE_TOLERANCE}",
                        fit.slope, fit.slope_stderr, fit.intercept, RP_FIT.0
                    ),
                ));
            }
        }
    }
    checks
}

/// `sweep`: asymptotic speed-up against register size for each policy,
/// every policy compared with one shared uncontrolled ensemble per `n`.
pub fn cmd_sweep(config: &ExperimentConfig, unsafe_large_n: bool) -> Result<SweepOutcome> {
    config.validate()?;
    if config.n_values.is_empty() || config.policies.is_empty() {
        return Err(ReadoutError::InvalidParams(
            "sweep needs at least one n and one policy".into(),
        ));
    }
    if let Some(&big) = config.n_values.iter().find(|&&n| n > SWEEP_SAFE_MAX_N) {
        if !unsafe_large_n {
            return Err(ReadoutError::InvalidParams(format!(
                "n = {big} exceeds {SWEEP_SAFE_MAX_N}; pass --unsafe-large-n to run it anyway"
            )));
        }
    }
    let started = Instant::now();
    let policies = config
        .policies
        .iter()
        .map(|name| config.build_policy(name))
        .collect::<Result<Vec<_>>>()?;
    for &n in &config.n_values {
        config.simulation_params(n, 0.0).validate()?;
        for p in &policies {
            p.check_dim(crate::register::dimension(n))?;
        }
    }
    prepare_out_dir(&config.out)?;

    let mut manifest = RunManifest::new("sweep", config);
    let mut sweeps: Vec<PolicySweep> = policies
        .iter()
        .map(|p| PolicySweep {
            policy: p.name().to_string(),
            points: Vec::new(),
            fit: None,
        })
        .collect();
    for &n in &config.n_values {
        let params = config.simulation_params(n, 0.0);
        let nc = run_ensemble(&params, &ControlPolicy::None, &config.epsilons, config.count, config.seed)?;
        manifest.censoring.push(CensoringRecord {
            ensemble: "none".into(),
            n,
            max_censored_fraction: nc.max_censored_fraction(),
        });
        for (policy, sweep) in policies.iter().zip(sweeps.iter_mut()) {
            let ctrl = if matches!(policy, ControlPolicy::None) {
                nc.clone()
            } else {
                run_ensemble(&params, policy, &config.epsilons, config.count, config.seed)?
            };
            log::info!("sweep: {} n = {n} done", policy.name());
            let speedup = asymptotic_speedup(&nc, &ctrl, config.eps_lo, config.eps_hi)?;
            manifest.censoring.push(CensoringRecord {
                ensemble: policy.name().into(),
                n,
                max_censored_fraction: ctrl.max_censored_fraction(),
            });
            sweep.points.push(SweepPoint {
                n,
                speedup,
                bounds: protocol_bounds(policy, n),
                censored_fraction: nc.max_censored_fraction().max(ctrl.max_censored_fraction()),
            });
        }
    }
    for sweep in &mut sweeps {
        if sweep.points.len() >= 2 {
            sweep.fit = fit_sweep(&sweep.points).ok();
        }
    }
    let report = SweepReport {
        n_values: config.n_values.clone(),
        trajectory_count: config.count,
        eps_range: (config.eps_lo, config.eps_hi),
        sweeps,
    };
    let checks = sweep_checks(&report);

    let files = ["sweep.csv", "sweep.json", "manifest.json"];
    write_csv(
        &config.out.join(files[0]),
        report.sweeps.iter().flat_map(|s| {
            s.points.iter().map(move |p| SweepRow {
                policy: &s.policy,
                n: p.n,
                speedup: p.speedup.value,
                stderr: p.speedup.stderr,
                bound_lo: p.bounds.map(|b| b.lower),
                bound_hi: p.bounds.map(|b| b.upper),
            })
        }),
    )?;
    write_json(&config.out.join(files[1]), &report)?;
    manifest.files = files.iter().map(|s| s.to_string()).collect();
    manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    write_json(&config.out.join(files[2]), &manifest)?;
    Ok(SweepOutcome {
        report,
        manifest,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub n: usize,
    pub h_ordering: SpeedupBounds,
    pub random_permutation: SpeedupBounds,
    pub mean_hamming_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub rows: Vec<BoundsRow>,
    /// Large-register behaviour of the random-permutation bounds.
    pub asymptote: String,
}

/// `bounds`: analytic speed-up bounds for every `n` in `ns`.
pub fn cmd_bounds(ns: &[usize]) -> Result<BoundsReport> {
    if let Some(&bad) = ns.iter().find(|&&n| n == 0 || n > 30) {
        return Err(ReadoutError::InvalidParams(format!("n = {bad} outside [1, 30]")));
    }
    Ok(BoundsReport {
        rows: ns
            .iter()
            .map(|&n| BoundsRow {
                n,
                h_ordering: speedup_bounds_lo(n),
                random_permutation: speedup_bounds_rp(n),
                mean_hamming_distance: mean_random_hamming_distance(n),
            })
            .collect(),
        asymptote: "0.25n ≤ S_RP ≤ 0.5n".into(),
    })
}

impl BoundsReport {
    pub fn checks(&self) -> Vec<Check> {
        self.rows
            .iter()
            .map(|r| {
                let ok = r.h_ordering.lower <= r.h_ordering.upper
                    && r.random_permutation.lower <= r.random_permutation.upper;
                Check::new(format!("bounds n={}", r.n), ok, "lower ≤ upper".into())
            })
            .collect()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::from(" n   LO lower  LO upper   RP lower  RP upper   <d_H>\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>2}   {:>8.4}  {:>8.4}   {:>8.4}  {:>8.4}   {:>5.2}",
                r.n,
                r.h_ordering.lower,
                r.h_ordering.upper,
                r.random_permutation.lower,
                r.random_permutation.upper,
                r.mean_hamming_distance
            );
        }
        let _ = writeln!(s, "large-n asymptote: {}", self.asymptote);
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub dim: usize,
    pub group_order: i64,
    pub squared_value: Option<i64>,
    pub squared_expected: i64,
    pub cross_value: Option<i64>,
    pub cross_expected: i64,
    pub checked_sums: usize,
    pub passed: bool,
}

impl From<&IdentityReport> for IdentitySummary {
    fn from(r: &IdentityReport) -> Self {
        IdentitySummary {
            dim: r.dim,
            group_order: r.group_order,
            squared_value: r.squared_value(),
            squared_expected: r.squared_expected,
            cross_value: r.cross_value(),
            cross_expected: r.cross_expected,
            checked_sums: r.checks.len(),
            passed: r.passed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitiesReport {
    pub results: Vec<IdentitySummary>,
}

/// `verify-identities`: exact group sums for every dimension in `dims`.
pub fn cmd_verify_identities(dims: &[usize]) -> Result<IdentitiesReport> {
    let results = dims
        .iter()
        .map(|&d| permutation_sum_identities(d).map(|r| IdentitySummary::from(&r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(IdentitiesReport { results })
}

impl IdentitiesReport {
    pub fn checks(&self) -> Vec<Check> {
        self.results
            .iter()
            .map(|r| {
                Check::new(
                    format!("identities D={}", r.dim),
                    r.passed,
                    format!(
                        "squared {:?} (expected {}), cross {:?} (expected {})",
                        r.squared_value, r.squared_expected, r.cross_value, r.cross_expected
                    ),
                )
            })
            .collect()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let show = |v: Option<i64>| v.map_or("mixed".to_string(), |v| v.to_string());
            let _ = writeln!(
                s,
                "D={}  D!={}  sum Z_ii^2 = {} (expected {})  sum Z_ii Z_jj = {} (expected {})  over {} sums  {}",
                r.dim,
                r.group_order,
                show(r.squared_value),
                r.squared_expected,
                show(r.cross_value),
                r.cross_expected,
                r.checked_sums,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

/// Writes `value` as pretty JSON to `out/name`, creating `out`.
pub fn write_report<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf> {
    prepare_out_dir(out)?;
    let path = out.join(name);
    write_json(&path, value)?;
    Ok(path)
}
