//! Ensemble statistics over independent trajectories: mean log-infidelity
//! curves, mean first-passage times, and speed-up estimates with errors.
//!
//! Trajectories are processed in fixed chunks of consecutive indices. Each
//! chunk is reduced sequentially and chunk partials are merged in index
//! order, so results are bit-identical whatever the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlPolicy;
use crate::error::{ReadoutError, Result};
use crate::sde::{simulate_trajectory, Integrator, SimulationParams, TrajectoryStreams};
use crate::stats::{fit_line, fit_line_weighted, slope_weights, CovarianceAccumulator, LineFit, RunningStats};
use crate::theory::{speedup_bounds_lo, speedup_bounds_rp, SpeedupBounds};

const CHUNK: u64 = 32;

/// Largest censoring fraction a speed-up estimate accepts.
pub const MAX_CENSORED_FRACTION: f64 = 1e-3;
/// Censoring above this is flagged on the ensemble.
pub const EXCESSIVE_CENSORING: f64 = 0.1;

pub const DEFAULT_MASTER_SEED: u64 = 0x5EED_2013;

/// Logarithmic grid with 13 points per decade from `1e-1` down to `1e-6`.
pub fn default_epsilon_grid() -> Vec<f64> {
    epsilon_grid(1, 6, 13)
}

/// `10^-(first + k/per_decade)` down to `10^-last`, inclusive.
pub fn epsilon_grid(first: u32, last: u32, per_decade: u32) -> Vec<f64> {
    let steps = (last - first) * per_decade;
    (0..=steps)
        .map(|k| 10f64.powf(-(first as f64 + k as f64 / per_decade as f64)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageStats {
    pub epsilon: f64,
    /// Censored trajectories contribute `max_time`.
    pub mean_time: f64,
    pub stderr: f64,
    pub censored_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub policy: String,
    pub n: usize,
    pub gamma: f64,
    pub integrator: Integrator,
    pub master_seed: u64,
    pub trajectory_count: usize,
    pub sample_times: Vec<f64>,
    pub mean_ln_delta: Vec<f64>,
    pub stderr_ln_delta: Vec<f64>,
    pub first_passage: Vec<PassageStats>,
    /// Set when some epsilon is censored in more than 10% of trajectories.
    pub excessive_censoring: bool,
    passage_moments: CovarianceAccumulator,
}

impl EnsembleStats {
    pub fn epsilons(&self) -> Vec<f64> {
        self.first_passage.iter().map(|p| p.epsilon).collect()
    }

    fn passage_index(&self, epsilon: f64) -> Option<usize> {
        self.first_passage
            .iter()
            .position(|p| (p.epsilon - epsilon).abs() <= 1e-9 * epsilon)
    }

    pub fn passage(&self, epsilon: f64) -> Option<&PassageStats> {
        self.passage_index(epsilon).map(|i| &self.first_passage[i])
    }

    pub fn max_censored_fraction(&self) -> f64 {
        self.first_passage
            .iter()
            .map(|p| p.censored_fraction)
            .fold(0.0, f64::max)
    }

    /// Least-squares slope of the mean log-infidelity over `[from, to]`.
    pub fn ln_delta_slope(&self, from: f64, to: f64) -> Result<LineFit> {
        let (t, y): (Vec<f64>, Vec<f64>) = self
            .sample_times
            .iter()
            .zip(&self.mean_ln_delta)
            .filter(|(t, _)| **t >= from - 1e-12 && **t <= to + 1e-12)
            .map(|(t, y)| (*t, *y))
            .unzip();
        fit_line(&t, &y)
    }

    /// Slope over the latter half of the sampled curve.
    pub fn asymptotic_ln_delta_slope(&self) -> Result<LineFit> {
        let end = *self
            .sample_times
            .last()
            .ok_or_else(|| ReadoutError::IllConditioned("ensemble has no curve samples".into()))?;
        self.ln_delta_slope(end / 2.0, end)
    }
}

struct ChunkPartial {
    curve: Vec<RunningStats>,
    passages: CovarianceAccumulator,
    censored: Vec<u64>,
}

impl ChunkPartial {
    fn new(samples: usize, targets: usize) -> Self {
        ChunkPartial {
            curve: vec![RunningStats::default(); samples],
            passages: CovarianceAccumulator::new(targets),
            censored: vec![0; targets],
        }
    }

    fn merge(&mut self, other: &ChunkPartial) {
        for (a, b) in self.curve.iter_mut().zip(&other.curve) {
            a.merge(b);
        }
        self.passages.merge(&other.passages);
        for (a, b) in self.censored.iter_mut().zip(&other.censored) {
            *a += b;
        }
    }
}

/// Runs `count` trajectories, trajectory `k` using the streams derived from
/// `(master_seed, k)`, and aggregates them.
pub fn run_ensemble(
    params: &SimulationParams,
    policy: &ControlPolicy,
    epsilons: &[f64],
    count: usize,
    master_seed: u64,
) -> Result<EnsembleStats> {
    if count < 2 {
        return Err(ReadoutError::InvalidParams(format!(
            "ensemble needs at least 2 trajectories, got {count}"
        )));
    }
    params.validate()?;
    policy.check_dim(crate::register::dimension(params.n))?;
    let sample_times = params.sample_times();
    let samples = sample_times.len();
    let targets = epsilons.len();
    let chunks = (count as u64).div_ceil(CHUNK);

    let partials: Vec<ChunkPartial> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<ChunkPartial> {
            let mut partial = ChunkPartial::new(samples, targets);
            let end = ((c + 1) * CHUNK).min(count as u64);
            let mut times = vec![0.0; targets];
            for index in c * CHUNK..end {
                let mut streams = TrajectoryStreams::derive(master_seed, index);
                let result = simulate_trajectory(params, policy, epsilons, &mut streams)?;
                for (acc, delta) in partial.curve.iter_mut().zip(&result.infidelity) {
                    acc.push(delta.max(f64::MIN_POSITIVE).ln());
                }
                for (k, fp) in result.first_passage.iter().enumerate() {
                    times[k] = match fp.time {
                        Some(t) => t,
                        None => {
                            partial.censored[k] += 1;
                            params.max_time
                        }
                    };
                }
                partial.passages.push(&times);
            }
            Ok(partial)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = ChunkPartial::new(samples, targets);
    for p in &partials {
        total.merge(p);
    }

    let first_passage: Vec<PassageStats> = epsilons
        .iter()
        .enumerate()
        .map(|(k, &epsilon)| PassageStats {
            epsilon,
            mean_time: total.passages.mean()[k],
            stderr: (total.passages.covariance(k, k) / count as f64).sqrt(),
            censored_fraction: total.censored[k] as f64 / count as f64,
        })
        .collect();
    let excessive_censoring = first_passage
        .iter()
        .any(|p| p.censored_fraction > EXCESSIVE_CENSORING);
    if excessive_censoring {
        log::warn!(
            "{} ensemble (n = {}): more than {:.0}% of trajectories censored at max_time = {}",
            policy,
            params.n,
            EXCESSIVE_CENSORING * 100.0,
            params.max_time
        );
    }

    Ok(EnsembleStats {
        policy: policy.name().to_string(),
        n: params.n,
        gamma: params.gamma,
        integrator: params.integrator,
        master_seed,
        trajectory_count: count,
        mean_ln_delta: total.curve.iter().map(RunningStats::mean).collect(),
        stderr_ln_delta: total.curve.iter().map(RunningStats::stderr).collect(),
        sample_times,
        first_passage,
        excessive_censoring,
        passage_moments: total.passages,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedupMethod {
    FixedEpsilon,
    AsymptoticRegression,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: SpeedupMethod,
    pub epsilon_range: Option<(f64, f64)>,
}

fn ratio_stderr(num: f64, num_se: f64, den: f64, den_se: f64) -> f64 {
    (num / den) * ((num_se / num).powi(2) + (den_se / den).powi(2)).sqrt()
}

fn usable_passage(stats: &EnsembleStats, epsilon: f64) -> Result<PassageStats> {
    let p = *stats
        .passage(epsilon)
        .ok_or(ReadoutError::MissingEpsilon(epsilon))?;
    if p.censored_fraction >= MAX_CENSORED_FRACTION {
        return Err(ReadoutError::Censored {
            epsilon,
            fraction: p.censored_fraction,
        });
    }
    Ok(p)
}

/// `<T>_nc(ε) / <T>_ctrl(ε)` with first-order error propagation.
pub fn speedup_fixed_epsilon(
    stats_nc: &EnsembleStats,
    stats_ctrl: &EnsembleStats,
    epsilon: f64,
) -> Result<SpeedupEstimate> {
    let nc = usable_passage(stats_nc, epsilon)?;
    let ctrl = usable_passage(stats_ctrl, epsilon)?;
    Ok(SpeedupEstimate {
        value: nc.mean_time / ctrl.mean_time,
        stderr: ratio_stderr(nc.mean_time, nc.stderr, ctrl.mean_time, ctrl.stderr),
        method: SpeedupMethod::FixedEpsilon,
        epsilon_range: Some((epsilon, epsilon)),
    })
}

/// Slope of `<T>` against `ln(1/ε)` over grid points inside `[eps_lo, eps_hi]`.
/// The error accounts for the correlation between grid points, which share
/// trajectories.
pub fn mean_time_slope(stats: &EnsembleStats, eps_lo: f64, eps_hi: f64) -> Result<(f64, f64)> {
    let picked: Vec<usize> = stats
        .first_passage
        .iter()
        .enumerate()
        .filter(|(_, p)| p.epsilon >= eps_lo * (1.0 - 1e-9) && p.epsilon <= eps_hi * (1.0 + 1e-9))
        .map(|(k, _)| k)
        .collect();
    if picked.len() < 3 {
        return Err(ReadoutError::IllConditioned(format!(
            "only {} epsilon grid points in [{eps_lo:e}, {eps_hi:e}]",
            picked.len()
        )));
    }
    for &k in &picked {
        usable_passage(stats, stats.first_passage[k].epsilon)?;
    }
    let x: Vec<f64> = picked
        .iter()
        .map(|&k| stats.first_passage[k].epsilon.recip().ln())
        .collect();
    let w = slope_weights(&x)?;
    let slope: f64 = picked
        .iter()
        .zip(&w)
        .map(|(&k, wk)| wk * stats.first_passage[k].mean_time)
        .sum();
    let pairs: Vec<(usize, f64)> = picked.iter().copied().zip(w.iter().copied()).collect();
    let var = stats.passage_moments.weighted_mean_variance(&pairs);
    Ok((slope, var.max(0.0).sqrt()))
}

/// Residuals of `<T>` about its least-squares line over `[eps_lo, eps_hi]`,
/// ordered by decreasing epsilon.
pub fn mean_time_residuals(stats: &EnsembleStats, eps_lo: f64, eps_hi: f64) -> Result<Vec<f64>> {
    let (x, y): (Vec<f64>, Vec<f64>) = stats
        .first_passage
        .iter()
        .filter(|p| p.epsilon >= eps_lo * (1.0 - 1e-9) && p.epsilon <= eps_hi * (1.0 + 1e-9))
        .map(|p| (p.epsilon.recip().ln(), p.mean_time))
        .unzip();
    let fit = fit_line(&x, &y)?;
    Ok(x.iter()
        .zip(&y)
        .map(|(a, b)| b - fit.intercept - fit.slope * a)
        .collect())
}

/// Ratio of the `<T>` versus `ln(1/ε)` slopes, the ε → 0 speed-up.
pub fn asymptotic_speedup(
    stats_nc: &EnsembleStats,
    stats_ctrl: &EnsembleStats,
    eps_lo: f64,
    eps_hi: f64,
) -> Result<SpeedupEstimate> {
    let (nc, nc_se) = mean_time_slope(stats_nc, eps_lo, eps_hi)?;
    let (ctrl, ctrl_se) = mean_time_slope(stats_ctrl, eps_lo, eps_hi)?;
    if !(nc > 0.0 && ctrl > 0.0) {
        return Err(ReadoutError::IllConditioned(format!(
            "non-positive mean-time slopes {nc} and {ctrl}"
        )));
    }
    Ok(SpeedupEstimate {
        value: nc / ctrl,
        stderr: ratio_stderr(nc, nc_se, ctrl, ctrl_se),
        method: SpeedupMethod::AsymptoticRegression,
        epsilon_range: Some((eps_lo, eps_hi)),
    })
}

/// Analytic band for a protocol, where one exists.
pub fn protocol_bounds(policy: &ControlPolicy, n: usize) -> Option<SpeedupBounds> {
    match policy {
        ControlPolicy::None => Some(SpeedupBounds {
            lower: 1.0,
            upper: 1.0,
        }),
        ControlPolicy::HOrdering => Some(speedup_bounds_lo(n)),
        ControlPolicy::RandomPermutation => Some(speedup_bounds_rp(n)),
        ControlPolicy::FixedCycle(_) => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub speedup: SpeedupEstimate,
    pub bounds: Option<SpeedupBounds>,
    pub censored_fraction: f64,
}

/// Asymptotic speed-up of `protocol` against no control for each register
/// size, both ensembles sharing the master seed.
#[allow(clippy::too_many_arguments)]
pub fn speedup_scaling_sweep(
    n_values: &[usize],
    protocol: &ControlPolicy,
    template: &SimulationParams,
    epsilons: &[f64],
    count: usize,
    master_seed: u64,
    eps_range: (f64, f64),
) -> Result<Vec<SweepPoint>> {
    n_values
        .iter()
        .map(|&n| {
            let params = SimulationParams {
                n,
                ..template.clone()
            };
            let nc = run_ensemble(&params, &ControlPolicy::None, epsilons, count, master_seed)?;
            let ctrl = run_ensemble(&params, protocol, epsilons, count, master_seed)?;
            let speedup = asymptotic_speedup(&nc, &ctrl, eps_range.0, eps_range.1)?;
            Ok(SweepPoint {
                n,
                speedup,
                bounds: protocol_bounds(protocol, n),
                censored_fraction: nc.max_censored_fraction().max(ctrl.max_censored_fraction()),
            })
        })
        .collect()
}

/// Straight line through sweep points, weighted by their standard errors.
pub fn fit_sweep(points: &[SweepPoint]) -> Result<LineFit> {
    let x: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.speedup.value).collect();
    let s: Vec<f64> = points.iter().map(|p| p.speedup.stderr).collect();
    fit_line_weighted(&x, &y, Some(&s))
}
