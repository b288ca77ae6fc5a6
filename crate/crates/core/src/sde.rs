//! Single-trajectory simulation of an independently and continuously
//! monitored register, restricted to states diagonal in the logical basis.
//!
//! Each qubit `r` produces a record increment
//! `dR_r = 2 sqrt(2 gamma) <Z_r> dt + dW_r` with independent Wiener
//! increments. Two integrators consume the same record:
//!
//! * [`exact_step`] multiplies each eigenvalue by `exp(2 sqrt(2 gamma) sum_r z_i^r dR_r)`
//!   and renormalizes (the linear-trajectory update, always positive);
//! * [`euler_step`] applies the Euler-Maruyama update of the normalized
//!   equation `d lambda_i = 2 sqrt(2 gamma) sum_r dW_r (z_i^r - <Z_r>) lambda_i`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::{ControlLog, ControlPolicy, PolicyRunner};
use crate::error::{ReadoutError, Result};
use crate::register::{dimension, z_sign, BasisIndex, DiagonalState, Permutation, MAX_QUBITS};

/// Reference step in units of `1/gamma`.
pub const DEFAULT_DT_GAMMA: f64 = 6.25e-4;
pub const DEFAULT_STOP_EPSILON: f64 = 1e-6;
/// Largest negative excursion an Euler step may clamp away silently.
pub const EULER_NEGATIVITY_TOLERANCE: f64 = 1e-6;
const COARSE_STEP_WARNING: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Exact,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Exact => "exact",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = ReadoutError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "exact" => Ok(Integrator::Exact),
            other => Err(ReadoutError::InvalidParams(format!(
                "unknown integrator '{other}' (expected euler or exact)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub n: usize,
    pub gamma: f64,
    pub dt: f64,
    pub max_time: f64,
    pub integrator: Integrator,
    pub stop_epsilon: f64,
    /// Trajectories keep running until at least this time, sampling the
    /// infidelity curve on the way. Zero disables the curve.
    pub min_time: f64,
    /// Steps between curve samples.
    pub sample_stride: usize,
}

impl SimulationParams {
    pub fn new(n: usize, gamma: f64) -> Self {
        SimulationParams {
            n,
            gamma,
            dt: DEFAULT_DT_GAMMA / gamma,
            max_time: 10.0 / gamma,
            integrator: Integrator::Exact,
            stop_epsilon: DEFAULT_STOP_EPSILON,
            min_time: 0.0,
            sample_stride: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(ReadoutError::InvalidParams(msg));
        if self.n == 0 || self.n > MAX_QUBITS {
            return fail(format!("n = {} outside [1, {MAX_QUBITS}]", self.n));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma = {} must be positive", self.gamma));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt = {} must be positive", self.dt));
        }
        if !(self.max_time > 0.0 && self.max_time.is_finite()) {
            return fail(format!("max_time = {} must be positive", self.max_time));
        }
        if !(self.stop_epsilon > 0.0 && self.stop_epsilon < 1.0) {
            return fail(format!("stop_epsilon = {} outside (0, 1)", self.stop_epsilon));
        }
        if !(self.min_time >= 0.0 && self.min_time <= self.max_time) {
            return fail(format!(
                "min_time = {} outside [0, max_time = {}]",
                self.min_time, self.max_time
            ));
        }
        if self.sample_stride == 0 {
            return fail("sample_stride must be at least 1".into());
        }
        if self.is_coarse() {
            log::warn!(
                "dt * gamma = {} exceeds {COARSE_STEP_WARNING}; discretization error may be visible",
                self.dt * self.gamma
            );
        }
        Ok(())
    }

    pub fn is_coarse(&self) -> bool {
        self.dt * self.gamma > COARSE_STEP_WARNING
    }

    /// `2 sqrt(2 gamma)`, the coupling between records and eigenvalues.
    pub fn coupling(&self) -> f64 {
        2.0 * (2.0 * self.gamma).sqrt()
    }

    pub fn max_steps(&self) -> u64 {
        (self.max_time / self.dt - 1e-9).ceil() as u64
    }

    /// Time of the last curve sample.
    pub fn curve_steps(&self) -> Option<u64> {
        if self.min_time <= 0.0 {
            return None;
        }
        let stride = self.sample_stride as u64;
        let steps = (self.min_time / self.dt + 1e-9).floor() as u64;
        Some(steps / stride * stride)
    }

    /// Times at which curve samples are taken.
    pub fn sample_times(&self) -> Vec<f64> {
        match self.curve_steps() {
            None => Vec::new(),
            Some(last) => (0..=last)
                .step_by(self.sample_stride)
                .map(|k| k as f64 * self.dt)
                .collect(),
        }
    }
}

/// Per-qubit Wiener and record increments for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepIncrements {
    pub dw: Vec<f64>,
    pub dr: Vec<f64>,
}

impl StepIncrements {
    /// Builds increments from a given record, recovering `dW` against `state`.
    pub fn from_record(state: &DiagonalState, dr: Vec<f64>, params: &SimulationParams) -> Self {
        let a = params.coupling();
        let dw = state
            .z_expectations()
            .iter()
            .zip(&dr)
            .map(|(z, r)| r - a * z * params.dt)
            .collect();
        StepIncrements { dw, dr }
    }
}

pub fn generate_increments<R: Rng + ?Sized>(
    state: &DiagonalState,
    params: &SimulationParams,
    rng: &mut R,
) -> StepIncrements {
    let mut inc = StepIncrements {
        dw: vec![0.0; state.n()],
        dr: vec![0.0; state.n()],
    };
    let mut z = vec![0.0; state.n()];
    fill_increments(state, params, rng, &mut z, &mut inc);
    inc
}

fn fill_increments<R: Rng + ?Sized>(
    state: &DiagonalState,
    params: &SimulationParams,
    rng: &mut R,
    z: &mut [f64],
    inc: &mut StepIncrements,
) {
    let n = state.n();
    z_expectations_into(state, z);
    let sqrt_dt = params.dt.sqrt();
    let drift = params.coupling() * params.dt;
    for r in 0..n {
        let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        inc.dw[r] = dw;
        inc.dr[r] = drift * z[r] + dw;
    }
}

fn z_expectations_into(state: &DiagonalState, out: &mut [f64]) {
    let n = state.n();
    out.iter_mut().for_each(|z| *z = 0.0);
    for (i, &p) in state.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (r, z) in out.iter_mut().enumerate() {
            *z += z_sign(n, r + 1, i) * p;
        }
    }
}

/// Euler-Maruyama update of the normalized equation. `dW` is recovered from
/// the record against this state's own `<Z_r>`, so both integrators can be
/// driven by one record stream.
pub fn euler_step(
    state: &DiagonalState,
    inc: &StepIncrements,
    params: &SimulationParams,
) -> Result<DiagonalState> {
    let mut out = state.clone();
    let mut z = vec![0.0; state.n()];
    euler_update(&mut out, &inc.dr, params, &mut z)?;
    Ok(out)
}

fn euler_update(
    state: &mut DiagonalState,
    dr: &[f64],
    params: &SimulationParams,
    z: &mut [f64],
) -> Result<()> {
    let n = state.n();
    let a = params.coupling();
    z_expectations_into(state, z);
    let dw: Vec<f64> = dr
        .iter()
        .zip(z.iter())
        .map(|(r, zr)| r - a * zr * params.dt)
        .collect();
    let probs = state.probs_mut();
    let mut total = 0.0;
    for (i, p) in probs.iter_mut().enumerate() {
        // z_i - <Z> is the same for the shifted and unshifted observable
        let kick: f64 = (0..n).map(|r| dw[r] * (z_sign(n, r + 1, i) - z[r])).sum();
        let next = *p + a * kick * *p;
        if next < -EULER_NEGATIVITY_TOLERANCE {
            return Err(ReadoutError::StepTooLarge { value: next });
        }
        *p = next.clamp(0.0, 1.0);
        total += *p;
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(ReadoutError::NonFinite {
            time: f64::NAN,
            detail: format!("euler normalization {total}"),
        });
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(())
}

/// Multiplicative update `lambda_i <- lambda_i exp(2 sqrt(2 gamma) sum_r z_i^r dR_r)`
/// with unshifted `z`, then normalization. Factors common to every `i` cancel.
pub fn exact_step(
    state: &DiagonalState,
    inc: &StepIncrements,
    params: &SimulationParams,
) -> DiagonalState {
    let mut out = state.clone();
    let mut scratch = vec![0.0; state.dim()];
    exact_update(&mut out, &inc.dr, params.coupling(), &mut scratch);
    out
}

fn exact_update(state: &mut DiagonalState, dr: &[f64], coupling: f64, weights: &mut [f64]) {
    // exp(c Σ_r z_i^r dR_r) factorizes over qubits; each factor is divided by
    // its larger branch so the biggest weight is exactly 1.
    let mut len = 1;
    weights[0] = 1.0;
    for &d in dr {
        let x = coupling * d;
        let (plus, minus) = if x >= 0.0 {
            (1.0, (-2.0 * x).exp())
        } else {
            ((2.0 * x).exp(), 1.0)
        };
        for j in (0..len).rev() {
            let w = weights[j];
            weights[2 * j] = w * plus;
            weights[2 * j + 1] = w * minus;
        }
        len *= 2;
    }
    let probs = state.probs_mut();
    let mut total = 0.0;
    for (p, w) in probs.iter_mut().zip(weights.iter()) {
        *p *= w;
        total += *p;
    }
    probs.iter_mut().for_each(|p| *p /= total);
}

/// Running sums of the per-qubit records since `t = 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordAccumulator {
    records: Vec<f64>,
    time: f64,
}

impl RecordAccumulator {
    pub fn new(n: usize) -> Self {
        RecordAccumulator {
            records: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn from_records(records: Vec<f64>, time: f64) -> Self {
        RecordAccumulator { records, time }
    }

    pub fn push(&mut self, inc: &StepIncrements, dt: f64) {
        for (acc, d) in self.records.iter_mut().zip(&inc.dr) {
            *acc += d;
        }
        self.time += dt;
    }

    pub fn records(&self) -> &[f64] {
        &self.records
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Signed combination of the bare records labelled by `q`: a `0` bit for
    /// qubit `r` adds `R_r`, a `1` bit subtracts it.
    pub fn combination(&self, q: BasisIndex) -> f64 {
        let n = self.n();
        self.records
            .iter()
            .enumerate()
            .map(|(r, rec)| z_sign(n, r + 1, q.value()) * rec)
            .sum()
    }
}

/// First time the infidelity reached `epsilon`; `None` when censored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstPassage {
    pub epsilon: f64,
    pub time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub sample_times: Vec<f64>,
    pub infidelity: Vec<f64>,
    pub first_passage: Vec<FirstPassage>,
    pub final_index: BasisIndex,
    pub final_state: DiagonalState,
    pub final_time: f64,
    pub steps: u64,
    pub cumulative_control: Permutation,
}

impl TrajectoryResult {
    /// Outcome of the unpermuted measurement.
    pub fn retrodicted_index(&self) -> BasisIndex {
        self.cumulative_control.inverse().apply(self.final_index)
    }
}

/// Independent noise and control streams for one trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryStreams {
    pub noise: ChaCha8Rng,
    pub control: ChaCha8Rng,
}

impl TrajectoryStreams {
    /// Streams for trajectory `index` under `master_seed`; each trajectory
    /// owns two ChaCha streams, so results do not depend on scheduling.
    pub fn derive(master_seed: u64, index: u64) -> Self {
        let mut noise = ChaCha8Rng::seed_from_u64(master_seed);
        noise.set_stream(2 * index);
        let mut control = ChaCha8Rng::seed_from_u64(master_seed);
        control.set_stream(2 * index + 1);
        TrajectoryStreams { noise, control }
    }
}

fn check_epsilons(epsilons: &[f64], stop_epsilon: f64) -> Result<()> {
    for w in epsilons.windows(2) {
        if !(w[0] > w[1]) {
            return Err(ReadoutError::InvalidParams(
                "epsilons must be strictly decreasing".into(),
            ));
        }
    }
    if let Some(bad) = epsilons
        .iter()
        .find(|&&e| !(e >= stop_epsilon * (1.0 - 1e-12) && e < 1.0))
    {
        return Err(ReadoutError::InvalidParams(format!(
            "epsilon {bad:e} must lie in [stop_epsilon = {stop_epsilon:e}, 1)"
        )));
    }
    Ok(())
}

/// Runs one trajectory from the maximally mixed state.
pub fn simulate_trajectory(
    params: &SimulationParams,
    policy: &ControlPolicy,
    epsilons: &[f64],
    streams: &mut TrajectoryStreams,
) -> Result<TrajectoryResult> {
    simulate_from(
        DiagonalState::maximally_mixed(params.n),
        params,
        policy,
        epsilons,
        streams,
    )
}

/// Runs one trajectory from `initial`. Each step applies the policy's
/// permutation, draws the record, integrates, then checks first passages.
/// The run ends once the infidelity is at most `stop_epsilon` and
/// `min_time` has elapsed, or at `max_time`.
pub fn simulate_from(
    initial: DiagonalState,
    params: &SimulationParams,
    policy: &ControlPolicy,
    epsilons: &[f64],
    streams: &mut TrajectoryStreams,
) -> Result<TrajectoryResult> {
    params.validate()?;
    check_epsilons(epsilons, params.stop_epsilon)?;
    if initial.n() != params.n {
        return Err(ReadoutError::DimensionMismatch {
            expected: dimension(params.n),
            actual: initial.dim(),
        });
    }
    policy.check_dim(initial.dim())?;

    let n = params.n;
    let dim = initial.dim();
    let runner = PolicyRunner::new(policy, n);
    let max_steps = params.max_steps();
    let curve_steps = params.curve_steps();
    let stride = params.sample_stride as u64;
    let coupling = params.coupling();

    let mut state = initial;
    let mut log = ControlLog::new(dim);
    let mut inc = StepIncrements {
        dw: vec![0.0; n],
        dr: vec![0.0; n],
    };
    let mut z = vec![0.0; n];
    let mut scratch = vec![0.0; dim];

    let mut sample_times = Vec::new();
    let mut infidelity = Vec::new();
    let mut passages: Vec<FirstPassage> = epsilons
        .iter()
        .map(|&epsilon| FirstPassage {
            epsilon,
            time: None,
        })
        .collect();
    let mut next_target = 0;

    let mut delta = state.infidelity();
    let mut ln_delta = delta.ln();
    while next_target < passages.len() && delta <= passages[next_target].epsilon {
        passages[next_target].time = Some(0.0);
        next_target += 1;
    }
    if curve_steps.is_some() {
        sample_times.push(0.0);
        infidelity.push(delta);
    }

    let mut step: u64 = 0;
    let mut t = 0.0;
    while step < max_steps {
        let curve_done = curve_steps.is_none_or(|last| step >= last);
        if delta <= params.stop_epsilon && curve_done {
            break;
        }

        if let Some(p) = runner.next(&state, step, &mut streams.control) {
            if !p.is_identity() {
                let probs = state.probs_mut();
                scratch.copy_from_slice(probs);
                for (i, &target) in p.image().iter().enumerate() {
                    probs[target] = scratch[i];
                }
                log.record(&p)?;
            }
        }

        fill_increments(&state, params, &mut streams.noise, &mut z, &mut inc);
        match params.integrator {
            Integrator::Exact => exact_update(&mut state, &inc.dr, coupling, &mut scratch),
            Integrator::Euler => euler_update(&mut state, &inc.dr, params, &mut z).map_err(|e| {
                match e {
                    ReadoutError::NonFinite { detail, .. } => ReadoutError::NonFinite { time: t, detail },
                    other => other,
                }
            })?,
        }

        step += 1;
        let t_prev = t;
        t = step as f64 * params.dt;
        let prev_ln = ln_delta;
        delta = state.infidelity();
        if !delta.is_finite() || state.probs().iter().any(|p| !p.is_finite()) {
            return Err(ReadoutError::NonFinite {
                time: t,
                detail: "state has non-finite entries".into(),
            });
        }
        ln_delta = delta.ln();

        while next_target < passages.len() && delta <= passages[next_target].epsilon {
            let ln_eps = passages[next_target].epsilon.ln();
            let crossing = if ln_delta.is_finite() && prev_ln > ln_delta && prev_ln >= ln_eps {
                t_prev + params.dt * (prev_ln - ln_eps) / (prev_ln - ln_delta)
            } else {
                t
            };
            passages[next_target].time = Some(crossing.clamp(t_prev, t));
            next_target += 1;
        }

        if let Some(last) = curve_steps {
            if step <= last && step % stride == 0 {
                sample_times.push(t);
                infidelity.push(delta);
            }
        }
    }

    let final_index = state.argmax();
    Ok(TrajectoryResult {
        sample_times,
        infidelity,
        first_passage: passages,
        final_index,
        final_state: state,
        final_time: t,
        steps: step,
        cumulative_control: log.into_cumulative(),
    })
}

/// Euler-versus-exact discrepancy at one step size, over a batch of shared
/// record paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub dt: f64,
    /// Mean L1 distance between the two final states.
    pub strong: f64,
    /// Mean of `purity(euler) - purity(exact)`, paired on the record.
    pub weak: f64,
    pub weak_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub points: Vec<Discrepancy>,
    pub paths_used: usize,
    /// Paths dropped because Euler went negative at some step size.
    pub paths_rejected: usize,
}

fn purity(state: &DiagonalState) -> f64 {
    state.probs().iter().map(|p| p * p).sum()
}

/// Drives both integrators with the same records from the maximally mixed
/// state up to `t_end`, once per step size in `dts`. Records are drawn at
/// the smallest step and summed into coarser ones, so every step size sees
/// the same underlying path. Each entry of `dts` must be an integer
/// multiple of the smallest.
///
/// The exact update is exact for any partition of a given record, so the
/// discrepancy is the Euler error. Its pathwise (strong) part shrinks like
/// `sqrt(dt)`; the bias of a smooth functional (weak part) like `dt`.
pub fn integrator_convergence(
    n: usize,
    gamma: f64,
    t_end: f64,
    dts: &[f64],
    paths: usize,
    master_seed: u64,
) -> Result<ConvergenceStudy> {
    let finest = dts.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut base = SimulationParams::new(n, gamma);
    base.dt = finest;
    base.validate()?;
    let ratios: Vec<usize> = dts
        .iter()
        .map(|&dt| {
            let m = (dt / finest).round();
            if (m * finest - dt).abs() > 1e-9 * dt {
                Err(ReadoutError::InvalidParams(format!(
                    "step {dt} is not a multiple of {finest}"
                )))
            } else {
                Ok(m as usize)
            }
        })
        .collect::<Result<_>>()?;
    let fine_steps = (t_end / finest).round() as usize;
    if fine_steps == 0 || ratios.iter().any(|m| fine_steps % m != 0) {
        return Err(ReadoutError::InvalidParams(format!(
            "t_end = {t_end} must be a common multiple of every step size"
        )));
    }

    let mut strong = vec![0.0; dts.len()];
    let mut weak = vec![crate::stats::RunningStats::default(); dts.len()];
    let mut rejected = 0;
    let mut records = vec![vec![0.0; n]; fine_steps];
    for path in 0..paths as u64 {
        let mut rng = TrajectoryStreams::derive(master_seed, path).noise;
        let mut state = DiagonalState::maximally_mixed(n);
        for dr in records.iter_mut() {
            let inc = generate_increments(&state, &base, &mut rng);
            state = exact_step(&state, &inc, &base);
            dr.copy_from_slice(&inc.dr);
        }

        let mut finals = Vec::with_capacity(dts.len());
        for (&dt, &m) in dts.iter().zip(&ratios) {
            let params = SimulationParams { dt, ..base.clone() };
            let mut euler = DiagonalState::maximally_mixed(n);
            let mut exact = euler.clone();
            let mut failed = false;
            for chunk in records.chunks(m) {
                let mut dr = vec![0.0; n];
                for rec in chunk {
                    dr.iter_mut().zip(rec).for_each(|(a, b)| *a += b);
                }
                let inc = StepIncrements::from_record(&exact, dr, &params);
                exact = exact_step(&exact, &inc, &params);
                match euler_step(&euler, &inc, &params) {
                    Ok(next) => euler = next,
                    Err(ReadoutError::StepTooLarge { .. }) => {
                        failed = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if failed {
                break;
            }
            finals.push((euler, exact));
        }
        if finals.len() < dts.len() {
            rejected += 1;
            continue;
        }
        for (k, (euler, exact)) in finals.iter().enumerate() {
            strong[k] += euler
                .probs()
                .iter()
                .zip(exact.probs())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            weak[k].push(purity(euler) - purity(exact));
        }
    }
    let used = paths - rejected;
    if used < 2 {
        return Err(ReadoutError::StepTooLarge { value: f64::NAN });
    }
    Ok(ConvergenceStudy {
        points: dts
            .iter()
            .enumerate()
            .map(|(k, &dt)| Discrepancy {
                dt,
                strong: strong[k] / used as f64,
                weak: weak[k].mean(),
                weak_stderr: weak[k].stderr(),
            })
            .collect(),
        paths_used: used,
        paths_rejected: rejected,
    })
}

/// Log-log slope of `|value|` against `dt`: the observed order of convergence.
pub fn convergence_order(points: &[Discrepancy], value: impl Fn(&Discrepancy) -> f64) -> Result<f64> {
    let x: Vec<f64> = points.iter().map(|p| p.dt.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| value(p).abs().ln()).collect();
    Ok(crate::stats::fit_line(&x, &y)?.slope)
}
