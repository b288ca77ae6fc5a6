//! Closed-form predictions for register readout: the uncontrolled collapse
//! law, log-infidelity rates, bounds on the asymptotic speed-up of the
//! H-ordering and random-permutation protocols, and exact averages over the
//! symmetric group by enumeration.

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ReadoutError, Result};
use crate::register::{dimension, sample_uniform_permutation, z_sign, DiagonalState, Permutation};
use crate::sde::RecordAccumulator;

/// Largest dimension the exact group enumeration accepts (8! permutations).
pub const MAX_ENUMERATION_DIM: usize = 8;

/// Lower and upper bound on an asymptotic speed-up factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Mean rate of change of `ln Δ`, in units of 1/time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
}

/// Long-time `ln(1 - λ_max)` without control: `-16 γ t + ln n`.
pub fn nofb_log_infidelity(t: f64, n: usize, gamma: f64) -> f64 {
    -16.0 * gamma * t + (n as f64).ln()
}

/// Mean time to reach infidelity `epsilon` without control, `ln(1/ε) / 16γ`.
pub fn mean_time_nofb(epsilon: f64, gamma: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ReadoutError::InvalidParams(format!(
            "epsilon {epsilon} must lie in (0, 1)"
        )));
    }
    Ok(epsilon.recip().ln() / (16.0 * gamma))
}

/// `Σ_r (<Z_r> - z_r(k))²` where `k` is the index of the largest eigenvalue.
/// With the maximum at index 0 this is `Σ_r <Z_r - I>²`.
pub fn zsum(state: &DiagonalState) -> f64 {
    zsum_about(state, state.argmax().value())
}

fn zsum_about(state: &DiagonalState, anchor: usize) -> f64 {
    let n = state.n();
    (1..=n)
        .map(|r| {
            let zk = z_sign(n, r, anchor);
            let centred: f64 = state
                .probs()
                .iter()
                .enumerate()
                .map(|(i, p)| (z_sign(n, r, i) - zk) * p)
                .sum();
            centred * centred
        })
        .sum()
}

/// `d<ln Δ>/dt = -4γ Σ_r <Z_r>² (1 - Δ)² / Δ²` for the current state.
pub fn log_infidelity_rate(state: &DiagonalState, gamma: f64) -> Result<RateEstimate> {
    let delta = state.infidelity();
    if delta <= 0.0 {
        return Err(ReadoutError::SingularRate);
    }
    Ok(RateEstimate {
        value: rate_from_zsum(zsum(state), delta, gamma),
    })
}

fn rate_from_zsum(zsum: f64, delta: f64, gamma: f64) -> f64 {
    -4.0 * gamma * zsum * (1.0 - delta).powi(2) / (delta * delta)
}

/// `(n 2^{2n} / (2^n - 1)² Δ², 4 n Δ²)`: the range of `Σ_r <Z_r>²` over
/// H-ordered states with infidelity `Δ`.
pub fn zsum_bounds(delta: f64, n: usize) -> (f64, f64) {
    let d = dimension(n) as f64;
    let n = n as f64;
    (n * d * d / ((d - 1.0) * (d - 1.0)) * delta * delta, 4.0 * n * delta * delta)
}

fn common_lower_bound(n: usize) -> f64 {
    let d = dimension(n) as f64;
    d * d / ((d - 1.0) * (d - 1.0)) * n as f64 / 4.0
}

/// Bounds on the speed-up of locally optimal (H-ordering) feedback.
pub fn speedup_bounds_lo(n: usize) -> SpeedupBounds {
    SpeedupBounds {
        lower: common_lower_bound(n),
        upper: n as f64,
    }
}

/// Bounds on the speed-up of uniformly random permutations.
pub fn speedup_bounds_rp(n: usize) -> SpeedupBounds {
    let d = dimension(n) as f64;
    SpeedupBounds {
        lower: common_lower_bound(n),
        upper: d / 2.0 / (d - 1.0) * n as f64,
    }
}

/// Expected Hamming distance between two independent uniform `n`-bit strings.
pub fn mean_random_hamming_distance(n: usize) -> f64 {
    n as f64 / 2.0
}

/// One sum identity checked over the full symmetric group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SumCheck {
    pub qubit: usize,
    pub i: usize,
    /// `None` for the squared sum, `Some(j)` for the cross sum.
    pub j: Option<usize>,
    pub value: i64,
    pub expected: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub dim: usize,
    pub group_order: i64,
    /// Expected `Σ_s (Z_{s,ii})²`, which is `2·D!`.
    pub squared_expected: i64,
    /// Expected `Σ_s Z_{s,ii} Z_{s,jj}`, which is `(1 - 1/(D-1))·D!`.
    pub cross_expected: i64,
    pub checks: Vec<SumCheck>,
    pub passed: bool,
}

impl IdentityReport {
    /// Common value of the squared sum, if every `(r, i)` agreed.
    pub fn squared_value(&self) -> Option<i64> {
        common_value(self.checks.iter().filter(|c| c.j.is_none()))
    }

    pub fn cross_value(&self) -> Option<i64> {
        common_value(self.checks.iter().filter(|c| c.j.is_some()))
    }
}

fn common_value<'a>(mut checks: impl Iterator<Item = &'a SumCheck>) -> Option<i64> {
    let first = checks.next()?.value;
    checks.all(|c| c.value == first).then_some(first)
}

fn enumeration_qubits(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(ReadoutError::InvalidParams(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    if dim > MAX_ENUMERATION_DIM {
        return Err(ReadoutError::EnumerationCap { dim });
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Checks `Σ_s (Z^r_{s,ii})² = 2·D!` and `Σ_s Z^r_{s,ii} Z^r_{s,jj} = (1 - 1/(D-1))·D!`
/// for the shifted observable (diagonal entries in `{0, -2}`) by summing over
/// every permutation `s`, for every qubit `r` and every `i`, `j ≠ i`.
/// All arithmetic is in integers.
pub fn permutation_sum_identities(dim: usize) -> Result<IdentityReport> {
    let n = enumeration_qubits(dim)?;
    let group_order: i64 = (1..=dim as i64).product();
    let squared_expected = 2 * group_order;
    // (1 - 1/(D-1)) D! = (D-2) D (D-2)!
    let cross_expected = (dim as i64 - 2) * group_order / (dim as i64 - 1);

    let shifted = |r: usize, k: usize| -> i64 { if (k >> (n - r)) & 1 == 0 { 0 } else { -2 } };

    // sums[r][i][j]: Σ_s Z^r_{s,ii} Z^r_{s,jj}; diagonal i == j holds the squares
    let mut sums = vec![vec![vec![0i64; dim]; dim]; n + 1];
    for perm in (0..dim).permutations(dim) {
        // P Z P^T has Z's eigenvalue of perm[i] on its i-th diagonal entry
        for (r, table) in sums.iter_mut().enumerate().skip(1) {
            let diag: Vec<i64> = perm.iter().map(|&k| shifted(r, k)).collect();
            for i in 0..dim {
                if diag[i] == 0 {
                    continue;
                }
                for j in 0..dim {
                    table[i][j] += diag[i] * diag[j];
                }
            }
        }
    }

    let mut checks = Vec::new();
    for (r, table) in sums.iter().enumerate().skip(1) {
        for i in 0..dim {
            for j in 0..dim {
                let (expected, partner) = if i == j {
                    (squared_expected, None)
                } else {
                    (cross_expected, Some(j))
                };
                checks.push(SumCheck {
                    qubit: r,
                    i,
                    j: partner,
                    value: table[i][j],
                    expected,
                });
            }
        }
    }
    let passed = checks.iter().all(|c| c.value == c.expected);
    Ok(IdentityReport {
        dim,
        group_order,
        squared_expected,
        cross_expected,
        checks,
        passed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AveragingMode {
    ExactEnumeration,
    ClosedFormBounds,
}

/// Result of [`permutation_averaged_rate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PermutationRate {
    Exact(RateEstimate),
    /// Envelope rates for the least mixed (`two_level`) and flat-residual
    /// states in the small-`Δ` limit.
    Envelope {
        two_level: RateEstimate,
        flat: RateEstimate,
    },
}

/// Rate of `<ln Δ>` averaged over one uniformly random permutation.
pub fn permutation_averaged_rate(
    state: &DiagonalState,
    gamma: f64,
    mode: AveragingMode,
) -> Result<PermutationRate> {
    match mode {
        AveragingMode::ExactEnumeration => {
            enumerated_permutation_rate(state, gamma).map(PermutationRate::Exact)
        }
        AveragingMode::ClosedFormBounds => {
            let (two_level, flat) = permutation_rate_envelope(state.n(), gamma);
            Ok(PermutationRate::Envelope { two_level, flat })
        }
    }
}

/// `-16γ n 2^{n-1}/(2^n - 1)` and `-16γ (n/4) 2^{2n}/(2^n - 1)²`.
pub fn permutation_rate_envelope(n: usize, gamma: f64) -> (RateEstimate, RateEstimate) {
    let b = speedup_bounds_rp(n);
    (
        RateEstimate {
            value: -16.0 * gamma * b.upper,
        },
        RateEstimate {
            value: -16.0 * gamma * b.lower,
        },
    )
}

/// Rate contribution of one relabelling `p`: the largest eigenvalue moves to
/// `p(k)`, so the observable is centred there.
fn permuted_zsum(state: &DiagonalState, p: &[usize], anchor: usize) -> f64 {
    let n = state.n();
    let k = p[anchor];
    (1..=n)
        .map(|r| {
            let zk = z_sign(n, r, k);
            let centred: f64 = state
                .probs()
                .iter()
                .zip(p)
                .map(|(prob, &target)| (z_sign(n, r, target) - zk) * prob)
                .sum();
            centred * centred
        })
        .sum()
}

/// `-(4γ / D!) (1 - Δ)²/Δ² Σ_s Σ_r <Z^r_s>²` by enumerating every permutation.
pub fn enumerated_permutation_rate(state: &DiagonalState, gamma: f64) -> Result<RateEstimate> {
    let dim = state.dim();
    if dim > MAX_ENUMERATION_DIM {
        return Err(ReadoutError::EnumerationCap { dim });
    }
    let delta = state.infidelity();
    if delta <= 0.0 {
        return Err(ReadoutError::SingularRate);
    }
    let anchor = state.argmax().value();
    let mut total = 0.0;
    let mut count = 0u64;
    for perm in (0..dim).permutations(dim) {
        total += permuted_zsum(state, &perm, anchor);
        count += 1;
    }
    Ok(RateEstimate {
        value: rate_from_zsum(total / count as f64, delta, gamma),
    })
}

/// Monte Carlo estimate of the permutation-averaged rate, for registers too
/// large to enumerate. Returns the estimate and its standard error.
pub fn sampled_permutation_rate<R: Rng + ?Sized>(
    state: &DiagonalState,
    gamma: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(RateEstimate, f64)> {
    let delta = state.infidelity();
    if delta <= 0.0 {
        return Err(ReadoutError::SingularRate);
    }
    if samples < 2 {
        return Err(ReadoutError::InvalidParams("need at least two samples".into()));
    }
    let anchor = state.argmax().value();
    let scale = rate_from_zsum(1.0, delta, gamma);
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..samples {
        let p: Permutation = sample_uniform_permutation(rng, state.dim());
        let x = scale * permuted_zsum(state, p.image(), anchor);
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let stderr = (m2 / (samples - 1) as f64 / samples as f64).sqrt();
    Ok((RateEstimate { value: mean }, stderr))
}

/// Normalized linear-trajectory state from the maximally mixed start:
/// `λ_i ∝ exp(2 sqrt(2γ) Σ_r z_i^r R_r)`, a softmax over the signed record
/// combinations.
pub fn linear_trajectory_state(records: &RecordAccumulator, n: usize, gamma: f64) -> Result<DiagonalState> {
    if records.n() != n {
        return Err(ReadoutError::DimensionMismatch {
            expected: n,
            actual: records.n(),
        });
    }
    let coupling = 2.0 * (2.0 * gamma).sqrt();
    let exponents: Vec<f64> = (0..dimension(n))
        .map(|q| coupling * records.combination(q.into()))
        .collect();
    let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(ReadoutError::NonFinite {
            time: records.time(),
            detail: "record exponent is not finite".into(),
        });
    }
    let weights: Vec<f64> = exponents.iter().map(|e| (e - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(DiagonalState::from_raw(
        n,
        weights.into_iter().map(|w| w / total).collect(),
    ))
}
