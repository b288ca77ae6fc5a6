//! Basis-index conventions, Pauli-Z eigenvalue lookup, Hamming geometry and
//! permutation algebra on the logical basis of an `n`-qubit register.
//!
//! A basis index `i` in `[0, 2^n)` is read as the bit string `|q1 q2 ... qn>`
//! with qubit `r` stored at bit position `n - r`, so qubit 1 is the most
//! significant bit.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ReadoutError, Result};

/// Largest register the explicit image-array representation is meant for.
pub const MAX_QUBITS: usize = 12;

/// Tolerance on the total probability of a [`DiagonalState`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisIndex(pub usize);

impl BasisIndex {
    pub fn value(self) -> usize {
        self.0
    }

    /// Bit of qubit `qubit` (1-based) in an `n`-qubit register.
    pub fn bit(self, n: usize, qubit: usize) -> usize {
        (self.0 >> (n - qubit)) & 1
    }

    pub fn weight(self) -> u32 {
        self.0.count_ones()
    }
}

impl From<usize> for BasisIndex {
    fn from(value: usize) -> Self {
        BasisIndex(value)
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of bit flips separating two basis strings.
pub fn hamming_distance(a: BasisIndex, b: BasisIndex) -> u32 {
    (a.0 ^ b.0).count_ones()
}

pub fn dimension(n: usize) -> usize {
    1usize << n
}

/// `Z^r` on qubit `r` of an `n`-qubit register. With `shifted` set the
/// observable is `Z^r - I`, whose eigenvalues are `0` and `-2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZObservable {
    n: usize,
    qubit: usize,
    shifted: bool,
}

impl ZObservable {
    pub fn new(n: usize, qubit: usize, shifted: bool) -> Result<Self> {
        if qubit == 0 || qubit > n {
            return Err(ReadoutError::QubitOutOfRange { qubit, n });
        }
        Ok(ZObservable { n, qubit, shifted })
    }

    pub fn qubit(&self) -> usize {
        self.qubit
    }

    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    pub fn eigenvalue(&self, i: BasisIndex) -> f64 {
        let z = if i.bit(self.n, self.qubit) == 0 { 1.0 } else { -1.0 };
        if self.shifted {
            z - 1.0
        } else {
            z
        }
    }
}

pub fn z_eigenvalue(obs: &ZObservable, i: BasisIndex) -> f64 {
    obs.eigenvalue(i)
}

/// Unshifted `Z^r` eigenvalue without constructing an observable. `qubit` is
/// 1-based and must be in range.
#[inline]
pub(crate) fn z_sign(n: usize, qubit: usize, i: usize) -> f64 {
    if (i >> (n - qubit)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A bijection on basis indices; `image[i]` is where basis state `i` is sent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn identity(dim: usize) -> Self {
        Permutation {
            image: (0..dim).collect(),
        }
    }

    pub fn from_image(image: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; image.len()];
        for &target in &image {
            if target >= image.len() {
                return Err(ReadoutError::InvalidPermutation(format!(
                    "image {} out of range for dimension {}",
                    target,
                    image.len()
                )));
            }
            if std::mem::replace(&mut seen[target], true) {
                return Err(ReadoutError::InvalidPermutation(format!(
                    "image {target} appears more than once"
                )));
            }
        }
        Ok(Permutation { image })
    }

    /// Transposition of two basis indices.
    pub fn swap(dim: usize, a: usize, b: usize) -> Result<Self> {
        let mut image: Vec<usize> = (0..dim).collect();
        if a >= dim || b >= dim {
            return Err(ReadoutError::InvalidPermutation(format!(
                "swap({a}, {b}) out of range for dimension {dim}"
            )));
        }
        image.swap(a, b);
        Ok(Permutation { image })
    }

    /// The two-qubit cycle `diag(l0, l1, l2, l3) -> diag(l1, l2, l0, l3)`.
    pub fn p3124() -> Self {
        Permutation {
            image: vec![2, 0, 1, 3],
        }
    }

    pub fn dim(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, i: BasisIndex) -> BasisIndex {
        BasisIndex(self.image[i.0])
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn compose(&self, inner: &Permutation) -> Result<Permutation> {
        check_dim(self.dim(), inner.dim())?;
        Ok(Permutation {
            image: inner.image.iter().map(|&j| self.image[j]).collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut image = vec![0; self.dim()];
        for (i, &j) in self.image.iter().enumerate() {
            image[j] = i;
        }
        Permutation { image }
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for j in &self.image {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{j}")?;
            first = false;
        }
        Ok(())
    }
}

pub fn compose(p: &Permutation, q: &Permutation) -> Result<Permutation> {
    p.compose(q)
}

pub fn invert(p: &Permutation) -> Permutation {
    p.inverse()
}

/// Uniformly random element of the symmetric group on `dim` points.
pub fn sample_uniform_permutation<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Permutation {
    let mut image: Vec<usize> = (0..dim).collect();
    image.shuffle(rng);
    Permutation { image }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(ReadoutError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// A register state diagonal in the logical basis, stored as its eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalState {
    n: usize,
    probs: Vec<f64>,
}

impl DiagonalState {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(ReadoutError::InvalidState(format!(
                "qubit count {n} outside [1, {MAX_QUBITS}]"
            )));
        }
        check_dim(dimension(n), probs.len())?;
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(ReadoutError::InvalidState(format!(
                "probability {bad} is negative or not finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(ReadoutError::InvalidState(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(DiagonalState { n, probs })
    }

    /// Normalizes arbitrary nonnegative weights into a state.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(ReadoutError::InvalidState(format!(
                "weights sum to {total}"
            )));
        }
        DiagonalState::new(n, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let dim = dimension(n);
        DiagonalState {
            n,
            probs: vec![1.0 / dim as f64; dim],
        }
    }

    pub fn basis_state(n: usize, k: BasisIndex) -> Result<Self> {
        let dim = dimension(n);
        if k.0 >= dim {
            return Err(ReadoutError::InvalidState(format!(
                "basis index {k} out of range for {n} qubits"
            )));
        }
        let mut probs = vec![0.0; dim];
        probs[k.0] = 1.0;
        Ok(DiagonalState { n, probs })
    }

    /// `diag(1 - delta, delta, 0, ..., 0)`, the least mixed state with infidelity `delta`.
    pub fn two_level(n: usize, delta: f64) -> Result<Self> {
        let mut probs = vec![0.0; dimension(n)];
        probs[0] = 1.0 - delta;
        probs[1] = delta;
        DiagonalState::new(n, probs)
    }

    /// `diag(1 - delta, d, ..., d)` with the residual spread evenly over the
    /// other `2^n - 1` entries.
    pub fn flat_residual(n: usize, delta: f64) -> Result<Self> {
        let dim = dimension(n);
        let mut probs = vec![delta / (dim - 1) as f64; dim];
        probs[0] = 1.0 - delta;
        DiagonalState::new(n, probs)
    }

    /// Skips validation; callers guarantee a normalized nonnegative vector.
    pub(crate) fn from_raw(n: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), dimension(n));
        DiagonalState { n, probs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Index of the largest eigenvalue; ties resolve to the lowest index.
    pub fn argmax(&self) -> BasisIndex {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        BasisIndex(best)
    }

    /// `1 - max_i p_i`, summed from the non-maximal entries so that very
    /// small infidelities keep full relative precision.
    pub fn infidelity(&self) -> f64 {
        let k = self.argmax().0;
        self.probs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn expectation_z(&self, obs: &ZObservable) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| obs.eigenvalue(BasisIndex(i)) * p)
            .sum()
    }

    /// `<Z^r>` for every qubit, unshifted.
    pub fn z_expectations(&self) -> Vec<f64> {
        (1..=self.n)
            .map(|r| {
                self.probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| z_sign(self.n, r, i) * p)
                    .sum()
            })
            .collect()
    }

    pub fn permuted(&self, p: &Permutation) -> Result<DiagonalState> {
        check_dim(self.dim(), p.dim())?;
        let mut probs = vec![0.0; self.dim()];
        for (i, &target) in p.image.iter().enumerate() {
            probs[target] = self.probs[i];
        }
        Ok(DiagonalState { n: self.n, probs })
    }
}

pub fn expectation_z(state: &DiagonalState, obs: &ZObservable) -> f64 {
    state.expectation_z(obs)
}

pub fn apply_permutation(state: &DiagonalState, p: &Permutation) -> Result<DiagonalState> {
    state.permuted(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn b(i: usize) -> BasisIndex {
        BasisIndex(i)
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distance(b(0b00), b(0b00)), 0);
        assert_eq!(hamming_distance(b(0b00), b(0b11)), 2);
        assert_eq!(hamming_distance(b(0b101), b(0b001)), 1);
    }

    #[test]
    fn hamming_is_a_metric() {
        for n in 1..=4 {
            let dim = dimension(n);
            for x in 0..dim {
                for y in 0..dim {
                    let dxy = hamming_distance(b(x), b(y));
                    assert_eq!(dxy, hamming_distance(b(y), b(x)));
                    assert_eq!(dxy == 0, x == y);
                    assert!(dxy as usize <= n);
                    for z in 0..dim {
                        assert!(dxy <= hamming_distance(b(x), b(z)) + hamming_distance(b(z), b(y)));
                    }
                }
            }
        }
    }

    #[test]
    fn z_eigenvalue_examples() {
        let z1 = ZObservable::new(2, 1, false).unwrap();
        let z2 = ZObservable::new(2, 2, false).unwrap();
        let z2s = ZObservable::new(2, 2, true).unwrap();
        assert_eq!(z_eigenvalue(&z1, b(0b00)), 1.0);
        assert_eq!(z_eigenvalue(&z2, b(0b01)), -1.0);
        assert_eq!(z_eigenvalue(&z2s, b(0b01)), -2.0);
        // qubit 1 is the most significant bit
        assert_eq!(z_eigenvalue(&z1, b(0b10)), -1.0);
        assert_eq!(z_eigenvalue(&z1, b(0b01)), 1.0);
    }

    #[test]
    fn z_observable_rejects_bad_qubit() {
        assert!(matches!(
            ZObservable::new(2, 0, false),
            Err(ReadoutError::QubitOutOfRange { qubit: 0, n: 2 })
        ));
        assert!(ZObservable::new(2, 3, true).is_err());
    }

    #[test]
    fn squared_eigenvalues_sum_to_n() {
        for n in 1..=5 {
            for i in 0..dimension(n) {
                let total: f64 = (1..=n)
                    .map(|r| ZObservable::new(n, r, false).unwrap().eigenvalue(b(i)).powi(2))
                    .sum();
                assert_eq!(total, n as f64);
            }
        }
    }

    #[test]
    fn expectation_examples() {
        for n in 1..=4 {
            let mixed = DiagonalState::maximally_mixed(n);
            for r in 1..=n {
                let z = ZObservable::new(n, r, false).unwrap();
                assert_abs_diff_eq!(expectation_z(&mixed, &z), 0.0, epsilon = 1e-15);
            }
        }

        let delta = 0.03;
        let rho2 = DiagonalState::new(2, vec![1.0 - delta, 0.0, 0.0, delta]).unwrap();
        let mut zsum = 0.0;
        for r in 1..=2 {
            let z = ZObservable::new(2, r, true).unwrap();
            let e = expectation_z(&rho2, &z);
            assert_abs_diff_eq!(e, -2.0 * delta, epsilon = 1e-15);
            zsum += e * e;
        }
        assert_abs_diff_eq!(zsum, 4.0 * 2.0 * delta * delta, epsilon = 1e-15);

        // Flat residual: direct summation over the four entries, delta = 0.03.
        let flat = DiagonalState::flat_residual(2, delta).unwrap();
        let mut zsum = 0.0;
        for r in 1..=2 {
            let z = ZObservable::new(2, r, true).unwrap();
            let e = expectation_z(&flat, &z);
            assert_abs_diff_eq!(e, -0.04, epsilon = 1e-15);
            zsum += e * e;
        }
        assert_abs_diff_eq!(zsum, 0.0032, epsilon = 1e-15);
    }

    #[test]
    fn permutation_examples() {
        let state = DiagonalState::new(2, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let id = Permutation::identity(4);
        assert_eq!(apply_permutation(&state, &id).unwrap(), state);

        let cycled = apply_permutation(&state, &Permutation::p3124()).unwrap();
        assert_eq!(cycled.probs(), &[0.3, 0.2, 0.4, 0.1]);

        let peaked = DiagonalState::new(2, vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        let swapped = apply_permutation(&peaked, &Permutation::swap(4, 0, 3).unwrap()).unwrap();
        assert_eq!(swapped.probs(), &[0.1, 0.1, 0.1, 0.7]);
    }

    #[test]
    fn composition_and_inverse() {
        let p = Permutation::p3124();
        let id = Permutation::identity(4);
        assert_eq!(compose(&p, &id).unwrap(), p);
        assert!(compose(&invert(&p), &p).unwrap().is_identity());

        // The cycle has order three and its inverse is its square.
        let p2 = compose(&p, &p).unwrap();
        assert_eq!(p2.image(), &[1, 2, 0, 3]);
        assert!(compose(&p, &p2).unwrap().is_identity());
        assert_eq!(invert(&p), p2);
        let q = invert(&p);
        assert!(compose(&q, &compose(&q, &q).unwrap()).unwrap().is_identity());

        assert!(matches!(
            compose(&p, &Permutation::identity(8)),
            Err(ReadoutError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn from_image_validates() {
        assert!(Permutation::from_image(vec![0, 0]).is_err());
        assert!(Permutation::from_image(vec![0, 2]).is_err());
        assert!(Permutation::from_image(vec![1, 0]).is_ok());
    }

    #[test]
    fn state_validation() {
        assert!(DiagonalState::new(1, vec![0.5, 0.6]).is_err());
        assert!(DiagonalState::new(1, vec![1.5, -0.5]).is_err());
        assert!(DiagonalState::new(1, vec![f64::NAN, 1.0]).is_err());
        assert!(DiagonalState::new(2, vec![1.0, 0.0]).is_err());
        let s = DiagonalState::new(2, vec![0.1, 0.6, 0.2, 0.1]).unwrap();
        assert_eq!(s.argmax(), b(1));
        assert_abs_diff_eq!(s.infidelity(), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn tiny_infidelity_keeps_precision() {
        let s = DiagonalState::from_weights(1, vec![1.0, 1e-200]).unwrap();
        assert_eq!(s.infidelity(), 1e-200);
    }

    #[test]
    fn uniform_permutation_trivial_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert!(sample_uniform_permutation(&mut rng, 1).is_identity());
        }
    }

    #[test]
    fn uniform_permutation_two_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = 100_000;
        let ident = (0..samples)
            .filter(|_| sample_uniform_permutation(&mut rng, 2).is_identity())
            .count();
        let freq = ident as f64 / samples as f64;
        assert!((freq - 0.5).abs() < 0.005, "identity frequency {freq}");
    }

    #[test]
    fn uniform_permutation_chi_square_over_s4() {
        use std::collections::HashMap;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = 240_000usize;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..samples {
            *counts
                .entry(sample_uniform_permutation(&mut rng, 4).image().to_vec())
                .or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = samples as f64 / 24.0;
        let sigma = (expected * (1.0 - 1.0 / 24.0)).sqrt();
        let mut chi2 = 0.0;
        for &c in counts.values() {
            assert!((c as f64 - expected).abs() < 3.0 * sigma + 1.0);
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // 23 degrees of freedom: upper 0.1% point is about 49.7
        assert!(chi2 < 49.7, "chi2 = {chi2}");
    }
}
