//! Control strategies acting by permutations of the logical basis, and
//! retrodiction of the outcome the unpermuted measurement would have given.

use std::fmt;
use std::path::Path;

use rand::Rng;

use crate::error::{ReadoutError, Result};
use crate::register::{
    dimension, sample_uniform_permutation, BasisIndex, DiagonalState, Permutation,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ControlPolicy {
    /// Pure measurement, no control.
    None,
    /// Locally optimal feedback: H-order the state before every step.
    HOrdering,
    /// Open loop: a fresh uniformly random permutation every step.
    RandomPermutation,
    /// Open loop: cycle through a fixed list of permutations, round-robin by step.
    FixedCycle(Vec<Permutation>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    None,
    HOrdering,
    RandomPermutation,
    FixedCycle,
}

impl ControlPolicy {
    pub fn fixed_cycle(cycle: Vec<Permutation>) -> Result<Self> {
        let Some(first) = cycle.first() else {
            return Err(ReadoutError::InvalidParams(
                "fixed cycle needs at least one permutation".into(),
            ));
        };
        let dim = first.dim();
        if let Some(bad) = cycle.iter().find(|p| p.dim() != dim) {
            return Err(ReadoutError::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        Ok(ControlPolicy::FixedCycle(cycle))
    }

    /// Resolves a policy name (several spellings accepted) to its kind.
    pub fn kind_from_name(name: &str) -> Result<PolicyKind> {
        match name {
            "none" => Ok(PolicyKind::None),
            "h_ordering" | "h-ordering" | "lo" => Ok(PolicyKind::HOrdering),
            "random_permutation" | "random-permutation" | "rp" => Ok(PolicyKind::RandomPermutation),
            "fixed_cycle" | "fixed-cycle" => Ok(PolicyKind::FixedCycle),
            other => Err(ReadoutError::InvalidParams(format!(
                "unknown policy '{other}' (expected none, h_ordering, random_permutation or fixed_cycle)"
            ))),
        }
    }

    /// Resolves a policy by name. `fixed_cycle` requires the cycle list.
    pub fn from_name(name: &str, cycle: Option<Vec<Permutation>>) -> Result<Self> {
        match Self::kind_from_name(name)? {
            PolicyKind::None => Ok(ControlPolicy::None),
            PolicyKind::HOrdering => Ok(ControlPolicy::HOrdering),
            PolicyKind::RandomPermutation => Ok(ControlPolicy::RandomPermutation),
            PolicyKind::FixedCycle => match cycle {
                Some(c) => ControlPolicy::fixed_cycle(c),
                None => Err(ReadoutError::InvalidParams(
                    "policy fixed_cycle requires a cycle file".into(),
                )),
            },
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            ControlPolicy::None => PolicyKind::None,
            ControlPolicy::HOrdering => PolicyKind::HOrdering,
            ControlPolicy::RandomPermutation => PolicyKind::RandomPermutation,
            ControlPolicy::FixedCycle(_) => PolicyKind::FixedCycle,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind() {
            PolicyKind::None => "none",
            PolicyKind::HOrdering => "h_ordering",
            PolicyKind::RandomPermutation => "random_permutation",
            PolicyKind::FixedCycle => "fixed_cycle",
        }
    }

    /// Only H-ordering reads the conditional state.
    pub fn is_closed_loop(&self) -> bool {
        self.kind() == PolicyKind::HOrdering
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if let ControlPolicy::FixedCycle(cycle) = self {
            if cycle[0].dim() != dim {
                return Err(ReadoutError::DimensionMismatch {
                    expected: dim,
                    actual: cycle[0].dim(),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for ControlPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Target vertices in placement order: `|0...0>` first, then by increasing
/// Hamming distance from `|1...1>` (decreasing weight), ties by index.
pub fn h_order_targets(n: usize) -> Vec<usize> {
    let mut rest: Vec<usize> = (1..dimension(n)).collect();
    rest.sort_by_key(|&i| (std::cmp::Reverse(i.count_ones()), i));
    let mut targets = Vec::with_capacity(dimension(n));
    targets.push(0);
    targets.extend(rest);
    targets
}

/// The permutation that H-orders `state`: the largest eigenvalue goes to
/// `|0...0>`, the second largest to `|1...1>`, and the rest fill vertices in
/// order of increasing distance from `|1...1>`. Equal eigenvalues keep their
/// index order.
pub fn h_order(state: &DiagonalState) -> Permutation {
    h_order_with_targets(state, &h_order_targets(state.n()))
}

pub(crate) fn h_order_with_targets(state: &DiagonalState, targets: &[usize]) -> Permutation {
    let probs = state.probs();
    let mut ranked: Vec<usize> = (0..probs.len()).collect();
    // stable: equal probabilities stay in ascending index order
    ranked.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut image = vec![0; probs.len()];
    for (&source, &target) in ranked.iter().zip(targets) {
        image[source] = target;
    }
    Permutation::from_image(image).expect("h-ordering is a bijection")
}

/// Stateful driver for one trajectory; caches the H-ordering targets.
pub(crate) struct PolicyRunner<'a> {
    policy: &'a ControlPolicy,
    targets: Vec<usize>,
}

impl<'a> PolicyRunner<'a> {
    pub(crate) fn new(policy: &'a ControlPolicy, n: usize) -> Self {
        let targets = if policy.kind() == PolicyKind::HOrdering {
            h_order_targets(n)
        } else {
            Vec::new()
        };
        PolicyRunner { policy, targets }
    }

    /// `None` means the identity; callers can skip the relabelling.
    pub(crate) fn next<R: Rng + ?Sized>(
        &self,
        state: &DiagonalState,
        step_index: u64,
        rng: &mut R,
    ) -> Option<Permutation> {
        match self.policy {
            ControlPolicy::None => None,
            ControlPolicy::HOrdering => Some(h_order_with_targets(state, &self.targets)),
            ControlPolicy::RandomPermutation => Some(sample_uniform_permutation(rng, state.dim())),
            ControlPolicy::FixedCycle(cycle) => {
                Some(cycle[(step_index % cycle.len() as u64) as usize].clone())
            }
        }
    }
}

/// Permutation to apply before step `step_index`.
pub fn policy_step<R: Rng + ?Sized>(
    policy: &ControlPolicy,
    state: &DiagonalState,
    step_index: u64,
    rng: &mut R,
) -> Permutation {
    PolicyRunner::new(policy, state.n())
        .next(state, step_index, rng)
        .unwrap_or_else(|| Permutation::identity(state.dim()))
}

/// Composition of every permutation applied so far, most recent outermost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlLog {
    cumulative: Permutation,
}

impl ControlLog {
    pub fn new(dim: usize) -> Self {
        ControlLog {
            cumulative: Permutation::identity(dim),
        }
    }

    pub fn from_cumulative(cumulative: Permutation) -> Self {
        ControlLog { cumulative }
    }

    pub fn record(&mut self, p: &Permutation) -> Result<()> {
        self.cumulative = p.compose(&self.cumulative)?;
        Ok(())
    }

    pub fn cumulative(&self) -> &Permutation {
        &self.cumulative
    }

    pub fn into_cumulative(self) -> Permutation {
        self.cumulative
    }
}

/// Maps the final (permuted) outcome back to the logical basis.
pub fn retrodict(final_index: BasisIndex, log: &ControlLog) -> Result<BasisIndex> {
    if final_index.value() >= log.cumulative.dim() {
        return Err(ReadoutError::DimensionMismatch {
            expected: log.cumulative.dim(),
            actual: final_index.value() + 1,
        });
    }
    Ok(log.cumulative.inverse().apply(final_index))
}

/// Parses a cycle file: one permutation per line as a space-separated image
/// array. Blank lines and `#` comments are ignored.
pub fn parse_cycle(text: &str, source: &str) -> Result<Vec<Permutation>> {
    let mut cycle = Vec::new();
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
        let image = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| err(format!("'{tok}' is not a basis index")))
            })
            .collect::<Result<Vec<_>>>()?;
        if !image.len().is_power_of_two() || image.len() < 2 {
            return Err(err(format!(
                "permutation has {} entries; expected a power of two",
                image.len()
            )));
        }
        if let Some(prev) = cycle.first().map(Permutation::dim) {
            if prev != image.len() {
                return Err(err(format!(
                    "permutation has {} entries but earlier lines have {prev}",
                    image.len()
                )));
            }
        }
        let p = Permutation::from_image(image).map_err(|e| err(e.to_string()))?;
        cycle.push(p);
    }
    if cycle.is_empty() {
        return Err(ReadoutError::Config {
            path: source.to_string(),
            line: 0,
            message: "cycle file contains no permutations".into(),
        });
    }
    Ok(cycle)
}

pub fn load_cycle_file(path: &Path) -> Result<Vec<Permutation>> {
    let text = std::fs::read_to_string(path)?;
    parse_cycle(&text, &path.display().to_string())
}
