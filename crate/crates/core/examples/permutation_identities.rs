//! Averages over the symmetric group, exactly and by sampling.
//!
//! The shifted single-qubit observable, conjugated by every permutation of
//! the basis, satisfies two integer identities; the permutation-averaged
//! log-infidelity rate is computed by enumeration and compared with a Monte
//! Carlo estimate.
//!
//! ```text
//! cargo run --release --example permutation_identities
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use register_readout::theory::{
    enumerated_permutation_rate, permutation_sum_identities, sampled_permutation_rate,
};
use register_readout::DiagonalState;

fn main() -> register_readout::Result<()> {
    for dim in [4, 8] {
        let r = permutation_sum_identities(dim)?;
        println!(
            "D = {dim}: squared sum {:?} (expected {}), cross sum {:?} (expected {}) -> {}",
            r.squared_value(),
            r.squared_expected,
            r.cross_value(),
            r.cross_expected,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2, 3] {
        for (label, state) in [
            ("two-level", DiagonalState::two_level(n, 1e-3)?),
            ("flat", DiagonalState::flat_residual(n, 1e-3)?),
        ] {
            let exact = enumerated_permutation_rate(&state, 1.0)?;
            let (mc, se) = sampled_permutation_rate(&state, 1.0, 100_000, &mut rng)?;
            println!(
                "n = {n} {label:<9}: exact {:.4}, sampled {:.4} ± {:.4}",
                exact.value, mc.value, se
            );
        }
    }
    Ok(())
}
