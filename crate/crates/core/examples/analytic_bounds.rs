//! Closed-form results: speed-up bounds for both protocols, the range of
//! the measurement signal over H-ordered states, and the log-infidelity rate
//! of the two extreme states.
//!
//! ```text
//! cargo run --release --example analytic_bounds
//! ```

use register_readout::theory::{
    log_infidelity_rate, permutation_rate_envelope, speedup_bounds_lo, speedup_bounds_rp, zsum,
    zsum_bounds,
};
use register_readout::DiagonalState;

fn main() -> register_readout::Result<()> {
    println!(" n   H-ordering          random permutation");
    for n in 1..=8 {
        let lo = speedup_bounds_lo(n);
        let rp = speedup_bounds_rp(n);
        println!(
            "{n:>2}   [{:.3}, {:.3}]     [{:.3}, {:.3}]",
            lo.lower, lo.upper, rp.lower, rp.upper
        );
    }
    println!("large n: 0.25n ≤ S_RP ≤ 0.5n\n");

    let delta = 1e-3;
    for n in 2..=3 {
        let (lower, upper) = zsum_bounds(delta, n);
        let two = DiagonalState::two_level(n, delta)?;
        let flat = DiagonalState::flat_residual(n, delta)?;
        println!("n = {n}, Δ = {delta}: signal range [{lower:.3e}, {upper:.3e}]");
        println!(
            "  two-level state: signal {:.3e}, rate {:.3}",
            zsum(&two),
            log_infidelity_rate(&two, 1.0)?.value
        );
        println!(
            "  flat residual:   signal {:.3e}, rate {:.3}",
            zsum(&flat),
            log_infidelity_rate(&flat, 1.0)?.value
        );
        let (fast, slow) = permutation_rate_envelope(n, 1.0);
        println!(
            "  permutation-averaged rates: {:.3} (two-level), {:.3} (flat)",
            fast.value, slow.value
        );
    }
    Ok(())
}
