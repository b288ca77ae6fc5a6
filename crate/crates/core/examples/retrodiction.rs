//! Every control here is a basis permutation, so the outcome of the
//! unpermuted measurement is recovered by undoing the composed control.
//!
//! ```text
//! cargo run --release --example retrodiction
//! ```

use register_readout::sde::simulate_from;
use register_readout::{
    BasisIndex, ControlPolicy, DiagonalState, Permutation, SimulationParams, TrajectoryStreams,
};

fn main() -> register_readout::Result<()> {
    let n = 2;
    let mut params = SimulationParams::new(n, 1.0);
    params.max_time = 0.5;
    let policies = [
        ControlPolicy::None,
        ControlPolicy::HOrdering,
        ControlPolicy::RandomPermutation,
        ControlPolicy::fixed_cycle(vec![Permutation::p3124()])?,
    ];
    for policy in &policies {
        for k in 0..4 {
            // a register prepared in a logical state stays there; only its label moves
            let initial = DiagonalState::basis_state(n, BasisIndex(k))?;
            let mut streams = TrajectoryStreams::derive(42, k as u64);
            let result = simulate_from(initial, &params, policy, &[], &mut streams)?;
            println!(
                "{:<18} prepared |{k:02b}>  ends at |{:02b}>  retrodicted |{:02b}>",
                policy.name(),
                result.final_index.value(),
                result.retrodicted_index().value()
            );
        }
    }

    // from the maximally mixed state the label of the winner is still undone
    let mut streams = TrajectoryStreams::derive(42, 99);
    let result = register_readout::simulate_trajectory(
        &params,
        &ControlPolicy::RandomPermutation,
        &[1e-3],
        &mut streams,
    )?;
    println!(
        "\nmixed start: final label {}, unpermuted outcome {}, control {}",
        result.final_index.value(),
        result.retrodicted_index().value(),
        result.cumulative_control
    );
    Ok(())
}
