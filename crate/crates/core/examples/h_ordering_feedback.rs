//! Locally optimal feedback: before each step the eigenvalues are relabelled
//! so the largest sits on |0...0>, the second largest on the antipode
//! |1...1>, and the rest by increasing distance from the antipode.
//!
//! ```text
//! cargo run --release --example h_ordering_feedback -- [trajectories]
//! ```

use register_readout::control::h_order_targets;
use register_readout::ensemble::{asymptotic_speedup, default_epsilon_grid, run_ensemble};
use register_readout::{apply_permutation, h_order, ControlPolicy, DiagonalState, SimulationParams};

fn main() -> register_readout::Result<()> {
    let state = DiagonalState::new(3, vec![0.02, 0.05, 0.30, 0.01, 0.40, 0.07, 0.11, 0.04])?;
    let p = h_order(&state);
    println!("target order for n = 3: {:?}", h_order_targets(3));
    println!("state     {:?}", state.probs());
    println!("H-ordered {:?}\n", apply_permutation(&state, &p)?.probs());

    let count: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let eps = default_epsilon_grid();
    for n in [2, 3] {
        let params = SimulationParams::new(n, 1.0);
        let nc = run_ensemble(&params, &ControlPolicy::None, &eps, count, 5)?;
        let lo = run_ensemble(&params, &ControlPolicy::HOrdering, &eps, count, 5)?;
        let s = asymptotic_speedup(&nc, &lo, 1e-6, 1e-4)?;
        println!(
            "n = {n}: speed-up {:.3} ± {:.3}  (0.718 n = {:.3})",
            s.value,
            s.stderr,
            0.718 * n as f64
        );
    }
    Ok(())
}
