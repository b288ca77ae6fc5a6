//! A single fixed permutation applied every step does as well as random
//! permutations on two qubits. The cycle can also be read from a file with
//! one permutation image per line.
//!
//! ```text
//! cargo run --release --example deterministic_cycle -- [trajectories]
//! ```

use register_readout::control::parse_cycle;
use register_readout::ensemble::{asymptotic_speedup, default_epsilon_grid, run_ensemble};
use register_readout::{ControlPolicy, Permutation, SimulationParams};

fn main() -> register_readout::Result<()> {
    let count: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let from_file = parse_cycle("# P3124: (λ0, λ1, λ2, λ3) -> (λ1, λ2, λ0, λ3)\n2 0 1 3\n", "inline")?;
    assert_eq!(from_file, vec![Permutation::p3124()]);
    let cycle = ControlPolicy::fixed_cycle(from_file)?;

    let params = SimulationParams::new(2, 1.0);
    let eps = default_epsilon_grid();
    let nc = run_ensemble(&params, &ControlPolicy::None, &eps, count, 3)?;
    let rp = run_ensemble(&params, &ControlPolicy::RandomPermutation, &eps, count, 3)?;
    let fixed = run_ensemble(&params, &cycle, &eps, count, 3)?;
    let s_rp = asymptotic_speedup(&nc, &rp, 1e-6, 1e-4)?;
    let s_fixed = asymptotic_speedup(&nc, &fixed, 1e-6, 1e-4)?;
    println!("random permutations: {:.3} ± {:.3}", s_rp.value, s_rp.stderr);
    println!("fixed P3124:         {:.3} ± {:.3}", s_fixed.value, s_fixed.stderr);
    let gap = (s_rp.value - s_fixed.value) / s_rp.stderr.hypot(s_fixed.stderr);
    println!("difference: {gap:.2} combined standard errors");
    Ok(())
}
