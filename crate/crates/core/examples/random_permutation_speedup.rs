//! Open-loop control: a fresh uniformly random basis permutation before every
//! measurement step speeds up readout, and the gain grows with register size.
//!
//! ```text
//! cargo run --release --example random_permutation_speedup -- [trajectories]
//! ```

use register_readout::ensemble::{default_epsilon_grid, fit_sweep, speedup_scaling_sweep};
use register_readout::{ControlPolicy, SimulationParams};

fn main() -> register_readout::Result<()> {
    let count: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let template = SimulationParams::new(2, 1.0);
    let points = speedup_scaling_sweep(
        &[2, 3, 4],
        &ControlPolicy::RandomPermutation,
        &template,
        &default_epsilon_grid(),
        count,
        11,
        (1e-6, 1e-4),
    )?;
    println!(" n   speed-up          analytic band");
    for p in &points {
        let b = p.bounds.expect("random permutations have bounds");
        println!(
            "{:>2}   {:.3} ± {:.3}     [{:.3}, {:.3}]",
            p.n, p.speedup.value, p.speedup.stderr, b.lower, b.upper
        );
    }
    let fit = fit_sweep(&points)?;
    println!(
        "\nlinear fit: S = {:.3} n + {:.3}   (reference 0.397 n + 0.53)",
        fit.slope, fit.intercept
    );
    Ok(())
}
