//! Pure measurement of registers with 1 to 3 qubits: the mean log-infidelity
//! falls at `-16γ` asymptotically and the mean time to reach `ε` grows like
//! `ln(1/ε) / 16γ`.
//!
//! ```text
//! cargo run --release --example collapse_without_control -- [trajectories]
//! ```
//!
//! For `n > 1` the curve approaches its slope slowly (the largest of `n`
//! competing records keeps a `sqrt(t)` lead), so the fit uses a long window.

use register_readout::ensemble::{default_epsilon_grid, mean_time_slope, run_ensemble};
use register_readout::theory::mean_time_nofb;
use register_readout::{ControlPolicy, SimulationParams};

fn main() -> register_readout::Result<()> {
    let count: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let eps = default_epsilon_grid();
    println!("{count} trajectories per register, gamma = 1\n");
    println!(" n  horizon  <ln Δ> slope (latter half)   <T> slope over [1e-6, 1e-4]");
    for n in 1..=3 {
        let mut params = SimulationParams::new(n, 1.0);
        let horizon = if n == 1 { 2.0 } else { 16.0 };
        params.min_time = horizon;
        params.max_time = horizon.max(10.0);
        params.sample_stride = 64;
        let stats = run_ensemble(&params, &ControlPolicy::None, &eps, count, 7)?;
        let fit = stats.asymptotic_ln_delta_slope()?;
        let (slope, se) = mean_time_slope(&stats, 1e-6, 1e-4)?;
        println!(
            "{n:>2}  {horizon:>6}   {:>8.3} ± {:.3}  (ref -16)     {slope:.5} ± {se:.5}  (ref {:.5})",
            fit.slope,
            fit.slope_stderr,
            1.0 / 16.0
        );
    }
    println!(
        "\nsingle qubit: <T> to 1e-6 predicted {:.4}",
        mean_time_nofb(1e-6, 1.0)?
    );
    Ok(())
}
