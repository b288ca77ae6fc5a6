//! Acceptance criteria, one reported line each.
//!
//! Every test writes `ACCEPT <criterion> ... PASS|FAIL` straight to stderr
//! (bypassing the test harness's capture) and then asserts, so the lines
//! appear in the log whether or not the run succeeds. Statistical criteria
//! use 10,000 trajectories per ensemble at the reference step `6.25e-4/γ`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use register_readout::control::h_order;
use register_readout::ensemble::{
    asymptotic_speedup, default_epsilon_grid, fit_sweep, mean_time_residuals, mean_time_slope,
    protocol_bounds, run_ensemble, speedup_fixed_epsilon, EnsembleStats, SpeedupEstimate,
    SweepPoint,
};
use register_readout::register::dimension;
use register_readout::sde::{convergence_order, exact_step, generate_increments, euler_step, integrator_convergence};
use register_readout::stats::runs_test;
use register_readout::theory::{
    enumerated_permutation_rate, permutation_sum_identities, sampled_permutation_rate, zsum,
    zsum_bounds, SpeedupBounds,
};
use register_readout::{
    simulate_from, BasisIndex, ControlPolicy, DiagonalState, Integrator, Permutation,
    SimulationParams, TrajectoryStreams,
};

const TRAJECTORIES: usize = 10_000;
const SEED: u64 = 0x5EED_2013;
const EPS_RANGE: (f64, f64) = (1e-6, 1e-4);

fn report(criterion: &str, passed: bool, detail: impl AsRef<str>) -> bool {
    let tag = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "ACCEPT {criterion:<44} {tag}  {}", detail.as_ref());
    passed
}

/// Context line that is not itself a criterion.
fn info(label: &str, detail: impl AsRef<str>) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "ACCEPT {label:<44} INFO  {}", detail.as_ref());
}

fn within_rel(value: f64, target: f64, tol: f64) -> bool {
    (value / target - 1.0).abs() <= tol
}

/// Long-horizon uncontrolled ensemble: the `<ln Δ>` curve approaches its
/// slope like `t^{-1/2}` for `n > 1`, so the fit window is `[16, 32]`.
fn collapse_ensemble(n: usize) -> EnsembleStats {
    let mut params = SimulationParams::new(n, 1.0);
    params.min_time = 32.0;
    params.max_time = 32.0;
    params.sample_stride = 160;
    run_ensemble(&params, &ControlPolicy::None, &default_epsilon_grid(), TRAJECTORIES, SEED).unwrap()
}

#[test]
fn c1_c2_uncontrolled_collapse_and_mean_time_law() {
    let mut ok = true;
    for n in 1..=3 {
        let stats = collapse_ensemble(n);
        let fit = stats.asymptotic_ln_delta_slope().unwrap();
        ok &= report(
            &format!("1 collapse slope n={n}"),
            within_rel(fit.slope, -16.0, 0.05),
            format!("{:.3} ± {:.3} vs -16 ± 5% (fit over t in [16, 32])", fit.slope, fit.slope_stderr),
        );

        // purification: the mean log-infidelity decreases along the curve
        let decreasing = stats.mean_ln_delta.windows(2).skip(1).all(|w| w[1] < w[0]);
        ok &= report(
            &format!("  mean ln Δ strictly decreasing n={n}"),
            decreasing,
            format!("{} samples", stats.mean_ln_delta.len()),
        );

        let (slope, se) = mean_time_slope(&stats, EPS_RANGE.0, EPS_RANGE.1).unwrap();
        if n == 1 {
            ok &= report(
                "2 mean-time slope n=1",
                within_rel(slope, 1.0 / 16.0, 0.05),
                format!("{slope:.5} ± {se:.5} vs 0.06250 ± 5%"),
            );
            let t6 = stats.passage(1e-6).unwrap();
            ok &= report(
                "  <T> to 1e-6 n=1",
                within_rel(t6.mean_time, 1e6f64.ln() / 16.0, 0.05),
                format!("{:.4} ± {:.4} vs 0.8635 ± 5%", t6.mean_time, t6.stderr),
            );
        } else {
            // the ln(1/ε)/16γ law is a single-qubit result; larger registers are
            // reported for reference only
            info(
                &format!("  mean-time slope n={n} (reference only)"),
                format!("{slope:.5} ± {se:.5}; ratio to 1/16 = {:.3}", slope * 16.0),
            );
        }
        let increasing = stats.first_passage.windows(2).all(|w| w[1].mean_time > w[0].mean_time);
        ok &= report(
            &format!("  <T>(ε) strictly increasing n={n}"),
            increasing,
            format!("{} targets", stats.first_passage.len()),
        );
        let runs = runs_test(&mean_time_residuals(&stats, EPS_RANGE.0, EPS_RANGE.1).unwrap()).unwrap();
        info(
            &format!("  runs test on <T> residuals n={n}"),
            format!(
                "runs {} vs expected {:.1}, z = {:.2}, random at 5%: {}",
                runs.runs, runs.expected, runs.z, runs.random
            ),
        );
    }
    assert!(ok);
}

#[test]
fn c3_permutation_sum_identities() {
    let mut ok = true;
    for dim in [4, 8] {
        let r = permutation_sum_identities(dim).unwrap();
        ok &= report(
            &format!("3 group-sum identities D={dim}"),
            r.passed
                && r.squared_value() == Some(2 * r.group_order)
                && r.cross_value().is_some(),
            format!(
                "squared {:?} = {}, cross {:?} = {} over {} sums",
                r.squared_value(),
                r.squared_expected,
                r.cross_value(),
                r.cross_expected,
                r.checks.len()
            ),
        );
    }
    assert!(ok);
}

#[test]
fn c4_sampled_permutation_rate_matches_enumeration() {
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for n in [2, 3] {
        for (label, state) in [
            ("two-level", DiagonalState::two_level(n, 1e-3).unwrap()),
            ("flat", DiagonalState::flat_residual(n, 1e-3).unwrap()),
        ] {
            let exact = enumerated_permutation_rate(&state, 1.0).unwrap().value;
            let (mc, se) = sampled_permutation_rate(&state, 1.0, 1_000_000, &mut rng).unwrap();
            let diff = (mc.value - exact).abs();
            ok &= report(
                &format!("4 permutation-averaged rate n={n} {label}"),
                diff <= 3.0 * se + 1e-9 * exact.abs(),
                format!("sampled {:.5} ± {:.5}, enumerated {exact:.5}", mc.value, se),
            );
        }
    }
    assert!(ok);
}

fn band_hit(est: &SpeedupEstimate, b: SpeedupBounds) -> bool {
    est.value + 3.0 * est.stderr >= b.lower && est.value - 3.0 * est.stderr <= b.upper
}

#[test]
fn c5_c6_c7_speedups() {
    let eps = default_epsilon_grid();
    let mut ok = true;
    let mut rp_points = Vec::new();
    let mut rp_n2 = None;
    for n in 2..=5 {
        let params = SimulationParams::new(n, 1.0);
        let nc = run_ensemble(&params, &ControlPolicy::None, &eps, TRAJECTORIES, SEED).unwrap();
        let rp = run_ensemble(&params, &ControlPolicy::RandomPermutation, &eps, TRAJECTORIES, SEED).unwrap();
        let s = asymptotic_speedup(&nc, &rp, EPS_RANGE.0, EPS_RANGE.1).unwrap();
        let bounds = protocol_bounds(&ControlPolicy::RandomPermutation, n).unwrap();
        let censored = nc.max_censored_fraction().max(rp.max_censored_fraction());
        ok &= report(
            &format!("  censoring n={n}"),
            censored < 1e-3,
            format!("{censored:.5}"),
        );
        if n <= 3 {
            let target = 0.397 * n as f64 + 0.53;
            ok &= report(
                &format!("5 RP speed-up n={n}"),
                (s.value - target).abs() <= 0.15,
                format!("{:.4} ± {:.4} vs {target:.3} ± 0.15", s.value, s.stderr),
            );
            let fixed = speedup_fixed_epsilon(&nc, &rp, 1e-5).unwrap();
            ok &= report(
                &format!("  RP fixed-ε (1e-5) speed-up in band n={n}"),
                band_hit(&fixed, bounds),
                format!("{:.4} ± {:.4} in [{:.3}, {:.3}]", fixed.value, fixed.stderr, bounds.lower, bounds.upper),
            );
        }
        ok &= report(
            &format!("5 RP speed-up in analytic band n={n}"),
            band_hit(&s, bounds),
            format!("{:.4} ± {:.4} in [{:.3}, {:.3}] within 3 stderr", s.value, s.stderr, bounds.lower, bounds.upper),
        );
        let faster = nc
            .first_passage
            .iter()
            .zip(&rp.first_passage)
            .all(|(a, b)| b.mean_time < a.mean_time);
        if n == 2 {
            ok &= report("  RP faster than none at every ε n=2", faster, "paired seeds");
            rp_n2 = Some((nc.clone(), s));
        }
        rp_points.push(SweepPoint {
            n,
            speedup: s,
            bounds: Some(bounds),
            censored_fraction: censored,
        });

        if n <= 3 {
            let lo = run_ensemble(&params, &ControlPolicy::HOrdering, &eps, TRAJECTORIES, SEED).unwrap();
            let s = asymptotic_speedup(&nc, &lo, EPS_RANGE.0, EPS_RANGE.1).unwrap();
            let target = 0.718 * n as f64;
            ok &= report(
                &format!("6 H-ordering speed-up n={n}"),
                within_rel(s.value, target, 0.15),
                format!("{:.4} ± {:.4} vs {target:.3} ± 15%", s.value, s.stderr),
            );
        }
    }
    let fit = fit_sweep(&rp_points).unwrap();
    ok &= report(
        "5 RP sweep fit slope n=2..5",
        (fit.slope - 0.397).abs() <= 0.05,
        format!(
            "slope {:.4} ± {:.4}, intercept {:.3} ± {:.3} vs 0.397 ± 0.05",
            fit.slope, fit.slope_stderr, fit.intercept, fit.intercept_stderr
        ),
    );

    let (nc2, s_rp) = rp_n2.unwrap();
    let params = SimulationParams::new(2, 1.0);
    let cycle = ControlPolicy::fixed_cycle(vec![Permutation::p3124()]).unwrap();
    let fixed = run_ensemble(&params, &cycle, &eps, TRAJECTORIES, SEED).unwrap();
    let s_fixed = asymptotic_speedup(&nc2, &fixed, EPS_RANGE.0, EPS_RANGE.1).unwrap();
    let gap = (s_fixed.value - s_rp.value).abs();
    let combined = s_fixed.stderr.hypot(s_rp.stderr);
    ok &= report(
        "7 fixed P3124 cycle vs RP n=2",
        gap <= 3.0 * combined,
        format!(
            "{:.4} ± {:.4} vs {:.4} ± {:.4} (gap {:.2} combined stderr)",
            s_fixed.value,
            s_fixed.stderr,
            s_rp.value,
            s_rp.stderr,
            gap / combined
        ),
    );
    assert!(ok);
}

#[test]
fn c8_normalization_drift() {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for integrator in [Integrator::Exact, Integrator::Euler] {
        for n in 1..=4 {
            let mut params = SimulationParams::new(n, 1.0);
            params.integrator = integrator;
            for _ in 0..20 {
                let mut state = DiagonalState::maximally_mixed(n);
                for _ in 0..2000 {
                    let inc = generate_increments(&state, &params, &mut rng);
                    let next = match integrator {
                        Integrator::Exact => exact_step(&state, &inc, &params),
                        Integrator::Euler => match euler_step(&state, &inc, &params) {
                            Ok(s) => s,
                            Err(_) => break,
                        },
                    };
                    worst = worst.max((next.total() - 1.0).abs());
                    state = next;
                }
            }
        }
    }
    assert!(report(
        "8 normalization drift per step",
        worst <= 1e-10,
        format!("worst |Σλ - 1| = {worst:.2e} over 320k steps (limit 1e-10)"),
    ));
}

#[test]
fn c8_martingale_without_control() {
    let n = 2;
    let mut params = SimulationParams::new(n, 1.0);
    params.max_time = 0.25;
    params.stop_epsilon = 1e-12;
    let initial = DiagonalState::new(n, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
    let dim = dimension(n);
    let mut sum = vec![0.0; dim];
    let mut sum2 = vec![0.0; dim];
    for k in 0..10_000u64 {
        let mut streams = TrajectoryStreams::derive(SEED, k);
        let r = simulate_from(initial.clone(), &params, &ControlPolicy::None, &[], &mut streams).unwrap();
        for (i, p) in r.final_state.probs().iter().enumerate() {
            sum[i] += p;
            sum2[i] += p * p;
        }
    }
    let m = 10_000.0;
    let mut ok = true;
    let mut detail = String::new();
    for i in 0..dim {
        let mean = sum[i] / m;
        let se = ((sum2[i] / m - mean * mean) / m).sqrt();
        let z = (mean - initial.probs()[i]) / se;
        ok &= z.abs() <= 3.0;
        detail.push_str(&format!("λ{i} {mean:.4}±{se:.4} (z={z:.2}) "));
    }
    assert!(report("8 martingale, 10^4 trajectories at t=0.25", ok, detail));
}

#[test]
fn c8_retrodiction_of_logical_states() {
    let n = 2;
    let mut params = SimulationParams::new(n, 1.0);
    params.max_time = 0.05;
    let policies = [
        ControlPolicy::None,
        ControlPolicy::HOrdering,
        ControlPolicy::RandomPermutation,
        ControlPolicy::fixed_cycle(vec![Permutation::p3124()]).unwrap(),
    ];
    let mut ok = true;
    for policy in &policies {
        let mut wrong = 0;
        for k in 0..10_000u64 {
            let prepared = BasisIndex((k % 4) as usize);
            let initial = DiagonalState::basis_state(n, prepared).unwrap();
            let mut streams = TrajectoryStreams::derive(SEED, k);
            let r = simulate_from(initial, &params, policy, &[], &mut streams).unwrap();
            let flat = r.final_state.infidelity() == 0.0;
            if r.retrodicted_index() != prepared || !flat {
                wrong += 1;
            }
        }
        ok &= report(
            &format!("8 retrodiction {}", policy.name()),
            wrong == 0,
            format!("{wrong} of 10000 trajectories misidentified"),
        );
    }
    assert!(ok);
}

#[test]
fn c8_integrator_convergence() {
    let study = integrator_convergence(1, 1.0, 0.256, &[1.6e-3, 8e-4, 4e-4], 10_000, SEED).unwrap();
    let weak: Vec<f64> = study.points.iter().map(|p| p.weak).collect();
    let ratios = [weak[1] / weak[0], weak[2] / weak[1]];
    let order = convergence_order(&study.points, |p| p.weak).unwrap();
    let strong = convergence_order(&study.points, |p| p.strong).unwrap();
    let ok = report(
        "8 Euler vs exact: discrepancy halves with dt",
        ratios.iter().all(|r| (0.3..=0.7).contains(r)) && (0.75..=1.25).contains(&order),
        format!(
            "purity bias {:.2e} / {:.2e} / {:.2e}, ratios {:.2} {:.2}, order {order:.2}",
            weak[0], weak[1], weak[2], ratios[0], ratios[1]
        ),
    );
    info(
        "  pathwise discrepancy order",
        format!(
            "L1 {:.2e} / {:.2e} / {:.2e}, order {strong:.2} (strong order 1/2 expected); {} paths rejected",
            study.points[0].strong, study.points[1].strong, study.points[2].strong, study.paths_rejected
        ),
    );
    assert!(ok);
}

#[test]
fn c8_signal_sandwich_on_h_ordered_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ok = true;
    for n in 2..=5 {
        let mut violations = 0;
        for _ in 0..10_000 {
            // skewed weights cover both nearly pure and nearly flat states
            let power = rng.random_range(1.0..12.0);
            let w: Vec<f64> = (0..dimension(n)).map(|_| rng.random::<f64>().powf(power)).collect();
            let s = DiagonalState::from_weights(n, w).unwrap();
            let ordered = s.permuted(&h_order(&s)).unwrap();
            let (lo, hi) = zsum_bounds(ordered.infidelity(), n);
            let z = zsum(&ordered);
            if !(z >= lo * (1.0 - 1e-12) && z <= hi * (1.0 + 1e-12)) {
                violations += 1;
            }
        }
        ok &= report(
            &format!("8 signal sandwich n={n}"),
            violations == 0,
            format!("{violations} violations in 10000 H-ordered states"),
        );
    }
    assert!(ok);
}
