//! The configuration-driven harness behind the `readout` binary: parse a
//! `key = value` configuration, run it, and read back the written files.
//!
//! ```text
//! cargo run --release --example experiment_harness -- [output-dir]
//! ```

use register_readout::harness::{cmd_run, ExperimentConfig};

const CONFIG: &str = "\
# two qubits under random permutations, paired against no control
n = 2
policy = random_permutation
count = 1000
curve_time = 1
seed = 2024
";

fn main() -> register_readout::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("readout-example").display().to_string());
    let mut config = ExperimentConfig::parse(CONFIG, "inline", None)?;
    config.apply_override("out", &out)?;

    let outcome = cmd_run(&config)?;
    println!("wrote {:?} to {out}", outcome.manifest.files);
    if let Some(s) = &outcome.summary.asymptotic_speedup {
        println!("asymptotic speed-up {:.3} ± {:.3}", s.value, s.stderr);
    }
    for check in &outcome.checks {
        println!("{check}");
    }
    let head: Vec<String> = std::fs::read_to_string(config.out.join("first_passage.csv"))?
        .lines()
        .take(3)
        .map(String::from)
        .collect();
    println!("\nfirst_passage.csv:\n{}", head.join("\n"));
    println!("\nreproduce with:\n{}", outcome.manifest.config_text);
    Ok(())
}
