//! Basis labels, Hamming geometry and permutation algebra on a 2-qubit register.
//!
//! ```text
//! cargo run --release --example register_algebra
//! ```

use register_readout::register::{compose, invert, z_eigenvalue};
use register_readout::{
    apply_permutation, hamming_distance, BasisIndex, DiagonalState, Permutation, ZObservable,
};

fn main() -> register_readout::Result<()> {
    let n = 2;
    println!("basis labels (qubit 1 is the most significant bit):");
    for i in 0..4 {
        let z1 = z_eigenvalue(&ZObservable::new(n, 1, false)?, BasisIndex(i));
        let z2 = z_eigenvalue(&ZObservable::new(n, 2, false)?, BasisIndex(i));
        println!(
            "  |{i:02b}>  z1 = {z1:+}  z2 = {z2:+}  distance from |00> = {}",
            hamming_distance(BasisIndex(0), BasisIndex(i))
        );
    }

    let state = DiagonalState::new(n, vec![0.4, 0.3, 0.2, 0.1])?;
    let p = Permutation::p3124();
    println!("\nP3124 = {p}");
    let mut s = state.clone();
    for k in 1..=3 {
        s = apply_permutation(&s, &p)?;
        println!("  after {k} application(s): {:?}", s.probs());
    }

    let swap = Permutation::swap(4, 0, 3)?;
    let both = compose(&swap, &p)?;
    println!("\nswap(0,3) after P3124 = {both}");
    println!("inverse               = {}", invert(&both));
    println!(
        "inverse . composite is identity: {}",
        compose(&invert(&both), &both)?.is_identity()
    );
    Ok(())
}
