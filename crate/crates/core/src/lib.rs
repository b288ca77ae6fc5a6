//! Continuous-measurement readout of an `n`-qubit register.
//!
//! The register is monitored qubit by qubit in the logical basis. Control is
//! restricted to permutations of that basis, so the conditional state stays
//! diagonal and the unpermuted outcome can always be retrodicted. The crate
//! simulates three strategies (no control, locally optimal H-ordering
//! feedback, open-loop random permutations, plus fixed permutation cycles),
//! aggregates first-passage statistics into speed-up estimates, and provides
//! the closed-form bounds those estimates are compared against.

pub mod control;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod register;
pub mod sde;
pub mod stats;
pub mod theory;

pub use control::{h_order, policy_step, retrodict, ControlLog, ControlPolicy, PolicyKind};
pub use error::{ReadoutError, Result};
pub use register::{
    apply_permutation, hamming_distance, BasisIndex, DiagonalState, Permutation, ZObservable,
};
pub use sde::{
    simulate_from, simulate_trajectory, Integrator, SimulationParams, TrajectoryResult,
    TrajectoryStreams,
};
