//! Brute-force references.
//!
//! [`StateVector`] builds a tilted graph literally, amplitude by amplitude,
//! and measures it by the Born rule. [`TrajectoryOracle`] integrates the
//! conditional Schrödinger equation of two atom–cavity systems with explicit
//! quantum jumps. Neither shares code with the analytic rewrite rules they
//! are used to check.

mod gates;
mod state;
mod trajectory;

pub use gates::Unitary2;
pub use state::{build_state, edge_diagonal, measure, overlap, MeasurementRecord, StateVector};
pub use trajectory::{single_system_density, trajectory_dh, DhTrajectory, TrajectoryOracle, TrajectoryState, LEVELS};

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 14;
