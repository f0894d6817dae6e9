//! Controller-gated remote rotations (CRIO): the ideal protocol, a photon–cavity–atom
//! CZ link and a Rydberg anti-blockade controlled gate.

pub mod cavity;
pub mod parallel;
pub mod protocol;
pub mod quantum;
pub mod rydberg;

pub use quantum::{
    BlochAxis, DensityMatrix, Kron, MeasurementBasis, Operator, StateVector, Trajectory, C64,
};
