//! Dense state/operator algebra, measurement branching and open-system propagation.

mod density;
mod master;
mod measure;
pub(crate) mod operator;
mod state;
mod subsystem;

use thiserror::Error;

pub use density::{partial_trace, state_fidelity, DensityMatrix};
pub use master::{
    integrate_master_equation, liouvillian, propagate_static, ConstHamiltonian, FnHamiltonian,
    Hamiltonian, IntegratorOptions, IntegratorStats, MasterEquationError, OutputGrid, SparseJump,
    Superoperator, Trajectory,
};
pub use measure::{measure_branches, sample_branch, BranchNode, MeasurementBasis};
pub use operator::{
    bloch_operator, controlled, cz, hadamard, pauli_x, pauli_y, pauli_z, BlochAxis, CMatrix,
    OpTags, Operator, TAG_TOL,
};
pub use state::{CVector, StateVector};

pub type C64 = num_complex::Complex64;

/// Tolerance for the normalization flag on [`StateVector`].
pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry")]
    NonFinite,
    #[error("operator is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("operator is not hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("state is not normalized (norm² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("zero-norm state")]
    ZeroNorm,
    #[error("trace {trace} differs from 1")]
    BadTrace { trace: f64 },
    #[error("invalid subsystem index {index} for {count} subsystems")]
    InvalidSubsystem { index: usize, count: usize },
    #[error("duplicate subsystem index {0}")]
    DuplicateSubsystem(usize),
    #[error("measurement basis is not orthonormal (max deviation {deviation:.3e})")]
    NonOrthonormalBasis { deviation: f64 },
    #[error("basis has {found} vectors but subsystem dimension is {expected}")]
    IncompleteBasis { expected: usize, found: usize },
    #[error("fidelity has imaginary part {0:.3e}")]
    ComplexFidelity(f64),
    #[error("{name} = {value} is out of range")]
    AngleOutOfRange { name: &'static str, value: f64 },
}

/// Tensor product with the left operand as the most significant factor.
pub trait Kron {
    fn kron(&self, rhs: &Self) -> Self;
}

pub fn kron<T: Kron>(a: &T, b: &T) -> T {
    a.kron(b)
}

impl Kron for Operator {
    fn kron(&self, rhs: &Self) -> Self {
        let mut dims = self.dims().to_vec();
        dims.extend_from_slice(rhs.dims());
        let op = Operator::new(dims, self.matrix().kronecker(rhs.matrix()))
            .expect("kronecker of valid operators is valid");
        let (l, r) = (self.tags(), rhs.tags());
        let op = if l.unitary && r.unitary {
            op.clone().tagged_unitary().unwrap_or(op)
        } else {
            op
        };
        if l.hermitian && r.hermitian {
            op.clone().tagged_hermitian().unwrap_or(op)
        } else {
            op
        }
    }
}
