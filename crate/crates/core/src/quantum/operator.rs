use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{QuantumError, C64};

pub type CMatrix = DMatrix<C64>;

/// Tolerance used when verifying tagged predicates on construction.
pub const TAG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpTags {
    pub unitary: bool,
    pub hermitian: bool,
}

/// Dense square operator over an ordered list of subsystem factors.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dims: Vec<usize>,
    mat: CMatrix,
    tags: OpTags,
}

impl Operator {
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self, QuantumError> {
        if !mat.is_square() {
            return Err(QuantumError::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        let total: usize = dims.iter().product();
        if dims.is_empty() || total != mat.nrows() {
            return Err(QuantumError::DimensionMismatch {
                expected: total,
                found: mat.nrows(),
            });
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        Ok(Self {
            dims,
            mat,
            tags: OpTags::default(),
        })
    }

    /// Single-factor operator whose only subsystem has the matrix dimension.
    pub fn from_matrix(mat: CMatrix) -> Result<Self, QuantumError> {
        let n = mat.nrows();
        Self::new(vec![n], mat)
    }

    /// Row-major real entries, convenient for small literal gates.
    pub fn from_real_rows(n: usize, rows: &[f64]) -> Result<Self, QuantumError> {
        if rows.len() != n * n {
            return Err(QuantumError::DimensionMismatch {
                expected: n * n,
                found: rows.len(),
            });
        }
        Self::from_matrix(CMatrix::from_row_iterator(
            n,
            n,
            rows.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            mat: CMatrix::identity(n, n),
            tags: OpTags {
                unitary: true,
                hermitian: true,
            },
        }
    }

    /// Verifies ‖U†U − I‖_max < 1e-10 and sets the unitary tag.
    pub fn tagged_unitary(mut self) -> Result<Self, QuantumError> {
        let dev = unitarity_defect(&self.mat);
        if dev >= TAG_TOL {
            return Err(QuantumError::NotUnitary { deviation: dev });
        }
        self.tags.unitary = true;
        Ok(self)
    }

    pub fn tagged_hermitian(mut self) -> Result<Self, QuantumError> {
        let dev = hermiticity_defect(&self.mat);
        if dev >= TAG_TOL {
            return Err(QuantumError::NotHermitian { deviation: dev });
        }
        self.tags.hermitian = true;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn tags(&self) -> OpTags {
        self.tags
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        unitarity_defect(&self.mat) < tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        hermiticity_defect(&self.mat) < tol
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            mat: self.mat.adjoint(),
            tags: self.tags,
        }
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &Operator) -> Result<Self, QuantumError> {
        if self.dim() != rhs.dim() {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dim(),
                found: rhs.dim(),
            });
        }
        Ok(Self {
            dims: self.dims.clone(),
            mat: &self.mat * &rhs.mat,
            tags: OpTags {
                unitary: self.tags.unitary && rhs.tags.unitary,
                hermitian: false,
            },
        })
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            dims: self.dims.clone(),
            mat: &self.mat * factor,
            tags: OpTags::default(),
        }
    }

    /// `exp(i·alpha·A)` for a hermitian `A`; the result is tagged unitary.
    pub fn exp_i(&self, alpha: f64) -> Result<Self, QuantumError> {
        if !self.is_hermitian(TAG_TOL) {
            return Err(QuantumError::NotHermitian {
                deviation: hermiticity_defect(&self.mat),
            });
        }
        let gen = &self.mat * C64::new(0.0, alpha);
        Operator::new(self.dims.clone(), gen.exp())?.tagged_unitary()
    }

    /// Elementwise max-norm distance to another operator.
    pub fn max_distance(&self, other: &Operator) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }
}

pub(crate) fn unitarity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let prod = m.adjoint() * m;
    max_abs_diff(&prod, &CMatrix::identity(n, n))
}

pub(crate) fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub(crate) fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn tag_both(op: Operator) -> Operator {
    op.tagged_unitary()
        .and_then(Operator::tagged_hermitian)
        .expect("literal gate is unitary and hermitian")
}

pub fn pauli_x() -> Operator {
    tag_both(Operator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap())
}

pub fn pauli_y() -> Operator {
    let i = Complex64::i();
    let m = CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), -i, i, C64::new(0.0, 0.0)]);
    tag_both(Operator::from_matrix(m).unwrap())
}

pub fn pauli_z() -> Operator {
    tag_both(Operator::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]).unwrap())
}

pub fn hadamard() -> Operator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    tag_both(Operator::from_real_rows(2, &[s, s, s, -s]).unwrap())
}

/// Controlled-Z on two qubits, diag(1, 1, 1, −1).
pub fn cz() -> Operator {
    let mut m = CMatrix::identity(4, 4);
    m[(3, 3)] = C64::new(-1.0, 0.0);
    tag_both(Operator::new(vec![2, 2], m).unwrap())
}

/// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ target` for a single-qubit `target`.
pub fn controlled(target: &Operator) -> Result<Operator, QuantumError> {
    if target.dim() != 2 {
        return Err(QuantumError::DimensionMismatch {
            expected: 2,
            found: target.dim(),
        });
    }
    let mut m = CMatrix::identity(4, 4);
    m.view_mut((2, 2), (2, 2)).copy_from(target.matrix());
    let op = Operator::new(vec![2, 2], m)?;
    let op = if target.tags().unitary {
        op.tagged_unitary()?
    } else {
        op
    };
    if target.tags().hermitian {
        op.tagged_hermitian()
    } else {
        Ok(op)
    }
}

/// Direction on the Bloch sphere, θ ∈ [0, π], φ ∈ [0, 2π).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochAxis {
    theta: f64,
    phi: f64,
}

impl BlochAxis {
    pub fn new(theta: f64, phi: f64) -> Result<Self, QuantumError> {
        if !(theta.is_finite() && (0.0..=PI).contains(&theta)) {
            return Err(QuantumError::AngleOutOfRange {
                name: "theta",
                value: theta,
            });
        }
        if !(phi.is_finite() && (0.0..2.0 * PI).contains(&phi)) {
            return Err(QuantumError::AngleOutOfRange {
                name: "phi",
                value: phi,
            });
        }
        Ok(Self { theta, phi })
    }

    pub fn z() -> Self {
        Self {
            theta: 0.0,
            phi: 0.0,
        }
    }

    pub fn x() -> Self {
        Self {
            theta: PI / 2.0,
            phi: 0.0,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// σ_n = n·σ.
    pub fn sigma(&self) -> Operator {
        bloch_operator(*self)
    }

    /// `exp(i·alpha·σ_n) = cos(alpha)·I + i·sin(alpha)·σ_n`.
    pub fn rotation(&self, alpha: f64) -> Operator {
        let s = self.sigma();
        let (sa, ca) = alpha.sin_cos();
        let m = CMatrix::identity(2, 2) * C64::new(ca, 0.0) + s.matrix() * C64::new(0.0, sa);
        Operator::from_matrix(m)
            .and_then(Operator::tagged_unitary)
            .expect("rotation about a Bloch axis is unitary")
    }
}

pub fn bloch_operator(axis: BlochAxis) -> Operator {
    let [nx, ny, nz] = axis.unit_vector();
    let m = pauli_x().matrix() * C64::new(nx, 0.0)
        + pauli_y().matrix() * C64::new(ny, 0.0)
        + pauli_z().matrix() * C64::new(nz, 0.0);
    tag_both(Operator::from_matrix(m).expect("2x2 finite"))
}
