use nalgebra::SymmetricEigen;

use super::operator::hermiticity_defect;
use super::subsystem::split;
use super::{CMatrix, Kron, Operator, QuantumError, StateVector, C64, NORM_TOL, TAG_TOL};

/// Trace tolerance accepted on construction.
pub const TRACE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: Vec<usize>,
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validates hermiticity (1e-10) and unit trace (1e-8).
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self, QuantumError> {
        let rho = Self::from_matrix_unchecked(dims, mat)?;
        let dev = hermiticity_defect(&rho.mat);
        if dev >= TAG_TOL {
            return Err(QuantumError::NotHermitian { deviation: dev });
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(QuantumError::BadTrace { trace: tr });
        }
        Ok(rho)
    }

    /// Only checks shape; used for propagated states whose invariants are tested separately.
    pub fn from_matrix_unchecked(dims: Vec<usize>, mat: CMatrix) -> Result<Self, QuantumError> {
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
        Ok(Self { dims, mat })
    }

    pub fn from_pure(psi: &StateVector) -> Result<Self, QuantumError> {
        let n2 = psi.norm_sqr();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(QuantumError::NotNormalized { norm_sqr: n2 });
        }
        let a = psi.amps();
        Ok(Self {
            dims: psi.dims().to_vec(),
            mat: a * a.adjoint(),
        })
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let n: usize = dims.iter().product();
        Self {
            dims,
            mat: CMatrix::identity(n, n) / C64::new(n as f64, 0.0),
        }
    }

    /// Diagonal state with the given populations (must sum to 1).
    pub fn diagonal(dims: Vec<usize>, populations: &[f64]) -> Result<Self, QuantumError> {
        let d = nalgebra::DVector::from_iterator(
            populations.len(),
            populations.iter().map(|&p| C64::new(p, 0.0)),
        );
        Self::new(dims, CMatrix::from_diagonal(&d))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    pub fn population(&self, index: usize) -> f64 {
        self.mat[(index, index)].re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.mat)
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Expectation ⟨v|ρ|v⟩ for an arbitrary (not necessarily normalized) vector.
    pub fn expectation(&self, v: &super::CVector) -> C64 {
        v.dotc(&(&self.mat * v))
    }

    /// U·ρ·U† with `op` embedded on `targets`.
    pub fn apply(&self, op: &Operator, targets: &[usize]) -> Result<Self, QuantumError> {
        let s = split(&self.dims, targets)?;
        if op.dim() != s.target.len() {
            return Err(QuantumError::DimensionMismatch {
                expected: s.target.len(),
                found: op.dim(),
            });
        }
        let left = apply_left(&self.mat, op.matrix(), &s.target, &s.rest);
        let both = apply_left(&left.adjoint(), op.matrix(), &s.target, &s.rest).adjoint();
        Ok(Self {
            dims: self.dims.clone(),
            mat: both,
        })
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self, QuantumError> {
        let s = split(&self.dims, keep)?;
        let n = s.target.len();
        let mat = CMatrix::from_fn(n, n, |j, k| {
            s.rest
                .iter()
                .map(|&r| self.mat[(r + s.target[j], r + s.target[k])])
                .sum()
        });
        Ok(Self {
            dims: keep.iter().map(|&k| self.dims[k]).collect(),
            mat,
        })
    }
}

/// Applies the embedded operator to every column of `m`.
fn apply_left(m: &CMatrix, op: &CMatrix, target: &[usize], rest: &[usize]) -> CMatrix {
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    let dt = target.len();
    let mut buf = vec![C64::new(0.0, 0.0); dt];
    for col in 0..m.ncols() {
        for &r in rest {
            for (k, &t) in target.iter().enumerate() {
                buf[k] = m[(r + t, col)];
            }
            for (j, &t) in target.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (k, b) in buf.iter().enumerate() {
                    acc += op[(j, k)] * b;
                }
                out[(r + t, col)] = acc;
            }
        }
    }
    out
}

impl Kron for DensityMatrix {
    fn kron(&self, rhs: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&rhs.dims);
        Self {
            dims,
            mat: self.mat.kronecker(&rhs.mat),
        }
    }
}

pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix, QuantumError> {
    rho.partial_trace(keep)
}

/// ⟨ψ|ρ|ψ⟩; the imaginary residue must stay below 1e-8.
pub fn state_fidelity(rho: &DensityMatrix, psi: &StateVector) -> Result<f64, QuantumError> {
    if rho.dim() != psi.dim() {
        return Err(QuantumError::DimensionMismatch {
            expected: rho.dim(),
            found: psi.dim(),
        });
    }
    let n2 = psi.norm_sqr();
    if (n2 - 1.0).abs() > NORM_TOL {
        return Err(QuantumError::NotNormalized { norm_sqr: n2 });
    }
    let f = rho.expectation(psi.amps());
    if f.im.abs() > 1e-8 {
        return Err(QuantumError::ComplexFidelity(f.im));
    }
    Ok(f.re.clamp(0.0, 1.0))
}
