use nalgebra::DVector;

use super::subsystem::split;
use super::{CMatrix, DensityMatrix, Kron, Operator, QuantumError, C64, NORM_TOL};

pub type CVector = DVector<C64>;

/// Pure state over ordered subsystem factors; may be carried unnormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amps: CVector,
    normalized: bool,
}

impl StateVector {
    /// Builds an unflagged state; call [`StateVector::normalize`] or
    /// [`StateVector::normalized`] to obtain a flagged one.
    pub fn new(dims: Vec<usize>, amps: CVector) -> Result<Self, QuantumError> {
        let total: usize = dims.iter().product();
        if dims.is_empty() || total != amps.len() {
            return Err(QuantumError::DimensionMismatch {
                expected: total,
                found: amps.len(),
            });
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        Ok(Self {
            dims,
            amps,
            normalized: false,
        })
    }

    /// Like [`StateVector::new`] but requires Σ|a|² = 1 within 1e-10 and sets the flag.
    pub fn normalized(dims: Vec<usize>, amps: CVector) -> Result<Self, QuantumError> {
        let mut s = Self::new(dims, amps)?;
        let n2 = s.norm_sqr();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(QuantumError::NotNormalized { norm_sqr: n2 });
        }
        s.normalized = true;
        Ok(s)
    }

    pub fn from_slice(dims: Vec<usize>, amps: &[C64]) -> Result<Self, QuantumError> {
        Self::new(dims, CVector::from_column_slice(amps))
    }

    /// Normalized single qubit `c0|0⟩ + c1|1⟩`.
    pub fn qubit(c0: C64, c1: C64) -> Result<Self, QuantumError> {
        Self::normalized(vec![2], CVector::from_vec(vec![c0, c1]))
    }

    /// Computational basis state with one digit per factor.
    pub fn basis(dims: Vec<usize>, digits: &[usize]) -> Result<Self, QuantumError> {
        if digits.len() != dims.len() {
            return Err(QuantumError::DimensionMismatch {
                expected: dims.len(),
                found: digits.len(),
            });
        }
        let mut idx = 0;
        for (k, (&d, &n)) in digits.iter().zip(&dims).enumerate() {
            if d >= n {
                return Err(QuantumError::InvalidSubsystem { index: k, count: n });
            }
            idx = idx * n + d;
        }
        let total = dims.iter().product();
        let mut amps = CVector::zeros(total);
        amps[idx] = C64::new(1.0, 0.0);
        Self::normalized(dims, amps)
    }

    pub fn zero() -> Self {
        Self::basis(vec![2], &[0]).unwrap()
    }

    pub fn one() -> Self {
        Self::basis(vec![2], &[1]).unwrap()
    }

    pub fn plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(C64::new(s, 0.0), C64::new(s, 0.0)).unwrap()
    }

    pub fn minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(C64::new(s, 0.0), C64::new(-s, 0.0)).unwrap()
    }

    /// `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩`.
    pub fn from_bloch(theta: f64, phi: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self::qubit(C64::new(c, 0.0), C64::from_polar(s, phi)).expect("unit by construction")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalize(&self) -> Result<Self, QuantumError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(QuantumError::ZeroNorm);
        }
        Ok(Self {
            dims: self.dims.clone(),
            amps: &self.amps / C64::new(n, 0.0),
            normalized: true,
        })
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            dims: self.dims.clone(),
            amps: &self.amps * factor,
            normalized: self.normalized && (factor.norm() - 1.0).abs() < NORM_TOL,
        }
    }

    /// Amplitude at a per-factor digit tuple.
    pub fn amplitude(&self, digits: &[usize]) -> C64 {
        let mut idx = 0;
        for (&d, &n) in digits.iter().zip(&self.dims) {
            idx = idx * n + d;
        }
        self.amps[idx]
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<C64, QuantumError> {
        self.check_dims(other)?;
        Ok(self.amps.dotc(&other.amps))
    }

    /// |⟨ψ|φ⟩|² / (‖ψ‖²‖φ‖²); insensitive to global phase and scale.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64, QuantumError> {
        let ip = self.inner(other)?;
        let d = self.norm_sqr() * other.norm_sqr();
        if d == 0.0 {
            return Err(QuantumError::ZeroNorm);
        }
        Ok(ip.norm_sqr() / d)
    }

    /// Embeds `op` on `targets` (in the order given) and applies it.
    pub fn apply(&self, op: &Operator, targets: &[usize]) -> Result<Self, QuantumError> {
        let s = split(&self.dims, targets)?;
        if op.dim() != s.target.len() {
            return Err(QuantumError::DimensionMismatch {
                expected: s.target.len(),
                found: op.dim(),
            });
        }
        let m = op.matrix();
        let dt = s.target.len();
        let mut out = CVector::zeros(self.amps.len());
        let mut buf = vec![C64::new(0.0, 0.0); dt];
        for &r in &s.rest {
            for (k, &t) in s.target.iter().enumerate() {
                buf[k] = self.amps[r + t];
            }
            for (j, &t) in s.target.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (k, b) in buf.iter().enumerate() {
                    acc += m[(j, k)] * b;
                }
                out[r + t] = acc;
            }
        }
        Ok(Self {
            dims: self.dims.clone(),
            amps: out,
            normalized: self.normalized && op.tags().unitary,
        })
    }

    /// Contracts `subsystem` with `⟨bra|`, removing that factor. The result is unnormalized.
    pub fn contract(&self, subsystem: usize, bra: &CVector) -> Result<Self, QuantumError> {
        let s = split(&self.dims, &[subsystem])?;
        if bra.len() != s.target.len() {
            return Err(QuantumError::DimensionMismatch {
                expected: s.target.len(),
                found: bra.len(),
            });
        }
        let amps = CVector::from_iterator(
            s.rest.len(),
            s.rest.iter().map(|&r| {
                s.target
                    .iter()
                    .zip(bra.iter())
                    .map(|(&t, b)| b.conj() * self.amps[r + t])
                    .sum::<C64>()
            }),
        );
        let dims = if s.rest_dims.is_empty() {
            vec![1]
        } else {
            s.rest_dims
        };
        Self::new(dims, amps)
    }

    /// Reduced density matrix of the normalized state over `keep` (in the order given).
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix, QuantumError> {
        let s = split(&self.dims, keep)?;
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(QuantumError::ZeroNorm);
        }
        let n = s.target.len();
        let mat = CMatrix::from_fn(n, n, |j, k| {
            s.rest
                .iter()
                .map(|&r| self.amps[r + s.target[j]] * self.amps[r + s.target[k]].conj())
                .sum::<C64>()
                / n2
        });
        DensityMatrix::from_matrix_unchecked(keep.iter().map(|&k| self.dims[k]).collect(), mat)
    }

    /// Reorders factors so that new factor `k` is old factor `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self, QuantumError> {
        if order.len() != self.dims.len() {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dims.len(),
                found: order.len(),
            });
        }
        let s = split(&self.dims, order)?;
        let amps = CVector::from_iterator(s.target.len(), s.target.iter().map(|&t| self.amps[t]));
        Ok(Self {
            dims: order.iter().map(|&k| self.dims[k]).collect(),
            amps,
            normalized: self.normalized,
        })
    }

    fn check_dims(&self, other: &StateVector) -> Result<(), QuantumError> {
        if self.amps.len() != other.amps.len() {
            return Err(QuantumError::DimensionMismatch {
                expected: self.amps.len(),
                found: other.amps.len(),
            });
        }
        Ok(())
    }
}

impl Kron for StateVector {
    fn kron(&self, rhs: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&rhs.dims);
        Self {
            dims,
            amps: self.amps.kronecker(&rhs.amps),
            normalized: self.normalized && rhs.normalized,
        }
    }
}
