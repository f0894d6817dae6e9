use rand::Rng;
use serde::Serialize;

use super::{CVector, QuantumError, StateVector, C64};

/// Branches below this probability are dropped.
pub const PRUNE_TOL: f64 = 1e-12;
/// Gram matrix deviation accepted for a measurement basis.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Labeled orthonormal basis of a single subsystem.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementBasis {
    labels: Vec<String>,
    vectors: Vec<CVector>,
}

impl MeasurementBasis {
    pub fn new(labels: Vec<String>, vectors: Vec<CVector>) -> Result<Self, QuantumError> {
        if labels.len() != vectors.len() {
            return Err(QuantumError::DimensionMismatch {
                expected: vectors.len(),
                found: labels.len(),
            });
        }
        let mut deviation: f64 = 0.0;
        for (i, u) in vectors.iter().enumerate() {
            for (j, v) in vectors.iter().enumerate() {
                if u.len() != v.len() {
                    return Err(QuantumError::DimensionMismatch {
                        expected: u.len(),
                        found: v.len(),
                    });
                }
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((u.dotc(v) - C64::new(target, 0.0)).norm());
            }
        }
        if deviation > ORTHONORMAL_TOL {
            return Err(QuantumError::NonOrthonormalBasis { deviation });
        }
        Ok(Self { labels, vectors })
    }

    /// Computational basis with labels "0" and "1".
    pub fn z() -> Self {
        Self {
            labels: vec!["0".into(), "1".into()],
            vectors: vec![
                StateVector::zero().amps().clone(),
                StateVector::one().amps().clone(),
            ],
        }
    }

    /// Eigenbasis of σ_x with labels "+" and "-".
    pub fn x() -> Self {
        Self {
            labels: vec!["+".into(), "-".into()],
            vectors: vec![
                StateVector::plus().amps().clone(),
                StateVector::minus().amps().clone(),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.vectors
    }
}

/// One measurement outcome.
#[derive(Clone, Debug, Serialize)]
pub struct BranchNode {
    pub outcome: usize,
    pub label: String,
    pub probability: f64,
    /// Normalized post-measurement state; the measured factor is kept, projected on the outcome.
    #[serde(skip)]
    pub state: StateVector,
}

impl BranchNode {
    /// The post-measurement state with the measured factor removed.
    pub fn reduced(
        &self,
        subsystem: usize,
        basis: &MeasurementBasis,
    ) -> Result<StateVector, QuantumError> {
        self.state
            .contract(subsystem, &basis.vectors[self.outcome])?
            .normalize()
    }
}

fn project(
    state: &StateVector,
    subsystem: usize,
    basis: &MeasurementBasis,
) -> Result<Vec<(usize, f64, StateVector)>, QuantumError> {
    let count = state.dims().len();
    if subsystem >= count {
        return Err(QuantumError::InvalidSubsystem {
            index: subsystem,
            count,
        });
    }
    let d = state.dims()[subsystem];
    if basis.len() != d {
        return Err(QuantumError::IncompleteBasis {
            expected: d,
            found: basis.len(),
        });
    }
    let total = state.norm_sqr();
    if total == 0.0 {
        return Err(QuantumError::ZeroNorm);
    }
    let mut out = Vec::with_capacity(d);
    for (k, v) in basis.vectors.iter().enumerate() {
        let proj = crate::quantum::Operator::from_matrix(v * v.adjoint())?;
        let post = state.apply(&proj, &[subsystem])?;
        out.push((k, post.norm_sqr() / total, post));
    }
    Ok(out)
}

/// Enumerates every outcome with p ≥ 1e-12 in basis order.
pub fn measure_branches(
    state: &StateVector,
    subsystem: usize,
    basis: &MeasurementBasis,
) -> Result<Vec<BranchNode>, QuantumError> {
    project(state, subsystem, basis)?
        .into_iter()
        .filter(|(_, p, _)| *p >= PRUNE_TOL)
        .map(|(k, p, post)| {
            Ok(BranchNode {
                outcome: k,
                label: basis.labels[k].clone(),
                probability: p,
                state: post.normalize()?,
            })
        })
        .collect()
}

/// Draws a single outcome from the Born distribution.
pub fn sample_branch<R: Rng + ?Sized>(
    state: &StateVector,
    subsystem: usize,
    basis: &MeasurementBasis,
    rng: &mut R,
) -> Result<BranchNode, QuantumError> {
    let branches = measure_branches(state, subsystem, basis)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for b in &branches {
        acc += b.probability;
        if u < acc {
            return Ok(b.clone());
        }
    }
    Ok(branches
        .last()
        .cloned()
        .expect("at least one branch survives"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn eigenstate_has_single_branch() {
        let b = measure_branches(&StateVector::plus(), 0, &MeasurementBasis::x()).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].label, "+");
        assert!((b[0].probability - 1.0).abs() < 1e-15);
        assert!(b[0].state.fidelity(&StateVector::plus()).unwrap() > 1.0 - 1e-15);
    }

    #[test]
    fn zero_in_x_basis_splits_evenly() {
        let b = measure_branches(&StateVector::zero(), 0, &MeasurementBasis::x()).unwrap();
        assert_eq!(b.len(), 2);
        for node in &b {
            assert!((node.probability - 0.5).abs() < 1e-15);
            assert!(node.state.is_normalized());
        }
    }

    #[test]
    fn rejects_non_orthonormal_basis() {
        let v = StateVector::zero().amps().clone();
        let r = MeasurementBasis::new(vec!["a".into(), "b".into()], vec![v.clone(), v]);
        assert!(matches!(r, Err(QuantumError::NonOrthonormalBasis { .. })));
    }

    #[test]
    fn rejects_basis_not_spanning() {
        let s = StateVector::basis(vec![3], &[0]).unwrap();
        assert!(matches!(
            measure_branches(&s, 0, &MeasurementBasis::z()),
            Err(QuantumError::IncompleteBasis { .. })
        ));
    }

    #[test]
    fn reduced_drops_measured_factor() {
        let s = StateVector::basis(vec![2, 2], &[1, 0]).unwrap();
        let b = measure_branches(&s, 0, &MeasurementBasis::z()).unwrap();
        let r = b[0].reduced(0, &MeasurementBasis::z()).unwrap();
        assert_eq!(r.dims(), &[2]);
        assert!(r.fidelity(&StateVector::zero()).unwrap() > 1.0 - 1e-15);
    }

    #[test]
    fn sampling_is_seeded() {
        let s = StateVector::from_bloch(1.0, 0.0);
        let draw = |seed| {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            (0..20)
                .map(|_| {
                    sample_branch(&s, 0, &MeasurementBasis::z(), &mut rng)
                        .unwrap()
                        .outcome
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }
}
