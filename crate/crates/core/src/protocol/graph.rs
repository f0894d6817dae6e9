use crate::quantum::{controlled, cz, BlochAxis, CVector, Kron, Operator, StateVector, C64};

use super::ProtocolError;

/// Star graph state on `n` qubits: qubit 0 joined by CZ to every other qubit, all from `|+⟩`.
pub fn prepare_graph_state(n_parties: usize) -> Result<StateVector, ProtocolError> {
    if n_parties < 3 || n_parties.is_multiple_of(2) {
        return Err(ProtocolError::InvalidPartyCount(n_parties));
    }
    let mut s = StateVector::plus();
    for _ in 1..n_parties {
        s = s.kron(&StateVector::plus());
    }
    let cz = cz();
    for j in 1..n_parties {
        s = s.apply(&cz, &[0, j])?;
    }
    Ok(s)
}

/// Controlled Bell-pair resource on `[a, s_1..s_N, r_1..r_N]`:
/// `(|+⟩_a Φ^{⊗N} + |−⟩_a X_s Φ^{⊗N}) / √2`, with `Φ` on each `(s_j, r_j)`.
///
/// For `N = 1` this is the three-qubit star graph state.
pub fn controlled_bell_resource(n_pairs: usize) -> Result<StateVector, ProtocolError> {
    if n_pairs == 0 {
        return Err(ProtocolError::InvalidPartyCount(1));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let phi = StateVector::from_slice(
        vec![2, 2],
        &[
            C64::new(s, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(s, 0.0),
        ],
    )?
    .normalize()?;
    let mut pairs = phi.clone();
    for _ in 1..n_pairs {
        pairs = pairs.kron(&phi);
    }
    // Interleaved (s_1, r_1, s_2, r_2, ...) to blocked (s_1..s_N, r_1..r_N).
    let order: Vec<usize> = (0..n_pairs)
        .map(|j| 2 * j)
        .chain((0..n_pairs).map(|j| 2 * j + 1))
        .collect();
    let pairs = pairs.permute(&order)?;
    let mut flipped = pairs.clone();
    let x = crate::quantum::pauli_x();
    for j in 0..n_pairs {
        flipped = flipped.apply(&x, &[j])?;
    }
    let plus = StateVector::plus().kron(&pairs);
    let minus = StateVector::minus().kron(&flipped);
    let amps: CVector = (plus.amps() + minus.amps()) * C64::new(s, 0.0);
    Ok(StateVector::normalized(plus.dims().to_vec(), amps)?)
}

/// Appends `psi_c` as a new last factor and applies `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ σ_n` on (control, new).
pub fn attach_control(
    state: &StateVector,
    control: usize,
    psi_c: &StateVector,
    axis: BlochAxis,
) -> Result<StateVector, ProtocolError> {
    if psi_c.dims() != [2] || (psi_c.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(ProtocolError::InvalidTarget);
    }
    let count = state.dims().len();
    if control >= count || state.dims()[control] != 2 {
        return Err(ProtocolError::Quantum(
            crate::quantum::QuantumError::InvalidSubsystem {
                index: control,
                count,
            },
        ));
    }
    let joined = state.kron(psi_c);
    Ok(joined.apply(&u_control(axis), &[control, count])?)
}

/// `U = |0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ σ_n`.
pub fn u_control(axis: BlochAxis) -> Operator {
    controlled(&axis.sigma()).expect("2x2 target")
}

/// `(|0⟩_b ⊗ ψ + |1⟩_b ⊗ σ_n ψ) / √2` on (b, C).
pub fn stator_state(axis: BlochAxis, psi_c: &StateVector) -> Result<StateVector, ProtocolError> {
    let s = attach_control(&StateVector::plus(), 0, psi_c, axis)?;
    Ok(s)
}
