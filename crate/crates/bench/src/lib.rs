//! Shared inputs for the benchmarks.

use crio_core::{StateVector, C64};

/// (|0⟩+√2|1⟩)/√3 ⊗ (√3|0⟩+|1⟩)/2.
pub fn reference_input() -> StateVector {
    let amps = [
        1.0 * 3f64.sqrt(),
        1.0,
        2f64.sqrt() * 3f64.sqrt(),
        2f64.sqrt(),
    ]
    .map(|x| C64::new(x, 0.0));
    StateVector::from_slice(vec![2, 2], &amps)
        .and_then(|s| s.normalize())
        .expect("nonzero input")
}
