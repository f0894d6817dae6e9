//! Rydberg anti-blockade controlled gate: full two-atom model, effective three-level reduction,
//! holonomic and dynamical gates under a Lindblad master equation, and fidelity averages.
mod gate;
mod hamiltonian;
mod params;

use thiserror::Error;

use crate::quantum::{MasterEquationError, QuantumError};

pub use gate::{
    average_fidelity_angles, average_fidelity_inputs, embed_two_qubit, gate_channel, gate_time,
    holonomic_target_unitary, lindblad_operators, realize_angles, simulate_gate, target_state,
    AngleGrid, FidelityAverage, GateChannel, GateOptions, GateRun, InputGrid, InputStateParams,
    NoiseParams, PopulationTrace, POPULATION_CSV_HEADER,
};
pub use hamiltonian::{
    build_effective_hamiltonian, build_full_hamiltonian, embed_effective, level_index,
    stark_compensation, FullHamiltonian, DIM, EFFECTIVE_LEVELS, GROUND_LEVELS, I00, I01, I10, I11,
    IRR, SINGLE_LEVELS,
};
pub use params::{
    effective_couplings, DrivingParams, EffectiveCouplings, DYNAMICAL_DELTA, OMEGA_REF, REGIME_MIN,
    REGIME_WARN,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum GateMode {
    IdealUnitary,
    EffectiveResonant,
    EffectiveDynamical,
    FullResonant,
    FullDynamical,
}

impl GateMode {
    pub const ALL: [GateMode; 5] = [
        GateMode::IdealUnitary,
        GateMode::EffectiveResonant,
        GateMode::EffectiveDynamical,
        GateMode::FullResonant,
        GateMode::FullDynamical,
    ];

    pub fn is_full(self) -> bool {
        matches!(self, GateMode::FullResonant | GateMode::FullDynamical)
    }

    pub fn is_dynamical(self) -> bool {
        matches!(self, GateMode::EffectiveDynamical | GateMode::FullDynamical)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GateMode::IdealUnitary => "IdealUnitary",
            GateMode::EffectiveResonant => "EffectiveResonant",
            GateMode::EffectiveDynamical => "EffectiveDynamical",
            GateMode::FullResonant => "FullResonant",
            GateMode::FullDynamical => "FullDynamical",
        }
    }
}

impl std::fmt::Display for GateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GateMode {
    type Err = RydbergError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GateMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| RydbergError::InvalidParam(format!("unknown gate mode `{s}`")))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RydbergError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("detuning regime violated: {which} ratio {ratio:.3} is below {min}")]
    Regime {
        which: &'static str,
        ratio: f64,
        min: f64,
    },
    #[error("V = {v} does not match delta1 - delta0 + V0 = {expected}")]
    VMismatch { v: f64, expected: f64 },
    #[error("V0 and delta disagree: V0 + Delta_RR = {implied}, delta = {delta}")]
    Inconsistent { implied: f64, delta: f64 },
    #[error("dispersive ratio |delta|/(Omega_eff/2) = {0:.3} is below 3")]
    DispersiveRatio(f64),
    #[error("effective coupling vanishes")]
    NoCoupling,
    #[error("{0} is not defined for mode {1}")]
    InvalidMode(&'static str, GateMode),
    #[error("fixed-point iteration for {0} did not converge")]
    NoConvergence(&'static str),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Integrator(#[from] MasterEquationError),
}
