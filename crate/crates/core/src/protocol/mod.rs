//! Controlled remote implementation of a single-qubit rotation over a shared graph-state resource.
mod graph;
mod run;
mod transcript;

use serde::Serialize;
use thiserror::Error;

use crate::quantum::QuantumError;

pub use graph::{
    attach_control, controlled_bell_resource, prepare_graph_state, stator_state, u_control,
};
pub use run::{
    bob_transmit, corrections_in, measurements_in, receiver_view_before_message, reduce_to_stator,
    run_crio, BranchOutcome, CrioConfig, CrioOutcome, Permission, ReceiverOutcome, Resource,
    StatorBranch, StatorCheck, StatorReduction, TransmitBranch, CONTROLLER,
};
pub use transcript::{Action, BranchLog, Event, MessageReceipt, ProtocolTranscript};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("party count must be odd and at least 3, got {0}")]
    InvalidPartyCount(usize),
    #[error("target must be a normalized qubit state")]
    InvalidTarget,
    #[error("expected {expected} {what}, got {found}")]
    ArityMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("order violation: {0}")]
    OrderViolation(String),
    #[error("step attempted without the controller's permission")]
    NoPermission,
    #[error("subsystem {0} has not been measured")]
    Unmeasured(usize),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Control,
    Target,
    Carrier,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartyQubit {
    pub party: String,
    pub qubit: usize,
    pub role: Role,
}
