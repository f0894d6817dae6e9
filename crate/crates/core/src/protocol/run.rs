use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::quantum::{
    measure_branches, pauli_x, pauli_z, BlochAxis, CVector, DensityMatrix, MeasurementBasis,
    Operator, StateVector, C64,
};

use super::graph::{attach_control, controlled_bell_resource, prepare_graph_state, stator_state};
use super::transcript::{Action, BranchLog, ProtocolTranscript};
use super::ProtocolError;

pub const CONTROLLER: &str = "Alice";

/// Proof that the controller has measured in this branch; required by every downstream step.
#[derive(Clone, Debug)]
pub struct Permission {
    outcome: String,
}

impl Permission {
    pub fn outcome(&self) -> &str {
        &self.outcome
    }
}

/// Factor indices and party names for `N` sender/receiver pairs.
///
/// Register layout: `[a, s_1..s_N, r_1..r_N, T_1..T_N]`.
#[derive(Clone, Debug)]
struct Layout {
    n: usize,
    senders: Vec<String>,
    receivers: Vec<String>,
}

impl Layout {
    fn new(n: usize) -> Self {
        let named = ["Bob", "Charlie", "David", "Eve"];
        let (senders, receivers) = match n {
            1 => (vec!["Bob".to_string()], vec!["Charlie".to_string()]),
            2 => (
                named[..2].iter().map(|s| s.to_string()).collect(),
                named[2..].iter().map(|s| s.to_string()).collect(),
            ),
            _ => (
                (1..=n).map(|j| format!("A{j}")).collect(),
                (n + 1..=2 * n).map(|j| format!("A{j}")).collect(),
            ),
        };
        Self {
            n,
            senders,
            receivers,
        }
    }

    fn sender(&self, j: usize) -> usize {
        1 + j
    }

    fn receiver(&self, j: usize) -> usize {
        1 + self.n + j
    }

    fn target(&self, j: usize) -> usize {
        1 + 2 * self.n + j
    }

    fn qubit_name(&self, idx: usize) -> String {
        if idx == 0 {
            return "a".into();
        }
        let party = |name: &str| name.to_lowercase();
        let j = (idx - 1) % self.n;
        match (idx - 1) / self.n {
            0 => party(&self.senders[j]),
            1 => party(&self.receivers[j]),
            _ => {
                if self.n <= 2 {
                    ["C", "D", "E"][if self.n == 1 { 0 } else { j + 1 }].to_string()
                } else {
                    format!("T{}", j + 1)
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Branch {
    id: String,
    probability: f64,
    state: StateVector,
    measured: Vec<Option<CVector>>,
    permission: Option<Permission>,
    log: BranchLog,
}

impl Branch {
    fn root(state: StateVector) -> Self {
        let k = state.dims().len();
        Self {
            id: String::new(),
            probability: 1.0,
            state,
            measured: vec![None; k],
            permission: None,
            log: BranchLog::default(),
        }
    }

    fn measure(
        &self,
        qubit: usize,
        qubit_name: &str,
        basis: &MeasurementBasis,
        basis_name: &str,
        actor: &str,
    ) -> Result<Vec<Branch>, ProtocolError> {
        measure_branches(&self.state, qubit, basis)?
            .into_iter()
            .map(|node| {
                let mut b = self.clone();
                b.id = if self.id.is_empty() {
                    format!("{qubit_name}:{}", node.label)
                } else {
                    format!("{}|{qubit_name}:{}", self.id, node.label)
                };
                b.probability *= node.probability;
                b.state = node.state;
                b.measured[qubit] = Some(basis.vectors()[node.outcome].clone());
                // Events are relabeled with the final id in `finish`.
                b.log
                    .measurement(&b.id, actor, qubit_name, basis_name, &node.label);
                Ok(b)
            })
            .collect()
    }

    fn apply(&mut self, op: &Operator, qubit: usize) -> Result<(), ProtocolError> {
        self.state = self.state.apply(op, &[qubit])?;
        Ok(())
    }

    fn last_outcome(&self) -> &str {
        self.id.rsplit(':').next().unwrap_or("")
    }

    fn require_permission(&self) -> Result<&Permission, ProtocolError> {
        self.permission.as_ref().ok_or(ProtocolError::NoPermission)
    }

    /// Drops measured factors outside `keep` and returns the normalized remainder.
    fn extract(&self, keep: &[usize]) -> Result<StateVector, ProtocolError> {
        let mut s = self.state.clone();
        for idx in (0..self.measured.len()).rev() {
            if keep.contains(&idx) {
                continue;
            }
            let v = self.measured[idx]
                .as_ref()
                .ok_or(ProtocolError::Unmeasured(idx))?;
            s = s.contract(idx, v)?;
        }
        Ok(s.normalize()?)
    }

    fn finish(mut self) -> Self {
        let id = self.id.clone();
        self.log.relabel(&id);
        self
    }
}

fn alice_step(branches: Vec<Branch>, lay: &Layout) -> Result<Vec<Branch>, ProtocolError> {
    let x = pauli_x();
    let mut out = Vec::new();
    for b in branches {
        for mut nb in b.measure(0, "a", &MeasurementBasis::x(), "X", CONTROLLER)? {
            let outcome = nb.last_outcome().to_string();
            nb.permission = Some(Permission {
                outcome: outcome.clone(),
            });
            for j in 0..lay.n {
                let id = nb.id.clone();
                let r = nb.log.message(&id, CONTROLLER, &lay.senders[j], &outcome);
                if outcome == "-" {
                    nb.apply(&x, lay.sender(j))?;
                    let q = lay.qubit_name(lay.sender(j));
                    nb.log.correction(&id, &r, &q, "sigma_x");
                }
            }
            out.push(nb);
        }
    }
    Ok(out)
}

fn receivers_step(branches: Vec<Branch>, lay: &Layout) -> Result<Vec<Branch>, ProtocolError> {
    let z = pauli_z();
    let mut current = branches;
    for j in 0..lay.n {
        let mut next = Vec::new();
        for b in current {
            b.require_permission()?;
            let rq = lay.receiver(j);
            let name = lay.qubit_name(rq);
            for mut nb in b.measure(rq, &name, &MeasurementBasis::x(), "X", &lay.receivers[j])? {
                let outcome = nb.last_outcome().to_string();
                let id = nb.id.clone();
                let r = nb
                    .log
                    .message(&id, &lay.receivers[j], &lay.senders[j], &outcome);
                if outcome == "-" {
                    nb.apply(&z, lay.sender(j))?;
                    let q = lay.qubit_name(lay.sender(j));
                    nb.log.correction(&id, &r, &q, "sigma_z");
                }
                next.push(nb);
            }
        }
        current = next;
    }
    Ok(current)
}

fn senders_step(
    branches: Vec<Branch>,
    lay: &Layout,
    alphas: &[f64],
    axes: &[BlochAxis],
) -> Result<Vec<Branch>, ProtocolError> {
    let mut current = branches;
    for j in 0..lay.n {
        let rot = BlochAxis::x().rotation(alphas[j]);
        let fix = axes[j].rotation(FRAC_PI_2);
        let sq = lay.sender(j);
        let sname = lay.qubit_name(sq);
        let tname = lay.qubit_name(lay.target(j));
        let mut next = Vec::new();
        for mut b in current {
            b.require_permission()?;
            b.apply(&rot, sq)?;
            let id = b.id.clone();
            b.log.operation(
                &id,
                &lay.senders[j],
                &sname,
                &format!("exp(i*{}*sigma_x)", alphas[j]),
            );
            for mut nb in b.measure(sq, &sname, &MeasurementBasis::z(), "Z", &lay.senders[j])? {
                let outcome = nb.last_outcome().to_string();
                let id = nb.id.clone();
                let r = nb
                    .log
                    .message(&id, &lay.senders[j], &lay.receivers[j], &outcome);
                if outcome == "1" {
                    nb.apply(&fix, lay.target(j))?;
                    nb.log.correction(&id, &r, &tname, "exp(i*pi*sigma_n/2)");
                }
                next.push(nb);
            }
        }
        current = next;
    }
    Ok(current)
}

#[derive(Clone, Debug, Serialize)]
pub struct StatorBranch {
    pub id: String,
    pub probability: f64,
    /// Normalized state of (b, C).
    #[serde(skip)]
    pub state: StateVector,
    /// Overlap with the ideal stator state.
    pub fidelity: f64,
}

/// Residual single-qubit operators on C for each value of b, per branch.
#[derive(Clone, Debug)]
pub struct StatorCheck {
    /// Normalized C states conditioned on b = 0 and b = 1 (first branch).
    pub branch_states: [StateVector; 2],
    /// Per branch, `[R_0, R_1]` with the common phase removed so that `R_0[0,0]` is real.
    pub residuals: Vec<[Operator; 2]>,
    pub axis: BlochAxis,
}

impl StatorCheck {
    /// Largest deviation of the residuals from `(I, σ_n)` up to a common phase.
    pub fn max_deviation(&self) -> f64 {
        let id = Operator::identity(vec![2]);
        let sigma = self.axis.sigma();
        self.residuals
            .iter()
            .map(|[r0, r1]| r0.max_distance(&id).max(r1.max_distance(&sigma)))
            .fold(0.0, f64::max)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_deviation() < tol
    }
}

#[derive(Clone, Debug)]
pub struct StatorReduction {
    pub branches: Vec<StatorBranch>,
    pub transcript: ProtocolTranscript,
    pub check: StatorCheck,
}

impl StatorReduction {
    /// The (b, C) stator state of the first branch; all branches agree up to phase.
    pub fn state(&self) -> &StateVector {
        &self.branches[0].state
    }
}

fn stator_branches(state: &StateVector) -> Result<Vec<Branch>, ProtocolError> {
    if state.dims() != [2, 2, 2, 2] {
        return Err(ProtocolError::Quantum(
            crate::quantum::QuantumError::DimensionMismatch {
                expected: 16,
                found: state.dim(),
            },
        ));
    }
    let lay = Layout::new(1);
    let b = alice_step(vec![Branch::root(state.clone())], &lay)?;
    receivers_step(b, &lay)
}

/// Runs the controller's and Charlie's X measurements with their corrections on every branch.
///
/// `state` is the `[a, b, c, C]` register produced by `prepare_graph_state(3)` followed by
/// `attach_control` on `c`.
pub fn reduce_to_stator(
    state: &StateVector,
    axis: BlochAxis,
    psi_c: &StateVector,
) -> Result<StatorReduction, ProtocolError> {
    let ideal = stator_state(axis, psi_c)?;
    let done: Vec<Branch> = stator_branches(state)?
        .into_iter()
        .map(Branch::finish)
        .collect();
    let branches = done
        .iter()
        .map(|b| {
            let s = b.extract(&[1, 3])?;
            Ok(StatorBranch {
                id: b.id.clone(),
                probability: b.probability,
                fidelity: s.fidelity(&ideal)?,
                state: s,
            })
        })
        .collect::<Result<Vec<_>, ProtocolError>>()?;
    let transcript = ProtocolTranscript::from_logs(done.iter().map(|b| &b.log));

    // Residual operators from the linear extension over basis inputs.
    let graph = prepare_graph_state(3)?;
    let per_input = [StateVector::zero(), StateVector::one()]
        .iter()
        .map(|e| {
            let s = attach_control(&graph, 2, e, axis)?;
            stator_branches(&s)?
                .iter()
                .map(|b| b.extract(&[1, 3]))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, ProtocolError>>()?;
    let sqrt2 = C64::new(std::f64::consts::SQRT_2, 0.0);
    let mut residuals = Vec::new();
    for k in 0..per_input[0].len() {
        let mut rs: Vec<Operator> = Vec::with_capacity(2);
        for bval in 0..2 {
            let bra = StateVector::basis(vec![2], &[bval])?;
            let mut m = crate::quantum::CMatrix::zeros(2, 2);
            for (col, outs) in per_input.iter().enumerate() {
                let c = outs[k].contract(0, bra.amps())?;
                m[(0, col)] = c.amps()[0] * sqrt2;
                m[(1, col)] = c.amps()[1] * sqrt2;
            }
            rs.push(Operator::from_matrix(m)?);
        }
        let p = rs[0].matrix()[(0, 0)];
        let phase = if p.norm() > 0.0 {
            (p / p.norm()).conj()
        } else {
            C64::new(1.0, 0.0)
        };
        residuals.push([rs[0].scaled(phase), rs[1].scaled(phase)]);
    }

    let first = &branches[0].state;
    let cond = |bval: usize| -> Result<StateVector, ProtocolError> {
        let bra = StateVector::basis(vec![2], &[bval])?;
        Ok(first.contract(0, bra.amps())?.normalize()?)
    };
    let check = StatorCheck {
        branch_states: [cond(0)?, cond(1)?],
        residuals,
        axis,
    };
    Ok(StatorReduction {
        branches,
        transcript,
        check,
    })
}

#[derive(Clone, Debug)]
pub struct TransmitBranch {
    pub id: String,
    pub probability: f64,
    pub psi_c: StateVector,
}

/// Bob rotates b by `exp(iασ_x)`, measures it in Z and tells Charlie, who corrects on `1`.
pub fn bob_transmit(
    stator: &StateVector,
    alpha: f64,
    axis: BlochAxis,
) -> Result<(Vec<TransmitBranch>, ProtocolTranscript), ProtocolError> {
    if stator.dims() != [2, 2] {
        return Err(ProtocolError::Quantum(
            crate::quantum::QuantumError::DimensionMismatch {
                expected: 4,
                found: stator.dim(),
            },
        ));
    }
    let mut root = Branch::root(stator.normalize()?);
    // The stator is handed over after the controller's step; its permission carries over.
    root.permission = Some(Permission {
        outcome: String::new(),
    });
    let rot = BlochAxis::x().rotation(alpha);
    root.apply(&rot, 0)?;
    root.log
        .operation("", "Bob", "b", &format!("exp(i*{alpha}*sigma_x)"));
    let fix = axis.rotation(FRAC_PI_2);
    let mut out = Vec::new();
    let mut logs = Vec::new();
    for mut nb in root.measure(0, "b", &MeasurementBasis::z(), "Z", "Bob")? {
        let outcome = nb.last_outcome().to_string();
        let id = nb.id.clone();
        let r = nb.log.message(&id, "Bob", "Charlie", &outcome);
        if outcome == "1" {
            nb.apply(&fix, 1)?;
            nb.log.correction(&id, &r, "C", "exp(i*pi*sigma_n/2)");
        }
        let nb = nb.finish();
        out.push(TransmitBranch {
            id: nb.id.clone(),
            probability: nb.probability,
            psi_c: nb.extract(&[1])?,
        });
        logs.push(nb.log);
    }
    Ok((out, ProtocolTranscript::from_logs(logs.iter())))
}

/// Charlie's reduced state after Bob's rotation, before any message from Bob.
pub fn receiver_view_before_message(
    stator: &StateVector,
    alpha: f64,
) -> Result<DensityMatrix, ProtocolError> {
    let rotated = stator.apply(&BlochAxis::x().rotation(alpha), &[0])?;
    Ok(rotated.reduced_density(&[1])?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    /// Star graph for a single pair, controlled Bell pairs otherwise.
    #[default]
    Auto,
    Star,
    ControlledBell,
}

#[derive(Clone, Debug)]
pub struct CrioConfig {
    pub n_parties: usize,
    pub alphas: Vec<f64>,
    pub axes: Vec<BlochAxis>,
    pub targets: Vec<StateVector>,
    pub resource: Resource,
    /// When false the controller never measures and no permission is issued.
    pub controller_measures: bool,
}

impl CrioConfig {
    pub fn new(
        n_parties: usize,
        alphas: Vec<f64>,
        axes: Vec<BlochAxis>,
        targets: Vec<StateVector>,
    ) -> Self {
        Self {
            n_parties,
            alphas,
            axes,
            targets,
            resource: Resource::Auto,
            controller_measures: true,
        }
    }

    fn pairs(&self) -> Result<usize, ProtocolError> {
        if self.n_parties < 3 || self.n_parties.is_multiple_of(2) {
            return Err(ProtocolError::InvalidPartyCount(self.n_parties));
        }
        let n = (self.n_parties - 1) / 2;
        for (what, len) in [
            ("alphas", self.alphas.len()),
            ("axes", self.axes.len()),
            ("targets", self.targets.len()),
        ] {
            if len != n {
                return Err(ProtocolError::ArityMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        for t in &self.targets {
            if t.dims() != [2] || (t.norm_sqr() - 1.0).abs() > 1e-10 {
                return Err(ProtocolError::InvalidTarget);
            }
        }
        Ok(n)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReceiverOutcome {
    pub party: String,
    pub qubit: String,
    /// ⟨φ|ρ|φ⟩ with φ = exp(iασ_n)ψ.
    pub fidelity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchOutcome {
    pub id: String,
    pub probability: f64,
    pub receivers: Vec<ReceiverOutcome>,
    /// Reduced state of each receiver's target qubit.
    #[serde(skip)]
    pub target_states: Vec<DensityMatrix>,
}

#[derive(Clone, Debug)]
pub struct CrioOutcome {
    pub branches: Vec<BranchOutcome>,
    pub transcript: ProtocolTranscript,
    /// False when the controller withheld permission.
    pub completed: bool,
}

impl CrioOutcome {
    pub fn min_fidelity(&self) -> f64 {
        self.branches
            .iter()
            .flat_map(|b| b.receivers.iter().map(|r| r.fidelity))
            .fold(1.0, f64::min)
    }
}

/// End-to-end run over every measurement branch.
pub fn run_crio(config: &CrioConfig) -> Result<CrioOutcome, ProtocolError> {
    let n = config.pairs()?;
    let lay = Layout::new(n);
    let resource = match (config.resource, n) {
        (Resource::Auto, 1) | (Resource::Star, _) => prepare_graph_state(config.n_parties)?,
        (Resource::Auto, _) | (Resource::ControlledBell, _) => controlled_bell_resource(n)?,
    };
    let mut state = resource;
    for j in 0..n {
        state = attach_control(&state, lay.receiver(j), &config.targets[j], config.axes[j])?;
    }
    let root = Branch::root(state);
    let (finals, completed) = if config.controller_measures {
        let b = alice_step(vec![root], &lay)?;
        let b = receivers_step(b, &lay)?;
        (senders_step(b, &lay, &config.alphas, &config.axes)?, true)
    } else {
        // Without the controller's measurement no party holds a permission to proceed.
        (vec![root], false)
    };
    let finals: Vec<Branch> = finals.into_iter().map(Branch::finish).collect();
    let wanted: Vec<StateVector> = (0..n)
        .map(|j| config.targets[j].apply(&config.axes[j].rotation(config.alphas[j]), &[0]))
        .collect::<Result<_, _>>()?;
    let branches = finals
        .iter()
        .map(|b| {
            let mut receivers = Vec::with_capacity(n);
            let mut target_states = Vec::with_capacity(n);
            for j in 0..n {
                let rho = b.state.reduced_density(&[lay.target(j)])?;
                let f = rho.expectation(wanted[j].amps()).re;
                receivers.push(ReceiverOutcome {
                    party: lay.receivers[j].clone(),
                    qubit: lay.qubit_name(lay.target(j)),
                    fidelity: f,
                });
                target_states.push(rho);
            }
            Ok(BranchOutcome {
                id: if b.id.is_empty() {
                    "root".into()
                } else {
                    b.id.clone()
                },
                probability: b.probability,
                receivers,
                target_states,
            })
        })
        .collect::<Result<Vec<_>, ProtocolError>>()?;
    let transcript = ProtocolTranscript::from_logs(finals.iter().map(|b| &b.log));
    Ok(CrioOutcome {
        branches,
        transcript,
        completed,
    })
}

/// Number of correction events in a branch of a transcript.
pub fn corrections_in(transcript: &ProtocolTranscript, branch: &str) -> usize {
    transcript.count(branch, |a| matches!(a, Action::Correction { .. }))
}

/// Number of measurement events in a branch of a transcript.
pub fn measurements_in(transcript: &ProtocolTranscript, branch: &str) -> usize {
    transcript.count(branch, |a| matches!(a, Action::Measurement { .. }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::Kron;

    fn setup(axis: BlochAxis, psi: &StateVector) -> StateVector {
        attach_control(&prepare_graph_state(3).unwrap(), 2, psi, axis).unwrap()
    }

    #[test]
    fn all_stator_branches_agree() {
        let axis = BlochAxis::new(1.2, 0.7).unwrap();
        let psi = StateVector::from_bloch(0.4, 2.5);
        let red = reduce_to_stator(&setup(axis, &psi), axis, &psi).unwrap();
        assert_eq!(red.branches.len(), 4);
        for b in &red.branches {
            assert!((b.fidelity - 1.0).abs() < 1e-10, "{}: {}", b.id, b.fidelity);
            assert!((b.probability - 0.25).abs() < 1e-12);
            assert_eq!(measurements_in(&red.transcript, &b.id), 2);
            assert!(corrections_in(&red.transcript, &b.id) <= 2);
        }
        assert!(red.check.holds(1e-10), "{}", red.check.max_deviation());
        red.transcript.check_causality().unwrap();
        red.transcript.check_control(CONTROLLER).unwrap();
    }

    #[test]
    fn z_axis_stator_on_zero() {
        let psi = StateVector::zero();
        let red = reduce_to_stator(&setup(BlochAxis::z(), &psi), BlochAxis::z(), &psi).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let want = StateVector::from_slice(
            vec![2, 2],
            &[
                C64::new(s, 0.0),
                C64::new(0.0, 0.0),
                C64::new(s, 0.0),
                C64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        assert!(red.state().fidelity(&want).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn transmit_identity_rotation() {
        let axis = BlochAxis::new(0.3, 1.0).unwrap();
        let psi = StateVector::from_bloch(2.0, 0.1);
        let stator = stator_state(axis, &psi).unwrap();
        let (branches, t) = bob_transmit(&stator, 0.0, axis).unwrap();
        assert_eq!(branches.len(), 2);
        for b in &branches {
            assert!(b.psi_c.fidelity(&psi).unwrap() > 1.0 - 1e-12);
        }
        t.check_causality().unwrap();
    }

    #[test]
    fn transmit_quarter_turn_about_x() {
        let psi = StateVector::zero();
        let stator = stator_state(BlochAxis::x(), &psi).unwrap();
        let (branches, _) = bob_transmit(&stator, FRAC_PI_2, BlochAxis::x()).unwrap();
        for b in &branches {
            assert!(b.psi_c.fidelity(&StateVector::one()).unwrap() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn three_party_run_composes_stages() {
        let axis = BlochAxis::new(2.0, 5.0).unwrap();
        let psi = StateVector::from_bloch(1.1, 0.2);
        let alpha = 0.77;
        let out = run_crio(&CrioConfig::new(
            3,
            vec![alpha],
            vec![axis],
            vec![psi.clone()],
        ))
        .unwrap();
        assert_eq!(out.branches.len(), 8);
        let red = reduce_to_stator(&setup(axis, &psi), axis, &psi).unwrap();
        let (fin, _) = bob_transmit(red.state(), alpha, axis).unwrap();
        let want = psi.apply(&axis.rotation(alpha), &[0]).unwrap();
        for f in &fin {
            assert!(f.psi_c.fidelity(&want).unwrap() > 1.0 - 1e-10);
        }
        for b in &out.branches {
            assert!((b.probability - 0.125).abs() < 1e-12);
            assert!((b.receivers[0].fidelity - 1.0).abs() < 1e-10);
        }
        out.transcript.check_causality().unwrap();
        out.transcript.check_control(CONTROLLER).unwrap();
    }

    #[test]
    fn arity_mismatch() {
        let cfg = CrioConfig::new(
            5,
            vec![0.1],
            vec![BlochAxis::z()],
            vec![StateVector::zero()],
        );
        assert!(matches!(
            run_crio(&cfg),
            Err(ProtocolError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn without_permission_nothing_downstream_happens() {
        let cfg = CrioConfig {
            controller_measures: false,
            ..CrioConfig::new(
                5,
                vec![0.3, 0.4],
                vec![BlochAxis::z(), BlochAxis::x()],
                vec![StateVector::zero(), StateVector::plus()],
            )
        };
        let out = run_crio(&cfg).unwrap();
        assert!(!out.completed);
        for b in &out.branches {
            assert_eq!(corrections_in(&out.transcript, &b.id), 0);
        }
        assert!(out.transcript.events.is_empty());
    }

    #[test]
    fn downstream_step_refuses_without_permission() {
        let lay = Layout::new(1);
        let root = Branch::root(setup(BlochAxis::z(), &StateVector::zero()));
        assert!(matches!(
            receivers_step(vec![root], &lay),
            Err(ProtocolError::NoPermission)
        ));
    }

    #[test]
    fn qubit_names() {
        let l = Layout::new(2);
        let names: Vec<String> = (0..7).map(|i| l.qubit_name(i)).collect();
        assert_eq!(names, ["a", "bob", "charlie", "david", "eve", "D", "E"]);
        let l = Layout::new(1);
        let names: Vec<String> = (0..4).map(|i| l.qubit_name(i)).collect();
        assert_eq!(names, ["a", "bob", "charlie", "C"]);
    }

    #[test]
    fn kron_with_target_layout() {
        let s = controlled_bell_resource(2)
            .unwrap()
            .kron(&StateVector::zero());
        assert_eq!(s.dims().len(), 6);
    }

    fn five_party(resource: Resource) -> CrioOutcome {
        let cfg = CrioConfig {
            resource,
            ..CrioConfig::new(
                5,
                vec![0.6, 1.3],
                vec![
                    BlochAxis::new(0.5, 0.2).unwrap(),
                    BlochAxis::new(2.2, 4.0).unwrap(),
                ],
                vec![
                    StateVector::from_bloch(1.0, 0.3),
                    StateVector::from_bloch(2.4, 5.5),
                ],
            )
        };
        run_crio(&cfg).unwrap()
    }

    #[test]
    fn five_party_bell_resource_succeeds() {
        let out = five_party(Resource::Auto);
        assert_eq!(out.branches.len(), 32);
        assert!(out.min_fidelity() > 1.0 - 1e-10);
        let total: f64 = out.branches.iter().map(|b| b.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        out.transcript.check_causality().unwrap();
        out.transcript.check_control(CONTROLLER).unwrap();
        assert_eq!(out.branches[0].receivers[1].party, "Eve");
    }

    #[test]
    fn five_party_star_resource_fails() {
        assert!(five_party(Resource::Star).min_fidelity() < 0.99);
    }

    #[test]
    fn receiver_view_independent_of_angle() {
        let axis = BlochAxis::new(0.8, 1.9).unwrap();
        let stator = stator_state(axis, &StateVector::from_bloch(0.7, 0.2)).unwrap();
        let r0 = receiver_view_before_message(&stator, 0.0).unwrap();
        for alpha in [0.3, 1.1, 2.9] {
            let r = receiver_view_before_message(&stator, alpha).unwrap();
            assert!((r.matrix() - r0.matrix()).norm() < 1e-12);
        }
    }
}
