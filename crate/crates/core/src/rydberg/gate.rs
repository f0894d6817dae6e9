use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::parallel::{map_indexed, pairwise_sum};
use crate::quantum::{
    integrate_master_equation, liouvillian, CMatrix, CVector, ConstHamiltonian, DensityMatrix,
    IntegratorOptions, IntegratorStats, Operator, OutputGrid, QuantumError, StateVector,
    Superoperator, Trajectory, C64,
};

use super::hamiltonian::{
    build_effective_hamiltonian, build_full_hamiltonian, embed_effective, level_index, DIM, I00,
    I01, I10, I11, IRR,
};
use super::params::{DrivingParams, EffectiveCouplings};
use super::{GateMode, RydbergError};

pub const POPULATION_CSV_HEADER: &str = "t_us,p00,p01,p10,p11,pRR,fidelity";

/// Decay and dephasing rates in rad/μs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Rydberg lifetime in μs.
    pub tau: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Dephasing of the control atom.
    pub kappa_c: f64,
    /// Dephasing of the target atom.
    #[serde(rename = "kappa_C")]
    pub kappa_t: f64,
}

impl NoiseParams {
    /// Γ0 = Γ1 = κ = 1/(8τ).
    pub fn from_lifetime(tau: f64) -> Result<Self, RydbergError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(RydbergError::InvalidParam(format!(
                "tau must be positive, got {tau}"
            )));
        }
        let rate = 1.0 / (8.0 * tau);
        Ok(Self {
            tau,
            gamma0: rate,
            gamma1: rate,
            kappa_c: rate,
            kappa_t: rate,
        })
    }

    pub fn validate(&self) -> Result<(), RydbergError> {
        for (name, x) in [
            ("tau", self.tau),
            ("gamma0", self.gamma0),
            ("gamma1", self.gamma1),
            ("kappa_c", self.kappa_c),
            ("kappa_C", self.kappa_t),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(RydbergError::InvalidParam(format!(
                    "{name} must be a non-negative number, got {x}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::from_lifetime(400.0).expect("positive lifetime")
    }
}

fn single_atom(entries: &[(usize, usize, f64)]) -> CMatrix {
    let mut m = CMatrix::zeros(3, 3);
    for &(i, j, v) in entries {
        m[(i, j)] = C64::new(v, 0.0);
    }
    m
}

/// Decay `√Γ_k |k⟩⟨R|` and dephasing `√κ (|0⟩⟨0| + |1⟩⟨1| − |R⟩⟨R|)` on each atom.
pub fn lindblad_operators(n: &NoiseParams) -> Result<Vec<Operator>, RydbergError> {
    n.validate()?;
    let id = CMatrix::identity(3, 3);
    let mut ops = Vec::new();
    for (atom, kappa) in [(0, n.kappa_c), (1, n.kappa_t)] {
        let local = [
            single_atom(&[(0, 2, n.gamma0.sqrt())]),
            single_atom(&[(1, 2, n.gamma1.sqrt())]),
            single_atom(&[
                (0, 0, kappa.sqrt()),
                (1, 1, kappa.sqrt()),
                (2, 2, -kappa.sqrt()),
            ]),
        ];
        for m in local {
            if m.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let full = if atom == 0 {
                m.kronecker(&id)
            } else {
                id.kronecker(&m)
            };
            ops.push(Operator::new(vec![3, 3], full)?);
        }
    }
    Ok(ops)
}

/// Identity on {|00⟩, |01⟩} and `[[cosθ, sinθ e^{iφ}], [sinθ e^{−iφ}, −cosθ]]` on {|10⟩, |11⟩}.
pub fn holonomic_target_unitary(theta: f64, phi: f64) -> Operator {
    let mut m = CMatrix::identity(4, 4);
    m[(2, 2)] = C64::new(theta.cos(), 0.0);
    m[(2, 3)] = C64::from_polar(theta.sin(), phi);
    m[(3, 2)] = C64::from_polar(theta.sin(), -phi);
    m[(3, 3)] = C64::new(-theta.cos(), 0.0);
    Operator::new(vec![2, 2], m)
        .and_then(Operator::tagged_unitary)
        .expect("block unitary")
}

/// Maps a two-qubit state into the two-atom space with Rydberg levels.
pub fn embed_two_qubit(psi: &StateVector) -> Result<StateVector, RydbergError> {
    if psi.dims() != [2, 2] {
        return Err(QuantumError::DimensionMismatch {
            expected: 4,
            found: psi.dim(),
        }
        .into());
    }
    let mut amps = CVector::zeros(DIM);
    for a in 0..2 {
        for b in 0..2 {
            amps[level_index(a, b)] = psi.amps()[2 * a + b];
        }
    }
    Ok(StateVector::normalized(vec![3, 3], amps)?)
}

/// `U(θ, φ)|ψ0⟩` in the two-atom space.
pub fn target_state(psi0: &StateVector, theta: f64, phi: f64) -> Result<StateVector, RydbergError> {
    let out = psi0.apply(&holonomic_target_unitary(theta, phi), &[0, 1])?;
    embed_two_qubit(&out)
}

/// `2π/Ω^eff` for resonant modes, `π/|Ω_d|` for dynamical ones.
pub fn gate_time(e: &EffectiveCouplings, mode: GateMode) -> Result<f64, RydbergError> {
    if e.omega_eff == 0.0 {
        return Err(RydbergError::NoCoupling);
    }
    if mode.is_dynamical() {
        if e.delta == 0.0 {
            return Err(RydbergError::DispersiveRatio(0.0));
        }
        Ok(PI / e.omega_d().abs())
    } else {
        Ok(TAU / e.omega_eff)
    }
}

/// Everything needed to propagate one gate: a static generator plus the frame rotation.
struct Plan {
    couplings: EffectiveCouplings,
    time: f64,
    warnings: Vec<String>,
    generator: CMatrix,
    /// Diagonal `D` of the interaction-picture frame (zero outside full modes).
    frame: [f64; DIM],
    full: Option<super::hamiltonian::FullHamiltonian>,
}

impl Plan {
    fn new(p: &DrivingParams, mode: GateMode) -> Result<Self, RydbergError> {
        let mut warnings = p.validate()?;
        let e = EffectiveCouplings::raw(p);
        let time = gate_time(&e, mode)?;
        if mode.is_dynamical() {
            let ratio = e.dispersive_ratio();
            if ratio < 3.0 {
                return Err(RydbergError::DispersiveRatio(ratio));
            }
            if ratio < 10.0 {
                warnings.push(format!(
                    "|delta|/(Omega_eff/2) = {ratio:.3} is below 10; the dynamical gate may leak into |RR>"
                ));
            }
        }
        let (generator, frame, full) = if mode.is_full() {
            let h = build_full_hamiltonian(p).compensated();
            (h.rotating_frame(), *h.frame(), Some(h))
        } else {
            let eff_mode = if mode == GateMode::IdealUnitary {
                GateMode::EffectiveResonant
            } else {
                mode
            };
            let h3 = build_effective_hamiltonian(&e, eff_mode)?;
            (embed_effective(&h3), [0.0; DIM], None)
        };
        Ok(Self {
            couplings: e,
            time,
            warnings,
            generator,
            frame,
            full,
        })
    }

    fn frame_phases(&self, t: f64) -> [C64; DIM] {
        self.frame.map(|d| C64::from_polar(1.0, d * t))
    }
}

/// Exact dynamical map of one gate, from the matrix exponential of the Liouvillian.
#[derive(Clone, Debug)]
pub struct GateChannel {
    pub mode: GateMode,
    pub couplings: EffectiveCouplings,
    pub gate_time: f64,
    pub superop: Superoperator,
}

impl GateChannel {
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix, RydbergError> {
        Ok(self.superop.apply(rho)?)
    }

    /// `⟨Ψ_t|ρ(T)|Ψ_t⟩` with `Ψ_t = U(θ, φ)|ψ0⟩`.
    pub fn fidelity(&self, psi0: &StateVector) -> Result<f64, RydbergError> {
        let input = embed_two_qubit(psi0)?;
        let target = target_state(psi0, self.couplings.theta, self.couplings.phi)?;
        let rho = input.amps() * input.amps().adjoint();
        let out = self.superop.apply_matrix(&rho);
        let t = target.amps();
        Ok((t.adjoint() * out * t)[(0, 0)].re)
    }
}

/// Builds the gate's dynamical map in the interaction picture.
pub fn gate_channel(
    p: &DrivingParams,
    noise: Option<&NoiseParams>,
    mode: GateMode,
) -> Result<GateChannel, RydbergError> {
    let plan = Plan::new(p, mode)?;
    let ops = match (noise, mode) {
        (Some(n), m) if m != GateMode::IdealUnitary => lindblad_operators(n)?,
        _ => Vec::new(),
    };
    let l = liouvillian(&plan.generator, &ops);
    let s = Superoperator::from_generator(&l, plan.time)?;
    let ph = plan.frame_phases(plan.time);
    let mut m = s.matrix().clone();
    for k in 0..DIM * DIM {
        let f = ph[k % DIM] * ph[k / DIM].conj();
        for j in 0..DIM * DIM {
            m[(k, j)] *= f;
        }
    }
    Ok(GateChannel {
        mode,
        couplings: plan.couplings,
        gate_time: plan.time,
        superop: Superoperator::from_matrix(m)?,
    })
}

#[derive(Clone, Debug)]
pub struct GateOptions {
    /// Number of evenly spaced output times including both ends.
    pub samples: usize,
    pub integrator: IntegratorOptions,
}

impl Default for GateOptions {
    fn default() -> Self {
        Self {
            samples: 401,
            integrator: IntegratorOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PopulationTrace {
    pub t_us: Vec<f64>,
    pub p00: Vec<f64>,
    pub p01: Vec<f64>,
    pub p10: Vec<f64>,
    pub p11: Vec<f64>,
    #[serde(rename = "pRR")]
    pub p_rr: Vec<f64>,
    pub fidelity: Vec<f64>,
}

impl PopulationTrace {
    fn from_states(times: &[f64], states: &[DensityMatrix], target: &StateVector) -> Self {
        let mut tr = Self::default();
        for (t, rho) in times.iter().zip(states) {
            tr.t_us.push(*t);
            tr.p00.push(rho.population(I00));
            tr.p01.push(rho.population(I01));
            tr.p10.push(rho.population(I10));
            tr.p11.push(rho.population(I11));
            tr.p_rr.push(rho.population(IRR));
            tr.fidelity.push(rho.expectation(target.amps()).re);
        }
        tr
    }

    pub fn len(&self) -> usize {
        self.t_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_us.is_empty()
    }

    pub fn max_p_rr(&self) -> f64 {
        self.p_rr.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{POPULATION_CSV_HEADER}")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.6},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8}",
                self.t_us[i],
                self.p00[i],
                self.p01[i],
                self.p10[i],
                self.p11[i],
                self.p_rr[i],
                self.fidelity[i]
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GateRun {
    pub mode: GateMode,
    pub params: DrivingParams,
    pub couplings: EffectiveCouplings,
    pub gate_time: f64,
    pub fidelity: f64,
    pub max_p_rr: f64,
    pub trace: PopulationTrace,
    pub trajectory: Trajectory,
    pub warnings: Vec<String>,
}

/// Integrates the gate with the adaptive Runge–Kutta solver and records populations and fidelity.
///
/// Full modes evolve under the time-dependent interaction-picture Hamiltonian; effective modes
/// use the three-level model embedded in the two-atom space; `IdealUnitary` ignores noise and
/// propagates the resonant three-level model exactly.
pub fn simulate_gate(
    p: &DrivingParams,
    noise: Option<&NoiseParams>,
    mode: GateMode,
    psi0: &StateVector,
    opts: &GateOptions,
) -> Result<GateRun, RydbergError> {
    let plan = Plan::new(p, mode)?;
    let input = embed_two_qubit(psi0)?;
    let target = target_state(psi0, plan.couplings.theta, plan.couplings.phi)?;
    let rho0 = DensityMatrix::from_pure(&input)?;
    let span = (0.0, plan.time);
    let grid = OutputGrid::Uniform(opts.samples.max(2));
    let trajectory = if mode == GateMode::IdealUnitary {
        ideal_trajectory(&plan, &rho0, opts.samples.max(2))?
    } else {
        let ops = match noise {
            Some(n) => lindblad_operators(n)?,
            None => Vec::new(),
        };
        match &plan.full {
            Some(h) => integrate_master_equation(h, &ops, &rho0, span, &grid, &opts.integrator)?,
            None => integrate_master_equation(
                &ConstHamiltonian(plan.generator.clone()),
                &ops,
                &rho0,
                span,
                &grid,
                &opts.integrator,
            )?,
        }
    };
    let trace = PopulationTrace::from_states(&trajectory.times, &trajectory.states, &target);
    let fidelity = *trace.fidelity.last().expect("non-empty grid");
    Ok(GateRun {
        mode,
        params: *p,
        couplings: plan.couplings,
        gate_time: plan.time,
        fidelity,
        max_p_rr: trace.max_p_rr(),
        trace,
        trajectory,
        warnings: plan.warnings,
    })
}

fn ideal_trajectory(
    plan: &Plan,
    rho0: &DensityMatrix,
    samples: usize,
) -> Result<Trajectory, RydbergError> {
    let mut times = Vec::with_capacity(samples);
    let mut states = Vec::with_capacity(samples);
    let mi = C64::new(0.0, -1.0);
    for k in 0..samples {
        let t = if k + 1 == samples {
            plan.time
        } else {
            plan.time * k as f64 / (samples - 1) as f64
        };
        let u = Operator::new(vec![3, 3], (&plan.generator * (mi * t)).exp())?;
        times.push(t);
        states.push(rho0.apply(&u, &[0, 1])?);
    }
    Ok(Trajectory {
        times,
        states,
        observables: BTreeMap::new(),
        stats: IntegratorStats::default(),
    })
}

/// Rescales Ω1 and Ω2 of `p` to realize `(theta, phi)` at the same Ω^eff and δ.
pub fn realize_angles(
    p: &DrivingParams,
    theta: f64,
    phi: f64,
) -> Result<DrivingParams, RydbergError> {
    p.validate()?;
    let e = EffectiveCouplings::raw(p);
    p.for_angles(theta, phi, e.omega_eff, e.delta)
}

/// Uniform grid over `[0, 2π)²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self {
            n_theta: 8,
            n_phi: 8,
        }
    }
}

impl AngleGrid {
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.n_theta * self.n_phi);
        for i in 0..self.n_theta {
            for j in 0..self.n_phi {
                out.push((
                    TAU * i as f64 / self.n_theta as f64,
                    TAU * j as f64 / self.n_phi as f64,
                ));
            }
        }
        out
    }
}

/// `sinβ1|00⟩ + cosβ1[e^{iβ4} sinβ2|01⟩ + cosβ2(e^{iβ5} sinβ3|10⟩ + e^{iβ6} cosβ3|11⟩)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputStateParams {
    pub betas: [f64; 6],
}

impl InputStateParams {
    pub fn state(&self) -> StateVector {
        let [b1, b2, b3, b4, b5, b6] = self.betas;
        let amps = [
            C64::new(b1.sin(), 0.0),
            C64::from_polar(b1.cos() * b2.sin(), b4),
            C64::from_polar(b1.cos() * b2.cos() * b3.sin(), b5),
            C64::from_polar(b1.cos() * b2.cos() * b3.cos(), b6),
        ];
        StateVector::from_slice(vec![2, 2], &amps).expect("four amplitudes")
    }
}

/// β1..β3 on `n_polar` points spanning `[0, π/2]`; β4..β6 on `n_azimuth` points in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputGrid {
    pub n_polar: usize,
    pub n_azimuth: usize,
}

impl Default for InputGrid {
    fn default() -> Self {
        Self {
            n_polar: 5,
            n_azimuth: 4,
        }
    }
}

impl InputGrid {
    pub fn points(&self) -> Vec<InputStateParams> {
        let polar: Vec<f64> = match self.n_polar {
            0 => Vec::new(),
            1 => vec![0.0],
            n => (0..n)
                .map(|i| FRAC_PI_2 * i as f64 / (n - 1) as f64)
                .collect(),
        };
        let azim: Vec<f64> = (0..self.n_azimuth)
            .map(|i| TAU * i as f64 / self.n_azimuth as f64)
            .collect();
        let mut out = Vec::new();
        for &b1 in &polar {
            for &b2 in &polar {
                for &b3 in &polar {
                    for &b4 in &azim {
                        for &b5 in &azim {
                            for &b6 in &azim {
                                out.push(InputStateParams {
                                    betas: [b1, b2, b3, b4, b5, b6],
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityAverage {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Per-point fidelities in grid order.
    pub values: Vec<f64>,
}

impl FidelityAverage {
    fn from_values(values: Vec<f64>) -> Result<Self, RydbergError> {
        if values.is_empty() {
            return Err(RydbergError::InvalidParam("empty averaging grid".into()));
        }
        Ok(Self {
            mean: pairwise_sum(&values) / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            values,
        })
    }
}

/// Mean fidelity of `psi0` over gates realizing each `(θ, φ)` of the grid.
pub fn average_fidelity_angles(
    p: &DrivingParams,
    noise: Option<&NoiseParams>,
    mode: GateMode,
    psi0: &StateVector,
    grid: &AngleGrid,
    workers: Option<usize>,
) -> Result<FidelityAverage, RydbergError> {
    let points = grid.points();
    let values = map_indexed(points.len(), workers, |i| {
        let (theta, phi) = points[i];
        let q = realize_angles(p, theta, phi)?;
        gate_channel(&q, noise, mode)?.fidelity(psi0)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    FidelityAverage::from_values(values)
}

/// Mean fidelity of the gate realizing `angles` over the grid of input states.
pub fn average_fidelity_inputs(
    p: &DrivingParams,
    noise: Option<&NoiseParams>,
    mode: GateMode,
    angles: (f64, f64),
    grid: &InputGrid,
    workers: Option<usize>,
) -> Result<FidelityAverage, RydbergError> {
    let q = realize_angles(p, angles.0, angles.1)?;
    let channel = gate_channel(&q, noise, mode)?;
    let points = grid.points();
    let values = map_indexed(points.len(), workers, |i| {
        channel.fidelity(&points[i].state())
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    FidelityAverage::from_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::Kron;
    use crate::rydberg::{effective_couplings, DYNAMICAL_DELTA};

    pub(crate) fn psi0() -> StateVector {
        let c = StateVector::from_slice(vec![2], &[C64::new(1.0, 0.0), C64::new(2f64.sqrt(), 0.0)])
            .unwrap()
            .normalize()
            .unwrap();
        let t = StateVector::from_slice(vec![2], &[C64::new(3f64.sqrt(), 0.0), C64::new(1.0, 0.0)])
            .unwrap()
            .normalize()
            .unwrap();
        c.kron(&t)
    }

    fn unitary(p: &DrivingParams, mode: GateMode, t: f64) -> CMatrix {
        let plan = Plan::new(p, mode).unwrap();
        let u = (&plan.generator * C64::new(0.0, -t)).exp();
        let ph = plan.frame_phases(t);
        CMatrix::from_fn(DIM, DIM, |i, j| ph[i] * u[(i, j)])
    }

    #[test]
    fn ideal_mode_is_exact() {
        let p = DrivingParams::resonant().unwrap();
        let run = simulate_gate(
            &p,
            Some(&NoiseParams::default()),
            GateMode::IdealUnitary,
            &psi0(),
            &GateOptions::default(),
        )
        .unwrap();
        assert!((run.fidelity - 1.0).abs() < 1e-12);
        let ch = gate_channel(&p, None, GateMode::IdealUnitary).unwrap();
        assert!((ch.fidelity(&psi0()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_and_rk_routes_agree() {
        let p = DrivingParams::resonant().unwrap();
        let n = NoiseParams::default();
        for mode in [GateMode::EffectiveResonant, GateMode::FullResonant] {
            let opts = GateOptions {
                samples: 3,
                ..Default::default()
            };
            let rk = simulate_gate(&p, Some(&n), mode, &psi0(), &opts).unwrap();
            let ex = gate_channel(&p, Some(&n), mode).unwrap();
            let rho0 = DensityMatrix::from_pure(&embed_two_qubit(&psi0()).unwrap()).unwrap();
            let diff =
                (ex.apply(&rho0).unwrap().matrix() - rk.trajectory.final_state().matrix()).camax();
            assert!(diff < 1e-5, "{mode}: {diff}");
        }
    }

    #[test]
    fn holonomy_loop_realizes_target() {
        for (theta, phi) in [(FRAC_PI_2, PI), (0.7, 2.0), (2.9, 5.1)] {
            let p = realize_angles(&DrivingParams::resonant().unwrap(), theta, phi).unwrap();
            let e = effective_couplings(&p).unwrap();
            let u = unitary(
                &p,
                GateMode::EffectiveResonant,
                gate_time(&e, GateMode::EffectiveResonant).unwrap(),
            );
            let want = holonomic_target_unitary(theta, phi);
            let idx = [I00, I01, I10, I11];
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    assert!((u[(i, j)] - want.matrix()[(a, b)]).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn dark_state_population_is_constant() {
        let p = DrivingParams::resonant().unwrap();
        let e = effective_couplings(&p).unwrap();
        let (s, c) = ((e.theta / 2.0).sin(), (e.theta / 2.0).cos());
        let dark = StateVector::from_slice(
            vec![2, 2],
            &[
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(c, 0.0),
                C64::from_polar(s, -e.phi),
            ],
        )
        .unwrap();
        let d9 = embed_two_qubit(&dark).unwrap();
        let mixed = psi0();
        let run = simulate_gate(
            &p,
            None,
            GateMode::EffectiveResonant,
            &mixed,
            &GateOptions {
                samples: 51,
                ..Default::default()
            },
        )
        .unwrap();
        let p0 = run.trajectory.states[0].expectation(d9.amps()).re;
        for rho in &run.trajectory.states {
            assert!((rho.expectation(d9.amps()).re - p0).abs() < 1e-6);
        }
    }

    #[test]
    fn lindblad_sanity_along_full_trajectory() {
        let p = DrivingParams::resonant().unwrap();
        let n = NoiseParams::from_lifetime(40.0).unwrap();
        let run = simulate_gate(
            &p,
            Some(&n),
            GateMode::FullResonant,
            &psi0(),
            &GateOptions {
                samples: 41,
                ..Default::default()
            },
        )
        .unwrap();
        for rho in &run.trajectory.states {
            assert!((rho.trace() - 1.0).abs() < 1e-7);
            assert!(rho.min_eigenvalue() > -1e-7);
        }
    }

    #[test]
    fn zero_rates_match_unitary_propagation() {
        let p = DrivingParams::resonant().unwrap();
        let zero = NoiseParams {
            tau: 400.0,
            gamma0: 0.0,
            gamma1: 0.0,
            kappa_c: 0.0,
            kappa_t: 0.0,
        };
        let run = simulate_gate(
            &p,
            Some(&zero),
            GateMode::EffectiveResonant,
            &psi0(),
            &GateOptions {
                samples: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let u = unitary(&p, GateMode::EffectiveResonant, run.gate_time);
        let psi = &u * embed_two_qubit(&psi0()).unwrap().amps();
        let rho = &psi * psi.adjoint();
        assert!((rho - run.trajectory.final_state().matrix()).camax() < 1e-8);
    }

    #[test]
    fn full_model_tracks_effective_model() {
        let p = DrivingParams::resonant().unwrap();
        let t = gate_time(&effective_couplings(&p).unwrap(), GateMode::FullResonant).unwrap();
        let input = embed_two_qubit(&psi0()).unwrap();
        let full = unitary(&p, GateMode::FullResonant, t) * input.amps();
        let eff = unitary(&p, GateMode::EffectiveResonant, t) * input.amps();
        let mut overlap = C64::new(0.0, 0.0);
        for &k in &[I10, I11, IRR] {
            overlap += eff[k].conj() * full[k];
        }
        let eff_norm: f64 = [I10, I11, IRR].iter().map(|&k| eff[k].norm_sqr()).sum();
        let full_norm: f64 = [I10, I11, IRR].iter().map(|&k| full[k].norm_sqr()).sum();
        let o = overlap.norm_sqr() / (eff_norm * full_norm);
        assert!(o >= 0.99, "{o}");
    }

    #[test]
    fn fidelity_decreases_with_decay_rate() {
        let p = DrivingParams::resonant().unwrap();
        let fs: Vec<f64> = [1600.0, 800.0, 400.0, 200.0, 100.0]
            .iter()
            .map(|&tau| {
                let n = NoiseParams::from_lifetime(tau).unwrap();
                gate_channel(&p, Some(&n), GateMode::FullResonant)
                    .unwrap()
                    .fidelity(&psi0())
                    .unwrap()
            })
            .collect();
        assert!(fs.windows(2).all(|w| w[1] <= w[0]), "{fs:?}");
    }

    #[test]
    fn ground_input_is_untouched() {
        let input = InputStateParams {
            betas: [FRAC_PI_2, 0.3, 0.4, 1.0, 2.0, 3.0],
        }
        .state();
        let n = NoiseParams::default();
        for (p, mode) in [
            (DrivingParams::resonant().unwrap(), GateMode::FullResonant),
            (
                DrivingParams::resonant().unwrap(),
                GateMode::EffectiveResonant,
            ),
            (
                DrivingParams::dynamical(DYNAMICAL_DELTA).unwrap(),
                GateMode::FullDynamical,
            ),
            (
                DrivingParams::dynamical(DYNAMICAL_DELTA).unwrap(),
                GateMode::EffectiveDynamical,
            ),
        ] {
            let f = gate_channel(&p, Some(&n), mode)
                .unwrap()
                .fidelity(&input)
                .unwrap();
            // Square pulses leave a small bare-basis admixture of |0R⟩ in the full model.
            let floor = if mode.is_full() { 0.998 } else { 0.999 };
            assert!(f >= floor, "{mode}: {f}");
        }
    }

    #[test]
    fn input_states_are_normalized() {
        for q in InputGrid::default().points() {
            assert!((q.state().norm_sqr() - 1.0).abs() < 1e-12);
        }
        assert_eq!(InputGrid::default().points().len(), 8000);
    }

    #[test]
    fn noiseless_effective_angle_average_is_one() {
        let p = DrivingParams::resonant().unwrap();
        let avg = average_fidelity_angles(
            &p,
            None,
            GateMode::EffectiveResonant,
            &psi0(),
            &AngleGrid {
                n_theta: 4,
                n_phi: 3,
            },
            Some(2),
        )
        .unwrap();
        assert!((avg.mean - 1.0).abs() < 1e-8, "{}", avg.mean);
        assert_eq!(avg.values.len(), 12);
    }

    #[test]
    fn averages_do_not_depend_on_worker_count() {
        let p = DrivingParams::resonant().unwrap();
        let n = NoiseParams::default();
        let grid = InputGrid {
            n_polar: 3,
            n_azimuth: 2,
        };
        let a = average_fidelity_inputs(
            &p,
            Some(&n),
            GateMode::EffectiveResonant,
            (FRAC_PI_2, PI),
            &grid,
            Some(1),
        )
        .unwrap();
        let b = average_fidelity_inputs(
            &p,
            Some(&n),
            GateMode::EffectiveResonant,
            (FRAC_PI_2, PI),
            &grid,
            Some(3),
        )
        .unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }

    /// Returns `⟨B|U(T)|B⟩` from the propagation and from the closed-form two-level solution.
    fn bright_amplitude(delta: f64) -> (C64, C64) {
        let p = DrivingParams::dynamical(delta).unwrap();
        let e = effective_couplings(&p).unwrap();
        let t = gate_time(&e, GateMode::EffectiveDynamical).unwrap();
        let u = unitary(&p, GateMode::EffectiveDynamical, t);
        let (s, c) = ((e.theta / 2.0).sin(), (e.theta / 2.0).cos());
        let b = [C64::from_polar(s, e.phi), C64::new(-c, 0.0)];
        let idx = [I10, I11];
        let mut amp = C64::new(0.0, 0.0);
        for (a, &i) in idx.iter().enumerate() {
            for (bb, &j) in idx.iter().enumerate() {
                amp += b[a].conj() * u[(i, j)] * b[bb];
            }
        }
        let root = (e.delta * e.delta + e.omega_eff * e.omega_eff).sqrt();
        let (lo, hi) = ((e.delta - root) / 2.0, (e.delta + root) / 2.0);
        let cos2 = 0.5 * (1.0 + e.delta.abs() / root);
        let (w_lo, w_hi) = if e.delta > 0.0 {
            (cos2, 1.0 - cos2)
        } else {
            (1.0 - cos2, cos2)
        };
        let exact = C64::from_polar(w_lo, -lo * t) + C64::from_polar(w_hi, -hi * t);
        (amp, exact)
    }

    fn phase_miss(amp: C64) -> f64 {
        (amp.arg().abs() - PI).abs()
    }

    #[test]
    fn dispersive_phase_self_check() {
        let w = effective_couplings(&DrivingParams::resonant().unwrap())
            .unwrap()
            .omega_eff;
        let (amp, exact) = bright_amplitude(60.0 * w);
        assert!(phase_miss(amp) < 1e-3, "{}", phase_miss(amp));
        assert!((amp - exact).norm() < 1e-9);
        let (amp, exact) = bright_amplitude(DYNAMICAL_DELTA);
        assert!((amp - exact).norm() < 1e-9);
        let miss = phase_miss(amp);
        assert!(miss > 1e-3 && miss < 0.03, "{miss}");
    }

    #[test]
    fn population_csv_format() {
        let p = DrivingParams::resonant().unwrap();
        let run = simulate_gate(
            &p,
            None,
            GateMode::IdealUnitary,
            &psi0(),
            &GateOptions {
                samples: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        run.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], POPULATION_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1]
            .starts_with("0.000000,0.25000000,0.08333333,0.50000000,0.16666667,0.00000000,"));
    }
}
