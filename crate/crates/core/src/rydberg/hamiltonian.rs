use crate::quantum::{CMatrix, Hamiltonian, Operator, C64};

use super::params::{DrivingParams, EffectiveCouplings};
use super::{GateMode, RydbergError};

/// Two atoms with levels {0, 1, R}; the control atom is the leading factor.
pub const DIM: usize = 9;
const R: usize = 2;

pub const fn level_index(control: usize, target: usize) -> usize {
    3 * control + target
}

pub const I00: usize = level_index(0, 0);
pub const I01: usize = level_index(0, 1);
pub const I10: usize = level_index(1, 0);
pub const I11: usize = level_index(1, 1);
pub const IRR: usize = level_index(R, R);
pub const GROUND_LEVELS: [usize; 4] = [I00, I01, I10, I11];
/// |R0⟩, |R1⟩, |0R⟩, |1R⟩.
pub const SINGLE_LEVELS: [usize; 4] = [
    level_index(R, 0),
    level_index(R, 1),
    level_index(0, R),
    level_index(1, R),
];
/// Basis of the effective model: |10⟩, |11⟩, |RR⟩.
pub const EFFECTIVE_LEVELS: [usize; 3] = [I10, I11, IRR];

#[derive(Clone, Copy, Debug)]
struct Term {
    row: usize,
    col: usize,
    value: C64,
    freq: f64,
}

/// Interaction-picture Hamiltonian H(t) = e^{iDt} (C + H_comp) e^{−iDt} + V|RR⟩⟨RR|.
#[derive(Clone, Debug)]
pub struct FullHamiltonian {
    coupling: CMatrix,
    frame: [f64; DIM],
    v: f64,
    compensation: Option<CMatrix>,
    terms: Vec<Term>,
}

impl FullHamiltonian {
    fn new(coupling: CMatrix, frame: [f64; DIM], v: f64, compensation: Option<CMatrix>) -> Self {
        let mut total = coupling.clone();
        if let Some(c) = &compensation {
            total += c;
        }
        let mut terms = Vec::new();
        for col in 0..DIM {
            for row in 0..DIM {
                let value = total[(row, col)];
                if value != C64::new(0.0, 0.0) {
                    terms.push(Term {
                        row,
                        col,
                        value,
                        freq: frame[row] - frame[col],
                    });
                }
            }
        }
        Self {
            coupling,
            frame,
            v,
            compensation,
            terms,
        }
    }

    /// Static laser couplings.
    pub fn coupling(&self) -> &CMatrix {
        &self.coupling
    }

    /// Diagonal of the frame transformation `D`.
    pub fn frame(&self) -> &[f64; DIM] {
        &self.frame
    }

    pub fn compensation(&self) -> Option<&CMatrix> {
        self.compensation.as_ref()
    }

    /// Level energies in the rotating frame: `D + V|RR⟩⟨RR|`.
    pub fn rotating_energies(&self) -> [f64; DIM] {
        let mut e = self.frame;
        e[IRR] += self.v;
        e
    }

    /// Adds the static ground-manifold term cancelling second-order light shifts.
    pub fn compensated(self) -> Self {
        let comp = stark_compensation(&self.coupling, &self.rotating_energies());
        Self::new(self.coupling, self.frame, self.v, Some(comp))
    }

    pub fn at(&self, t: f64) -> CMatrix {
        let mut out = CMatrix::zeros(DIM, DIM);
        self.fill(t, &mut out);
        out
    }

    /// Time-independent generator in the frame `ψ_rot = e^{−iDt} ψ_I`.
    pub fn rotating_frame(&self) -> CMatrix {
        let mut h = self.coupling.clone();
        if let Some(c) = &self.compensation {
            h += c;
        }
        for (i, e) in self.rotating_energies().iter().enumerate() {
            h[(i, i)] += C64::new(*e, 0.0);
        }
        h
    }

    /// `e^{iDt}` as a diagonal.
    pub fn frame_phases(&self, t: f64) -> [C64; DIM] {
        self.frame.map(|d| C64::from_polar(1.0, d * t))
    }
}

impl Hamiltonian for FullHamiltonian {
    fn dim(&self) -> usize {
        DIM
    }

    fn fill(&self, t: f64, out: &mut CMatrix) {
        out.fill(C64::new(0.0, 0.0));
        for term in &self.terms {
            out[(term.row, term.col)] += term.value * C64::from_polar(1.0, term.freq * t);
        }
        out[(IRR, IRR)] += C64::new(self.v, 0.0);
    }
}

fn set_pair(m: &mut CMatrix, lower: usize, upper: usize, value: C64) {
    m[(lower, upper)] = value;
    m[(upper, lower)] = value.conj();
}

/// Interaction-picture Hamiltonian of the two driven atoms, without Stark compensation.
pub fn build_full_hamiltonian(p: &DrivingParams) -> FullHamiltonian {
    let mut c = CMatrix::zeros(DIM, DIM);
    let half = C64::new(0.5, 0.0);
    let w0 = C64::new(p.omega0, 0.0) * half;
    let w1 = p.omega1_c() * half;
    let w2 = p.omega2_c() * half;
    let ix = level_index;
    set_pair(&mut c, ix(1, 0), ix(R, 0), w0);
    set_pair(&mut c, ix(1, 1), ix(R, 1), w0);
    set_pair(&mut c, ix(1, R), ix(R, R), w0);
    set_pair(&mut c, ix(0, 0), ix(0, R), w1);
    set_pair(&mut c, ix(1, 0), ix(1, R), w1);
    set_pair(&mut c, ix(R, 0), ix(R, R), w1);
    set_pair(&mut c, ix(0, 1), ix(0, R), w2);
    set_pair(&mut c, ix(1, 1), ix(1, R), w2);
    set_pair(&mut c, ix(R, 1), ix(R, R), w2);
    let control = [0.0, 0.0, p.delta0];
    let target = [0.0, p.delta2 - p.delta1, -p.delta1];
    let mut frame = [0.0; DIM];
    for a in 0..3 {
        for b in 0..3 {
            frame[ix(a, b)] = control[a] + target[b];
        }
    }
    FullHamiltonian::new(c, frame, p.v, None)
}

/// Negative of the second-order ground-manifold Hamiltonian mediated by singly excited levels.
pub fn stark_compensation(coupling: &CMatrix, energies: &[f64; DIM]) -> CMatrix {
    let mut out = CMatrix::zeros(DIM, DIM);
    for &g in &GROUND_LEVELS {
        for &h in &GROUND_LEVELS {
            let mut acc = C64::new(0.0, 0.0);
            for &e in &SINGLE_LEVELS {
                let w =
                    0.5 * (1.0 / (energies[g] - energies[e]) + 1.0 / (energies[h] - energies[e]));
                acc += coupling[(g, e)] * coupling[(e, h)] * w;
            }
            out[(g, h)] = -acc;
        }
    }
    out
}

/// Three-level Hamiltonian on {|10⟩, |11⟩, |RR⟩}.
///
/// Resonant modes drop the |RR⟩ shift; dynamical modes keep δ and require |δ| ≥ 3·Ω^eff/2.
pub fn build_effective_hamiltonian(
    e: &EffectiveCouplings,
    mode: GateMode,
) -> Result<Operator, RydbergError> {
    if mode == GateMode::IdealUnitary {
        return Err(RydbergError::InvalidMode("effective hamiltonian", mode));
    }
    if e.omega_eff == 0.0 {
        return Err(RydbergError::NoCoupling);
    }
    let mut h = CMatrix::zeros(3, 3);
    set_pair(&mut h, 0, 2, e.omega_eff_10 * 0.5);
    set_pair(&mut h, 1, 2, e.omega_eff_11 * 0.5);
    if mode.is_dynamical() {
        let ratio = e.dispersive_ratio();
        if ratio < 3.0 {
            return Err(RydbergError::DispersiveRatio(ratio));
        }
        h[(2, 2)] = C64::new(e.delta, 0.0);
    }
    Ok(Operator::new(vec![3], h)?.tagged_hermitian()?)
}

/// Places a 3×3 effective operator on the |10⟩, |11⟩, |RR⟩ block of the two-atom space.
pub fn embed_effective(h: &Operator) -> CMatrix {
    let mut out = CMatrix::zeros(DIM, DIM);
    for (i, &a) in EFFECTIVE_LEVELS.iter().enumerate() {
        for (j, &b) in EFFECTIVE_LEVELS.iter().enumerate() {
            out[(a, b)] = h.matrix()[(i, j)];
        }
    }
    out
}
