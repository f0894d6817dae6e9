//! Photon–cavity–atom CZ link: scattering maps, half-wave plates, the three-qubit
//! graph-state pipeline and its fidelity/efficiency under cavity noise.
//!
//! Basis conventions: photon polarization `H = 0`, `V = 1`; atom `g_v = 0`, `g_h = 1`.
//! With this encoding the ideal pipeline output is the star graph state on three qubits.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::map_indexed;
use crate::quantum::{CMatrix, Kron, Operator, QuantumError, StateVector, C64};

pub const POL_H: usize = 0;
pub const POL_V: usize = 1;
pub const ATOM_GV: usize = 0;
pub const ATOM_GH: usize = 1;

const PATH_L1: usize = 0;
const PATH_L2: usize = 1;

/// Header of the sweep CSV.
pub const FE_CSV_HEADER: &str = "kappa_over_g,gamma_over_g,omega_over_g,F,E";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CavityError {
    #[error("invalid cavity parameter {field} = {value}")]
    InvalidParam { field: &'static str, value: f64 },
    #[error("reflection coefficients undefined for kappa = omega = 0")]
    Singular,
    #[error("{0} amplitudes are not normalized")]
    NotNormalized(&'static str),
    #[error("effective state has zero norm")]
    ZeroNorm,
    #[error("empty sweep grid")]
    EmptyGrid,
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Cavity rates in units of the coupling strength `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub kappa: f64,
    pub gamma: f64,
    pub g: f64,
    pub omega: f64,
}

impl CavityParams {
    pub fn new(kappa: f64, gamma: f64, omega: f64) -> Result<Self, CavityError> {
        let p = Self {
            kappa,
            gamma,
            g: 1.0,
            omega,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CavityError> {
        let check = |field, value: f64, nonneg: bool| {
            if !value.is_finite() || (nonneg && value < 0.0) {
                Err(CavityError::InvalidParam { field, value })
            } else {
                Ok(())
            }
        };
        check("kappa", self.kappa, true)?;
        check("gamma", self.gamma, true)?;
        check("g", self.g, true)?;
        check("omega", self.omega, false)?;
        if self.kappa == 0.0 && self.omega == 0.0 {
            return Err(CavityError::Singular);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionCoeffs {
    pub r_h1: C64,
    pub r_h2: C64,
    pub r0: C64,
}

impl ReflectionCoeffs {
    /// Coefficients that reduce the noisy map to the ideal one.
    pub fn ideal() -> Self {
        Self {
            r_h1: C64::new(0.0, 0.0),
            r_h2: C64::new(1.0, 0.0),
            r0: C64::new(-1.0, 0.0),
        }
    }

    pub fn is_passive(&self) -> bool {
        [self.r_h1, self.r_h2, self.r0]
            .iter()
            .all(|r| r.norm() <= 1.0 + 1e-12)
    }

    /// Copy with `r0` forced to −1, keeping the decoupled rows noise-free.
    pub fn clamped(self) -> Self {
        Self {
            r0: C64::new(-1.0, 0.0),
            ..self
        }
    }
}

pub fn reflection_coefficients(p: &CavityParams) -> Result<ReflectionCoeffs, CavityError> {
    p.validate()?;
    let i = C64::i();
    let a = i * p.omega + p.kappa / 2.0;
    let b = i * p.omega + p.gamma / 2.0;
    let g2 = p.g * p.g;
    let denom = a * b + 2.0 * g2;
    let kg2 = C64::new(p.kappa * g2, 0.0);
    let r_h1 = ((i * p.omega - p.kappa / 2.0) + kg2 / denom) / a;
    let r_h2 = kg2 / (a * denom);
    let r0 = (i * p.omega - p.kappa / 2.0) / a;
    Ok(ReflectionCoeffs { r_h1, r_h2, r0 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScatterMode {
    Ideal,
    Noisy(ReflectionCoeffs),
}

fn basis_index(pol: usize, atom: usize) -> usize {
    2 * pol + atom
}

/// 4×4 map on photon⊗atom for a single reflection off a cavity.
pub fn scatter_map(mode: ScatterMode) -> Operator {
    let c = match mode {
        ScatterMode::Ideal => ReflectionCoeffs::ideal(),
        ScatterMode::Noisy(c) => c,
    };
    let mut m = CMatrix::zeros(4, 4);
    let hgh = basis_index(POL_H, ATOM_GH);
    let hgv = basis_index(POL_H, ATOM_GV);
    let vgh = basis_index(POL_V, ATOM_GH);
    let vgv = basis_index(POL_V, ATOM_GV);
    m[(hgh, hgh)] = c.r_h1;
    m[(vgv, hgh)] = c.r_h2;
    m[(hgv, hgv)] = c.r0;
    m[(vgh, vgh)] = c.r0;
    m[(hgh, vgv)] = c.r_h2;
    m[(vgv, vgv)] = c.r_h1;
    let op = Operator::new(vec![2, 2], m).expect("finite 4x4");
    match mode {
        ScatterMode::Ideal => op.tagged_unitary().expect("ideal scattering is unitary"),
        ScatterMode::Noisy(_) => op,
    }
}

/// Half-wave plate `[[cos2θ, sin2θ], [sin2θ, −cos2θ]]`.
pub fn hwp_operator(theta: f64) -> Operator {
    let (s, c) = (2.0 * theta).sin_cos();
    Operator::from_real_rows(2, &[c, s, s, -c])
        .and_then(Operator::tagged_unitary)
        .and_then(Operator::tagged_hermitian)
        .expect("reflection matrix")
}

/// Amplitudes `(first, second)` of a single input qubit.
pub type AmpPair = (C64, C64);

/// Inputs of the preparation pipeline.
///
/// `photon = (a1, a2)` on `(H, V)`; each atom `(b1, b2)` on `(g_h, g_v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct H3Inputs {
    pub photon: AmpPair,
    pub atom1: AmpPair,
    pub atom2: AmpPair,
}

impl H3Inputs {
    pub fn balanced() -> Self {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            photon: (s, s),
            atom1: (s, s),
            atom2: (s, s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    /// `None` runs the ideal scattering map.
    pub noise: Option<CavityParams>,
    pub clamp_r0: bool,
    /// Amplitude transmission applied to the cavity line.
    pub transmission: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            noise: None,
            clamp_r0: true,
            transmission: 1.0,
        }
    }
}

impl PipelineOptions {
    pub fn noisy(p: CavityParams) -> Self {
        Self {
            noise: Some(p),
            ..Self::default()
        }
    }
}

fn pair_state(p: AmpPair, name: &'static str) -> Result<StateVector, CavityError> {
    if ((p.0.norm_sqr() + p.1.norm_sqr()) - 1.0).abs() > 1e-10 {
        return Err(CavityError::NotNormalized(name));
    }
    Ok(StateVector::from_slice(vec![2], &[p.0, p.1])?.normalize()?)
}

fn atom_state(p: AmpPair, name: &'static str) -> Result<StateVector, CavityError> {
    // Inputs are given on (g_h, g_v); the register stores (g_v, g_h).
    pair_state((p.1, p.0), name)
}

/// Acts on (path, polarization) and routes `H` to line 1 and `V` to line 2.
fn pbs() -> Operator {
    let mut m = CMatrix::zeros(4, 4);
    let idx = |path: usize, pol: usize| 2 * path + pol;
    let one = C64::new(1.0, 0.0);
    m[(idx(PATH_L1, POL_H), idx(PATH_L1, POL_H))] = one;
    m[(idx(PATH_L2, POL_V), idx(PATH_L1, POL_V))] = one;
    m[(idx(PATH_L1, POL_V), idx(PATH_L2, POL_V))] = one;
    m[(idx(PATH_L2, POL_H), idx(PATH_L2, POL_H))] = one;
    Operator::new(vec![2, 2], m)
        .and_then(Operator::tagged_unitary)
        .expect("permutation")
}

/// `|l1⟩⟨l1| ⊗ I + |l2⟩⟨l2| ⊗ op`: `op` acts only on the cavity line.
fn on_line2(op: &Operator) -> Operator {
    let d = op.dim();
    let mut m = CMatrix::identity(2 * d, 2 * d);
    m.view_mut((d, d), (d, d)).copy_from(op.matrix());
    let mut dims = vec![2];
    dims.extend_from_slice(op.dims());
    Operator::new(dims, m).expect("block operator")
}

/// Runs the photon through both cavities and returns photon⊗atom1⊗atom2.
///
/// The result is normalized in ideal mode and generally unnormalized with noise.
pub fn prepare_h3(inputs: &H3Inputs, opts: &PipelineOptions) -> Result<StateVector, CavityError> {
    let photon = pair_state(inputs.photon, "photon")?;
    let atom1 = atom_state(inputs.atom1, "atom 1")?;
    let atom2 = atom_state(inputs.atom2, "atom 2")?;
    let mode = match opts.noise {
        None => ScatterMode::Ideal,
        Some(p) => {
            let c = reflection_coefficients(&p)?;
            ScatterMode::Noisy(if opts.clamp_r0 { c.clamped() } else { c })
        }
    };
    if !(opts.transmission.is_finite() && (0.0..=1.0).contains(&opts.transmission)) {
        return Err(CavityError::InvalidParam {
            field: "transmission",
            value: opts.transmission,
        });
    }
    // Register: path, polarization, atom 1, atom 2.
    let path = StateVector::basis(vec![2], &[PATH_L1])?;
    let mut s = path.kron(&photon).kron(&atom1).kron(&atom2);
    s = s.apply(&pbs(), &[0, 1])?;
    let scatter = on_line2(&scatter_map(mode));
    let hwp = on_line2(&hwp_operator(0.0));
    for atom in [2, 3] {
        s = s.apply(&scatter, &[0, 1, atom])?;
        s = s.apply(&hwp, &[0, 1])?;
        s = s.apply(&scatter, &[0, 1, atom])?;
    }
    if opts.transmission != 1.0 {
        let mut t = CMatrix::identity(2, 2);
        t[(PATH_L2, PATH_L2)] = C64::new(opts.transmission, 0.0);
        s = s.apply(&Operator::from_matrix(t)?, &[0])?;
    }
    s = s.apply(&pbs(), &[0, 1])?;
    let exit = StateVector::basis(vec![2], &[PATH_L1])?;
    let out = s.contract(0, exit.amps())?;
    if opts.noise.is_none() && opts.transmission == 1.0 {
        Ok(out.normalize()?)
    } else {
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FEResult {
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "N")]
    pub n: f64,
}

/// F = |⟨ψ_eff|ψ_ideal⟩/N|², E = |⟨ψ_eff|ψ_ideal⟩|², N = ‖ψ_eff‖.
pub fn fidelity_efficiency(
    psi_eff: &StateVector,
    psi_ideal: &StateVector,
) -> Result<FEResult, CavityError> {
    if (psi_ideal.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(CavityError::NotNormalized("ideal state"));
    }
    let n = psi_eff.norm();
    if n == 0.0 {
        return Err(CavityError::ZeroNorm);
    }
    let e = psi_eff.inner(psi_ideal)?.norm_sqr();
    Ok(FEResult {
        f: e / (n * n),
        e,
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FERow {
    pub kappa_over_g: f64,
    pub gamma_over_g: f64,
    pub omega_over_g: f64,
    #[serde(flatten)]
    pub result: FEResult,
}

/// F/E with balanced inputs at a single cavity setting.
pub fn fe_point(p: CavityParams, clamp_r0: bool) -> Result<FEResult, CavityError> {
    let inputs = H3Inputs::balanced();
    let ideal = prepare_h3(&inputs, &PipelineOptions::default())?;
    let eff = prepare_h3(
        &inputs,
        &PipelineOptions {
            noise: Some(p),
            clamp_r0,
            transmission: 1.0,
        },
    )?;
    fidelity_efficiency(&eff, &ideal)
}

/// Evaluates every (κ, γ) pair; rows are in row-major order (κ outer, γ inner).
pub fn fe_sweep(
    kappas: &[f64],
    gammas: &[f64],
    omega: f64,
    clamp_r0: bool,
    workers: Option<usize>,
) -> Result<Vec<FERow>, CavityError> {
    if kappas.is_empty() || gammas.is_empty() {
        return Err(CavityError::EmptyGrid);
    }
    let points: Vec<(f64, f64)> = kappas
        .iter()
        .flat_map(|&k| gammas.iter().map(move |&g| (k, g)))
        .collect();
    for &(k, g) in &points {
        CavityParams::new(k, g, omega)?;
    }
    map_indexed(points.len(), workers, |i| {
        let (k, g) = points[i];
        let result = fe_point(CavityParams::new(k, g, omega)?, clamp_r0)?;
        Ok(FERow {
            kappa_over_g: k,
            gamma_over_g: g,
            omega_over_g: omega,
            result,
        })
    })
    .into_iter()
    .collect()
}

pub fn write_fe_csv<W: Write>(rows: &[FERow], mut w: W) -> io::Result<()> {
    writeln!(w, "{FE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.kappa_over_g, r.gamma_over_g, r.omega_over_g, r.result.f, r.result.e
        )?;
    }
    Ok(())
}
