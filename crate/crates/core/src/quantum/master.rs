use std::collections::BTreeMap;

use thiserror::Error;

use super::{CMatrix, DensityMatrix, Operator, QuantumError, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasterEquationError {
    #[error("step size underflow at t = {t} (h = {h:.3e}); the problem looks stiff")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("hamiltonian not hermitian at t = {t} (max deviation {deviation:.3e})")]
    NonHermitian { t: f64, deviation: f64 },
    #[error("invalid time span or output grid: {0}")]
    InvalidGrid(String),
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Hermitian generator sampled by the integrator.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;
    /// Overwrites `out` with H(t).
    fn fill(&self, t: f64, out: &mut CMatrix);
}

#[derive(Clone, Debug)]
pub struct ConstHamiltonian(pub CMatrix);

impl Hamiltonian for ConstHamiltonian {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn fill(&self, _t: f64, out: &mut CMatrix) {
        out.copy_from(&self.0);
    }
}

impl Hamiltonian for Operator {
    fn dim(&self) -> usize {
        Operator::dim(self)
    }

    fn fill(&self, _t: f64, out: &mut CMatrix) {
        out.copy_from(self.matrix());
    }
}

/// Wraps a closure `|t, out| ...` as a [`Hamiltonian`].
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &mut CMatrix) + Sync> FnHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &mut CMatrix) + Sync> Hamiltonian for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fill(&self, t: f64, out: &mut CMatrix) {
        (self.f)(t, out)
    }
}

/// Nonzero entries of a jump operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseJump {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseJump {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Absolute floor for the step size.
    pub min_step: f64,
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            min_step: 1e-14,
            max_step: None,
            max_steps: 20_000_000,
        }
    }
}

impl IntegratorOptions {
    fn validate(&self) -> Result<(), MasterEquationError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.rtol) || !ok(self.atol) || self.rtol + self.atol == 0.0 {
            return Err(MasterEquationError::InvalidTolerance(format!(
                "rtol = {}, atol = {}",
                self.rtol, self.atol
            )));
        }
        if let Some(h) = self.max_step {
            if !(h.is_finite() && h > 0.0) {
                return Err(MasterEquationError::InvalidTolerance(format!(
                    "max_step = {h}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OutputGrid {
    /// Initial and final time only.
    Endpoints,
    /// `n ≥ 2` evenly spaced points including both ends.
    Uniform(usize),
    /// Explicit strictly increasing times inside the span.
    Times(Vec<f64>),
}

impl OutputGrid {
    fn resolve(&self, t0: f64, t1: f64) -> Result<Vec<f64>, MasterEquationError> {
        let times = match self {
            OutputGrid::Endpoints => vec![t0, t1],
            OutputGrid::Uniform(n) => {
                if *n < 2 {
                    return Err(MasterEquationError::InvalidGrid(format!(
                        "uniform grid needs at least 2 points, got {n}"
                    )));
                }
                (0..*n)
                    .map(|k| {
                        if k + 1 == *n {
                            t1
                        } else {
                            t0 + (t1 - t0) * k as f64 / (*n - 1) as f64
                        }
                    })
                    .collect()
            }
            OutputGrid::Times(ts) => ts.clone(),
        };
        if times.is_empty() {
            return Err(MasterEquationError::InvalidGrid("empty output grid".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MasterEquationError::InvalidGrid(
                "output times must be strictly increasing".into(),
            ));
        }
        if times[0] < t0 || *times.last().unwrap() > t1 {
            return Err(MasterEquationError::InvalidGrid(
                "output times must lie inside the span".into(),
            ));
        }
        Ok(times)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub observables: BTreeMap<String, Vec<f64>>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory is never empty")
    }

    /// Evaluates `f` on every stored state and records it under `name`.
    pub fn add_observable<F: Fn(&DensityMatrix) -> f64>(&mut self, name: &str, f: F) {
        let series = self.states.iter().map(f).collect();
        self.observables.insert(name.to_string(), series);
    }

    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(Vec::as_slice)
    }
}

struct Rhs<'a, H: Hamiltonian + ?Sized> {
    h: &'a H,
    n: usize,
    jumps: Vec<SparseJump>,
    /// ½ Σ L†L.
    half_k: CMatrix,
    hbuf: CMatrix,
    g: Vec<C64>,
    x: Vec<C64>,
    evals: usize,
}

impl<'a, H: Hamiltonian + ?Sized> Rhs<'a, H> {
    fn new(h: &'a H, lindblads: &[Operator]) -> Self {
        let n = h.dim();
        let mut half_k = CMatrix::zeros(n, n);
        for l in lindblads {
            half_k += l.matrix().adjoint() * l.matrix();
        }
        half_k *= C64::new(0.5, 0.0);
        Self {
            h,
            n,
            jumps: lindblads
                .iter()
                .map(|l| SparseJump::from_matrix(l.matrix()))
                .collect(),
            half_k,
            hbuf: CMatrix::zeros(n, n),
            g: vec![C64::new(0.0, 0.0); n * n],
            x: vec![C64::new(0.0, 0.0); n * n],
            evals: 0,
        }
    }

    /// dρ = Gρ + (Gρ)† + Σ LρL†, with G = −iH − ½ΣL†L; column-major storage.
    fn eval(&mut self, t: f64, rho: &[C64], out: &mut [C64]) -> Result<(), MasterEquationError> {
        self.evals += 1;
        let n = self.n;
        self.h.fill(t, &mut self.hbuf);
        let mut scale: f64 = 1.0;
        let mut dev: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                let a = self.hbuf[(i, j)];
                scale = scale.max(a.norm());
                dev = dev.max((a - self.hbuf[(j, i)].conj()).norm());
            }
        }
        if dev > 1e-10 * scale || !dev.is_finite() {
            return Err(MasterEquationError::NonHermitian { t, deviation: dev });
        }
        let mi = C64::new(0.0, -1.0);
        for j in 0..n {
            for i in 0..n {
                self.g[i + j * n] = mi * self.hbuf[(i, j)] - self.half_k[(i, j)];
            }
        }
        self.x.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for j in 0..n {
            for k in 0..n {
                let r = rho[k + j * n];
                if r == C64::new(0.0, 0.0) {
                    continue;
                }
                let gcol = &self.g[k * n..(k + 1) * n];
                let xcol = &mut self.x[j * n..(j + 1) * n];
                for (xi, gi) in xcol.iter_mut().zip(gcol) {
                    *xi += gi * r;
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                out[i + j * n] = self.x[i + j * n] + self.x[j + i * n].conj();
            }
        }
        for jump in &self.jumps {
            for &(a, i, v1) in &jump.entries {
                for &(b, j, v2) in &jump.entries {
                    out[a + b * n] += v1 * rho[i + j * n] * v2.conj();
                }
            }
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Error coefficients b − b*.
const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

fn combine(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        *o = y[i] + acc * h;
    }
}

fn weighted_rms(e: &[C64], y0: &[C64], y1: &[C64], opts: &IntegratorOptions) -> f64 {
    let sum: f64 = e
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(ei, (a, b))| {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            (ei.norm() / sc).powi(2)
        })
        .sum();
    (sum / e.len() as f64).sqrt()
}

/// Adaptive Dormand–Prince 5(4) integration of the Lindblad master equation.
///
/// Steps land exactly on every requested output time. The run is single-threaded and
/// deterministic for identical inputs.
pub fn integrate_master_equation<H: Hamiltonian + ?Sized>(
    h: &H,
    lindblads: &[Operator],
    rho0: &DensityMatrix,
    t_span: (f64, f64),
    grid: &OutputGrid,
    opts: &IntegratorOptions,
) -> Result<Trajectory, MasterEquationError> {
    opts.validate()?;
    let n = h.dim();
    if rho0.dim() != n {
        return Err(QuantumError::DimensionMismatch {
            expected: n,
            found: rho0.dim(),
        }
        .into());
    }
    if let Some(l) = lindblads.iter().find(|l| l.dim() != n) {
        return Err(QuantumError::DimensionMismatch {
            expected: n,
            found: l.dim(),
        }
        .into());
    }
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(MasterEquationError::InvalidGrid(format!(
            "span ({t0}, {t1})"
        )));
    }
    let outputs = grid.resolve(t0, t1)?;
    let dims = rho0.dims().to_vec();
    let mut rhs = Rhs::new(h, lindblads);
    let len = n * n;
    let zero = C64::new(0.0, 0.0);
    let mut y: Vec<C64> = rho0.matrix().as_slice().to_vec();
    let mut k: Vec<Vec<C64>> = vec![vec![zero; len]; 7];
    let mut tmp = vec![zero; len];
    let mut y_new = vec![zero; len];
    let mut err = vec![zero; len];

    let mut times = Vec::with_capacity(outputs.len());
    let mut states = Vec::with_capacity(outputs.len());
    let push = |t: f64, y: &[C64], times: &mut Vec<f64>, states: &mut Vec<DensityMatrix>| {
        let m = CMatrix::from_column_slice(n, n, y);
        times.push(t);
        states.push(DensityMatrix::from_matrix_unchecked(dims.clone(), m).expect("shape"));
    };

    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t0 {
        push(t0, &y, &mut times, &mut states);
        next_out += 1;
    }

    let mut t = t0;
    let mut stats = IntegratorStats::default();
    if next_out < outputs.len() {
        rhs.eval(t, &y, &mut k[0])?;
        let mut step = initial_step(&mut rhs, t, &y, &k[0], t1 - t0, opts)?;
        if let Some(hmax) = opts.max_step {
            step = step.min(hmax);
        }
        while next_out < outputs.len() {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(MasterEquationError::TooManySteps {
                    t,
                    max_steps: opts.max_steps,
                });
            }
            let target = outputs[next_out];
            let h_min = opts.min_step.max(16.0 * f64::EPSILON * t.abs().max(1.0));
            if step < h_min {
                return Err(MasterEquationError::StepSizeUnderflow { t, h: step });
            }
            let lands = t + step >= target;
            let hs = if lands { target - t } else { step };

            let (head, tail) = k.split_at_mut(1);
            let k1 = &head[0];
            let (k2, rest) = tail.split_first_mut().unwrap();
            let (k3, rest) = rest.split_first_mut().unwrap();
            let (k4, rest) = rest.split_first_mut().unwrap();
            let (k5, rest) = rest.split_first_mut().unwrap();
            let (k6, rest) = rest.split_first_mut().unwrap();
            let k7 = &mut rest[0];

            combine(&mut tmp, &y, hs, &[(A21, k1)]);
            rhs.eval(t + C2 * hs, &tmp, k2)?;
            combine(&mut tmp, &y, hs, &[(A31, k1), (A32, k2)]);
            rhs.eval(t + C3 * hs, &tmp, k3)?;
            combine(&mut tmp, &y, hs, &[(A41, k1), (A42, k2), (A43, k3)]);
            rhs.eval(t + C4 * hs, &tmp, k4)?;
            combine(
                &mut tmp,
                &y,
                hs,
                &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)],
            );
            rhs.eval(t + C5 * hs, &tmp, k5)?;
            combine(
                &mut tmp,
                &y,
                hs,
                &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
            );
            rhs.eval(t + hs, &tmp, k6)?;
            combine(
                &mut y_new,
                &y,
                hs,
                &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)],
            );
            let t_new = if lands { target } else { t + hs };
            rhs.eval(t_new, &y_new, k7)?;
            for (i, e) in err.iter_mut().enumerate() {
                *e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                    * hs;
            }
            let en = weighted_rms(&err, &y, &y_new, opts);
            if !en.is_finite() {
                stats.rejected += 1;
                step *= 0.2;
                continue;
            }
            let fac = if en == 0.0 {
                5.0
            } else {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            };
            if en <= 1.0 {
                stats.accepted += 1;
                t = t_new;
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                let proposed = hs * fac;
                step = if lands { step.max(proposed) } else { proposed };
                if let Some(hmax) = opts.max_step {
                    step = step.min(hmax);
                }
                if lands {
                    push(t, &y, &mut times, &mut states);
                    next_out += 1;
                }
            } else {
                stats.rejected += 1;
                step = hs * fac.min(1.0);
            }
        }
    }
    stats.rhs_evals = rhs.evals;
    Ok(Trajectory {
        times,
        states,
        observables: BTreeMap::new(),
        stats,
    })
}

fn initial_step<H: Hamiltonian + ?Sized>(
    rhs: &mut Rhs<'_, H>,
    t: f64,
    y: &[C64],
    f0: &[C64],
    span: f64,
    opts: &IntegratorOptions,
) -> Result<f64, MasterEquationError> {
    if span == 0.0 {
        return Ok(0.0);
    }
    let norm = |v: &[C64]| {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| (vi.norm() / (opts.atol + opts.rtol * yi.norm())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    let y1: Vec<C64> = y.iter().zip(f0).map(|(a, b)| a + b * h0).collect();
    let mut f1 = vec![C64::new(0.0, 0.0); y.len()];
    rhs.eval(t + h0, &y1, &mut f1)?;
    let diff: Vec<C64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Column-stacking Liouvillian: vec(dρ/dt) = 𝓛·vec(ρ).
pub fn liouvillian(h: &CMatrix, lindblads: &[Operator]) -> CMatrix {
    let n = h.nrows();
    let id = CMatrix::identity(n, n);
    let mi = C64::new(0.0, -1.0);
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * mi;
    for op in lindblads {
        let m = op.matrix();
        let k = m.adjoint() * m;
        l += m.conjugate().kronecker(m);
        l -= (id.kronecker(&k) + k.transpose().kronecker(&id)) * C64::new(0.5, 0.0);
    }
    l
}

/// Linear map on column-stacked density matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    n: usize,
    mat: CMatrix,
}

impl Superoperator {
    /// exp(𝓛·t).
    pub fn from_generator(generator: &CMatrix, t: f64) -> Result<Self, QuantumError> {
        let nn = generator.nrows();
        let n = (nn as f64).sqrt().round() as usize;
        if n * n != nn || !generator.is_square() {
            return Err(QuantumError::DimensionMismatch {
                expected: n * n,
                found: nn,
            });
        }
        Ok(Self {
            n,
            mat: (generator * C64::new(t, 0.0)).exp(),
        })
    }

    pub fn from_matrix(mat: CMatrix) -> Result<Self, QuantumError> {
        let nn = mat.nrows();
        let n = (nn as f64).sqrt().round() as usize;
        if n * n != nn || !mat.is_square() {
            return Err(QuantumError::DimensionMismatch {
                expected: n * n,
                found: nn,
            });
        }
        Ok(Self { n, mat })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        let v = nalgebra::DVector::from_column_slice(rho.as_slice());
        let out = &self.mat * v;
        CMatrix::from_column_slice(self.n, self.n, out.as_slice())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix, QuantumError> {
        if rho.dim() != self.n {
            return Err(QuantumError::DimensionMismatch {
                expected: self.n,
                found: rho.dim(),
            });
        }
        DensityMatrix::from_matrix_unchecked(rho.dims().to_vec(), self.apply_matrix(rho.matrix()))
    }

    /// `self` after `first`.
    pub fn after(&self, first: &Superoperator) -> Self {
        Self {
            n: self.n,
            mat: &self.mat * &first.mat,
        }
    }
}

/// Exact propagation under a time-independent generator.
pub fn propagate_static(
    h: &CMatrix,
    lindblads: &[Operator],
    rho0: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix, QuantumError> {
    Superoperator::from_generator(&liouvillian(h, lindblads), t)?.apply(rho0)
}
