//! Run configuration: TOML with one table per command plus shared `[drive]`, `[noise]`
//! and `[integrator]` tables.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crio_core::protocol::Resource;
use crio_core::quantum::IntegratorOptions;
use crio_core::rydberg::{
    effective_couplings, DrivingParams, GateMode, NoiseParams, DYNAMICAL_DELTA,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    #[serde(rename = "protocol-run")]
    ProtocolRun,
    #[serde(rename = "sweep-fe")]
    SweepFe,
    #[serde(rename = "gate-sim")]
    GateSim,
    #[serde(rename = "avg-fidelity")]
    AvgFidelity,
}

impl Command {
    pub const ALL: [Command; 4] = [
        Command::ProtocolRun,
        Command::SweepFe,
        Command::GateSim,
        Command::AvgFidelity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::ProtocolRun => "protocol-run",
            Command::SweepFe => "sweep-fe",
            Command::GateSim => "gate-sim",
            Command::AvgFidelity => "avg-fidelity",
        }
    }

    /// Format used when neither the flag nor the config picks one.
    pub fn default_format(self) -> Format {
        match self {
            Command::SweepFe => Format::Csv,
            _ => Format::Json,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CliError::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceKind {
    Auto,
    Star,
    ControlledBell,
}

impl From<ResourceKind> for Resource {
    fn from(r: ResourceKind) -> Self {
        match r {
            ResourceKind::Auto => Resource::Auto,
            ResourceKind::Star => Resource::Star,
            ResourceKind::ControlledBell => Resource::ControlledBell,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AverageOver {
    Angles,
    Inputs,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

/// Laser and interaction parameters in rad/μs. Missing entries take the operating point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[serde(default, rename = "V0", skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_unit: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_c: Option<f64>,
    #[serde(default, rename = "kappa_C", skip_serializing_if = "Option::is_none")]
    pub kappa_t: Option<f64>,
}

/// Angles `[theta, phi]` on the Bloch sphere.
pub type Bloch = [f64; 2];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_parties: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<ResourceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Vec<Bloch>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<Bloch>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_r0: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<GateMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Real amplitudes `[c0, c1]` of the control atom; normalized on use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvgSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<GateMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub over: Option<AverageOver>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_phi: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_polar: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_azimuth: Option<usize>,
    /// Gate angles for the input average.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// Input state for the angle average.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(
        default,
        rename = "protocol-run",
        skip_serializing_if = "Option::is_none"
    )]
    pub protocol_run: Option<ProtocolSection>,
    #[serde(default, rename = "sweep-fe", skip_serializing_if = "Option::is_none")]
    pub sweep_fe: Option<SweepSection>,
    #[serde(default, rename = "gate-sim", skip_serializing_if = "Option::is_none")]
    pub gate_sim: Option<GateSection>,
    #[serde(
        default,
        rename = "avg-fidelity",
        skip_serializing_if = "Option::is_none"
    )]
    pub avg_fidelity: Option<AvgSection>,
}

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TAU: f64 = 400.0;
pub const DEFAULT_KAPPAS: [f64; 2] = [1.0, 2.0];
pub const DEFAULT_GAMMAS: [f64; 2] = [0.1, 0.2];

/// Real amplitudes of the default two-qubit input: (|0⟩+√2|1⟩)/√3 ⊗ (√3|0⟩+|1⟩)/2.
pub fn default_control() -> [f64; 2] {
    [1.0, 2f64.sqrt()]
}

pub fn default_target() -> [f64; 2] {
    [3f64.sqrt(), 1.0]
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn finite(field: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(format!("{field}: expected a finite number, got {x}")))
    }
}

fn non_negative(field: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(bad(format!(
            "{field}: expected a non-negative number, got {x}"
        )))
    }
}

fn positive_count(field: &str, n: usize) -> Result<usize, CliError> {
    if n == 0 {
        Err(bad(format!("{field}: must be at least 1")))
    } else {
        Ok(n)
    }
}

fn amplitudes(field: &str, a: [f64; 2]) -> Result<[f64; 2], CliError> {
    finite(field, a[0])?;
    finite(field, a[1])?;
    if a[0] == 0.0 && a[1] == 0.0 {
        return Err(bad(format!("{field}: amplitudes must not both vanish")));
    }
    Ok(a)
}

fn bloch(field: &str, b: Bloch) -> Result<Bloch, CliError> {
    let t = finite(field, b[0])?;
    finite(field, b[1])?;
    if !(0.0..=PI).contains(&t) {
        return Err(bad(format!("{field}: theta = {t} outside [0, pi]")));
    }
    Ok(b)
}

fn random_bloch(rng: &mut ChaCha8Rng) -> Bloch {
    let u: f64 = rng.gen();
    [
        (1.0 - 2.0 * u).clamp(-1.0, 1.0).acos(),
        rng.gen_range(0.0..TAU),
    ]
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| bad(e.to_string()))
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| bad("command: missing"))
    }

    /// Fills every default, draws seeded random inputs, validates, and drops the tables the
    /// command does not read. The result is a fixed point of `normalize`.
    pub fn normalize(&self) -> Result<Self, CliError> {
        let command = self.command()?;
        let seed = self.seed.unwrap_or(DEFAULT_SEED);
        if seed > i64::MAX as u64 {
            return Err(bad(format!("seed: {seed} exceeds {}", i64::MAX)));
        }
        let mut out = RunConfig {
            command: Some(command),
            seed: Some(seed),
            output: self.output.clone(),
            format: Some(self.format.unwrap_or(command.default_format())),
            ..RunConfig::default()
        };
        match command {
            Command::ProtocolRun => {
                out.protocol_run = Some(self.normalize_protocol(seed)?);
            }
            Command::SweepFe => {
                out.sweep_fe = Some(self.normalize_sweep()?);
            }
            Command::GateSim => {
                let g = self.gate_sim.clone().unwrap_or_default();
                let mode = g.mode.unwrap_or(GateMode::FullResonant);
                let samples = g.samples.unwrap_or(401);
                if samples < 2 {
                    return Err(bad("gate-sim.samples: must be at least 2"));
                }
                out.gate_sim = Some(GateSection {
                    mode: Some(mode),
                    samples: Some(samples),
                    control: Some(amplitudes(
                        "gate-sim.control",
                        g.control.unwrap_or_else(default_control),
                    )?),
                    target: Some(amplitudes(
                        "gate-sim.target",
                        g.target.unwrap_or_else(default_target),
                    )?),
                });
                out.drive = Some(self.normalize_drive(mode)?);
                out.noise = Some(self.normalize_noise()?);
                out.integrator = Some(self.normalize_integrator()?);
            }
            Command::AvgFidelity => {
                let a = self.avg_fidelity.clone().unwrap_or_default();
                let mode = a.mode.unwrap_or(GateMode::FullResonant);
                let drive = self.normalize_drive(mode)?;
                let params = drive_params(&drive)?;
                let e = effective_couplings(&params).map_err(|e| bad(format!("drive: {e}")))?;
                let theta = finite("avg-fidelity.theta", a.theta.unwrap_or(e.theta))?;
                let phi = finite("avg-fidelity.phi", a.phi.unwrap_or(e.phi))?;
                out.avg_fidelity = Some(AvgSection {
                    mode: Some(mode),
                    over: Some(a.over.unwrap_or(AverageOver::Angles)),
                    n_theta: Some(positive_count(
                        "avg-fidelity.n_theta",
                        a.n_theta.unwrap_or(8),
                    )?),
                    n_phi: Some(positive_count("avg-fidelity.n_phi", a.n_phi.unwrap_or(8))?),
                    n_polar: Some(positive_count(
                        "avg-fidelity.n_polar",
                        a.n_polar.unwrap_or(5),
                    )?),
                    n_azimuth: Some(positive_count(
                        "avg-fidelity.n_azimuth",
                        a.n_azimuth.unwrap_or(4),
                    )?),
                    theta: Some(theta),
                    phi: Some(phi),
                    control: Some(amplitudes(
                        "avg-fidelity.control",
                        a.control.unwrap_or_else(default_control),
                    )?),
                    target: Some(amplitudes(
                        "avg-fidelity.target",
                        a.target.unwrap_or_else(default_target),
                    )?),
                });
                out.drive = Some(drive);
                out.noise = Some(self.normalize_noise()?);
            }
        }
        Ok(out)
    }

    fn normalize_protocol(&self, seed: u64) -> Result<ProtocolSection, CliError> {
        let p = self.protocol_run.clone().unwrap_or_default();
        let n = p.n_parties.unwrap_or(3);
        if n < 3 || n.is_multiple_of(2) {
            return Err(bad(format!(
                "protocol-run.n_parties: expected an odd number >= 3, got {n}"
            )));
        }
        let channels = (n - 1) / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = match p.alpha {
            Some(v) => v,
            None => (0..channels).map(|_| rng.gen_range(-PI..PI)).collect(),
        };
        let axis = match p.axis {
            Some(v) => v,
            None => (0..channels).map(|_| random_bloch(&mut rng)).collect(),
        };
        let target = match p.target {
            Some(v) => v,
            None => (0..channels).map(|_| random_bloch(&mut rng)).collect(),
        };
        for (name, len) in [
            ("alpha", alpha.len()),
            ("axis", axis.len()),
            ("target", target.len()),
        ] {
            if len != channels {
                return Err(bad(format!(
                    "protocol-run.{name}: expected {channels} entries for n_parties = {n}, got {len}"
                )));
            }
        }
        for a in &alpha {
            finite("protocol-run.alpha", *a)?;
        }
        for b in axis.iter().chain(&target) {
            bloch("protocol-run.axis/target", *b)?;
        }
        Ok(ProtocolSection {
            n_parties: Some(n),
            resource: Some(p.resource.unwrap_or(ResourceKind::Auto)),
            alpha: Some(alpha),
            axis: Some(axis),
            target: Some(target),
            transcript: p.transcript,
        })
    }

    fn normalize_sweep(&self) -> Result<SweepSection, CliError> {
        let s = self.sweep_fe.clone().unwrap_or_default();
        let kappa = s.kappa.unwrap_or_else(|| DEFAULT_KAPPAS.to_vec());
        let gamma = s.gamma.unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
        if kappa.is_empty() || gamma.is_empty() {
            return Err(bad("sweep-fe: kappa and gamma grids must be non-empty"));
        }
        for &k in &kappa {
            non_negative("sweep-fe.kappa", k)?;
        }
        for &g in &gamma {
            non_negative("sweep-fe.gamma", g)?;
        }
        let omega = finite("sweep-fe.omega", s.omega.unwrap_or(0.0))?;
        if omega == 0.0 && kappa.contains(&0.0) {
            return Err(bad("sweep-fe.kappa: 0 requires a nonzero omega"));
        }
        Ok(SweepSection {
            kappa: Some(kappa),
            gamma: Some(gamma),
            omega: Some(omega),
            clamp_r0: Some(s.clamp_r0.unwrap_or(true)),
        })
    }

    fn normalize_drive(&self, mode: GateMode) -> Result<DriveSection, CliError> {
        let d = self.drive.clone().unwrap_or_default();
        let mut p = DrivingParams::operating_point();
        let set = |field: &str, slot: &mut f64, v: Option<f64>| -> Result<(), CliError> {
            if let Some(x) = v {
                *slot = finite(&format!("drive.{field}"), x)?;
            }
            Ok(())
        };
        set("omega0", &mut p.omega0, d.omega0)?;
        set("omega1", &mut p.omega1, d.omega1)?;
        set("omega2", &mut p.omega2, d.omega2)?;
        set("phi1", &mut p.phi1, d.phi1)?;
        set("phi2", &mut p.phi2, d.phi2)?;
        set("delta0", &mut p.delta0, d.delta0)?;
        set("delta1", &mut p.delta1, d.delta1)?;
        set("delta2", &mut p.delta2, d.delta2)?;
        set("base_unit", &mut p.base_unit, d.base_unit)?;
        for (field, x) in [
            ("omega0", p.omega0),
            ("omega1", p.omega1),
            ("omega2", p.omega2),
        ] {
            non_negative(&format!("drive.{field}"), x)?;
        }
        let delta = match (d.v0, d.delta) {
            (None, None) => Some(if mode.is_dynamical() {
                DYNAMICAL_DELTA
            } else {
                0.0
            }),
            (_, delta) => delta,
        };
        if let Some(x) = d.v0 {
            finite("drive.V0", x)?;
        }
        if let Some(x) = delta {
            finite("drive.delta", x)?;
        }
        let p = p
            .reconcile(d.v0, delta)
            .map_err(|e| bad(format!("drive: {e}")))?;
        p.validate().map_err(|e| bad(format!("drive: {e}")))?;
        Ok(DriveSection {
            omega0: Some(p.omega0),
            omega1: Some(p.omega1),
            omega2: Some(p.omega2),
            phi1: Some(p.phi1),
            phi2: Some(p.phi2),
            delta0: Some(p.delta0),
            delta1: Some(p.delta1),
            delta2: Some(p.delta2),
            v0: Some(p.v0),
            delta: None,
            base_unit: Some(p.base_unit),
        })
    }

    fn normalize_noise(&self) -> Result<NoiseSection, CliError> {
        let n = self.noise.clone().unwrap_or_default();
        let tau = n.tau.unwrap_or(DEFAULT_TAU);
        if !(tau.is_finite() && tau > 0.0) {
            return Err(bad(format!(
                "noise.tau: expected a positive number, got {tau}"
            )));
        }
        let base = 1.0 / (8.0 * tau);
        let rate = |field: &str, v: Option<f64>| {
            non_negative(&format!("noise.{field}"), v.unwrap_or(base))
        };
        Ok(NoiseSection {
            enabled: Some(n.enabled.unwrap_or(true)),
            tau: Some(tau),
            gamma0: Some(rate("gamma0", n.gamma0)?),
            gamma1: Some(rate("gamma1", n.gamma1)?),
            kappa_c: Some(rate("kappa_c", n.kappa_c)?),
            kappa_t: Some(rate("kappa_C", n.kappa_t)?),
        })
    }

    fn normalize_integrator(&self) -> Result<IntegratorSection, CliError> {
        let i = self.integrator.clone().unwrap_or_default();
        let d = IntegratorOptions::default();
        let rtol = non_negative("integrator.rtol", i.rtol.unwrap_or(d.rtol))?;
        let atol = non_negative("integrator.atol", i.atol.unwrap_or(d.atol))?;
        if rtol + atol == 0.0 {
            return Err(bad("integrator: rtol and atol cannot both be 0"));
        }
        if let Some(h) = i.max_step {
            if !(h.is_finite() && h > 0.0) {
                return Err(bad(format!(
                    "integrator.max_step: expected a positive number, got {h}"
                )));
            }
        }
        let max_steps = positive_count("integrator.max_steps", i.max_steps.unwrap_or(d.max_steps))?;
        Ok(IntegratorSection {
            rtol: Some(rtol),
            atol: Some(atol),
            max_step: i.max_step,
            max_steps: Some(max_steps),
        })
    }
}

/// Driving parameters of a normalized `[drive]` table.
pub fn drive_params(d: &DriveSection) -> Result<DrivingParams, CliError> {
    let get = |field: &str, v: Option<f64>| v.ok_or_else(|| bad(format!("drive.{field}: missing")));
    let p = DrivingParams {
        omega0: get("omega0", d.omega0)?,
        omega1: get("omega1", d.omega1)?,
        omega2: get("omega2", d.omega2)?,
        phi1: get("phi1", d.phi1)?,
        phi2: get("phi2", d.phi2)?,
        delta0: get("delta0", d.delta0)?,
        delta1: get("delta1", d.delta1)?,
        delta2: get("delta2", d.delta2)?,
        v: 0.0,
        v0: 0.0,
        base_unit: get("base_unit", d.base_unit)?,
    };
    p.reconcile(d.v0, d.delta)
        .map_err(|e| bad(format!("drive: {e}")))
}

/// Noise rates of a normalized `[noise]` table; `None` when disabled.
pub fn noise_params(n: &NoiseSection) -> Result<Option<NoiseParams>, CliError> {
    if !n.enabled.unwrap_or(true) {
        return Ok(None);
    }
    let get = |field: &str, v: Option<f64>| v.ok_or_else(|| bad(format!("noise.{field}: missing")));
    let p = NoiseParams {
        tau: get("tau", n.tau)?,
        gamma0: get("gamma0", n.gamma0)?,
        gamma1: get("gamma1", n.gamma1)?,
        kappa_c: get("kappa_c", n.kappa_c)?,
        kappa_t: get("kappa_C", n.kappa_t)?,
    };
    p.validate().map_err(|e| bad(format!("noise: {e}")))?;
    Ok(Some(p))
}

pub fn integrator_options(i: &IntegratorSection) -> IntegratorOptions {
    let d = IntegratorOptions::default();
    IntegratorOptions {
        rtol: i.rtol.unwrap_or(d.rtol),
        atol: i.atol.unwrap_or(d.atol),
        max_step: i.max_step,
        max_steps: i.max_steps.unwrap_or(d.max_steps),
        ..d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normalized(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap().normalize().unwrap()
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("command = \"gate-sim\"\nfoo = 1\n").is_err());
        assert!(RunConfig::parse("[gate-sim]\nmodee = \"FullResonant\"\n").is_err());
        assert!(RunConfig::parse("[bogus]\n").is_err());
    }

    #[test]
    fn unknown_command_rejected() {
        assert!(RunConfig::parse("command = \"teleport\"\n").is_err());
        assert!("teleport".parse::<Command>().is_err());
    }

    #[test]
    fn seed_defaults_to_zero() {
        let c = normalized("command = \"sweep-fe\"\n");
        assert_eq!(c.seed, Some(0));
    }

    #[test]
    fn negative_rates_rejected() {
        for text in [
            "command = \"sweep-fe\"\n[sweep-fe]\ngamma = [-0.1]\n",
            "command = \"gate-sim\"\n[noise]\ngamma0 = -1.0\n",
            "command = \"gate-sim\"\n[noise]\ntau = 0\n",
        ] {
            assert!(
                RunConfig::parse(text).unwrap().normalize().is_err(),
                "{text}"
            );
        }
    }

    #[test]
    fn integers_accepted_for_floats() {
        let c = normalized("command = \"sweep-fe\"\n[sweep-fe]\nkappa = [1, 2]\n");
        assert_eq!(c.sweep_fe.unwrap().kappa, Some(vec![1.0, 2.0]));
    }

    #[test]
    fn normalization_is_idempotent() {
        for cmd in Command::ALL {
            let c = normalized(&format!("command = \"{cmd}\"\n"));
            let echo = c.to_toml().unwrap();
            let again = RunConfig::parse(&echo).unwrap().normalize().unwrap();
            assert_eq!(again, c, "{cmd}");
            assert_eq!(again.to_toml().unwrap(), echo, "{cmd}");
        }
    }

    #[test]
    fn irrelevant_tables_dropped() {
        let c = normalized("command = \"sweep-fe\"\n[gate-sim]\nmode = \"FullDynamical\"\n");
        assert!(c.gate_sim.is_none() && c.drive.is_none());
    }

    #[test]
    fn dynamical_mode_picks_dynamical_detuning() {
        let c = normalized("command = \"gate-sim\"\n[gate-sim]\nmode = \"FullDynamical\"\n");
        let p = drive_params(c.drive.as_ref().unwrap()).unwrap();
        assert!((p.delta() - DYNAMICAL_DELTA).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_v0_and_delta_rejected() {
        let text = "command = \"gate-sim\"\n[drive]\nV0 = 1.0\ndelta = 5.0\n";
        assert!(RunConfig::parse(text).unwrap().normalize().is_err());
    }

    #[test]
    fn random_protocol_inputs_follow_seed() {
        let a = normalized("command = \"protocol-run\"\nseed = 7\n");
        let b = normalized("command = \"protocol-run\"\nseed = 7\n");
        let c = normalized("command = \"protocol-run\"\nseed = 8\n");
        assert_eq!(a, b);
        assert_ne!(a.protocol_run, c.protocol_run);
    }

    #[test]
    fn party_count_checked() {
        for n in [1, 2, 4] {
            let text = format!("command = \"protocol-run\"\n[protocol-run]\nn_parties = {n}\n");
            assert!(RunConfig::parse(&text).unwrap().normalize().is_err());
        }
        let text = "command = \"protocol-run\"\n[protocol-run]\nn_parties = 5\nalpha = [0.1]\n";
        assert!(RunConfig::parse(text).unwrap().normalize().is_err());
    }
}
