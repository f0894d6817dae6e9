use std::fmt::Write as _;
use std::time::Instant;

use crio_core::cavity::{fe_sweep, write_fe_csv, CavityError, FERow};
use crio_core::parallel::workers_from_env;
use crio_core::protocol::{run_crio, CrioConfig, ProtocolError, ProtocolTranscript};
use crio_core::rydberg::{
    average_fidelity_angles, average_fidelity_inputs, simulate_gate, AngleGrid, DrivingParams,
    GateMode, GateOptions, GateRun, InputGrid, RydbergError,
};
use crio_core::{BlochAxis, StateVector, C64};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    drive_params, integrator_options, noise_params, AverageOver, Command, Format, RunConfig,
};
use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct ReceiverRow {
    pub branch: String,
    pub probability: f64,
    pub party: String,
    pub qubit: String,
    pub fidelity: f64,
}

#[derive(Clone, Debug)]
pub struct ProtocolPayload {
    pub n_parties: usize,
    pub completed: bool,
    pub rows: Vec<ReceiverRow>,
    pub transcript: ProtocolTranscript,
}

#[derive(Clone, Debug)]
pub struct GatePayload {
    pub mode: GateMode,
    pub params: DrivingParams,
    pub run: GateRun,
}

#[derive(Clone, Debug)]
pub struct AveragePayload {
    pub mode: GateMode,
    pub over: AverageOver,
    /// Grid coordinates of each point, aligned with `values`.
    pub points: Vec<Vec<f64>>,
    pub columns: Vec<&'static str>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug)]
pub enum Payload {
    Protocol(ProtocolPayload),
    Sweep(Vec<FERow>),
    Gate(Box<GatePayload>),
    Average(AveragePayload),
}

#[derive(Clone, Debug)]
pub struct ResultEnvelope {
    /// TOML text of the normalized config.
    pub config: String,
    pub normalized: RunConfig,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub payload: Payload,
    pub warnings: Vec<String>,
}

impl From<RydbergError> for CliError {
    fn from(e: RydbergError) -> Self {
        match e {
            RydbergError::NoConvergence(_)
            | RydbergError::Quantum(_)
            | RydbergError::Integrator(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<CavityError> for CliError {
    fn from(e: CavityError) -> Self {
        match e {
            CavityError::InvalidParam { .. } | CavityError::Singular | CavityError::EmptyGrid => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::InvalidPartyCount(_)
            | ProtocolError::InvalidTarget
            | ProtocolError::ArityMismatch { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn two_qubit(control: [f64; 2], target: [f64; 2]) -> Result<StateVector, CliError> {
    let c = C64::new;
    let amps = [
        c(control[0] * target[0], 0.0),
        c(control[0] * target[1], 0.0),
        c(control[1] * target[0], 0.0),
        c(control[1] * target[1], 0.0),
    ];
    let s =
        StateVector::from_slice(vec![2, 2], &amps).map_err(|e| CliError::Config(e.to_string()))?;
    s.normalize().map_err(|e| CliError::Config(e.to_string()))
}

fn section<T: Clone>(s: &Option<T>, name: &str) -> Result<T, CliError> {
    s.clone()
        .ok_or_else(|| CliError::Config(format!("[{name}]: missing after normalization")))
}

/// Normalizes `config`, dispatches to the owning module and wraps the result.
pub fn run_command(config: &RunConfig) -> Result<ResultEnvelope, CliError> {
    let start = Instant::now();
    let norm = config.normalize()?;
    let echo = norm.to_toml()?;
    let workers = workers_from_env();
    let mut warnings = Vec::new();
    let payload = match norm.command()? {
        Command::ProtocolRun => {
            let p = section(&norm.protocol_run, "protocol-run")?;
            let n = p.n_parties.unwrap_or(3);
            let axes = p
                .axis
                .unwrap_or_default()
                .iter()
                .map(|a| BlochAxis::new(a[0], a[1]))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let targets = p
                .target
                .unwrap_or_default()
                .iter()
                .map(|t| StateVector::from_bloch(t[0], t[1]))
                .collect();
            let mut cfg = CrioConfig::new(n, p.alpha.unwrap_or_default(), axes, targets);
            if let Some(r) = p.resource {
                cfg.resource = r.into();
            }
            let out = run_crio(&cfg)?;
            let rows = out
                .branches
                .iter()
                .flat_map(|b| {
                    b.receivers.iter().map(move |r| ReceiverRow {
                        branch: b.id.clone(),
                        probability: b.probability,
                        party: r.party.clone(),
                        qubit: r.qubit.clone(),
                        fidelity: r.fidelity,
                    })
                })
                .collect();
            Payload::Protocol(ProtocolPayload {
                n_parties: n,
                completed: out.completed,
                rows,
                transcript: out.transcript,
            })
        }
        Command::SweepFe => {
            let s = section(&norm.sweep_fe, "sweep-fe")?;
            let rows = fe_sweep(
                &s.kappa.unwrap_or_default(),
                &s.gamma.unwrap_or_default(),
                s.omega.unwrap_or(0.0),
                s.clamp_r0.unwrap_or(true),
                workers,
            )?;
            Payload::Sweep(rows)
        }
        Command::GateSim => {
            let g = section(&norm.gate_sim, "gate-sim")?;
            let params = drive_params(&section(&norm.drive, "drive")?)?;
            let noise = noise_params(&section(&norm.noise, "noise")?)?;
            let opts = GateOptions {
                samples: g.samples.unwrap_or(401),
                integrator: integrator_options(&section(&norm.integrator, "integrator")?),
            };
            let psi0 = two_qubit(
                g.control.unwrap_or_else(crate::config::default_control),
                g.target.unwrap_or_else(crate::config::default_target),
            )?;
            let mode = g.mode.unwrap_or(GateMode::FullResonant);
            let run = simulate_gate(&params, noise.as_ref(), mode, &psi0, &opts)?;
            warnings.extend(run.warnings.iter().cloned());
            Payload::Gate(Box::new(GatePayload { mode, params, run }))
        }
        Command::AvgFidelity => {
            let a = section(&norm.avg_fidelity, "avg-fidelity")?;
            let params = drive_params(&section(&norm.drive, "drive")?)?;
            warnings.extend(params.validate()?);
            let noise = noise_params(&section(&norm.noise, "noise")?)?;
            let mode = a.mode.unwrap_or(GateMode::FullResonant);
            let over = a.over.unwrap_or(AverageOver::Angles);
            let (points, columns, avg) = match over {
                AverageOver::Angles => {
                    let grid = AngleGrid {
                        n_theta: a.n_theta.unwrap_or(8),
                        n_phi: a.n_phi.unwrap_or(8),
                    };
                    let psi0 = two_qubit(
                        a.control.unwrap_or_else(crate::config::default_control),
                        a.target.unwrap_or_else(crate::config::default_target),
                    )?;
                    let avg = average_fidelity_angles(
                        &params,
                        noise.as_ref(),
                        mode,
                        &psi0,
                        &grid,
                        workers,
                    )?;
                    let pts = grid.points().iter().map(|&(t, p)| vec![t, p]).collect();
                    (pts, vec!["theta", "phi"], avg)
                }
                AverageOver::Inputs => {
                    let grid = InputGrid {
                        n_polar: a.n_polar.unwrap_or(5),
                        n_azimuth: a.n_azimuth.unwrap_or(4),
                    };
                    let angles = (a.theta.unwrap_or(0.0), a.phi.unwrap_or(0.0));
                    let avg = average_fidelity_inputs(
                        &params,
                        noise.as_ref(),
                        mode,
                        angles,
                        &grid,
                        workers,
                    )?;
                    let pts = grid.points().iter().map(|p| p.betas.to_vec()).collect();
                    (
                        pts,
                        vec!["beta1", "beta2", "beta3", "beta4", "beta5", "beta6"],
                        avg,
                    )
                }
            };
            Payload::Average(AveragePayload {
                mode,
                over,
                points,
                columns,
                values: avg.values,
                mean: avg.mean,
                min: avg.min,
                max: avg.max,
            })
        }
    };
    Ok(ResultEnvelope {
        config: echo,
        normalized: norm,
        version: ARTIFACT_VERSION,
        wall_time_s: start.elapsed().as_secs_f64(),
        payload,
        warnings,
    })
}

impl Payload {
    pub fn to_json(&self) -> Result<Value, CliError> {
        let v = match self {
            Payload::Protocol(p) => json!({
                "n_parties": p.n_parties,
                "completed": p.completed,
                "min_fidelity": p.rows.iter().map(|r| r.fidelity).fold(f64::INFINITY, f64::min),
                "receivers": p.rows,
                "transcript": p.transcript.events,
            }),
            Payload::Sweep(rows) => json!({ "rows": rows }),
            Payload::Gate(g) => json!({
                "T_us": g.run.gate_time,
                "fidelity": g.run.fidelity,
                "max_pRR": g.run.max_p_rr,
                "mode": g.mode,
                "params": g.params,
            }),
            Payload::Average(a) => json!({
                "mode": a.mode,
                "over": a.over,
                "n_points": a.values.len(),
                "mean": a.mean,
                "min": a.min,
                "max": a.max,
            }),
        };
        Ok(v)
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut out = String::new();
        match self {
            Payload::Protocol(p) => {
                out.push_str("branch,probability,party,qubit,fidelity\n");
                for r in &p.rows {
                    let _ = writeln!(
                        out,
                        "{},{:.6},{},{},{:.6}",
                        r.branch, r.probability, r.party, r.qubit, r.fidelity
                    );
                }
            }
            Payload::Sweep(rows) => {
                let mut buf = Vec::new();
                write_fe_csv(rows, &mut buf).map_err(CliError::Io)?;
                out = String::from_utf8(buf).expect("ascii csv");
            }
            Payload::Gate(g) => {
                let mut buf = Vec::new();
                g.run.trace.write_csv(&mut buf).map_err(CliError::Io)?;
                out = String::from_utf8(buf).expect("ascii csv");
            }
            Payload::Average(a) => {
                let _ = writeln!(out, "{},fidelity", a.columns.join(","));
                for (pt, f) in a.points.iter().zip(&a.values) {
                    for x in pt {
                        let _ = write!(out, "{x:.6},");
                    }
                    let _ = writeln!(out, "{f:.8}");
                }
            }
        }
        Ok(out)
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json()?)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
        }
    }

    pub fn transcript(&self) -> Option<&ProtocolTranscript> {
        match self {
            Payload::Protocol(p) => Some(&p.transcript),
            _ => None,
        }
    }
}
