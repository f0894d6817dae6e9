//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p crio-cli --test acceptance`. Exits nonzero if any criterion fails.

use std::f64::consts::{PI, TAU};
use std::process::Command;
use std::time::Instant;

use crio_core::cavity::fe_sweep;
use crio_core::protocol::{prepare_graph_state, run_crio, stator_state, CrioConfig};
use crio_core::quantum::{
    integrate_master_equation, pauli_x, pauli_z, CMatrix, ConstHamiltonian, IntegratorOptions,
    OutputGrid,
};
use crio_core::rydberg::{
    average_fidelity_angles, average_fidelity_inputs, effective_couplings, embed_two_qubit,
    gate_channel, holonomic_target_unitary, simulate_gate, AngleGrid, DrivingParams, GateMode,
    GateOptions, InputGrid, NoiseParams, DYNAMICAL_DELTA, I10, I11, IRR,
};
use crio_core::{BlochAxis, DensityMatrix, Operator, StateVector, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn random_bloch(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u: f64 = rng.gen();
    ((1.0 - 2.0 * u).acos(), rng.gen_range(0.0..TAU))
}

fn psi0() -> StateVector {
    let c = [1.0 / 3f64.sqrt(), (2.0 / 3.0f64).sqrt()];
    let t = [3f64.sqrt() / 2.0, 0.5];
    let amps: Vec<C64> = [c[0] * t[0], c[0] * t[1], c[1] * t[0], c[1] * t[1]]
        .iter()
        .map(|&x| C64::new(x, 0.0))
        .collect();
    StateVector::from_slice(vec![2, 2], &amps).unwrap()
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rows = fe_sweep(&[1.0, 2.0], &[0.1, 0.2], 0.0, true, None).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let expected = [
        (2.0, 0.2, 0.9954, 0.9092),
        (1.0, 0.2, 0.9988, 0.9524),
        (1.0, 0.1, 0.9997, 0.9756),
    ];
    let mut pass = elapsed < 1.0;
    let mut detail = Vec::new();
    for (k, g, f, e) in expected {
        let r = rows
            .iter()
            .find(|r| r.kappa_over_g == k && r.gamma_over_g == g)
            .unwrap();
        pass &= within(r.result.f, f, 5e-4) && within(r.result.e, e, 5e-4);
        detail.push(format!(
            "({k},{g})->F={:.4},E={:.4}",
            r.result.f, r.result.e
        ));
    }
    outcome(pass, format!("{} in {elapsed:.3}s", detail.join(" ")))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut branches = 0;
    let mut complete = true;
    for n in [3usize, 5] {
        let runs = if n == 3 { 100 } else { 20 };
        let channels = (n - 1) / 2;
        for _ in 0..runs {
            let alphas = (0..channels).map(|_| rng.gen_range(-PI..PI)).collect();
            let axes = (0..channels)
                .map(|_| {
                    let (t, p) = random_bloch(&mut rng);
                    BlochAxis::new(t, p).unwrap()
                })
                .collect();
            let targets = (0..channels)
                .map(|_| {
                    let (t, p) = random_bloch(&mut rng);
                    StateVector::from_bloch(t, p)
                })
                .collect();
            let out = run_crio(&CrioConfig::new(n, alphas, axes, targets)).unwrap();
            complete &= out.completed;
            for b in &out.branches {
                branches += 1;
                for r in &b.receivers {
                    worst = worst.max((r.fidelity - 1.0).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        complete && worst < 1e-10 && elapsed < 5.0,
        format!("{branches} branches, max |F-1| = {worst:.2e}, {elapsed:.2}s"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let alpha = rng.gen_range(-TAU..TAU);
        let (t, p) = random_bloch(&mut rng);
        let axis = BlochAxis::new(t, p).unwrap();
        let (tc, pc) = random_bloch(&mut rng);
        let s = stator_state(axis, &StateVector::from_bloch(tc, pc)).unwrap();
        let left = s.apply(&BlochAxis::x().rotation(alpha), &[0]).unwrap();
        let right = s.apply(&axis.rotation(alpha), &[1]).unwrap();
        let d = (left.amps() - right.amps())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        worst = worst.max(d);
    }
    outcome(
        worst < 1e-12,
        format!("200 samples, max deviation {worst:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let noise = NoiseParams::from_lifetime(400.0).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (mode, params, target) in [
        (
            GateMode::FullResonant,
            DrivingParams::resonant().unwrap(),
            0.9865,
        ),
        (
            GateMode::FullDynamical,
            DrivingParams::dynamical(DYNAMICAL_DELTA).unwrap(),
            0.9911,
        ),
    ] {
        let start = Instant::now();
        let run = simulate_gate(
            &params,
            Some(&noise),
            mode,
            &psi0(),
            &GateOptions::default(),
        )
        .unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        let ok = within(run.fidelity, target, 3e-3) && elapsed < 60.0;
        pass &= ok;
        detail.push(format!(
            "{mode} F={:.4} (target {target}±0.003, T={:.3}us, {elapsed:.1}s)",
            run.fidelity, run.gate_time
        ));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_5() -> Outcome {
    let noise = NoiseParams::from_lifetime(400.0).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    let cases = [
        (
            GateMode::FullResonant,
            DrivingParams::resonant().unwrap(),
            0.9919,
            0.9950,
        ),
        (
            GateMode::FullDynamical,
            DrivingParams::dynamical(DYNAMICAL_DELTA).unwrap(),
            0.9961,
            0.9976,
        ),
    ];
    for (mode, params, angle_target, input_target) in cases {
        let e = effective_couplings(&params).unwrap();
        let angles = average_fidelity_angles(
            &params,
            Some(&noise),
            mode,
            &psi0(),
            &AngleGrid::default(),
            None,
        )
        .unwrap();
        let inputs = average_fidelity_inputs(
            &params,
            Some(&noise),
            mode,
            (e.theta, e.phi),
            &InputGrid::default(),
            None,
        )
        .unwrap();
        pass &= within(angles.mean, angle_target, 4e-3) && within(inputs.mean, input_target, 4e-3);
        detail.push(format!(
            "{mode} angles={:.4} (target {angle_target}) inputs={:.4} (target {input_target})",
            angles.mean, inputs.mean
        ));
    }
    for (mode, params) in [
        (
            GateMode::EffectiveResonant,
            DrivingParams::resonant().unwrap(),
        ),
        (
            GateMode::EffectiveDynamical,
            DrivingParams::dynamical(DYNAMICAL_DELTA).unwrap(),
        ),
    ] {
        let e = effective_couplings(&params).unwrap();
        let angles = average_fidelity_angles(
            &params,
            Some(&noise),
            mode,
            &psi0(),
            &AngleGrid::default(),
            None,
        )
        .unwrap();
        let inputs = average_fidelity_inputs(
            &params,
            Some(&noise),
            mode,
            (e.theta, e.phi),
            &InputGrid::default(),
            None,
        )
        .unwrap();
        detail.push(format!(
            "[{mode} angles={:.4} inputs={:.4}]",
            angles.mean, inputs.mean
        ));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut trace_dev: f64 = 0.0;
    let mut min_eig: f64 = 0.0;
    for _ in 0..20 {
        let h = pauli_x().matrix() * C64::new(rng.gen_range(-2.0..2.0), 0.0)
            + pauli_z().matrix() * C64::new(rng.gen_range(-2.0..2.0), 0.0);
        let lower = Operator::from_real_rows(2, &[0.0, 1.0, 0.0, 0.0])
            .unwrap()
            .scaled(C64::new(rng.gen_range(0.0..1.0f64).sqrt(), 0.0));
        let (t, p) = random_bloch(&mut rng);
        let rho0 = DensityMatrix::from_pure(&StateVector::from_bloch(t, p)).unwrap();
        let traj = integrate_master_equation(
            &ConstHamiltonian(h),
            &[lower],
            &rho0,
            (0.0, 5.0),
            &OutputGrid::Uniform(26),
            &IntegratorOptions::default(),
        )
        .unwrap();
        for rho in &traj.states {
            trace_dev = trace_dev.max((rho.trace() - 1.0).abs());
            min_eig = min_eig.min(rho.min_eigenvalue());
        }
    }
    let noise = NoiseParams::from_lifetime(400.0).unwrap();
    let run = simulate_gate(
        &DrivingParams::resonant().unwrap(),
        Some(&noise),
        GateMode::FullResonant,
        &psi0(),
        &GateOptions {
            samples: 41,
            ..Default::default()
        },
    )
    .unwrap();
    for rho in &run.trajectory.states {
        trace_dev = trace_dev.max((rho.trace() - 1.0).abs());
        min_eig = min_eig.min(rho.min_eigenvalue());
    }
    if !(trace_dev < 1e-7 && min_eig > -1e-7) {
        failures.push(format!(
            "master equation trace {trace_dev:.1e} min eig {min_eig:.1e}"
        ));
    }

    let p = DrivingParams::resonant().unwrap();
    let e = effective_couplings(&p).unwrap();
    let (s, c) = ((e.theta / 2.0).sin(), (e.theta / 2.0).cos());
    let zero = C64::new(0.0, 0.0);
    let dark = StateVector::from_slice(
        vec![2, 2],
        &[zero, zero, C64::new(c, 0.0), C64::from_polar(s, -e.phi)],
    )
    .unwrap();
    let d9 = embed_two_qubit(&dark).unwrap();
    let run = simulate_gate(
        &p,
        None,
        GateMode::EffectiveResonant,
        &psi0(),
        &GateOptions {
            samples: 101,
            ..Default::default()
        },
    )
    .unwrap();
    let pd0 = run.trajectory.states[0].expectation(d9.amps()).re;
    let dark_dev = run
        .trajectory
        .states
        .iter()
        .map(|rho| (rho.expectation(d9.amps()).re - pd0).abs())
        .fold(0.0, f64::max);
    if dark_dev >= 1e-6 {
        failures.push(format!("dark population drift {dark_dev:.1e}"));
    }

    let rho0 = DensityMatrix::from_pure(&embed_two_qubit(&psi0()).unwrap()).unwrap();
    let full = gate_channel(&p, None, GateMode::FullResonant)
        .unwrap()
        .apply(&rho0)
        .unwrap();
    let eff = gate_channel(&p, None, GateMode::EffectiveResonant)
        .unwrap()
        .apply(&rho0)
        .unwrap();
    let sub = [I10, I11, IRR];
    let block = |r: &DensityMatrix| CMatrix::from_fn(3, 3, |i, j| r.matrix()[(sub[i], sub[j])]);
    let (bf, be) = (block(&full), block(&eff));
    let overlap = (&bf * &be).trace().re / (bf.trace().re * be.trace().re);
    if overlap < 0.99 {
        failures.push(format!("full-vs-effective overlap {overlap:.4}"));
    }

    let mut eq14: f64 = 0.0;
    for _ in 0..200 {
        let u = holonomic_target_unitary(rng.gen_range(-TAU..TAU), rng.gen_range(-TAU..TAU));
        let m = u.matrix();
        eq14 = eq14
            .max(max_abs(&(m.adjoint() * m - CMatrix::identity(4, 4))))
            .max(max_abs(&(m.adjoint() - m)));
    }
    if eq14 >= 1e-12 {
        failures.push(format!("target unitary defect {eq14:.1e}"));
    }

    let g = prepare_graph_state(3).unwrap();
    let k = 1.0 / (2.0 * 2f64.sqrt());
    let mut pattern: f64 = 0.0;
    for i in 0..8 {
        let (a, b, c) = (i >> 2 & 1, i >> 1 & 1, i & 1);
        let sign = if a == 1 && (b + c) % 2 == 1 {
            -1.0
        } else {
            1.0
        };
        pattern = pattern.max((g.amplitude(&[a, b, c]) - C64::new(sign * k, 0.0)).norm());
    }
    if pattern >= 1e-12 {
        failures.push(format!("graph amplitude deviation {pattern:.1e}"));
    }

    let ks: Vec<f64> = (1..=16).map(|i| 0.25 * i as f64).collect();
    let gs: Vec<f64> = (0..=10).map(|i| 0.05 * i as f64).collect();
    let rows = fe_sweep(&ks, &gs, 0.0, true, None).unwrap();
    let f = |i: usize, j: usize| rows[i * gs.len() + j].result.f;
    let mut monotone = true;
    for i in 0..ks.len() {
        for j in 0..gs.len() {
            monotone &= i + 1 == ks.len() || f(i + 1, j) <= f(i, j) + 1e-12;
            monotone &= j + 1 == gs.len() || f(i, j + 1) <= f(i, j) + 1e-12;
        }
    }
    if !monotone {
        failures.push("F not monotone on sweep grid".into());
    }

    let summary = format!(
        "trace {trace_dev:.1e}, min eig {min_eig:.1e}, dark drift {dark_dev:.1e}, overlap {overlap:.4}, unitary defect {eq14:.1e}, amplitude {pattern:.1e}, monotone {monotone}"
    );
    if failures.is_empty() {
        outcome(true, summary)
    } else {
        outcome(false, format!("{summary}; failed: {}", failures.join(", ")))
    }
}

fn criterion_7() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let cases = [
        (
            "sweep-fe",
            "[sweep-fe]\nkappa = [0.5, 1.0, 2.0]\ngamma = [0.0, 0.1, 0.2]\n",
            "csv",
        ),
        (
            "protocol-run",
            "seed = 5\n[protocol-run]\nn_parties = 5\n",
            "csv",
        ),
        (
            "gate-sim",
            "[gate-sim]\nmode = \"FullResonant\"\nsamples = 101\n",
            "csv",
        ),
        (
            "gate-sim",
            "[gate-sim]\nmode = \"EffectiveDynamical\"\n",
            "json",
        ),
        (
            "avg-fidelity",
            "[avg-fidelity]\nmode = \"FullResonant\"\nn_theta = 3\nn_phi = 3\n",
            "csv",
        ),
    ];
    let mut identical = 0;
    let mut failures = Vec::new();
    for (i, (cmd, cfg, fmt)) in cases.iter().enumerate() {
        let cfg_path = dir.path().join(format!("{i}.toml"));
        std::fs::write(&cfg_path, cfg).unwrap();
        let mut payloads = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{i}-{rep}.{fmt}"));
            let status = Command::new(env!("CARGO_BIN_EXE_crio"))
                .args([cmd, "--config"])
                .arg(&cfg_path)
                .arg("--out")
                .arg(&out)
                .args(["--format", fmt])
                .env("CRIO_NUM_WORKERS", if rep == 0 { "1" } else { "4" })
                .output()
                .unwrap();
            if !status.status.success() {
                failures.push(format!("{cmd} exited {:?}", status.status.code()));
            }
            payloads.push(std::fs::read(&out).unwrap_or_default());
        }
        if !payloads[0].is_empty() && payloads[0] == payloads[1] {
            identical += 1;
        } else {
            failures.push(format!("{cmd} payloads differ"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{identical}/{} payload pairs byte-identical{}",
            cases.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("cavity F/E regression", criterion_1),
        ("protocol exactness", criterion_2),
        ("stator identity", criterion_3),
        ("holonomic gate fidelity", criterion_4),
        ("averaged fidelities", criterion_5),
        ("property suites", criterion_6),
        ("determinism", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
