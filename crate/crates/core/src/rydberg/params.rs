use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::quantum::C64;

use super::RydbergError;

/// Reference Rabi frequency Ω = 2π × 10 MHz in rad/μs.
pub const OMEGA_REF: f64 = 20.0 * PI;
/// δ = 2π × 3.36 MHz used by the dynamical gate.
pub const DYNAMICAL_DELTA: f64 = 2.0 * PI * 3.36;
/// Hard lower bound on Δ_i/Ω_i.
pub const REGIME_MIN: f64 = 5.0;
/// Ratios below this are accepted with a warning.
pub const REGIME_WARN: f64 = 10.0;

const V_TOL: f64 = 1e-9;
const MAX_ITER: usize = 200;

/// Laser and interaction parameters in rad/μs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingParams {
    pub omega0: f64,
    /// Magnitudes of Ω1 and Ω2.
    pub omega1: f64,
    pub omega2: f64,
    /// Phases of Ω1 and Ω2.
    pub phi1: f64,
    pub phi2: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    pub base_unit: f64,
}

impl DrivingParams {
    /// Real Rabi frequencies with `V = Δ1 − Δ0 + V0`.
    pub fn from_detunings(omega: [f64; 3], delta: [f64; 3], v0: f64, base_unit: f64) -> Self {
        Self {
            omega0: omega[0],
            omega1: omega[1],
            omega2: omega[2],
            phi1: 0.0,
            phi2: 0.0,
            delta0: delta[0],
            delta1: delta[1],
            delta2: delta[2],
            v: delta[1] - delta[0] + v0,
            v0,
            base_unit,
        }
    }

    /// Ω0 = Ω1 = Ω2 = Ω, Δ0 = 10Ω, Δ1 = Δ2 = 30Ω, V0 = Ω/30 with Ω = 20π rad/μs.
    pub fn operating_point() -> Self {
        let w = OMEGA_REF;
        Self::from_detunings([w; 3], [10.0 * w, 30.0 * w, 30.0 * w], w / 30.0, w)
    }

    /// Operating point with V0 chosen so that δ = 0.
    pub fn resonant() -> Result<Self, RydbergError> {
        Self::operating_point().with_delta(0.0)
    }

    /// Operating point with V0 chosen so that δ takes the given value.
    pub fn dynamical(delta: f64) -> Result<Self, RydbergError> {
        Self::operating_point().with_delta(delta)
    }

    /// Sets V0 and the matching V.
    pub fn with_v0(mut self, v0: f64) -> Self {
        self.v0 = v0;
        self.v = self.delta1 - self.delta0 + v0;
        self
    }

    pub fn omega1_c(&self) -> C64 {
        C64::from_polar(self.omega1, self.phi1)
    }

    pub fn omega2_c(&self) -> C64 {
        C64::from_polar(self.omega2, self.phi2)
    }

    /// Shift of |RR⟩ from the second-order light shifts.
    pub fn delta_rr(&self) -> f64 {
        let v = self.v;
        self.omega0.powi(2) / (4.0 * (self.delta0 + v))
            - self.omega1.powi(2) / (4.0 * (self.delta1 - v))
            - self.omega2.powi(2) / (4.0 * (self.delta2 - v))
    }

    /// δ = V0 + Δ_RR.
    pub fn delta(&self) -> f64 {
        self.v0 + self.delta_rr()
    }

    /// Solves `V0 = δ − Δ_RR(V0)` by fixed-point iteration.
    pub fn with_delta(self, delta: f64) -> Result<Self, RydbergError> {
        let mut p = self;
        for _ in 0..MAX_ITER {
            let next = p.with_v0(delta - p.delta_rr());
            if !next.v0.is_finite() {
                break;
            }
            if (next.v0 - p.v0).abs() <= 1e-15 * next.v.abs().max(1.0) {
                return Ok(next);
            }
            p = next;
        }
        Err(RydbergError::NoConvergence("V0"))
    }

    /// Uses `v0` and `delta` when both are present, requiring `V0 + Δ_RR = δ` within 1e-9.
    pub fn reconcile(self, v0: Option<f64>, delta: Option<f64>) -> Result<Self, RydbergError> {
        match (v0, delta) {
            (None, None) => Ok(self),
            (Some(v0), None) => Ok(self.with_v0(v0)),
            (None, Some(d)) => self.with_delta(d),
            (Some(v0), Some(d)) => {
                let p = self.with_v0(v0);
                let implied = p.delta();
                if (implied - d).abs() > V_TOL {
                    return Err(RydbergError::Inconsistent { implied, delta: d });
                }
                Ok(p)
            }
        }
    }

    /// Checks finiteness, the V relation and the large-detuning regime; returns warnings.
    pub fn validate(&self) -> Result<Vec<String>, RydbergError> {
        let fields = [
            ("omega0", self.omega0),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("phi1", self.phi1),
            ("phi2", self.phi2),
            ("delta0", self.delta0),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("V", self.v),
            ("V0", self.v0),
            ("base_unit", self.base_unit),
        ];
        for (name, x) in fields {
            if !x.is_finite() {
                return Err(RydbergError::InvalidParam(format!("{name} = {x}")));
            }
        }
        for (name, x) in &fields[..3] {
            if *x < 0.0 {
                return Err(RydbergError::InvalidParam(format!(
                    "{name} must be non-negative, got {x}"
                )));
            }
        }
        if self.base_unit <= 0.0 {
            return Err(RydbergError::InvalidParam(format!(
                "base_unit must be positive, got {}",
                self.base_unit
            )));
        }
        let expected = self.delta1 - self.delta0 + self.v0;
        if (self.v - expected).abs() > V_TOL * expected.abs().max(1.0) {
            return Err(RydbergError::VMismatch {
                v: self.v,
                expected,
            });
        }
        let mut warnings = Vec::new();
        for (which, delta, omega) in [
            ("delta0/omega0", self.delta0, self.omega0),
            ("delta1/omega1", self.delta1, self.omega1),
            ("delta2/omega2", self.delta2, self.omega2),
        ] {
            if omega == 0.0 {
                continue;
            }
            let ratio = delta.abs() / omega;
            if ratio < REGIME_MIN {
                return Err(RydbergError::Regime {
                    which,
                    ratio,
                    min: REGIME_MIN,
                });
            }
            if ratio < REGIME_WARN {
                warnings.push(format!(
                    "{which} = {ratio:.3} is below {REGIME_WARN}; the effective model may be inaccurate"
                ));
            }
        }
        Ok(warnings)
    }
}

/// `1/Δi + 1/(Δ0+V) − 1/Δ0 − 1/(Δi−V)`.
fn kernel(delta0: f64, delta_i: f64, v: f64) -> f64 {
    1.0 / delta_i + 1.0 / (delta0 + v) - 1.0 / delta0 - 1.0 / (delta_i - v)
}

/// Second-order couplings between {|10⟩, |11⟩} and |RR⟩ and the derived gate angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveCouplings {
    pub omega_eff_10: C64,
    pub omega_eff_11: C64,
    #[serde(rename = "delta_RR")]
    pub delta_rr: f64,
    pub delta: f64,
    pub omega_eff: f64,
    pub theta: f64,
    pub phi: f64,
}

impl EffectiveCouplings {
    /// Builds the couplings from Ω_eff^{10}, Ω_eff^{11} and δ.
    pub fn from_couplings(omega_eff_10: C64, omega_eff_11: C64, delta_rr: f64, delta: f64) -> Self {
        let a = omega_eff_10.norm();
        let b = omega_eff_11.norm();
        let phi = (omega_eff_10.arg() - (-omega_eff_11).arg()).rem_euclid(TAU);
        Self {
            omega_eff_10,
            omega_eff_11,
            delta_rr,
            delta,
            omega_eff: a.hypot(b),
            theta: 2.0 * a.atan2(b),
            phi,
        }
    }

    /// Dispersive energy of the bright state, `(Ω^eff)² / (4δ)`.
    pub fn omega_d(&self) -> f64 {
        self.omega_eff.powi(2) / (4.0 * self.delta)
    }

    /// `|δ| / (Ω^eff/2)`.
    pub fn dispersive_ratio(&self) -> f64 {
        self.delta.abs() / (self.omega_eff / 2.0)
    }

    pub(crate) fn raw(p: &DrivingParams) -> Self {
        let scale = p.omega0 / 4.0;
        let k1 = kernel(p.delta0, p.delta1, p.v);
        let k2 = kernel(p.delta0, p.delta2, p.v);
        let delta_rr = p.delta_rr();
        Self::from_couplings(
            p.omega1_c() * (scale * k1),
            p.omega2_c() * (scale * k2),
            delta_rr,
            p.v0 + delta_rr,
        )
    }
}

/// Evaluates the effective couplings after validating the detuning regime.
pub fn effective_couplings(p: &DrivingParams) -> Result<EffectiveCouplings, RydbergError> {
    p.validate()?;
    Ok(EffectiveCouplings::raw(p))
}

impl DrivingParams {
    /// Rescales Ω1 and Ω2 so that the gate realizes `(theta, phi)` with magnitude `omega_eff`,
    /// keeping δ fixed by adjusting V0.
    pub fn for_angles(
        &self,
        theta: f64,
        phi: f64,
        omega_eff: f64,
        delta: f64,
    ) -> Result<Self, RydbergError> {
        if !(theta.is_finite() && phi.is_finite() && omega_eff.is_finite() && delta.is_finite()) {
            return Err(RydbergError::InvalidParam("non-finite angle target".into()));
        }
        let mut p = *self;
        let target10 = C64::from_polar(omega_eff * (theta / 2.0).sin(), phi);
        let target11 = C64::new(-omega_eff * (theta / 2.0).cos(), 0.0);
        for _ in 0..MAX_ITER {
            let k1 = kernel(p.delta0, p.delta1, p.v);
            let k2 = kernel(p.delta0, p.delta2, p.v);
            let o1 = target10 * (4.0 / (p.omega0 * k1));
            let o2 = target11 * (4.0 / (p.omega0 * k2));
            let mut next = p;
            next.omega1 = o1.norm();
            next.phi1 = o1.arg();
            next.omega2 = o2.norm();
            next.phi2 = o2.arg();
            let next = next.with_v0(delta - next.delta_rr());
            if !next.v0.is_finite() {
                break;
            }
            let settled = (next.v0 - p.v0).abs() <= 1e-15 * next.v.abs().max(1.0)
                && (next.omega1 - p.omega1).abs() <= 1e-15 * next.omega1.max(1.0)
                && (next.omega2 - p.omega2).abs() <= 1e-15 * next.omega2.max(1.0);
            p = next;
            if settled {
                return Ok(p);
            }
        }
        Err(RydbergError::NoConvergence("angle realization"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact rational arithmetic for the coupling oracle.
    #[derive(Clone, Copy, Debug, PartialEq)]
    struct Q(i128, i128);

    fn gcd(a: i128, b: i128) -> i128 {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }

    impl Q {
        fn new(n: i128, d: i128) -> Self {
            let g = gcd(n, d) * d.signum();
            Q(n / g, d / g)
        }
        fn add(self, o: Q) -> Q {
            Q::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
        }
        fn sub(self, o: Q) -> Q {
            self.add(Q(-o.0, o.1))
        }
        fn mul(self, o: Q) -> Q {
            Q::new(self.0 * o.0, self.1 * o.1)
        }
        fn inv(self) -> Q {
            Q::new(self.1, self.0)
        }
        fn f(self) -> f64 {
            self.0 as f64 / self.1 as f64
        }
    }

    /// Ω = 1: Δ0 = 10, Δ1 = Δ2 = 30, V0 = 1/30.
    fn oracle() -> (Q, Q) {
        let d0 = Q::new(10, 1);
        let d1 = Q::new(30, 1);
        let v = d1.sub(d0).add(Q::new(1, 30));
        let k = d1
            .inv()
            .add(d0.add(v).inv())
            .sub(d0.inv())
            .sub(d1.sub(v).inv());
        let w10 = Q::new(1, 4).mul(k);
        let quarter = Q::new(1, 4);
        let drr = quarter
            .mul(d0.add(v).inv())
            .sub(quarter.mul(d1.sub(v).inv()))
            .sub(quarter.mul(d1.sub(v).inv()));
        (w10, drr)
    }

    #[test]
    fn operating_point_couplings_match_rational_oracle() {
        let (w10, drr) = oracle();
        assert_eq!(w10, Q(-540_299, 16_163_940));
        assert_eq!(drr, Q(-22_545, 538_798));
        let p = DrivingParams::operating_point();
        let e = effective_couplings(&p).unwrap();
        let w = OMEGA_REF;
        assert!((e.omega_eff_10.re / w - w10.f()).abs() < 1e-12);
        assert!(e.omega_eff_10.im.abs() < 1e-15);
        assert!((e.delta_rr / w - drr.f()).abs() < 1e-12);
        assert!((e.omega_eff_10.re / w + 0.03343).abs() < 5e-6);
        assert!((e.delta_rr / w + 0.04184).abs() < 5e-6);
    }

    #[test]
    fn interaction_strength_in_mhz() {
        let p = DrivingParams::operating_point();
        assert!((p.v / TAU - 200.33).abs() < 5e-3);
    }

    #[test]
    fn symmetric_drive_gives_equal_couplings() {
        let e = effective_couplings(&DrivingParams::operating_point()).unwrap();
        assert!((e.omega_eff_10 - e.omega_eff_11).norm() < 1e-14);
        assert!((e.theta - PI / 2.0).abs() < 1e-12);
        assert!((e.phi - PI).abs() < 1e-12);
    }

    #[test]
    fn resonant_and_dynamical_tuning() {
        let r = DrivingParams::resonant().unwrap();
        assert!(r.delta().abs() < 1e-12);
        assert!((r.v - (r.delta1 - r.delta0 + r.v0)).abs() < 1e-12);
        let d = DrivingParams::dynamical(DYNAMICAL_DELTA).unwrap();
        assert!((d.delta() - DYNAMICAL_DELTA).abs() < 1e-12);
    }

    #[test]
    fn reconcile_checks_consistency() {
        let p = DrivingParams::operating_point();
        let d = p.delta();
        assert!(p.reconcile(Some(p.v0), Some(d)).is_ok());
        assert!(matches!(
            p.reconcile(Some(p.v0), Some(d + 1e-6)),
            Err(RydbergError::Inconsistent { .. })
        ));
    }

    #[test]
    fn regime_checks() {
        let mut p = DrivingParams::operating_point();
        p.delta0 = 4.0 * p.omega0;
        p = p.with_v0(p.v0);
        assert!(matches!(p.validate(), Err(RydbergError::Regime { .. })));
        let mut p = DrivingParams::operating_point();
        p.delta0 = 7.0 * p.omega0;
        p = p.with_v0(p.v0);
        assert_eq!(p.validate().unwrap().len(), 1);
        assert!(DrivingParams::operating_point()
            .validate()
            .unwrap()
            .is_empty());
        let mut p = DrivingParams::operating_point();
        p.v += 1.0;
        assert!(matches!(p.validate(), Err(RydbergError::VMismatch { .. })));
    }

    #[test]
    fn angle_realization_hits_targets() {
        let base = DrivingParams::resonant().unwrap();
        let w = effective_couplings(&base).unwrap().omega_eff;
        for (theta, phi) in [(0.3, 1.0), (PI / 2.0, PI), (2.5, 5.9), (0.0, 0.0)] {
            let p = base.for_angles(theta, phi, w, 0.0).unwrap();
            let e = effective_couplings(&p).unwrap();
            assert!((e.omega_eff - w).abs() < 1e-10);
            assert!((e.theta - theta).abs() < 1e-10);
            if theta > 0.0 {
                let dphi = (e.phi - phi).rem_euclid(TAU);
                assert!(dphi.min(TAU - dphi) < 1e-10, "{theta} {phi} {}", e.phi);
            }
            assert!(e.delta.abs() < 1e-10);
        }
    }
}
