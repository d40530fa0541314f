use serde::{Deserialize, Serialize};

use super::Prim;
use crate::error::{Error, Result};
use crate::thermo::{EosKind, EosSpec, ThermoState};

/// Reference frame of a planar shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", deny_unknown_fields)]
pub enum Frame {
    ShockStationary,
    /// Lab frame in which the upstream gas moves with `upstream_velocity`.
    Lab {
        upstream_velocity: f64,
    },
}

/// Upstream state, Mach number and frame. The gas flows in `+x` through the
/// shock, so the upstream side is on the left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSetup {
    pub upstream: ThermoState,
    pub mach: f64,
    pub frame: Frame,
}

impl ShockSetup {
    pub fn stationary(rho: f64, p: f64, mach: f64, eos: &EosSpec) -> Self {
        ShockSetup { upstream: ThermoState::new(eos.internal_energy_from_pressure(p, rho), rho), mach, frame: Frame::ShockStationary }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub rho: f64,
    pub v: f64,
    pub p: f64,
    pub u: f64,
    pub t: f64,
    pub s_m: f64,
    pub c: f64,
}

impl FullState {
    fn new(eos: &EosSpec, st: ThermoState, v: f64) -> Result<Self> {
        let ev = eos.eval(st)?;
        Ok(FullState { rho: st.rho, v, p: ev.p, u: st.u, t: ev.t, s_m: ev.s_m, c: ev.sound_speed })
    }

    pub fn prim(&self) -> Prim {
        Prim::new(self.rho, self.v, self.p)
    }

    /// Fluxes of mass, momentum and total energy.
    pub fn euler_flux(&self) -> [f64; 3] {
        let m = self.rho * self.v;
        [m, m * self.v + self.p, (self.u + self.p + 0.5 * self.rho * self.v * self.v) * self.v]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankineHugoniot {
    /// States in the requested frame.
    pub upstream: FullState,
    pub downstream: FullState,
    /// Shock velocity in the requested frame.
    pub shock_speed: f64,
    /// Mass flux through the shock.
    pub mass_flux: f64,
    /// `j (s_m⁺ - s_m⁻)`: integrated entropy production per unit area and time.
    pub anomaly_entropy: f64,
    /// Limit of the inertial energy flux: the kinetic energy flux jump
    /// minus the mollified pressure-work contribution. Vanishes identically.
    pub anomaly_ke: f64,
    /// Shock-frame `[(p + ½ϱv²) v]`, the integrated mollification limit of `p Θ`.
    pub pressure_work_mollified: f64,
    /// Relative flux mismatch across the jump (shock frame).
    pub flux_mismatch: f64,
}

impl RankineHugoniot {
    /// States in the shock frame.
    pub fn shock_frame(&self) -> (FullState, FullState) {
        let mut a = self.upstream;
        let mut b = self.downstream;
        a.v -= self.shock_speed;
        b.v -= self.shock_speed;
        (a, b)
    }
}

pub fn rh_jump(setup: &ShockSetup, eos: &EosSpec) -> Result<RankineHugoniot> {
    eos.validate()?;
    if !(setup.mach > 1.0) {
        return Err(Error::NoAdmissibleSolution(format!("Mach number {} is not supersonic", setup.mach)));
    }
    let up0 = FullState::new(eos, setup.upstream, 0.0)?;
    let v0 = setup.mach * up0.c;
    let up = FullState { v: v0, ..up0 };
    let j = up.rho * v0;
    let rho1 = match eos.kind {
        EosKind::IdealGas => {
            let g = eos.gamma();
            let m2 = setup.mach * setup.mach;
            up.rho * (g + 1.0) * m2 / ((g - 1.0) * m2 + 2.0)
        }
        EosKind::VanDerWaals => hugoniot_root(eos, &up)?,
    };
    let v1 = j / rho1;
    let p1 = match eos.kind {
        EosKind::IdealGas => {
            let g = eos.gamma();
            up.p * (1.0 + 2.0 * g / (g + 1.0) * (setup.mach * setup.mach - 1.0))
        }
        EosKind::VanDerWaals => up.p + j * (v0 - v1),
    };
    let u1 = eos.internal_energy_from_pressure(p1, rho1);
    let down = FullState::new(eos, ThermoState::new(u1, rho1), v1)?;
    let fa = up.euler_flux();
    let fb = down.euler_flux();
    let mismatch = (0..3).map(|i| (fa[i] - fb[i]).abs() / fa[i].abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let ds = down.s_m - up.s_m;
    if !(ds > 0.0) {
        return Err(Error::NoAdmissibleSolution(format!("entropy-decreasing jump (Δs_m = {ds:e})")));
    }
    let kin = |s: &FullState| (s.p + 0.5 * s.rho * s.v * s.v) * s.v;
    let work = kin(&down) - kin(&up);
    let shift = match setup.frame {
        Frame::ShockStationary => 0.0,
        Frame::Lab { upstream_velocity } => upstream_velocity - v0,
    };
    let lab = |s: FullState| FullState { v: s.v + shift, ..s };
    Ok(RankineHugoniot {
        upstream: lab(up),
        downstream: lab(down),
        shock_speed: shift,
        mass_flux: j,
        anomaly_entropy: j * ds,
        anomaly_ke: work - 0.5 * (up.p + down.p) * (v1 - v0),
        pressure_work_mollified: work,
        flux_mismatch: mismatch,
    })
}

/// Compressive root of the energy jump condition along the Rayleigh line.
fn hugoniot_root(eos: &EosSpec, up: &FullState) -> Result<f64> {
    let j = up.rho * up.v;
    let h0 = (up.u + up.p) / up.rho + 0.5 * up.v * up.v;
    let resid = |r: f64| -> Option<f64> {
        let v = j / r;
        let p = up.p + j * (up.v - v);
        let u = eos.internal_energy_from_pressure(p, r);
        eos.mechanical(ThermoState::new(u, r)).ok()?;
        Some((u + p) / r + 0.5 * v * v - h0)
    };
    let r_max = if eos.b > 0.0 { 1.0 / eos.b } else { up.rho * 1e3 };
    let n = 4000;
    let mut prev: Option<(f64, f64)> = None;
    for i in 1..n {
        let r = up.rho + (r_max - up.rho) * (i as f64 / n as f64).powi(2);
        let Some(f) = resid(r) else {
            prev = None;
            continue;
        };
        if let Some((rp, fp)) = prev {
            if fp.signum() != f.signum() {
                let (mut a, mut b, mut fa) = (rp, r, fp);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    let fm = resid(m).ok_or_else(|| Error::NoAdmissibleSolution("Hugoniot left validity region".into()))?;
                    if fm.signum() == fa.signum() {
                        a = m;
                        fa = fm;
                    } else {
                        b = m;
                    }
                    if b - a <= 1e-15 * b {
                        break;
                    }
                }
                return Ok(0.5 * (a + b));
            }
        }
        prev = Some((r, f));
    }
    Err(Error::NoAdmissibleSolution("no compressive root on the Hugoniot curve".into()))
}
