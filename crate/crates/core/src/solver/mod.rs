//! One-dimensional compressible Navier-Stokes-Fourier data: the finite-volume
//! integrator, exact jump conditions, the steady viscous shock profile and
//! exact simple waves.

mod becker;
mod ns;
mod rh;
mod wave;

pub use becker::{becker_profile, BeckerProfile};
pub use ns::{integrate, integrate_with, preflight, Boundary, Diagnostics, Init, NsConfig, RunOutput, Schedule};
pub use rh::{rh_jump, Frame, FullState, RankineHugoniot, ShockSetup};
pub use wave::{smooth_wave_ic, SmoothWave};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::thermo::{EosSpec, ThermoState};

/// Primitive state `(ϱ, v, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prim {
    pub rho: f64,
    pub v: f64,
    pub p: f64,
}

impl Prim {
    pub fn new(rho: f64, v: f64, p: f64) -> Self {
        Prim { rho, v, p }
    }

    pub fn thermo(&self, eos: &EosSpec) -> ThermoState {
        ThermoState::new(eos.internal_energy_from_pressure(self.p, self.rho), self.rho)
    }

    /// Conserved `(ϱ, ϱv, E)`.
    pub fn conserved(&self, eos: &EosSpec) -> [f64; 3] {
        let u = eos.internal_energy_from_pressure(self.p, self.rho);
        [self.rho, self.rho * self.v, u + 0.5 * self.rho * self.v * self.v]
    }

    pub fn sound_speed(&self, eos: &EosSpec) -> Result<f64> {
        Ok(eos.mechanical(self.thermo(eos))?.2)
    }
}
