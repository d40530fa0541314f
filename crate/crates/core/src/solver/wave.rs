use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Prim;
use crate::error::{Error, Result};
use crate::fields::{Field, FieldBlock, Grid, AXIS_T, AXIS_X};
use crate::thermo::{EosKind, EosSpec};

/// Right-running isentropic simple wave on a gas at rest, ideal gas:
/// `v(x, 0) = amplitude · sin(2π x / wavelength)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothWave {
    pub rho0: f64,
    pub p0: f64,
    pub amplitude: f64,
    pub wavelength: f64,
}

impl SmoothWave {
    fn check(&self, eos: &EosSpec) -> Result<()> {
        if eos.kind != EosKind::IdealGas {
            return Err(Error::InvalidInput("simple waves are implemented for the ideal gas only".into()));
        }
        if !(self.rho0 > 0.0 && self.p0 > 0.0 && self.wavelength > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidInput("simple wave needs rho0, p0, wavelength > 0".into()));
        }
        let g = eos.gamma();
        if self.c0(eos) - 0.5 * (g - 1.0) * self.amplitude.abs() <= 0.0 {
            return Err(Error::InvalidInput("amplitude cavitates the simple wave".into()));
        }
        Ok(())
    }

    pub fn c0(&self, eos: &EosSpec) -> f64 {
        (eos.gamma() * self.p0 / self.rho0).sqrt()
    }

    /// Time at which the characteristics first cross.
    pub fn t_shock(&self, eos: &EosSpec) -> f64 {
        let k = 2.0 * PI / self.wavelength;
        let s = 0.5 * (eos.gamma() + 1.0) * self.amplitude.abs() * k;
        if s == 0.0 {
            f64::INFINITY
        } else {
            1.0 / s
        }
    }

    /// Largest `|∂_x v|` at time `t` predicted by characteristic steepening.
    pub fn max_slope(&self, eos: &EosSpec, t: f64) -> f64 {
        let k = 2.0 * PI / self.wavelength;
        let a = self.amplitude.abs() * k;
        a / (1.0 - 0.5 * (eos.gamma() + 1.0) * a * t)
    }

    fn v0(&self, xi: f64) -> (f64, f64) {
        let k = 2.0 * PI / self.wavelength;
        (self.amplitude * (k * xi).sin(), self.amplitude * k * (k * xi).cos())
    }

    /// Exact primitive state at `(x, t)` before the shock time.
    pub fn exact(&self, eos: &EosSpec, x: f64, t: f64) -> Prim {
        let g = eos.gamma();
        let c0 = self.c0(eos);
        let b = 0.5 * (g + 1.0);
        let a = self.amplitude.abs();
        let (mut lo, mut hi) = (x - (c0 + b * a) * t, x - (c0 - b * a) * t);
        let mut xi = x - c0 * t;
        for _ in 0..100 {
            let (v, dv) = self.v0(xi);
            let fx = xi + (c0 + b * v) * t - x;
            if fx > 0.0 {
                hi = hi.min(xi);
            } else {
                lo = lo.max(xi);
            }
            let mut next = xi - fx / (1.0 + b * dv * t);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - xi).abs() <= 1e-15 * (1.0 + xi.abs()) {
                xi = next;
                break;
            }
            xi = next;
        }
        let v = self.v0(xi).0;
        let c = c0 + 0.5 * (g - 1.0) * v;
        let rho = self.rho0 * (c / c0).powf(2.0 / (g - 1.0));
        Prim::new(rho, v, self.p0 * (rho / self.rho0).powf(g))
    }

    /// Samples the exact solution on a space-time grid.
    pub fn sample(&self, eos: &EosSpec, grid: &Grid) -> Result<FieldBlock> {
        self.check(eos)?;
        let t_end = grid.coord(AXIS_T, grid.nt - 1);
        let ts = self.t_shock(eos);
        if t_end >= ts {
            return Err(Error::WouldShockInWindow { t_shock: ts, t_end });
        }
        let mut rho = Field::zeros(*grid);
        let mut u = Field::zeros(*grid);
        let mut v = Field::zeros(*grid);
        for p in grid.full_box().iter() {
            let s = self.exact(eos, grid.coord(AXIS_X, p[0]), grid.coord(AXIS_T, p[2]));
            rho.set(p, s.rho);
            u.set(p, eos.internal_energy_from_pressure(s.p, s.rho));
            v.set(p, s.v);
        }
        FieldBlock::new(*grid, rho, u, vec![v], 0.0)
    }
}

/// Initial data at the cell centers `x0 + i·dx`; fails when the wave would
/// shock before `t_end`.
pub fn smooth_wave_ic(wave: &SmoothWave, eos: &EosSpec, nx: usize, dx: f64, x0: f64, t_end: f64) -> Result<Vec<Prim>> {
    wave.check(eos)?;
    let ts = wave.t_shock(eos);
    if t_end >= ts {
        return Err(Error::WouldShockInWindow { t_shock: ts, t_end });
    }
    Ok((0..nx).map(|i| wave.exact(eos, x0 + i as f64 * dx, 0.0)).collect())
}
