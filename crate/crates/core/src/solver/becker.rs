use super::rh::{rh_jump, Frame, RankineHugoniot, ShockSetup};
use super::Prim;
use crate::error::{Error, Result};
use crate::fields::{Field, FieldBlock, Grid, AXIS_T, AXIS_X};
use crate::thermo::{EosKind, EosSpec, TransportModel};

/// Steady planar Navier-Stokes-Fourier shock, stored as the ODE trajectory
/// in the shock frame with the density midpoint at `x = 0`.
#[derive(Debug, Clone)]
pub struct BeckerProfile {
    pub setup: ShockSetup,
    pub eos: EosSpec,
    pub transport: TransportModel,
    pub rh: RankineHugoniot,
    /// Increasing abscissae of the trajectory nodes.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: Vec<f64>,
    pub dv: Vec<f64>,
    pub dtemp: Vec<f64>,
    /// `∫ (Q/T + κ|∂T|²/T²) dx` over the whole profile.
    pub integrated_sigma: f64,
    /// `∫ Q dx`.
    pub integrated_q: f64,
    /// `∫ p ∂_x v dx`.
    pub integrated_p_dilatation: f64,
    /// Largest relative deviation of the trajectory ends from the jump states.
    pub endpoint_error: f64,
}

struct Ode {
    m: f64,
    big_p: f64,
    h0: f64,
    ak: f64,
    k: f64,
    tr: TransportModel,
}

impl Ode {
    fn coeffs(&self, t: f64) -> (f64, f64) {
        (self.tr.longitudinal(t), self.tr.at_temperature(t).kappa)
    }

    /// `(v', T', Σ, Q, p v')` at `(v, T)`.
    fn rhs(&self, v: f64, t: f64) -> [f64; 5] {
        let (mu, kap) = self.coeffs(t);
        let p = self.m * self.k * t / v;
        let dv = (self.m * v + p - self.big_p) / mu;
        let dt = (self.m * self.ak * t - 0.5 * self.m * v * v + self.big_p * v - self.m * self.h0) / kap;
        let q = mu * dv * dv;
        [dv, dt, q / t + kap * dt * dt / (t * t), q, p * dv]
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

pub fn becker_profile(setup: &ShockSetup, eos: &EosSpec, transport: &TransportModel, eps: f64) -> Result<BeckerProfile> {
    if eos.kind != EosKind::IdealGas {
        return Err(Error::InvalidInput("the viscous profile solver supports the ideal gas only".into()));
    }
    let tr = transport.with_eps(eps);
    tr.validate()?;
    let stationary = ShockSetup { frame: Frame::ShockStationary, ..*setup };
    let rh = rh_jump(&stationary, eos)?;
    let (a, b) = (rh.upstream, rh.downstream);
    let ode =
        Ode { m: rh.mass_flux, big_p: rh.mass_flux * a.v + a.p, h0: (a.u + a.p) / a.rho + 0.5 * a.v * a.v, ak: eos.alpha * eos.k_b, k: eos.k_b, tr };
    let (mu1, k1) = ode.coeffs(b.t);
    if !(mu1 > 0.0 && k1 > 0.0) {
        return Err(Error::InvalidInput("the viscous profile needs positive viscosity and conductivity".into()));
    }
    // stable direction of the downstream saddle
    let sv = (a.v - b.v).abs();
    let st = (a.t - b.t).abs();
    let jac = {
        let hv = 1e-7 * sv;
        let ht = 1e-7 * st;
        let fp = ode.rhs(b.v + hv, b.t);
        let fm = ode.rhs(b.v - hv, b.t);
        let gp = ode.rhs(b.v, b.t + ht);
        let gm = ode.rhs(b.v, b.t - ht);
        [[(fp[0] - fm[0]) / (2.0 * hv), (gp[0] - gm[0]) / (2.0 * ht)], [(fp[1] - fm[1]) / (2.0 * hv), (gp[1] - gm[1]) / (2.0 * ht)]]
    };
    let tr_j = jac[0][0] + jac[1][1];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    let disc = tr_j * tr_j - 4.0 * det;
    if !(det < 0.0 && disc > 0.0) {
        return Err(Error::ShootingFailed(format!("downstream state is not a saddle (det = {det:e}, disc = {disc:e})")));
    }
    let lam = 0.5 * (tr_j - disc.sqrt());
    let (mut ev, mut et) = if jac[0][1].abs() > jac[1][0].abs() { (jac[0][1], lam - jac[0][0]) } else { (lam - jac[1][1], jac[1][0]) };
    let nrm = ((ev / sv).powi(2) + (et / st).powi(2)).sqrt();
    ev /= nrm;
    et /= nrm;
    if ev * (a.v - b.v) < 0.0 {
        ev = -ev;
        et = -et;
    }
    let delta = 1e-9;
    let mut y = [b.v + delta * ev * sv, b.t + delta * et * st, 0.0, 0.0, 0.0];
    let mut x = 0.0;
    let scale = [sv, st, 1.0, 1.0, 1.0];
    let width_est = mu1 / rh.mass_flux;
    let mut h = -1e-3 * width_est;
    let rtol = 1e-12;
    let mut nodes: Vec<(f64, [f64; 5], [f64; 5])> = Vec::new();
    let f0 = ode.rhs(y[0], y[1]);
    nodes.push((x, y, f0));
    let mut k = [[0.0; 5]; 7];
    k[0] = f0;
    let lo_v = b.v.min(a.v) - 0.01 * sv;
    let hi_v = b.v.max(a.v) + 0.01 * sv;
    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > 2_000_000 {
            return Err(Error::ShootingFailed("step budget exhausted before reaching the upstream state".into()));
        }
        for s in 0..6 {
            let mut ys = y;
            for i in 0..5 {
                let mut acc = 0.0;
                for r in 0..=s {
                    acc += A[s][r] * k[r][i];
                }
                ys[i] = y[i] + h * acc;
            }
            if !(ys[1] > 0.0 && ys[0] > 0.0) {
                k[s + 1] = [f64::NAN; 5];
            } else {
                k[s + 1] = ode.rhs(ys[0], ys[1]);
            }
        }
        let mut ynew = y;
        for i in 0..5 {
            let mut acc = 0.0;
            for r in 0..6 {
                acc += A[5][r] * k[r][i];
            }
            ynew[i] = y[i] + h * acc;
        }
        let mut err: f64 = 0.0;
        for i in 0..2 {
            let mut e = 0.0;
            for r in 0..7 {
                e += E[r] * k[r][i];
            }
            err = err.max((h * e).abs() / (rtol * scale[i]));
        }
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            x += h;
            y = ynew;
            k[0] = k[6];
            nodes.push((x, y, k[6]));
            if !(y[0] > lo_v && y[0] < hi_v) {
                return Err(Error::ShootingFailed(format!(
                    "trajectory left the jump interval at x = {x:e}: v = {}, bracket [{}, {}]",
                    y[0], a.v, b.v
                )));
            }
            let dist = ((y[0] - a.v) / sv).abs().max(((y[1] - a.t) / st).abs());
            if dist < 1e-12 {
                break;
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        h = h.max(-50.0 * width_est);
    }
    nodes.reverse();
    let y_end = nodes[0].1;
    let sig_total = -y_end[2];
    let q_total = -y_end[3];
    let pd_total = -y_end[4];
    let mut xs: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let vs: Vec<f64> = nodes.iter().map(|n| n.1[0]).collect();
    let ts: Vec<f64> = nodes.iter().map(|n| n.1[1]).collect();
    let dvs: Vec<f64> = nodes.iter().map(|n| n.2[0]).collect();
    let dts: Vec<f64> = nodes.iter().map(|n| n.2[1]).collect();
    // recenter on the density midpoint
    let v_mid = rh.mass_flux / (0.5 * (a.rho + b.rho));
    let i = vs.iter().position(|&v| v <= v_mid).unwrap_or(vs.len() - 1).max(1);
    let xm = hermite_root(xs[i - 1], xs[i], vs[i - 1], vs[i], dvs[i - 1], dvs[i], v_mid);
    for x in xs.iter_mut() {
        *x -= xm;
    }
    let ep = ((vs[0] - a.v) / a.v)
        .abs()
        .max(((ts[0] - a.t) / a.t).abs())
        .max(((vs[vs.len() - 1] - b.v) / b.v).abs())
        .max(((ts[ts.len() - 1] - b.t) / b.t).abs());
    Ok(BeckerProfile {
        setup: *setup,
        eos: *eos,
        transport: tr,
        rh: rh_jump(setup, eos)?,
        x: xs,
        v: vs,
        t: ts,
        dv: dvs,
        dtemp: dts,
        integrated_sigma: sig_total,
        integrated_q: q_total,
        integrated_p_dilatation: pd_total,
        endpoint_error: ep,
    })
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

fn hermite_root(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, target: f64) -> f64 {
    let (mut a, mut b) = (x0, x1);
    let fa = hermite(x0, x1, y0, y1, d0, d1, a) - target;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = hermite(x0, x1, y0, y1, d0, d1, m) - target;
        if fm.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

impl BeckerProfile {
    fn locate(&self, x: f64) -> Option<usize> {
        if x <= self.x[0] || x >= self.x[self.x.len() - 1] {
            return None;
        }
        Some(self.x.partition_point(|&xi| xi <= x).max(1))
    }

    /// Shock-frame `(v, T)` at `x` (far states outside the trajectory).
    pub fn vt_at(&self, x: f64) -> (f64, f64) {
        match self.locate(x) {
            None if x <= self.x[0] => (self.v[0], self.t[0]),
            None => (self.v[self.v.len() - 1], self.t[self.t.len() - 1]),
            Some(i) => {
                let (x0, x1) = (self.x[i - 1], self.x[i]);
                (
                    hermite(x0, x1, self.v[i - 1], self.v[i], self.dv[i - 1], self.dv[i], x),
                    hermite(x0, x1, self.t[i - 1], self.t[i], self.dtemp[i - 1], self.dtemp[i], x),
                )
            }
        }
    }

    fn shift(&self) -> f64 {
        self.rh.shock_speed
    }

    /// Primitive state at position `x` and time `t` for a shock centered at
    /// `x_shock` when `t = 0`, in the setup's frame.
    pub fn state_at(&self, x: f64, t: f64, x_shock: f64) -> Prim {
        let w = self.shift();
        let (v, temp) = self.vt_at(x - x_shock - w * t);
        let rho = self.rh.mass_flux / v;
        Prim::new(rho, v + w, rho * self.eos.k_b * temp)
    }

    /// Distance over which density rises from 10% to 90% of its jump.
    pub fn width(&self) -> f64 {
        let (a, b) = (self.rh.upstream.rho, self.rh.downstream.rho);
        let at = |frac: f64| -> f64 {
            let target_v = self.rh.mass_flux / (a + frac * (b - a));
            let i = self.v.iter().position(|&v| v <= target_v).unwrap_or(self.v.len() - 1).max(1);
            hermite_root(self.x[i - 1], self.x[i], self.v[i - 1], self.v[i], self.dv[i - 1], self.dv[i], target_v)
        };
        at(0.9) - at(0.1)
    }

    /// Samples the profile on a one-dimensional space-time grid.
    pub fn sample(&self, grid: &Grid, x_shock: f64) -> Result<FieldBlock> {
        if grid.d != 1 {
            return Err(Error::InvalidInput("profile sampling needs a 1-D grid".into()));
        }
        let mut rho = Field::zeros(*grid);
        let mut u = Field::zeros(*grid);
        let mut v = Field::zeros(*grid);
        for p in grid.full_box().iter() {
            let s = self.state_at(grid.coord(AXIS_X, p[0]), grid.coord(AXIS_T, p[2]), x_shock);
            rho.set(p, s.rho);
            u.set(p, self.eos.internal_energy_from_pressure(s.p, s.rho));
            v.set(p, s.v);
        }
        FieldBlock::new(*grid, rho, u, vec![v], self.transport.eps)
    }
}
