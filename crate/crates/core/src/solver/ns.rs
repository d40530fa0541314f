use serde::{Deserialize, Serialize};

use super::becker::becker_profile;
use super::rh::{rh_jump, ShockSetup};
use super::wave::{smooth_wave_ic, SmoothWave};
use super::Prim;
use crate::error::{Error, Result};
use crate::fields::{Field, FieldBlock, Grid};
use crate::thermo::{Coefficient, EosKind, EosSpec, ThermoState, TransportModel};

fn default_sponge() -> usize {
    16
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Boundary {
    Periodic,
    /// Far states pinned to the initial edge states, relaxed over a sponge layer.
    InflowOutflow {
        #[serde(default = "default_sponge")]
        sponge_cells: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Init {
    Uniform {
        state: Prim,
    },
    Riemann {
        left: Prim,
        right: Prim,
        x_split: f64,
    },
    SmoothWave {
        wave: SmoothWave,
    },
    /// Planar shock centered at `x_shock`: the viscous profile when `eps > 0`,
    /// the jump otherwise.
    Shock {
        setup: ShockSetup,
        x_shock: f64,
    },
    Custom {
        states: Vec<Prim>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsConfig {
    pub eos: EosSpec,
    pub transport: TransportModel,
    pub nx: usize,
    pub dx: f64,
    /// Left edge of the domain.
    #[serde(default)]
    pub x0: f64,
    pub bc: Boundary,
    pub cfl: f64,
    pub init: Init,
    /// Speed converting time to length in the space-time metric of the output grid.
    #[serde(default)]
    pub c_ref: Option<f64>,
}

impl NsConfig {
    pub fn validate(&self) -> Result<()> {
        self.eos.validate()?;
        self.transport.validate()?;
        if self.nx < 8 {
            return Err(Error::config("nx", "need at least 8 cells"));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::config("dx", "must be finite and > 0"));
        }
        if !self.x0.is_finite() {
            return Err(Error::config("x0", "must be finite"));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::config("cfl", "must lie in (0, 1)"));
        }
        if let Some(c) = self.c_ref {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("c_ref", "must be finite and > 0"));
            }
        }
        if let Boundary::InflowOutflow { sponge_cells } = self.bc {
            if 2 * sponge_cells + 4 > self.nx {
                return Err(Error::config("bc.sponge_cells", "sponge layers leave no interior"));
            }
        }
        if let Init::Custom { states } = &self.init {
            if states.len() != self.nx {
                return Err(Error::config("init.states", format!("expected {} states, got {}", self.nx, states.len())));
            }
        }
        Ok(())
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        self.x0 + (i as f64 + 0.5) * self.dx
    }

    pub fn length(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn initial_states(&self) -> Result<Vec<Prim>> {
        let n = self.nx;
        match &self.init {
            Init::Uniform { state } => Ok(vec![*state; n]),
            Init::Riemann { left, right, x_split } => Ok((0..n).map(|i| if self.cell_center(i) < *x_split { *left } else { *right }).collect()),
            Init::SmoothWave { wave } => smooth_wave_ic(wave, &self.eos, n, self.dx, self.cell_center(0), 0.0),
            Init::Shock { setup, x_shock } => {
                if self.transport.eps > 0.0 {
                    let prof = becker_profile(setup, &self.eos, &self.transport, self.transport.eps)?;
                    Ok((0..n).map(|i| prof.state_at(self.cell_center(i), 0.0, *x_shock)).collect())
                } else {
                    let rh = rh_jump(setup, &self.eos)?;
                    let (a, b) = (rh.upstream.prim(), rh.downstream.prim());
                    Ok((0..n).map(|i| if self.cell_center(i) < *x_shock { a } else { b }).collect())
                }
            }
            Init::Custom { states } => Ok(states.clone()),
        }
    }
}

/// Resolution check: a viscous shock must span at least 8 cells.
pub fn preflight(config: &NsConfig) -> Result<()> {
    config.validate()?;
    if let Init::Shock { setup, .. } = &config.init {
        if config.transport.eps > 0.0 {
            let prof = becker_profile(setup, &config.eos, &config.transport, config.transport.eps)?;
            let w = prof.width();
            if config.dx > w / 8.0 {
                return Err(Error::UnresolvedRun(format!("profile width {w:e} spans {:.2} cells; need >= 8", w / config.dx)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub t_end: f64,
    /// Time between stored snapshots.
    pub snapshot_dt: f64,
    /// Time of the first stored snapshot.
    #[serde(default)]
    pub t_first: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Domain totals of mass, momentum and energy at the start and the end.
    pub totals_start: [f64; 3],
    pub totals_end: [f64; 3],
    pub snapshot_times: Vec<f64>,
    /// Total entropy at each snapshot.
    pub entropy: Vec<f64>,
    pub c_ref: f64,
}

impl Diagnostics {
    pub fn relative_drift(&self, k: usize) -> f64 {
        (self.totals_end[k] - self.totals_start[k]).abs() / self.totals_start[k].abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub block: FieldBlock,
    pub diagnostics: Diagnostics,
}

/// Integrates to `t_end`, storing a snapshot every `snapshot_stride` time units from `t = 0`.
pub fn integrate(config: &NsConfig, t_end: f64, snapshot_stride: f64) -> Result<FieldBlock> {
    Ok(integrate_with(config, &Schedule { t_end, snapshot_dt: snapshot_stride, t_first: 0.0 })?.block)
}

struct Stepper<'a> {
    cfg: &'a NsConfig,
    n: usize,
    periodic: bool,
    sponge: usize,
    pinned: [[f64; 3]; 2],
    pinned_prim: [Prim; 2],
    sigma_max: f64,
    ideal: Option<(f64, f64)>,
    const_coeffs: Option<(f64, f64)>,
    // scratch, with GH ghost cells per side
    rho: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    temp: Vec<f64>,
    c: Vec<f64>,
    flux: Vec<[f64; 3]>,
    /// Reconstructed primitives at the right and left face of each cell.
    face_r: Vec<[f64; 3]>,
    face_l: Vec<[f64; 3]>,
}

const GH: usize = 3;

/// WENO-Z reconstructions at the right and left faces of the center cell
/// `c` from `a b c d e`.
#[inline(always)]
fn weno_z(a: f64, b: f64, c: f64, d: f64, e: f64) -> (f64, f64) {
    let (s0, t0) = (a - 2.0 * b + c, a - 4.0 * b + 3.0 * c);
    let (s1, t1) = (b - 2.0 * c + d, b - d);
    let (s2, t2) = (c - 2.0 * d + e, 3.0 * c - 4.0 * d + e);
    let b0 = 13.0 / 12.0 * s0 * s0 + 0.25 * t0 * t0;
    let b1 = 13.0 / 12.0 * s1 * s1 + 0.25 * t1 * t1;
    let b2 = 13.0 / 12.0 * s2 * s2 + 0.25 * t2 * t2;
    let tau = (b0 - b2).abs();
    let r = |bk: f64| {
        let x = tau / (bk + 1e-40);
        1.0 + x * x
    };
    let (r0, r1, r2) = (r(b0), 0.6 * r(b1), r(b2));
    let (w0, w2) = (0.1 * r0, 0.3 * r2);
    let right = (w0 * (2.0 * a - 7.0 * b + 11.0 * c) + r1 * (-b + 5.0 * c + 2.0 * d) + w2 * (2.0 * c + 5.0 * d - e)) / (6.0 * (w0 + r1 + w2));
    let (v0, v2) = (0.1 * r2, 0.3 * r0);
    let left = (v0 * (2.0 * e - 7.0 * d + 11.0 * c) + r1 * (-d + 5.0 * c + 2.0 * b) + v2 * (2.0 * c + 5.0 * b - a)) / (6.0 * (v0 + r1 + v2));
    (right, left)
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a NsConfig, init: &[Prim]) -> Self {
        let n = cfg.nx;
        let (periodic, sponge) = match cfg.bc {
            Boundary::Periodic => (true, 0),
            Boundary::InflowOutflow { sponge_cells } => (false, sponge_cells),
        };
        let pinned_prim = [init[0], init[n - 1]];
        let a_ref = pinned_prim.iter().map(|s| s.v.abs() + s.sound_speed(&cfg.eos).unwrap_or(0.0)).fold(0.0, f64::max);
        Stepper {
            cfg,
            n,
            periodic,
            sponge,
            pinned: [pinned_prim[0].conserved(&cfg.eos), pinned_prim[1].conserved(&cfg.eos)],
            pinned_prim,
            sigma_max: 0.5 * a_ref / cfg.dx,
            ideal: (cfg.eos.kind == EosKind::IdealGas).then(|| (cfg.eos.alpha, cfg.eos.gamma())),
            const_coeffs: match (cfg.transport.eta, cfg.transport.zeta, cfg.transport.kappa) {
                (Coefficient::Constant { .. }, Coefficient::Constant { .. }, Coefficient::Constant { .. }) => {
                    Some((cfg.transport.longitudinal(1.0), cfg.transport.at_temperature(1.0).kappa))
                }
                _ => None,
            },
            rho: vec![0.0; n + 2 * GH],
            v: vec![0.0; n + 2 * GH],
            p: vec![0.0; n + 2 * GH],
            temp: vec![0.0; n + 2 * GH],
            c: vec![0.0; n + 2 * GH],
            flux: vec![[0.0; 3]; n + 1],
            face_r: vec![[0.0; 3]; n + 2 * GH],
            face_l: vec![[0.0; 3]; n + 2 * GH],
        }
    }

    fn primitives(&mut self, u: &[[f64; 3]], t: f64) -> Result<()> {
        let n = self.n;
        let eos = &self.cfg.eos;
        for i in 0..n {
            let [r, m, e] = u[i];
            let v = m / r;
            let ie = e - 0.5 * m * v;
            let (p, tt, c) = match self.ideal {
                Some((al, ga)) if r > 0.0 && ie > 0.0 => {
                    let p = ie / al;
                    (p, p / (eos.k_b * r), (ga * p / r).sqrt())
                }
                _ => {
                    eos.mechanical(ThermoState::new(ie, r)).map_err(|_| Error::NegativeDensityOrPressure { t, cell: i, rho: r, p: ie / eos.alpha })?
                }
            };
            if !(p > 0.0) {
                return Err(Error::NegativeDensityOrPressure { t, cell: i, rho: r, p });
            }
            let g = i + GH;
            self.rho[g] = r;
            self.v[g] = v;
            self.p[g] = p;
            self.temp[g] = tt;
            self.c[g] = c;
        }
        for gh in 0..GH {
            let (l, r) = (gh, n + GH + gh);
            if self.periodic {
                self.copy_cell(l, n + gh);
                self.copy_cell(r, GH + gh);
            } else {
                self.set_prim(l, self.pinned_prim[0])?;
                self.set_prim(r, self.pinned_prim[1])?;
            }
        }
        Ok(())
    }

    fn copy_cell(&mut self, dst: usize, src: usize) {
        self.rho[dst] = self.rho[src];
        self.v[dst] = self.v[src];
        self.p[dst] = self.p[src];
        self.temp[dst] = self.temp[src];
        self.c[dst] = self.c[src];
    }

    fn set_prim(&mut self, dst: usize, s: Prim) -> Result<()> {
        let (_, tt, c) = self.cfg.eos.mechanical(s.thermo(&self.cfg.eos))?;
        self.rho[dst] = s.rho;
        self.v[dst] = s.v;
        self.p[dst] = s.p;
        self.temp[dst] = tt;
        self.c[dst] = c;
        Ok(())
    }

    fn euler_flux(&self, s: Prim) -> Option<([f64; 3], [f64; 3], f64)> {
        let eos = &self.cfg.eos;
        if !(s.rho > 0.0 && s.p > 0.0) {
            return None;
        }
        if let Some((al, ga)) = self.ideal {
            let m = s.rho * s.v;
            let e = al * s.p + 0.5 * m * s.v;
            return Some(([m, m * s.v + s.p, (e + s.p) * s.v], [s.rho, m, e], s.v.abs() + (ga * s.p / s.rho).sqrt()));
        }
        let ie = eos.internal_energy_from_pressure(s.p, s.rho);
        let (_, _, c) = eos.mechanical(ThermoState::new(ie, s.rho)).ok()?;
        let m = s.rho * s.v;
        let e = ie + 0.5 * m * s.v;
        Some(([m, m * s.v + s.p, (e + s.p) * s.v], [s.rho, m, e], s.v.abs() + c))
    }

    /// Time derivative of the conserved cells; also returns the stable step.
    fn rhs(&mut self, u: &[[f64; 3]], t: f64, du: &mut [[f64; 3]]) -> Result<f64> {
        self.primitives(u, t)?;
        let n = self.n;
        let dx = self.cfg.dx;
        let tr = &self.cfg.transport;
        let viscous = tr.eps > 0.0;
        let ak = self.cfg.eos.alpha * self.cfg.eos.k_b;
        let mut a_max: f64 = 0.0;
        let mut d_max: f64 = 0.0;
        for g in 2..n + 2 * GH - 2 {
            let mut fr = [0.0; 3];
            let mut fl = [0.0; 3];
            for (k, q) in [&self.rho, &self.v, &self.p].into_iter().enumerate() {
                (fr[k], fl[k]) = weno_z(q[g - 2], q[g - 1], q[g], q[g + 1], q[g + 2]);
            }
            self.face_r[g] = fr;
            self.face_l[g] = fl;
        }
        for f in 0..=n {
            // face between ghost-indexed cells g = f + GH - 1 and g + 1
            let g = f + GH - 1;
            let (a, b) = (self.face_r[g], self.face_l[g + 1]);
            let lo = Prim::new(a[0], a[1], a[2]);
            let hi = Prim::new(b[0], b[1], b[2]);
            let pair = match (self.euler_flux(lo), self.euler_flux(hi)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    let a = Prim::new(self.rho[g], self.v[g], self.p[g]);
                    let b = Prim::new(self.rho[g + 1], self.v[g + 1], self.p[g + 1]);
                    (self.euler_flux(a).unwrap(), self.euler_flux(b).unwrap())
                }
            };
            let ((fl, ul, sl), (fr, ur, sr)) = pair;
            let s = if sl > sr { sl } else { sr };
            if s > a_max {
                a_max = s;
            }
            let mut fx = [0.0; 3];
            for k in 0..3 {
                fx[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * s * (ur[k] - ul[k]);
            }
            if viscous {
                let (tm, t0, t1, t2) = (self.temp[g - 1], self.temp[g], self.temp[g + 1], self.temp[g + 2]);
                let (vm, v0, v1, v2) = (self.v[g - 1], self.v[g], self.v[g + 1], self.v[g + 2]);
                let (mu, kap) = match self.const_coeffs {
                    Some(c) => c,
                    None => {
                        let tf = (9.0 * (t0 + t1) - tm - t2) / 16.0;
                        (tr.longitudinal(tf), tr.at_temperature(tf).kappa)
                    }
                };
                let stress = -mu * (vm - 27.0 * v0 + 27.0 * v1 - v2) / (24.0 * dx);
                let q = -kap * (tm - 27.0 * t0 + 27.0 * t1 - t2) / (24.0 * dx);
                fx[1] += stress;
                fx[2] += stress * (9.0 * (v0 + v1) - vm - v2) / 16.0 + q;
                let rmin = if self.rho[g] < self.rho[g + 1] { self.rho[g] } else { self.rho[g + 1] };
                let kd = kap / ak;
                let dd = if mu > kd { mu } else { kd } / rmin;
                if dd > d_max {
                    d_max = dd;
                }
            }
            self.flux[f] = fx;
        }
        for i in 0..n {
            for k in 0..3 {
                du[i][k] = -(self.flux[i + 1][k] - self.flux[i][k]) / dx;
            }
        }
        if self.sponge > 0 {
            let ns = self.sponge;
            for j in 0..ns {
                let w = self.sigma_max * ((ns - j) as f64 / ns as f64).powi(2);
                for k in 0..3 {
                    du[j][k] -= w * (u[j][k] - self.pinned[0][k]);
                    du[n - 1 - j][k] -= w * (u[n - 1 - j][k] - self.pinned[1][k]);
                }
            }
        }
        // the fourth-order diffusion stencil has spectral radius 16/3 · D/dx²;
        // SSP-RK3 is stable up to 2.5 on the negative real axis
        let dt = 1.0 / (a_max / (self.cfg.cfl * dx) + 16.0 / 3.0 * d_max / (2.2 * dx * dx));
        Ok(dt)
    }
}

fn totals(u: &[[f64; 3]], dx: f64) -> [f64; 3] {
    let mut s = [0.0; 3];
    for c in u {
        for k in 0..3 {
            s[k] += c[k];
        }
    }
    [s[0] * dx, s[1] * dx, s[2] * dx]
}

pub fn integrate_with(config: &NsConfig, sched: &Schedule) -> Result<RunOutput> {
    config.validate()?;
    if !(sched.snapshot_dt > 0.0 && sched.t_end >= sched.t_first && sched.t_first >= 0.0) {
        return Err(Error::config("schedule", "need snapshot_dt > 0 and 0 <= t_first <= t_end"));
    }
    let eos = config.eos;
    let init = config.initial_states()?;
    if let Init::SmoothWave { wave } = &config.init {
        let ts = wave.t_shock(&eos);
        if sched.t_end >= ts {
            return Err(Error::WouldShockInWindow { t_shock: ts, t_end: sched.t_end });
        }
    }
    let n = config.nx;
    let mut u: Vec<[f64; 3]> = init.iter().map(|s| s.conserved(&eos)).collect();
    let c_ref = match config.c_ref {
        Some(c) => c,
        None => init.iter().map(|s| s.v.abs() + s.sound_speed(&eos).unwrap_or(0.0)).fold(0.0, f64::max),
    };
    let nt = ((sched.t_end - sched.t_first) / sched.snapshot_dt * (1.0 + 1e-12)).floor() as usize + 1;
    let snap_time = |k: usize| sched.t_first + k as f64 * sched.snapshot_dt;
    let grid = Grid::new_1d(n, config.dx, config.cell_center(0), config.bc == Boundary::Periodic, nt, sched.snapshot_dt, sched.t_first, c_ref);
    grid.validate()?;
    let mut rho_f = Field::zeros(grid);
    let mut u_f = Field::zeros(grid);
    let mut v_f = Field::zeros(grid);
    let mut diag = Diagnostics { dt_min: f64::INFINITY, c_ref, totals_start: totals(&u, config.dx), ..Default::default() };
    let mut st = Stepper::new(config, &init);
    let mut k1 = vec![[0.0; 3]; n];
    let mut u1 = vec![[0.0; 3]; n];
    let mut u2 = vec![[0.0; 3]; n];
    let mut t = 0.0;
    let mut next = 0usize;
    let store = |k: usize, u: &[[f64; 3]], rho_f: &mut Field, u_f: &mut Field, v_f: &mut Field| {
        for (i, c) in u.iter().enumerate() {
            let p = [i, 0, k];
            let v = c[1] / c[0];
            rho_f.set(p, c[0]);
            u_f.set(p, c[2] - 0.5 * c[1] * v);
            v_f.set(p, v);
        }
    };
    loop {
        if next < nt && (t - snap_time(next)).abs() <= 1e-12 * sched.snapshot_dt.max(snap_time(next)) {
            store(next, &u, &mut rho_f, &mut u_f, &mut v_f);
            let mut s_tot = 0.0;
            for c in &u {
                let v = c[1] / c[0];
                s_tot += eos.entropy(ThermoState::new(c[2] - 0.5 * c[1] * v, c[0]))?;
            }
            diag.entropy.push(s_tot * config.dx);
            diag.snapshot_times.push(t);
            next += 1;
        }
        if next >= nt {
            break;
        }
        let dt_stable = st.rhs(&u, t, &mut k1)?;
        if !(dt_stable.is_finite() && dt_stable > 1e-14 * sched.snapshot_dt) {
            return Err(Error::CflViolation(format!("stable step {dt_stable:e} collapsed at t = {t:e}")));
        }
        let target = snap_time(next);
        let mut dt = dt_stable;
        if t + dt >= target {
            dt = target - t;
        } else if t + 1.5 * dt >= target {
            dt = 0.5 * (target - t);
        }
        for i in 0..n {
            for k in 0..3 {
                u1[i][k] = u[i][k] + dt * k1[i][k];
            }
        }
        st.rhs(&u1, t + dt, &mut k1)?;
        for i in 0..n {
            for k in 0..3 {
                u2[i][k] = 0.75 * u[i][k] + 0.25 * (u1[i][k] + dt * k1[i][k]);
            }
        }
        st.rhs(&u2, t + 0.5 * dt, &mut k1)?;
        for i in 0..n {
            for k in 0..3 {
                u[i][k] = u[i][k] / 3.0 + 2.0 / 3.0 * (u2[i][k] + dt * k1[i][k]);
            }
        }
        t = if (t + dt - target).abs() <= 1e-12 * target.abs().max(dt) { target } else { t + dt };
        diag.steps += 1;
        diag.dt_min = diag.dt_min.min(dt);
        diag.dt_max = diag.dt_max.max(dt);
        for (i, c) in u.iter().enumerate() {
            if !(c[0] > 0.0) || !c[0].is_finite() {
                return Err(Error::NegativeDensityOrPressure { t, cell: i, rho: c[0], p: f64::NAN });
            }
        }
    }
    diag.totals_end = totals(&u, config.dx);
    let block = FieldBlock::new(grid, rho_f, u_f, vec![v_f], config.transport.eps)?;
    Ok(RunOutput { block, diagnostics: diag })
}
