//! Experiments shared by the `report` command and the acceptance suite: the
//! planar-shock viscosity and filter-scale scan, smooth simple-wave runs, and
//! constructed-exponent fields for the cumulant scaling laws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::besov::{
    extrapolate_limit_tol, fit_exponent, linear_fit, onsager_conditions_with_tolerance, richardson_polynomial, scale_ladder, structure_function,
    ExponentFit, LimitExtrapolation, OnsagerReport, StructureFunction, StructureMode,
};
use crate::budgets::{compute_budgets, dissipation_fields, eq, pointwise_thermo, smear, BudgetOptions, TestFunction};
use crate::error::{Error, Result};
use crate::fields::{lp_norm, Field, FieldBlock, Grid, IBox, Subdomain, AXIS_T, AXIS_X};
use crate::filter::{build_kernel, composite_defect, cumulant2, fluctuation, Engine, FilterKernel, MollifierSpec, Stencil};
use crate::solver::{
    becker_profile, integrate_with, rh_jump, Boundary, Diagnostics, Init, NsConfig, RankineHugoniot, Schedule, ShockSetup, SmoothWave,
};
use crate::thermo::{EosSpec, ThermoState, TransportModel};

/// Tensor-product bump placed relative to the shock and the analysis window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub name: String,
    /// Center offset from the shock.
    pub x: f64,
    pub half_width_x: f64,
    /// Center offset from the middle of the analysis window.
    pub t_offset: f64,
    pub half_width_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockScanConfig {
    pub eos: EosSpec,
    /// Transport coefficients; `eps` is replaced by each scan value.
    pub transport: TransportModel,
    pub upstream_rho: f64,
    pub upstream_p: f64,
    pub mach: f64,
    pub nx: usize,
    pub length: f64,
    pub cfl: f64,
    pub sponge_cells: usize,
    pub c_ref: f64,
    /// Largest viscosity scale; the scan halves it `n_eps - 1` times.
    pub eps0: f64,
    pub n_eps: usize,
    pub ell_min: f64,
    pub ell_max: f64,
    pub n_ell: usize,
    /// Time before the first stored snapshot.
    pub t_settle: f64,
    /// Length of the stored window.
    pub window: f64,
    pub snapshot_dt: f64,
    pub bumps: Vec<BumpSpec>,
}

impl ShockScanConfig {
    /// Mach-2 ideal-gas shock on 4096 cells; the smallest viscosity puts
    /// about 8.5 cells across the profile.
    pub fn standard() -> Self {
        let bump = |name: &str, x: f64, hx: f64, t: f64, ht: f64| BumpSpec { name: name.into(), x, half_width_x: hx, t_offset: t, half_width_t: ht };
        ShockScanConfig {
            eos: EosSpec::ideal_gas(2.5),
            transport: TransportModel::constant(1.0, 0.0, 14.0 / 3.0, 0.0),
            upstream_rho: 1.0,
            upstream_p: 1.0,
            mach: 2.0,
            nx: 4096,
            length: 1.0,
            cfl: 0.5,
            sponge_cells: 16,
            c_ref: 20.0,
            eps0: 6.2e-3,
            n_eps: 4,
            ell_min: 0.025,
            ell_max: 0.25,
            n_ell: 8,
            t_settle: 0.02,
            window: 0.035,
            snapshot_dt: 2.5e-4,
            bumps: vec![bump("phi_a", 0.0, 0.24, 0.0, 0.004), bump("phi_b", 0.01, 0.23, 0.001, 0.0035), bump("phi_c", -0.008, 0.22, -0.0005, 0.004)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eos.validate()?;
        self.transport.validate()?;
        let pos = |v: f64, name: &str| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(Error::config(name, "must be finite and > 0")) };
        for (v, n) in [
            (self.upstream_rho, "upstream_rho"),
            (self.upstream_p, "upstream_p"),
            (self.length, "length"),
            (self.c_ref, "c_ref"),
            (self.eps0, "eps0"),
            (self.ell_min, "ell_min"),
            (self.ell_max, "ell_max"),
            (self.window, "window"),
            (self.snapshot_dt, "snapshot_dt"),
        ] {
            pos(v, n)?;
        }
        if !(self.t_settle >= 0.0) {
            return Err(Error::config("t_settle", "must be >= 0"));
        }
        if self.n_eps < 2 {
            return Err(Error::InsufficientScan);
        }
        if self.n_ell < 5 || self.ell_max <= self.ell_min {
            return Err(Error::config("n_ell", "need at least 5 increasing scales"));
        }
        if self.bumps.is_empty() {
            return Err(Error::config("bumps", "need at least one test function"));
        }
        Ok(())
    }

    pub fn eps_values(&self) -> Vec<f64> {
        (0..self.n_eps).map(|m| self.eps0 / 2f64.powi(m as i32)).collect()
    }

    pub fn ells(&self) -> Vec<f64> {
        log_space(self.ell_min, self.ell_max, self.n_ell)
    }

    pub fn setup(&self) -> ShockSetup {
        ShockSetup::stationary(self.upstream_rho, self.upstream_p, self.mach, &self.eos)
    }

    pub fn ns_config(&self, eps: f64) -> NsConfig {
        NsConfig {
            eos: self.eos,
            transport: self.transport.with_eps(eps),
            nx: self.nx,
            dx: self.length / self.nx as f64,
            x0: -0.5 * self.length,
            bc: Boundary::InflowOutflow { sponge_cells: self.sponge_cells },
            cfl: self.cfl,
            init: Init::Shock { setup: self.setup(), x_shock: 0.0 },
            c_ref: Some(self.c_ref),
        }
    }

    fn schedule(&self) -> Schedule {
        Schedule { t_end: self.t_settle + self.window, snapshot_dt: self.snapshot_dt, t_first: self.t_settle }
    }

    fn test_functions(&self, grid: &Grid) -> Result<Vec<TestFunction>> {
        let tm = self.t_settle + 0.5 * self.window;
        self.bumps.iter().map(|b| TestFunction::bump(&b.name, grid, [b.x, 0.0, tm + b.t_offset], [b.half_width_x, 1.0, b.half_width_t])).collect()
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1).max(1) as f64)).collect()
}

/// Filtered terms tracked by the shock scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanTerm {
    SigmaInert,
    QFlux,
    TauPTheta,
}

impl ScanTerm {
    pub const ALL: [ScanTerm; 3] = [ScanTerm::SigmaInert, ScanTerm::QFlux, ScanTerm::TauPTheta];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ScanTerm::SigmaInert => "Sigma_inert_star",
            ScanTerm::QFlux => "Q_flux",
            ScanTerm::TauPTheta => "tau_p_theta",
        }
    }

    fn equation(self) -> &'static str {
        match self {
            ScanTerm::SigmaInert => eq::INTRINSIC_ENTROPY,
            ScanTerm::QFlux => eq::RESOLVED_KE,
            ScanTerm::TauPTheta => eq::PRESSURE_DILATATION,
        }
    }
}

/// Pointwise viscous quantities smeared against a bump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pointwise {
    Sigma,
    Q,
    PTheta,
}

/// One viscosity value of the shock scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShockEpsRun {
    pub eps: f64,
    pub profile_width: f64,
    pub cells_per_width: f64,
    pub diagnostics: Diagnostics,
    /// Jump position conserving the mass of the last snapshot.
    pub x_step: f64,
    /// L¹ distance of `(ϱ, v, p)` at the last snapshot to the RH step.
    pub l1: [f64; 3],
    /// Per bump: smeared `Σ^ε`, `Q^ε`, `p^ε Θ^ε`.
    pub pointwise: Vec<[f64; 3]>,
    /// `[ell][bump]`: smeared `Σ^{inert*}_ℓ`, `Q^flux_ℓ`, `τ̄_ℓ(p, Θ)`.
    pub terms: Vec<Vec<[f64; 3]>>,
}

/// Limits the smeared observables must reach, per bump.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BumpReference {
    /// `∫ φ(x_shock, t) dt`.
    pub time_integral: f64,
    /// `j Δs_m ∫φ`.
    pub sigma: f64,
    /// Integrated viscous dissipation of the profile times `∫φ`.
    pub q: f64,
    /// Integrated `pΘ` of the profile times `∫φ`.
    pub p_theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShockScan {
    pub config: ShockScanConfig,
    pub rh: RankineHugoniot,
    pub eps: Vec<f64>,
    pub ells: Vec<f64>,
    pub references: Vec<BumpReference>,
    pub runs: Vec<ShockEpsRun>,
    /// Data of the smallest viscosity.
    #[serde(skip)]
    pub finest: Option<FieldBlock>,
}

/// L¹ distance of the last snapshot to the jump that conserves its mass.
fn step_distance(block: &FieldBlock, rh: &RankineHugoniot, eos: &EosSpec) -> Result<(f64, [f64; 3])> {
    let g = block.grid;
    let k = g.nt - 1;
    let n = g.nx[0];
    let dx = g.dx[0];
    let left = g.x0[0] - 0.5 * dx;
    let right = left + n as f64 * dx;
    let (a, b) = (rh.upstream, rh.downstream);
    let mass: f64 = (0..n).map(|i| block.rho.at([i, 0, k])).sum::<f64>() * dx;
    let xs = (mass - b.rho * right + a.rho * left) / (a.rho - b.rho);
    let (pressure, _) = pointwise_thermo(block, eos)?;
    let mut l1 = [0.0; 3];
    for i in 0..n {
        let c1 = left + (i + 1) as f64 * dx;
        // fraction of the cell downstream of the jump
        let f = ((c1 - xs) / dx).clamp(0.0, 1.0);
        let step = |ua: f64, ub: f64| (1.0 - f) * ua + f * ub;
        let p = [i, 0, k];
        l1[0] += (block.rho.at(p) - step(a.rho, b.rho)).abs() * dx;
        l1[1] += (block.v[0].at(p) - step(a.v, b.v)).abs() * dx;
        l1[2] += (pressure.at(p) - step(a.p, b.p)).abs() * dx;
    }
    Ok((xs, l1))
}

/// Runs one viscosity value and evaluates every scan observable.
pub fn run_shock_eps(cfg: &ShockScanConfig, eps: f64) -> Result<(ShockEpsRun, FieldBlock)> {
    let ns = cfg.ns_config(eps);
    let setup = cfg.setup();
    let prof = becker_profile(&setup, &cfg.eos, &ns.transport, eps)?;
    let width = prof.width();
    if ns.dx > width / 8.0 {
        return Err(Error::UnresolvedRun(format!("eps = {eps:e}: profile spans {:.2} cells; need >= 8", width / ns.dx)));
    }
    let rh = rh_jump(&setup, &cfg.eos)?;
    let out = integrate_with(&ns, &cfg.schedule())?;
    let block = out.block;
    let g = block.grid;
    let phis = cfg.test_functions(&g)?;
    let (x_step, l1) = step_distance(&block, &rh, &cfg.eos)?;
    let dis = dissipation_fields(&block, &cfg.eos, &ns.transport)?;
    let (pressure, _) = pointwise_thermo(&block, &cfg.eos)?;
    let vp = crate::budgets::viscous_pointwise(&block, &cfg.eos, &ns.transport)?;
    let ptheta = pressure.mul(&vp.theta);
    let pointwise = phis.iter().map(|phi| Ok([smear(&dis.sigma, phi)?, smear(&dis.q, phi)?, smear(&ptheta, phi)?])).collect::<Result<Vec<_>>>()?;
    let region = phis.iter().skip(1).fold(phis[0].support, |b, p| {
        let mut u = b;
        for a in 0..3 {
            u.lo[a] = u.lo[a].min(p.support.lo[a]);
            u.hi[a] = u.hi[a].max(p.support.hi[a]);
        }
        u
    });
    let opts = BudgetOptions { region: Some(region), require_viscous: true, engine: Engine::Auto };
    let mut terms = Vec::new();
    for ell in cfg.ells() {
        let k = build_kernel(MollifierSpec::default(), ell, &g)?;
        let set = compute_budgets(&block, &k, &cfg.eos, &ns.transport, &opts)?;
        let fields: Vec<&Field> = ScanTerm::ALL.iter().map(|t| set.term(t.equation(), t.name())).collect::<Result<_>>()?;
        let row = phis.iter().map(|phi| Ok([smear(fields[0], phi)?, smear(fields[1], phi)?, smear(fields[2], phi)?])).collect::<Result<Vec<_>>>()?;
        terms.push(row);
    }
    let run = ShockEpsRun { eps, profile_width: width, cells_per_width: width / ns.dx, diagnostics: out.diagnostics, x_step, l1, pointwise, terms };
    Ok((run, block))
}

/// The full viscosity and filter-scale scan. Runs are sequential so only
/// one data block is alive at a time; the finest one is kept.
pub fn shock_scan(cfg: &ShockScanConfig) -> Result<ShockScan> {
    cfg.validate()?;
    let setup = cfg.setup();
    let rh = rh_jump(&setup, &cfg.eos)?;
    let eps = cfg.eps_values();
    let prof = becker_profile(&setup, &cfg.eos, &cfg.transport.with_eps(eps[0]), eps[0])?;
    let mut runs = Vec::new();
    let mut finest = None;
    for &e in &eps {
        let (run, block) = run_shock_eps(cfg, e)?;
        runs.push(run);
        finest = Some(block);
    }
    let g = finest.as_ref().map(|b| b.grid).ok_or(Error::InsufficientScan)?;
    let references = cfg
        .test_functions(&g)?
        .iter()
        .map(|phi| {
            let ti = phi.time_integral_at(0.0, 0.0);
            BumpReference { time_integral: ti, sigma: rh.anomaly_entropy * ti, q: prof.integrated_q * ti, p_theta: prof.integrated_p_dilatation * ti }
        })
        .collect();
    Ok(ShockScan { config: cfg.clone(), rh, eps, ells: cfg.ells(), references, runs, finest })
}

impl ShockScan {
    /// Polynomial extrapolation to `ε → 0` at each scale, with error estimates.
    pub fn eps_extrapolated(&self, term: ScanTerm, bump: usize) -> Result<Vec<(f64, f64)>> {
        (0..self.ells.len())
            .map(|l| {
                let ys: Vec<f64> = self.runs.iter().map(|r| r.terms[l][bump][term.index()]).collect();
                richardson_polynomial(&self.eps, &ys)
            })
            .collect()
    }

    /// `ℓ → 0` limit of the `ε → 0` values. The convergence tolerance is
    /// twice the largest Richardson error estimate.
    pub fn ell_limit(&self, term: ScanTerm, bump: usize) -> Result<LimitExtrapolation> {
        let r = self.eps_extrapolated(term, bump)?;
        let ys: Vec<f64> = r.iter().map(|v| v.0).collect();
        let tol = 2.0 * r.iter().map(|v| v.1).fold(0.0, f64::max);
        extrapolate_limit_tol(&self.ells, &ys, tol)
    }

    pub fn pointwise_series(&self, kind: Pointwise, bump: usize) -> Vec<f64> {
        self.runs.iter().map(|r| r.pointwise[bump][kind as usize]).collect()
    }

    /// `ε → 0` value of a smeared pointwise quantity and its error estimate.
    pub fn pointwise_limit(&self, kind: Pointwise, bump: usize) -> Result<(f64, f64)> {
        richardson_polynomial(&self.eps, &self.pointwise_series(kind, bump))
    }

    /// Relative successive differences `|S(ε_{k+1}) - S(ε_k)| / |S(ε_k)|`.
    pub fn cauchy(&self, kind: Pointwise, bump: usize) -> Vec<f64> {
        let s = self.pointwise_series(kind, bump);
        s.windows(2).map(|w| (w[1] - w[0]).abs() / w[0].abs()).collect()
    }

    /// `L³` exponents of the smallest-viscosity data over `|x| <= 0.25`,
    /// fitted on `ℓ ∈ [0.02, 0.2]`.
    pub fn finest_besov(&self, tol: f64) -> Result<BesovStudy> {
        let block = self.finest.as_ref().ok_or(Error::InsufficientScan)?;
        besov_study(block, 3.0, 0.0, 0.25, [0.02, 0.2], 12, StructureMode::SpaceOnly, tol)
    }

    /// Log-log slopes of the L¹ step distance of `(ϱ, v, p)` against `ε`.
    pub fn l1_slopes(&self) -> [f64; 3] {
        let x: Vec<f64> = self.eps.iter().map(|e| e.ln()).collect();
        [0, 1, 2].map(|k| {
            let y: Vec<f64> = self.runs.iter().map(|r| r.l1[k].ln()).collect();
            linear_fit(&x, &y).1
        })
    }
}

/// Exponent fits of `(u, ϱ, v)` and the resulting exponent conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesovStudy {
    pub structure: Vec<StructureFunction>,
    pub fits: [ExponentFit; 3],
    pub onsager: OnsagerReport,
}

/// `L^p` exponents of `(u, ϱ, v)` over the points with `|x - x_c| <= half`
/// and every time slice (inset for space-time shifts), fitted on `n` scales in `[lo, hi]`.
pub fn besov_study(block: &FieldBlock, p: f64, x_c: f64, half: f64, range: [f64; 2], n: usize, mode: StructureMode, tol: f64) -> Result<BesovStudy> {
    let g = block.grid;
    let i0 = ((x_c - half - g.x0[0]) / g.dx[0]).ceil().max(0.0) as usize;
    let i1 = (((x_c + half - g.x0[0]) / g.dx[0]).floor() as usize + 1).min(g.nx[0]);
    let full = g.full_box();
    let mut bx = full;
    bx.lo[AXIS_X] = i0;
    bx.hi[AXIS_X] = i1;
    if mode == StructureMode::SpaceTime {
        let r = (range[1] / g.metric_spacing(AXIS_T)).ceil() as usize + 1;
        bx.lo[AXIS_T] += r;
        bx.hi[AXIS_T] = bx.hi[AXIS_T].saturating_sub(r);
    }
    let o = Subdomain::new(&g, bx, &full)?;
    let ells = scale_ladder(g.dx[0], range[0], range[1], n);
    let mut structure = Vec::new();
    let mut fits = Vec::new();
    for (f, id) in [(&block.u, "u"), (&block.rho, "rho"), (&block.v[0], "v")] {
        let sf = structure_function(f, &o, p, &ells, mode, id)?;
        fits.push(fit_exponent(&sf, range)?);
        structure.push(sf);
    }
    let onsager = onsager_conditions_with_tolerance(fits[0].sigma, fits[1].sigma, fits[2].sigma, tol);
    Ok(BesovStudy { structure, fits: [fits[0], fits[1], fits[2]], onsager })
}

/// Periodic simple-wave runs of the inviscid solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub eos: EosSpec,
    pub wave: SmoothWave,
    pub cfl: f64,
    /// Metric speed; snapshots are spaced so that `c_ref · Δt = Δx`.
    pub c_ref: f64,
    pub t_first: f64,
    pub window: f64,
}

impl WaveConfig {
    pub fn standard() -> Self {
        WaveConfig {
            eos: EosSpec::ideal_gas(2.5),
            wave: SmoothWave { rho0: 1.0, p0: 1.0, amplitude: 0.1, wavelength: 1.0 },
            cfl: 0.5,
            c_ref: 2.0,
            t_first: 0.3,
            window: 0.25,
        }
    }

    /// Snapshot block of the inviscid run on `nx` cells.
    pub fn run(&self, nx: usize) -> Result<FieldBlock> {
        let dx = self.wave.wavelength / nx as f64;
        let sdt = dx / self.c_ref;
        let nt = (self.window / sdt).round() as usize;
        let ns = NsConfig {
            eos: self.eos,
            transport: TransportModel::inviscid(),
            nx,
            dx,
            x0: 0.0,
            bc: Boundary::Periodic,
            cfl: self.cfl,
            init: Init::SmoothWave { wave: self.wave },
            c_ref: Some(self.c_ref),
        };
        let out = integrate_with(&ns, &Schedule { t_end: self.t_first + nt as f64 * sdt, snapshot_dt: sdt, t_first: self.t_first })?;
        Ok(out.block)
    }
}

/// Largest filtered-Euler residual per balance on one grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualLevel {
    pub nx: usize,
    pub residuals: Vec<(String, f64)>,
}

/// Max-norm residuals of the filtered mass, momentum and energy balances at
/// a fixed scale, over a fixed physical window, on successively halved grids.
pub fn residual_convergence(cfg: &WaveConfig, nx0: usize, levels: usize, ell: f64) -> Result<Vec<ResidualLevel>> {
    let mut out = Vec::new();
    for m in 0..levels {
        let nx = nx0 << m;
        let block = cfg.run(nx)?;
        let k = build_kernel(MollifierSpec::default(), ell, &block.grid)?;
        let g = block.grid;
        // fixed physical time window, inset by the kernel reach of the coarsest grid
        let t_lo = cfg.t_first + ell / cfg.c_ref + cfg.window * 0.1;
        let t_hi = cfg.t_first + cfg.window - ell / cfg.c_ref - cfg.window * 0.1;
        let k0 = ((t_lo - g.t0) / g.dt).ceil() as usize;
        let k1 = ((t_hi - g.t0) / g.dt).floor() as usize;
        let region = IBox::new([0, 0, k0], [g.nx[0], 1, k1]);
        let opts = BudgetOptions { region: Some(region), require_viscous: false, engine: Engine::Auto };
        let tr = TransportModel::inviscid();
        let set = compute_budgets(&block, &k, &cfg.eos, &tr, &opts)?;
        let residuals = set
            .reports
            .iter()
            .filter(|r| r.equation == eq::MASS || r.equation.starts_with(eq::MOMENTUM) || r.equation == eq::TOTAL_ENERGY)
            .map(|r| {
                let f = r.residual.as_ref().ok_or_else(|| Error::InvalidInput(format!("{} has no residual", r.equation)))?;
                Ok((r.equation.clone(), f.max_abs_on(&region.intersect(&f.valid))))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ResidualLevel { nx, residuals });
    }
    Ok(out)
}

/// Smeared `Q^flux_ℓ` on smooth data against a bump centered in the block.
pub fn smooth_q_flux_scan(cfg: &WaveConfig, block: &FieldBlock, ells: &[f64]) -> Result<Vec<f64>> {
    let g = block.grid;
    let tm = cfg.t_first + 0.5 * cfg.window;
    let ht = 0.5 * cfg.window - ells.iter().cloned().fold(0.0, f64::max) / cfg.c_ref - 2.0 * g.dt;
    let phi = TestFunction::bump("phi_wave", &g, [0.3 * cfg.wave.wavelength, 0.0, tm], [0.2 * cfg.wave.wavelength, 1.0, ht])?;
    ells.iter()
        .map(|&ell| {
            let k = build_kernel(MollifierSpec::default(), ell, &g)?;
            let opts = BudgetOptions { region: Some(phi.support), require_viscous: false, engine: Engine::Auto };
            let set = compute_budgets(block, &k, &cfg.eos, &TransportModel::inviscid(), &opts)?;
            smear(set.term(eq::RESOLVED_KE, "Q_flux")?, &phi)
        })
        .collect()
}

/// Random-phase Fourier series `Σ_k k^{-(σ + 1/2)} cos(2πkx + θ_k)` on a
/// periodic unit interval, with modes up to `nx / 4`, scaled to unit max.
/// Its increments scale as `|r|^σ` in every `L^p`.
pub fn spectral_field(grid: &Grid, sigma: f64, seed: u64) -> Field {
    let n = grid.nx[0];
    let kmax = n / 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64)> = (1..=kmax).map(|k| ((k as f64).powf(-(sigma + 0.5)), rng.gen::<f64>() * std::f64::consts::TAU)).collect();
    let line: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            modes.iter().enumerate().map(|(k, (a, th))| a * (std::f64::consts::TAU * (k + 1) as f64 * x + th).cos()).sum()
        })
        .collect();
    let m = line.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Field::from_fn(*grid, |x, _, _| {
        let i = ((x - grid.x0[0]) / grid.dx[0]).round() as usize % n;
        line[i] / m
    })
}

/// One measured scaling law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingLaw {
    pub name: String,
    pub predicted: f64,
    pub measured: f64,
    pub stderr: f64,
    pub ells: Vec<f64>,
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub nx: usize,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub seed: u64,
    pub ell_min: f64,
    pub ell_max: f64,
    pub n_ell: usize,
    /// Norm exponent for first-order quantities; products use `p / 2`.
    pub p: f64,
}

impl ScalingConfig {
    pub fn standard() -> Self {
        ScalingConfig { nx: 4096, sigma_f: 0.4, sigma_g: 0.6, seed: 11, ell_min: 0.004, ell_max: 0.04, n_ell: 9, p: 3.0 }
    }
}

/// Measures the slopes of `‖τ̄_ℓ(f, g)‖`, `‖∂τ̄_ℓ(f, g)‖`, `‖f'_ℓ‖` and
/// `‖Δ_ℓ h‖` on constructed-exponent fields.
pub fn scaling_laws(cfg: &ScalingConfig) -> Result<Vec<ScalingLaw>> {
    let ells = log_space(cfg.ell_min, cfg.ell_max, cfg.n_ell);
    // time-independent data; the time axis only needs to hold the kernel
    let c_dt = 0.5 * cfg.ell_min;
    let rt = (cfg.ell_max / c_dt).ceil() as usize;
    let nt = 2 * rt + 3;
    let grid = Grid::new_1d(cfg.nx, 1.0 / cfg.nx as f64, 0.0, true, nt, c_dt, 0.0, 1.0);
    let f = spectral_field(&grid, cfg.sigma_f, cfg.seed);
    let g = spectral_field(&grid, cfg.sigma_g, cfg.seed.wrapping_add(1));
    let eos = EosSpec::ideal_gas(2.5);
    let u = f.map(|x| 2.5 + 0.5 * x);
    let rho = g.map(|x| 1.0 + 0.05 * x);
    let h = |u: f64, r: f64| eos.entropy(ThermoState::new(u, r));
    let mid = IBox::new([0, 0, nt / 2], [cfg.nx, 1, nt / 2 + 1]);
    let q = cfg.p;
    let mut norms = vec![Vec::new(); 4];
    for &ell in &ells {
        let k: FilterKernel = build_kernel(MollifierSpec::default(), ell, &grid)?;
        let tau = cumulant2(&f, &g, &k)?;
        let fg = f.mul(&g);
        let o = k.apply_many(&[&fg, &f, &g], &[Stencil::Value, Stencil::Deriv(AXIS_X)], Engine::Auto)?;
        let mut dtau = o[0][1].clone();
        for p in mid.iter() {
            dtau.set(p, o[0][1].at(p) - o[1][1].at(p) * o[2][0].at(p) - o[1][0].at(p) * o[2][1].at(p));
        }
        let fl = fluctuation(&f, &k)?;
        let dh = composite_defect(h, &u, &rho, &k)?;
        norms[0].push(lp_norm(&tau, &mid, q / 2.0)?);
        norms[1].push(lp_norm(&dtau, &mid, q / 2.0)?);
        norms[2].push(lp_norm(&fl, &mid, q)?);
        norms[3].push(lp_norm(&dh, &mid, q / 2.0)?);
    }
    let (sf, sg) = (cfg.sigma_f, cfg.sigma_g);
    let laws = [("cumulant", sf + sg), ("cumulant_gradient", sf + sg - 1.0), ("fluctuation", sf), ("composite_defect", 2.0 * sf.min(sg))];
    let x: Vec<f64> = ells.iter().map(|l| l.ln()).collect();
    Ok(laws
        .iter()
        .zip(norms)
        .map(|(&(name, predicted), n)| {
            let y: Vec<f64> = n.iter().map(|v| v.ln()).collect();
            let (_, b, _, se) = linear_fit(&x, &y);
            ScalingLaw { name: name.into(), predicted, measured: b, stderr: se, ells: ells.clone(), norms: n }
        })
        .collect())
}

/// Time-axis helper: index range of snapshots inside `[t_lo, t_hi]`.
pub fn time_indices(grid: &Grid, t_lo: f64, t_hi: f64) -> (usize, usize) {
    let k0 = ((t_lo - grid.t0) / grid.dt).ceil().max(0.0) as usize;
    let k1 = (((t_hi - grid.t0) / grid.dt).floor() as usize + 1).min(grid.shape()[AXIS_T]);
    (k0, k1)
}
