//! The bundled acceptance run behind `onsager-lab report`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::besov::{extrapolate_limit, linear_fit, StructureMode};
use crate::budgets::{compute_budgets, eq, BudgetOptions};
use crate::error::Result;
use crate::experiments::{
    besov_study, log_space, residual_convergence, scaling_laws, shock_scan, smooth_q_flux_scan, Pointwise, ScalingConfig, ScanTerm, ShockScan,
    ShockScanConfig, WaveConfig,
};
use crate::fields::{Field, FieldBlock, Grid};
use crate::filter::{
    build_kernel, cumulant_increment, cumulant_n, favre_cumulant2, favre_cumulant2_expanded, favre_cumulant3, favre_cumulant3_expanded, Engine,
    MollifierSpec,
};
use crate::solver::{becker_profile, rh_jump, ShockSetup};
use crate::thermo::{EosSpec, ThermoState, TransportModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub what: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

struct Checks(Vec<Check>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn le(&mut self, what: impl Into<String>, value: f64, bound: f64) {
        self.0.push(Check { what: what.into(), value, bound: format!("<= {bound:e}"), passed: value <= bound });
    }

    fn ge(&mut self, what: impl Into<String>, value: f64, bound: f64) {
        self.0.push(Check { what: what.into(), value, bound: format!(">= {bound:e}"), passed: value >= bound });
    }

    fn within(&mut self, what: impl Into<String>, value: f64, target: f64, tol: f64) {
        self.0.push(Check { what: what.into(), value, bound: format!("{target} ± {tol}"), passed: (value - target).abs() <= tol });
    }

    fn fail(&mut self, what: impl Into<String>, err: impl std::fmt::Display) {
        self.0.push(Check { what: format!("{}: {err}", what.into()), value: f64::NAN, bound: "no error".into(), passed: false });
    }

    fn finish(self, id: u32, name: &str) -> CriterionResult {
        CriterionResult { id, name: name.into(), passed: !self.0.is_empty() && self.0.iter().all(|c| c.passed), checks: self.0 }
    }
}

fn abs_diff(a: &Field, b: &Field) -> f64 {
    a.valid.intersect(&b.valid).iter().map(|p| (a.at(p) - b.at(p)).abs()).fold(0.0, f64::max)
}

/// Oscillation `max - min` over the valid box; bounds any cumulant in which the field enters.
fn osc(f: &Field) -> f64 {
    let (lo, hi) = f.valid.iter().map(|p| f.at(p)).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    hi - lo
}

pub fn rankine_hugoniot_oracle() -> Result<CriterionResult> {
    let eos = EosSpec::ideal_gas(2.5);
    let rh = rh_jump(&ShockSetup::stationary(1.0, 1.0, 2.0, &eos), &eos)?;
    let mut c = Checks::new();
    c.le("density ratio - 8/3", (rh.downstream.rho / rh.upstream.rho - 8.0 / 3.0).abs(), 1e-12);
    c.le("pressure ratio - 4.5", (rh.downstream.p / rh.upstream.p - 4.5).abs(), 1e-12);
    c.le("flux mismatch", rh.flux_mismatch, 1e-12);
    Ok(c.finish(1, "Rankine-Hugoniot oracle"))
}

pub fn profile_consistency() -> Result<CriterionResult> {
    let eos = EosSpec::ideal_gas(2.5);
    let setup = ShockSetup::stationary(1.0, 1.0, 2.0, &eos);
    let rh = rh_jump(&setup, &eos)?;
    let tr = TransportModel::constant(1.0, 0.0, 14.0 / 3.0, 1e-2);
    let prof = becker_profile(&setup, &eos, &tr, tr.eps)?;
    let mut c = Checks::new();
    c.le("endpoint error", prof.endpoint_error, 1e-8);
    c.le("integrated Sigma vs j Δs_m (relative)", (prof.integrated_sigma / rh.anomaly_entropy - 1.0).abs(), 1e-6);
    Ok(c.finish(2, "viscous profile consistency"))
}

/// Criteria 3, 4 and the viscosity-convergence part of 6 from one scan.
pub fn shock_criteria(scan: &ShockScan, residual_ratios: &[f64]) -> Vec<CriterionResult> {
    let nb = scan.references.len();
    let mut c3 = Checks::new();
    let mut c4 = Checks::new();
    for b in 0..nb {
        let rf = scan.references[b];
        match scan.ell_limit(ScanTerm::SigmaInert, b) {
            Ok(l) => c3.le(format!("bump {b}: Sigma_inert limit vs j Δs_m ∫φ (relative)"), (l.y_inf / rf.sigma - 1.0).abs(), 0.02),
            Err(e) => c3.fail(format!("bump {b}: Sigma_inert limit"), e),
        }
        let q = match scan.pointwise_limit(Pointwise::Q, b) {
            Ok(q) => q.0,
            Err(e) => {
                c4.fail(format!("bump {b}: smeared Q"), e);
                continue;
            }
        };
        match scan.ell_limit(ScanTerm::QFlux, b) {
            Ok(l) => c4.le(format!("bump {b}: |Q_flux limit| / smeared Q"), (l.y_inf / q).abs(), 0.05),
            Err(e) => c4.fail(format!("bump {b}: Q_flux limit"), e),
        }
        match scan.ell_limit(ScanTerm::TauPTheta, b) {
            Ok(l) => c4.le(format!("bump {b}: tau(p,Θ) limit vs smeared Q (relative)"), (l.y_inf / q - 1.0).abs(), 0.05),
            Err(e) => c4.fail(format!("bump {b}: tau(p,Θ) limit"), e),
        }
    }
    let mut c6 = Checks::new();
    for (k, s) in ["rho", "v", "p"].iter().zip(scan.l1_slopes()) {
        c6.within(format!("L1 slope of {k}"), s, 1.0, 0.15);
    }
    for b in 0..nb {
        for (kind, name) in [(Pointwise::Sigma, "Sigma"), (Pointwise::Q, "Q")] {
            let worst = scan.cauchy(kind, b).into_iter().fold(0.0, f64::max);
            c6.le(format!("bump {b}: largest successive change of smeared {name}"), worst, 0.02);
        }
    }
    for (i, r) in residual_ratios.iter().enumerate() {
        c6.ge(format!("residual reduction at halving {}", i + 1), *r, 3.5);
    }
    vec![c3.finish(3, "entropy anomaly on a shock"), c4.finish(4, "Q = tau(p,Θ) on a shock"), c6.finish(6, "viscosity convergence")]
}

/// Smallest per-balance reduction factor of the filtered-Euler residuals per halving.
pub fn residual_ratios(wave: &WaveConfig) -> Result<Vec<f64>> {
    let levels = residual_convergence(wave, 128, 3, 0.1)?;
    Ok(levels.windows(2).map(|w| w[0].residuals.iter().zip(&w[1].residuals).map(|(a, b)| a.1 / b.1).fold(f64::INFINITY, f64::min)).collect())
}

pub fn besov_criterion(scan: &ShockScan, wave: &WaveConfig) -> Result<CriterionResult> {
    let mut c = Checks::new();
    match scan.finest_besov(0.05) {
        Ok(st) => {
            for (f, id) in st.fits.iter().zip(["u", "rho", "v"]) {
                c.within(format!("shock sigma_3 of {id}"), f.sigma, 1.0 / 3.0, 0.05);
            }
            for (i, m) in st.onsager.margins.iter().enumerate() {
                c.within(format!("exponent condition {} margin", i + 1), *m, 0.0, 0.05);
            }
        }
        Err(e) => c.fail("shock structure functions", e),
    }
    let block = wave.run(256)?;
    let st = besov_study(&block, 3.0, 0.5, 1.0, [0.02, 0.1], 10, StructureMode::SpaceTime, 0.05)?;
    for (f, id) in st.fits.iter().zip(["u", "rho", "v"]) {
        c.ge(format!("smooth-wave space-time sigma_3 of {id}"), f.sigma, 0.95);
    }
    let ells = log_space(0.02, 0.1, 8);
    let q = smooth_q_flux_scan(wave, &block, &ells)?;
    c.ge("smooth-wave Q_flux log-log slope", log_slope(&ells, &q), 1.5);
    let qmax = q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    match extrapolate_limit(&ells, &q) {
        Ok(l) => c.le("|smooth-wave Q_flux limit| / max |Q_flux|", l.y_inf.abs() / qmax, 0.01),
        Err(e) => c.fail("smooth-wave Q_flux limit", e),
    }
    Ok(c.finish(5, "Besov sharpness at p = 3"))
}

/// Smooth positive random fields for the budget identities: a few random Fourier modes per field.
pub fn random_block(grid: &Grid, rng: &mut ChaCha8Rng) -> Result<FieldBlock> {
    let mut field = |base: f64, amp: f64| {
        let modes: Vec<([f64; 3], f64, f64)> = (0..4)
            .map(|_| {
                let k = [rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0)];
                (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Field::from_fn(*grid, move |x, y, t| {
            base + amp * modes.iter().map(|(k, a, ph)| a * (k[0] * x + k[1] * y + k[2] * t + ph).sin()).sum::<f64>() / 4.0
        })
    };
    let rho = field(1.0, 0.4);
    let u = field(2.5, 0.8);
    let v = (0..grid.d).map(|_| field(0.0, 1.0)).collect();
    FieldBlock::new(*grid, rho, u, v, 0.0)
}

pub fn identity_suite(seed: u64, blocks: usize) -> Result<CriterionResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Checks::new();
    let mut worst = std::collections::BTreeMap::<String, f64>::new();
    let mut note = |k: &str, v: f64| {
        let e = worst.entry(k.to_string()).or_insert(0.0);
        *e = e.max(v);
    };
    for _ in 0..blocks {
        let n = rng.gen_range(16..=24usize);
        let h = 1.0 / n as f64;
        let grid = Grid::new_2d([n, n], [h, h], [0.0, 0.0], [false, false], n, h, 0.0, 1.0);
        let mut block = random_block(&grid, &mut rng)?;
        block.eps = 1e-3;
        let k = build_kernel(MollifierSpec::default(), 3.0 * h, &grid)?;
        let noise = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            let data = (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect();
            Field::from_vec(grid, data)
        };
        let f = noise(&mut rng, -1.0, 1.0)?;
        let g = noise(&mut rng, 0.5, 3.0)?;
        let h2 = noise(&mut rng, -2.0, 0.0)?;
        let r = noise(&mut rng, 0.2, 2.0)?;
        let fs = [&f, &g, &h2, &r];
        for order in 2..=4 {
            let scale: f64 = fs[..order].iter().map(|x| osc(x)).product();
            note(
                &format!("cumulant_{order} moment vs increment route"),
                abs_diff(&cumulant_n(&fs[..order], &k)?, &cumulant_increment(&fs[..order], &k)?) / scale,
            );
        }
        note(
            "favre_cumulant2 vs expanded",
            abs_diff(&favre_cumulant2(&f, &g, &r, &k)?, &favre_cumulant2_expanded(&f, &g, &r, &k)?) / (osc(&f) * osc(&g)),
        );
        let s3 = osc(&f) * osc(&g) * osc(&h2);
        note("favre_cumulant3 vs expanded", abs_diff(&favre_cumulant3(&f, &g, &h2, &r, &k)?, &favre_cumulant3_expanded(&f, &g, &h2, &r, &k)?) / s3);
        let eos = EosSpec::ideal_gas(2.5);
        let tr = TransportModel::constant(1.0, 0.5, 2.0, 1e-3);
        let set = compute_budgets(&block, &k, &eos, &tr, &BudgetOptions { region: None, require_viscous: true, engine: Engine::Auto })?;
        for (name, fld) in &set.report(eq::IDENTITIES)?.terms {
            note(name, fld.max_abs_on(&fld.valid));
        }
    }
    let mut gibbs: f64 = 0.0;
    for eos in [EosSpec::ideal_gas(2.5), EosSpec::van_der_waals(2.5, 0.1, 0.1)] {
        for _ in 0..1000 {
            let st = ThermoState::new(rng.gen_range(0.5..5.0), rng.gen_range(0.1..2.0));
            if let Ok(ev) = eos.eval(st) {
                gibbs = gibbs.max(ev.gibbs_residual(st));
            }
        }
    }
    note("Gibbs residual", gibbs);
    for (k, v) in worst {
        c.le(k, v, 1e-10);
    }
    Ok(c.finish(7, "algebraic identities"))
}

pub fn scaling_criterion(seed: u64) -> Result<CriterionResult> {
    let mut c = Checks::new();
    for law in scaling_laws(&ScalingConfig { seed, ..ScalingConfig::standard() })? {
        c.within(format!("{} slope (predicted {})", law.name, law.predicted), law.measured, law.predicted, 0.1);
    }
    Ok(c.finish(8, "cumulant scaling laws"))
}

/// Runs every criterion; the shock scan dominates the cost (a few minutes).
pub fn run_acceptance(seed: u64) -> Result<AcceptanceReport> {
    let wave = WaveConfig::standard();
    let scan = shock_scan(&ShockScanConfig::standard())?;
    let ratios = residual_ratios(&wave)?;
    let mut criteria = vec![rankine_hugoniot_oracle()?, profile_consistency()?];
    let mut shock = shock_criteria(&scan, &ratios);
    let c6 = shock.pop().expect("three shock criteria");
    criteria.extend(shock);
    criteria.push(besov_criterion(&scan, &wave)?);
    criteria.push(c6);
    criteria.push(identity_suite(seed, 4)?);
    criteria.push(scaling_criterion(seed)?);
    Ok(AcceptanceReport { passed: criteria.iter().all(|c| c.passed), criteria })
}

/// Log-log slope of `|y|` against `x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_fit(&lx, &ly).1
}
