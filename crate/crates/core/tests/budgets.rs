use onsager_lab::budgets::{
    cg_solution_residuals, compute_budgets, dissipation_fields, entropy_budgets, eq, internal_budgets, kinetic_budget, pressure_dilatation, smear,
    subscale_ke_budget, BudgetOptions, TestFunction,
};
use onsager_lab::experiments::{log_space, spectral_field};
use onsager_lab::fields::{Field, FieldBlock, Grid, IBox};
use onsager_lab::filter::{build_kernel, coarse_grain, Engine, FilterKernel, MollifierSpec, Profile};
use onsager_lab::report::{log_slope, random_block};
use onsager_lab::solver::{becker_profile, ShockSetup, SmoothWave};
use onsager_lab::thermo::{EosSpec, TransportModel, ViscosityMode};
use onsager_lab::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ideal() -> EosSpec {
    EosSpec::ideal_gas(2.5)
}

fn grid_1d(nx: usize, dx: f64, nt: usize, dt: f64, periodic: bool) -> Grid {
    Grid::new_1d(nx, dx, 0.0, periodic, nt, dt, 0.0, 1.0)
}

fn block_of(g: Grid, rho: Field, u: Field, v: Field, eps: f64) -> FieldBlock {
    FieldBlock::new(g, rho, u, vec![v], eps).unwrap()
}

fn max_abs(f: &Field) -> f64 {
    f.max_abs()
}

#[test]
fn constant_state_gives_vanishing_terms() {
    let g = grid_1d(48, 0.02, 21, 0.02, false);
    let b = block_of(g, Field::constant(g, 1.3), Field::constant(g, 2.2), Field::constant(g, 0.7), 0.01);
    let k = build_kernel(MollifierSpec::default(), 0.16, &g).unwrap();
    let tr = TransportModel::constant(1.0, 0.5, 2.0, 0.01);
    let set = compute_budgets(&b, &k, &ideal(), &tr, &BudgetOptions::default()).unwrap();
    // flux-like terms are nonzero for uniform motion; every balance-specific term must vanish
    let zero_terms = [
        (eq::RESOLVED_KE, "Q_flux"),
        (eq::RESOLVED_KE, "D_v"),
        (eq::RESOLVED_KE, "p_bar_theta_bar"),
        (eq::SUBSCALE_KE, "k"),
        (eq::PRESSURE_DILATATION, "tau_p_theta"),
        (eq::PRESSURE_DILATATION, "Q_inert"),
        (eq::PRESSURE_DILATATION, "Q_bar"),
        (eq::RESOLVED_ENTROPY, "I_flux"),
        (eq::RESOLVED_ENTROPY, "Sigma_flux"),
        (eq::RESOLVED_ENTROPY, "D_s"),
        (eq::INTRINSIC_ENTROPY, "Sigma_flux_star"),
        (eq::INTRINSIC_ENTROPY, "Sigma_inert_star"),
    ];
    for (e, t) in zero_terms {
        assert!(max_abs(set.term(e, t).unwrap()) < 1e-12, "{e}/{t}");
    }
    for r in &set.reports {
        if let Some(res) = &r.residual {
            assert!(max_abs(res) < 1e-11, "{} residual {}", r.equation, max_abs(res));
        }
    }
}

#[test]
fn dissipation_of_uniform_flow_is_zero() {
    let g = grid_1d(32, 0.05, 3, 0.05, false);
    let b = block_of(g, Field::constant(g, 1.0), Field::constant(g, 2.0), Field::constant(g, 0.3), 0.1);
    let d = dissipation_fields(&b, &ideal(), &TransportModel::constant(1.0, 1.0, 1.0, 0.1)).unwrap();
    for f in [&d.q, &d.q_eta, &d.q_zeta, &d.sigma, &d.sigma_kappa] {
        assert!(max_abs(f) < 1e-14);
    }
}

#[test]
fn pure_dilation_dissipation() {
    let c = 0.8;
    let g = grid_1d(32, 0.05, 3, 0.05, false);
    let b = block_of(g, Field::constant(g, 1.0), Field::constant(g, 2.0), Field::from_fn(g, |x, _, _| c * x), 0.1);
    let (eta, zeta) = (1.0, 0.5);
    let mut tr = TransportModel::constant(eta, zeta, 1.0, 0.1);
    tr.viscosity_mode = ViscosityMode::Deviatoric;
    let d = dissipation_fields(&b, &ideal(), &tr).unwrap();
    assert!(max_abs(&d.q_eta) < 1e-14);
    assert!(d.q_zeta.valid.iter().all(|p| (d.q_zeta.at(p) - 0.1 * zeta * c * c).abs() < 1e-13));
    // isothermal block
    assert!(max_abs(&d.sigma_kappa) < 1e-14);
    tr.viscosity_mode = ViscosityMode::Effective { d_phys: 3 };
    let d = dissipation_fields(&b, &ideal(), &tr).unwrap();
    let want = 0.1 * 2.0 * eta * (2.0 / 3.0) * c * c;
    assert!(d.q_eta.valid.iter().all(|p| (d.q_eta.at(p) - want).abs() < 1e-13));
}

#[test]
fn viscous_terms_need_viscous_data() {
    let g = grid_1d(48, 0.02, 21, 0.02, false);
    let b = block_of(g, Field::constant(g, 1.0), Field::constant(g, 2.0), Field::constant(g, 0.0), 0.0);
    let tr = TransportModel::inviscid();
    assert!(matches!(dissipation_fields(&b, &ideal(), &tr), Err(Error::RequiresViscousData)));
    let k = build_kernel(MollifierSpec::default(), 0.16, &g).unwrap();
    assert!(matches!(subscale_ke_budget(&b, &k, &ideal(), &tr, true), Err(Error::RequiresViscousData)));
    assert!(subscale_ke_budget(&b, &k, &ideal(), &tr, false).is_ok());
}

fn random_1d(seed: u64, eps: f64) -> (FieldBlock, FilterKernel) {
    let n = 64;
    let h = 1.0 / n as f64;
    let g = Grid::new_1d(n, h, 0.0, false, 24, h, 0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = random_block(&g, &mut rng).unwrap();
    b.eps = eps;
    (b, build_kernel(MollifierSpec::default(), 4.0 * h, &g).unwrap())
}

#[test]
fn exact_energy_identities_on_random_data() {
    let eos = ideal();
    let tr = TransportModel::constant(1.0, 0.5, 2.0, 1e-3);
    for seed in 0..4 {
        let (b, k) = random_1d(seed, 1e-3);
        let ke = kinetic_budget(&b, &k, &eos, &tr).unwrap();
        let sub = subscale_ke_budget(&b, &k, &eos, &tr, true).unwrap();
        let (_, ie_star) = internal_budgets(&b, &k, &eos, &tr).unwrap();
        let v = &b.v[0];
        let half_rho_v2 = coarse_grain(&b.rho.mul(v).mul(v), &k).unwrap().scale(0.5);
        let e_bar = coarse_grain(&b.total_energy(), &k).unwrap();
        let kr = ke.term("ke_resolved").unwrap();
        let kk = sub.term("k").unwrap();
        let us = ie_star.term("u_star").unwrap();
        for p in kr.valid.iter() {
            assert!((kr.at(p) + kk.at(p) - half_rho_v2.at(p)).abs() < 1e-12 * half_rho_v2.at(p).abs().max(1.0));
            assert!((e_bar.at(p) - kr.at(p) - us.at(p)).abs() < 1e-12 * e_bar.at(p).abs());
        }
        let pd = pressure_dilatation(&b, &k, &eos, &tr).unwrap();
        let (qi, qf, tp) = (pd.term("Q_inert").unwrap(), ke.term("Q_flux").unwrap(), pd.term("tau_p_theta").unwrap());
        for p in qi.valid.iter() {
            assert!((qi.at(p) - qf.at(p) - tp.at(p)).abs() < 1e-12 * (qf.at(p).abs() + tp.at(p).abs()).max(1e-6));
        }
        let (s, s_star) = entropy_budgets(&b, &k, &eos, &tr).unwrap();
        let (i_flux, sf_star, si_star) =
            (s.term("I_flux").unwrap(), s_star.term("Sigma_flux_star").unwrap(), s_star.term("Sigma_inert_star").unwrap());
        for p in si_star.valid.iter() {
            let scale = i_flux.at(p).abs() + sf_star.at(p).abs();
            assert!((si_star.at(p) + i_flux.at(p) - sf_star.at(p)).abs() <= 1e-12 * scale.max(1e-6));
        }
        let set = compute_budgets(&b, &k, &eos, &tr, &BudgetOptions::default()).unwrap();
        for (name, f) in &set.report(eq::IDENTITIES).unwrap().terms {
            assert!(max_abs(f) < 1e-10, "{name}: {}", max_abs(f));
        }
    }
}

#[test]
fn ideal_gas_has_no_pressure_defect() {
    let (b, k) = random_1d(9, 0.0);
    let (s, _) = entropy_budgets(&b, &k, &ideal(), &TransportModel::inviscid()).unwrap();
    let i = s.term("I_flux").unwrap();
    let scale = max_abs(s.term("Sigma_flux").unwrap()).max(1.0);
    assert!(max_abs(i) < 1e-12 * scale, "{}", max_abs(i));
}

#[test]
fn incompressible_data_has_no_pressure_dilatation() {
    let g = grid_1d(48, 0.02, 21, 0.02, false);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut b = random_block(&g, &mut rng).unwrap();
    b.v[0] = Field::constant(g, 0.4);
    b.eps = 0.01;
    let k = build_kernel(MollifierSpec::default(), 0.16, &g).unwrap();
    let pd = pressure_dilatation(&b, &k, &ideal(), &TransportModel::constant(1.0, 1.0, 1.0, 0.01)).unwrap();
    for t in ["p_bar_theta_bar", "p_theta_bar", "tau_p_theta"] {
        assert!(max_abs(pd.term(t).unwrap()) < 1e-11, "{t}");
    }
}

#[test]
fn smearing_examples() {
    let g = Grid::new_1d(200, 0.01, -1.0, false, 41, 0.01, 0.0, 1.0);
    let phi = TestFunction::bump("phi", &g, [0.0, 0.0, 0.2], [0.5, 1.0, 0.15]).unwrap().normalized();
    let c = smear(&Field::constant(g, 3.25), &phi).unwrap();
    assert!((c - 3.25).abs() < 1e-13);
    let odd = smear(&Field::from_fn(g, |x, _, t| x * (1.0 + t)), &phi).unwrap();
    assert!(odd.abs() < 1e-14);
    let mut f = Field::constant(g, 1.0);
    f.valid = IBox::new([60, 0, 0], [140, 1, 41]);
    assert!(matches!(smear(&f, &phi), Err(Error::SupportExceedsValidRegion)));
}

#[test]
fn smearing_matches_refined_quadrature() {
    let modes = [(1.3, 0.4, 0.2), (2.9, -0.7, 1.1), (5.1, 0.25, -0.6)];
    let f = |x: f64, t: f64| modes.iter().map(|(k, a, ph)| a * (k * x + 2.0 * k * t + ph).sin()).sum::<f64>();
    let g = Grid::new_1d(400, 0.005, -1.0, false, 81, 0.005, 0.0, 1.0);
    let phi = TestFunction::bump("phi", &g, [0.05, 0.0, 0.2], [0.6, 1.0, 0.17]).unwrap();
    let value = smear(&Field::from_fn(g, |x, _, t| f(x, t)), &phi).unwrap();
    // composite trapezoid on an eight-times finer lattice over the support
    let m = 8.0;
    let (hx, ht): (f64, f64) = (0.005 / m, 0.005 / m);
    let nx = (2.0 * 0.6 / hx).round() as usize;
    let nt = (2.0 * 0.17 / ht).round() as usize;
    let mut oracle = 0.0;
    for j in 1..nt {
        let t = 0.2 - 0.17 + j as f64 * ht;
        for i in 1..nx {
            let x = 0.05 - 0.6 + i as f64 * hx;
            oracle += phi.eval(x, 0.0, t) * f(x, t);
        }
    }
    oracle *= hx * ht;
    assert!((value - oracle).abs() < 1e-8, "{value} vs {oracle}");
}

fn smooth_wave_block(nx: usize, ell: f64) -> FieldBlock {
    let c_ref = 2.0;
    let dx = 1.0 / nx as f64;
    let dt = dx / c_ref;
    let rt = (ell / (c_ref * dt)).floor() as usize;
    let nt = 2 * rt + 1 + nx / 16;
    let g = Grid::new_1d(nx, dx, 0.0, true, nt, dt, 0.1, c_ref);
    let w = SmoothWave { rho0: 1.0, p0: 1.0, amplitude: 0.1, wavelength: 1.0 };
    w.sample(&ideal(), &g).unwrap()
}

/// Largest residual per balance over a fixed physical window.
fn manufactured_residuals(nx: usize, ell: f64) -> Vec<(String, f64)> {
    let b = smooth_wave_block(nx, ell);
    let k = build_kernel(MollifierSpec::default(), ell, &b.grid).unwrap();
    let g = b.grid;
    let t_mid = g.t0 + 0.5 * (g.nt - 1) as f64 * g.dt;
    let half = 1.0 / 64.0 / 2.0 / 2.0;
    let k0 = ((t_mid - half - g.t0) / g.dt).round() as usize;
    let k1 = ((t_mid + half - g.t0) / g.dt).round() as usize + 1;
    let region = IBox::new([0, 0, k0], [nx, 1, k1]);
    let opts = BudgetOptions { region: Some(region), require_viscous: false, engine: Engine::Auto };
    let set = compute_budgets(&b, &k, &ideal(), &TransportModel::inviscid(), &opts).unwrap();
    set.reports.iter().filter_map(|r| r.residual.as_ref().map(|f| (r.equation.clone(), f.max_abs_on(&region.intersect(&f.valid))))).collect()
}

#[test]
fn filtered_balances_converge_on_exact_smooth_solution() {
    let ell = 0.1;
    let coarse = manufactured_residuals(64, ell);
    let fine = manufactured_residuals(128, ell);
    // mass, momentum, total energy, resolved KE, intrinsic IE, intrinsic entropy
    assert_eq!(coarse.len(), 6);
    for ((name, a), (_, b)) in coarse.iter().zip(&fine) {
        let ratio = a / b;
        assert!(*b < 1e-10 || ratio >= 3.0, "{name}: {a:e} -> {b:e}");
    }
}

#[test]
fn corrupted_momentum_is_detected() {
    let ell = 0.1;
    let mut b = smooth_wave_block(64, ell);
    let clean =
        cg_solution_residuals(&b, &build_kernel(MollifierSpec::default(), ell, &b.grid).unwrap(), &ideal(), &TransportModel::inviscid()).unwrap();
    b.v[0] = Field::constant(b.grid, 0.0);
    let k = build_kernel(MollifierSpec::default(), ell, &b.grid).unwrap();
    let bad = cg_solution_residuals(&b, &k, &ideal(), &TransportModel::inviscid()).unwrap();
    let worst = |rs: &Vec<onsager_lab::budgets::BudgetReport>| rs.iter().filter_map(|r| r.residual.as_ref()).map(max_abs).fold(0.0, f64::max);
    assert!(worst(&bad) > 0.05, "{}", worst(&bad));
    assert!(worst(&bad) > 100.0 * worst(&clean));
}

fn shock_block(eps: f64, profile_dx: f64) -> (FieldBlock, TransportModel) {
    let eos = ideal();
    let tr = TransportModel::constant(1.0, 0.0, 14.0 / 3.0, eps);
    let setup = ShockSetup::stationary(1.0, 1.0, 2.0, &eos);
    let prof = becker_profile(&setup, &eos, &tr, eps).unwrap();
    let nx = (1.0 / profile_dx).round() as usize;
    let g = Grid::new_1d(nx, profile_dx, -0.5, false, 41, 0.1 / 20.0 / 2.0, 0.0, 20.0);
    (prof.sample(&g, 0.0).unwrap(), tr)
}

#[test]
fn shock_data_has_positive_pressure_dilatation_defect_for_either_mollifier() {
    let (b, tr) = shock_block(1e-3, 1.0 / 2048.0);
    let g = b.grid;
    let phi = TestFunction::bump("phi", &g, [0.0, 0.0, g.coord(2, 20)], [0.25, 1.0, 4.0 * g.dt]).unwrap();
    let d = dissipation_fields(&b, &ideal(), &tr).unwrap();
    let q = smear(&d.q, &phi).unwrap();
    let mut values = Vec::new();
    for profile in [Profile::PolynomialBump, Profile::SmoothBump] {
        let k = build_kernel(MollifierSpec::new(profile), 0.1, &g).unwrap();
        let pd = pressure_dilatation(&b, &k, &ideal(), &tr).unwrap();
        let tp = smear(pd.term("tau_p_theta").unwrap(), &phi).unwrap();
        assert!(tp > 0.0);
        values.push(tp);
    }
    // ℓ far above the profile width: both mollifiers see the integrated dissipation
    for v in &values {
        assert!((v / q - 1.0).abs() < 0.05, "{v} vs {q}");
    }
}

#[test]
fn dissipation_is_nonnegative_on_shock_data() {
    let (b, tr) = shock_block(2e-3, 1.0 / 1024.0);
    let d = dissipation_fields(&b, &ideal(), &tr).unwrap();
    let (_, temp) = onsager_lab::budgets::pointwise_thermo(&b, &ideal()).unwrap();
    let tmax = temp.max_abs();
    for p in d.sigma.valid.iter() {
        assert!(d.q.at(p) >= 0.0 && d.sigma_kappa.at(p) >= 0.0);
        assert!(d.sigma.at(p) >= d.q.at(p) / tmax - 1e-15);
    }
}

/// ‖Q_flux‖ and ‖Σ_inert*‖ smeared in absolute value over a decade of ℓ on
/// fields with increment exponent σ.
fn flux_slopes(make: impl Fn(&Grid, u64) -> Field) -> (f64, f64) {
    let nx = 2048;
    let ells = log_space(0.008, 0.08, 7);
    let c_dt: f64 = 0.004;
    let rt = (0.08 / c_dt).ceil() as usize;
    let nt = 2 * rt + 3;
    let g = Grid::new_1d(nx, 1.0 / nx as f64, 0.0, true, nt, c_dt, 0.0, 1.0);
    let rho = make(&g, 1).map(|x| 1.0 + 0.2 * x);
    let u = make(&g, 2).map(|x| 2.5 + 0.5 * x);
    let v = make(&g, 3).map(|x| 0.5 * x);
    let b = FieldBlock::new(g, rho, u, vec![v], 0.0).unwrap();
    let mid = IBox::new([0, 0, nt / 2], [nx, 1, nt / 2 + 1]);
    let mut phi = TestFunction::bump("phi", &g, [0.5, 0.0, g.coord(2, nt / 2)], [0.45, 1.0, 1.5 * c_dt]).unwrap();
    phi.support = phi.support.intersect(&mid);
    let (mut q, mut s) = (Vec::new(), Vec::new());
    for &ell in &ells {
        let k = build_kernel(MollifierSpec::default(), ell, &g).unwrap();
        let opts = BudgetOptions { region: Some(mid), require_viscous: false, engine: Engine::Auto };
        let set = compute_budgets(&b, &k, &ideal(), &TransportModel::inviscid(), &opts).unwrap();
        q.push(smear(&set.term(eq::RESOLVED_KE, "Q_flux").unwrap().map(f64::abs), &phi).unwrap());
        s.push(smear(&set.term(eq::INTRINSIC_ENTROPY, "Sigma_inert_star").unwrap().map(f64::abs), &phi).unwrap());
    }
    (log_slope(&ells, &q), log_slope(&ells, &s))
}

#[test]
fn flux_terms_scale_with_besov_exponent() {
    for sigma in [0.4, 0.6] {
        let (q, s) = flux_slopes(|g, seed| spectral_field(g, sigma, 100 + seed));
        let want = 3.0 * sigma - 1.0;
        assert!((q - want).abs() <= 0.15, "sigma {sigma}: Q_flux slope {q}");
        assert!((s - want).abs() <= 0.15, "sigma {sigma}: Sigma_inert slope {s}");
    }
    let tau = std::f64::consts::TAU;
    let (q, s) = flux_slopes(|g, seed| {
        let ph = seed as f64;
        Field::from_fn(*g, move |x, _, _| 0.6 * (tau * x + ph).sin() + 0.4 * (2.0 * tau * x + 0.5 * ph).cos())
    });
    assert!((q - 2.0).abs() <= 0.15, "smooth: Q_flux slope {q}");
    assert!((s - 2.0).abs() <= 0.15, "smooth: Sigma_inert slope {s}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dissipation_nonnegative_and_bounds_entropy_production(seed in any::<u64>(), eta in 0.0f64..2.0, zeta in 0.0f64..2.0, kappa in 0.0f64..3.0) {
        let (b, _) = random_1d(seed, 0.01);
        let tr = TransportModel::constant(eta, zeta, kappa, 0.01);
        let d = dissipation_fields(&b, &ideal(), &tr).unwrap();
        let (_, temp) = onsager_lab::budgets::pointwise_thermo(&b, &ideal()).unwrap();
        let tmax = temp.max_abs();
        for p in d.sigma.valid.iter() {
            prop_assert!(d.q_eta.at(p) >= 0.0 && d.q_zeta.at(p) >= 0.0 && d.sigma_kappa.at(p) >= 0.0);
            prop_assert!(d.sigma.at(p) >= d.q.at(p) / tmax * (1.0 - 1e-12));
        }
        let g = b.grid;
        let phi = TestFunction::bump("phi", &g, [0.5, 0.0, g.coord(2, 12)], [0.4, 1.0, 8.0 * g.dt]).unwrap();
        let ss = smear(&d.sigma, &phi).unwrap();
        let sq = smear(&d.q, &phi).unwrap();
        prop_assert!(ss >= sq / tmax * (1.0 - 1e-12));
    }
}
