use onsager_lab::thermo::{entropy, eval_thermo, transport, Coefficient, EosSpec, ThermoState, TransportModel, ViscosityMode};
use onsager_lab::Error;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn ideal_gas_entropy_at_unit_state_is_zero() {
    let s = entropy(&EosSpec::ideal_gas(1.5), ThermoState::new(1.0, 1.0)).unwrap();
    assert!(s.abs() < 1e-15);
}

#[test]
fn ideal_gas_entropy_at_u_e() {
    let s = entropy(&EosSpec::ideal_gas(1.5), ThermoState::new(std::f64::consts::E, 1.0)).unwrap();
    assert!((s - 1.5).abs() < 1e-14);
}

#[test]
fn van_der_waals_entropy_matches_direct_formula() {
    let (al, a, b) = (1.5, 0.01, 0.01);
    let (u, r): (f64, f64) = (1.0, 0.5);
    // s = ϱ ln(1/ϱ - b) + α ϱ ln(u/ϱ + a ϱ)
    let direct = r * (1.0 / r - b).ln() + al * r * (u / r + a * r).ln();
    let s = entropy(&EosSpec::van_der_waals(al, a, b), ThermoState::new(u, r)).unwrap();
    assert!((s - direct).abs() < 1e-14, "{s} vs {direct}");
}

#[test]
fn ideal_gas_pressure_and_temperature() {
    let ev = eval_thermo(&EosSpec::ideal_gas(2.0), ThermoState::new(2.0, 0.7)).unwrap();
    assert!((ev.p - 1.0).abs() < 1e-15);
    let ev = eval_thermo(&EosSpec::ideal_gas(1.5), ThermoState::new(3.0, 2.0)).unwrap();
    assert!((ev.t - 1.0).abs() < 1e-15);
}

#[test]
fn pressure_from_entropy_finite_differences() {
    // p = T (u ∂s/∂u... ) via Gibbs: p = T s - u + μ ϱ with T, μ from central differences of s
    let eos = EosSpec::ideal_gas(2.0);
    let st = ThermoState::new(2.0, 0.7);
    let d = 1e-5;
    let s = |u: f64, r: f64| entropy(&eos, ThermoState::new(u, r)).unwrap();
    let su = (s(st.u + d, st.rho) - s(st.u - d, st.rho)) / (2.0 * d);
    let sr = (s(st.u, st.rho + d) - s(st.u, st.rho - d)) / (2.0 * d);
    let t = 1.0 / su;
    let mu = -t * sr;
    let p = t * s(st.u, st.rho) - st.u + mu * st.rho;
    assert!((p - 1.0).abs() < 1e-8, "{p}");
}

#[test]
fn invalid_states_are_rejected() {
    let ig = EosSpec::ideal_gas(1.5);
    assert!(matches!(entropy(&ig, ThermoState::new(-1.0, 1.0)), Err(Error::StateOutsideValidity(_))));
    assert!(matches!(entropy(&ig, ThermoState::new(1.0, 1e-13)), Err(Error::StateOutsideValidity(_))));
    let vdw = EosSpec::van_der_waals(1.5, 0.01, 0.01);
    assert!(matches!(entropy(&vdw, ThermoState::new(1.0, 150.0)), Err(Error::StateOutsideValidity(_))));
    // deep inside the spinodal region the raw entropy is convex
    let vdw = EosSpec::van_der_waals(1.5, 3.0, 1.0 / 3.0);
    assert!(matches!(eval_thermo(&vdw, ThermoState::new(-2.0, 1.0)), Err(Error::StateOutsideValidity(_))));
}

#[test]
fn eos_validation_names_fields() {
    let e = EosSpec::ideal_gas(-1.0).validate().unwrap_err();
    assert!(matches!(e, Error::Config { ref field, .. } if field == "eos.alpha"));
    let e = EosSpec::van_der_waals(1.5, 0.0, 0.1).validate().unwrap_err();
    assert!(matches!(e, Error::Config { ref field, .. } if field == "eos.a"));
}

#[test]
fn transport_scaling() {
    let eos = EosSpec::ideal_gas(1.5);
    let st = ThermoState::new(1.5, 1.0);
    let tr = transport(&TransportModel::constant(1.0, 1.0, 1.0, 0.01), &eos, st).unwrap();
    assert!(close(tr.eta, 0.01, 1e-15) && close(tr.zeta, 0.01, 1e-15) && close(tr.kappa, 0.01, 1e-15));
    let tr = transport(&TransportModel::constant(1.0, 2.0, 3.0, 0.0), &eos, st).unwrap();
    assert_eq!((tr.eta, tr.zeta, tr.kappa), (0.0, 0.0, 0.0));
}

#[test]
fn power_law_viscosity() {
    let mut m = TransportModel::constant(0.0, 0.0, 0.0, 1.0);
    m.eta = Coefficient::PowerLaw { reference: 1.0, t_ref: 1.0, exponent: 0.5 };
    let tr = m.at_temperature(4.0);
    assert!((tr.eta - 2.0).abs() < 1e-15);
}

#[test]
fn longitudinal_viscosity_modes() {
    let mut m = TransportModel::constant(1.0, 0.5, 0.0, 1.0);
    assert!((m.longitudinal(1.0) - (2.0 * (2.0 / 3.0) + 0.5)).abs() < 1e-15);
    m.viscosity_mode = ViscosityMode::Deviatoric;
    assert!((m.longitudinal(1.0) - 0.5).abs() < 1e-15);
}

fn ideal_state() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.5f64..4.0, 0.05f64..20.0, 0.05f64..10.0)
}

fn vdw_state() -> impl Strategy<Value = (f64, f64)> {
    // dilute, hot states: well inside the concave region for a = b = 0.1
    (0.05f64..2.0, 0.5f64..5.0).prop_map(|(r, t)| (r, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ideal_gas_derivatives_match_finite_differences((al, u, r) in ideal_state()) {
        let eos = EosSpec::ideal_gas(al);
        let ev = eval_thermo(&eos, ThermoState::new(u, r)).unwrap();
        let s = |u: f64, r: f64| entropy(&eos, ThermoState::new(u, r)).unwrap();
        let du = 1e-5 * u;
        let su = (s(u + du, r) - s(u - du, r)) / (2.0 * du);
        prop_assert!(((su - 1.0 / ev.t) / su).abs() < 1e-6);
        let dr = 1e-5 * r;
        let sr = (s(u, r + dr) - s(u, r - dr)) / (2.0 * dr);
        let lam = ev.mu / ev.t;
        prop_assert!((sr + lam).abs() <= 1e-6 * lam.abs().max(sr.abs()).max(1e-3));
    }

    #[test]
    fn ideal_gas_hessian_negative_semidefinite((al, u, r) in ideal_state()) {
        let h = EosSpec::ideal_gas(al).hessian(ThermoState::new(u, r)).unwrap();
        let scale = h.s_uu.abs().max(h.s_rr.abs()).max(h.s_ur.abs());
        let (lo, hi) = h.eigenvalues();
        prop_assert!(lo <= hi);
        prop_assert!(hi <= 1e-12 * scale);
    }

    #[test]
    fn ideal_gas_pressure_is_u_over_alpha((al, u, r) in ideal_state()) {
        let ev = eval_thermo(&EosSpec::ideal_gas(al), ThermoState::new(u, r)).unwrap();
        prop_assert!((ev.p - u / al).abs() <= 4.0 * f64::EPSILON * ev.p);
        prop_assert!(ev.p > 0.0 && ev.t > 0.0);
    }

    #[test]
    fn gibbs_residual_small_ideal((al, u, r) in ideal_state()) {
        let st = ThermoState::new(u, r);
        let ev = eval_thermo(&EosSpec::ideal_gas(al), st).unwrap();
        prop_assert!(ev.gibbs_residual(st) <= 1e-10);
        prop_assert!((ev.h - (u + ev.p)).abs() < 1e-14 * ev.h);
    }

    #[test]
    fn gibbs_residual_small_vdw((r, t) in vdw_state()) {
        let eos = EosSpec::van_der_waals(2.5, 0.1, 0.1);
        let st = ThermoState::new(eos.internal_energy(t, r), r);
        let ev = eval_thermo(&eos, st).unwrap();
        prop_assert!(ev.gibbs_residual(st) <= 1e-10);
        prop_assert!(((ev.t - t) / t).abs() < 1e-12);
        let s = |u: f64, r: f64| entropy(&eos, ThermoState::new(u, r)).unwrap();
        let du = 1e-5 * st.u.abs();
        let su = (s(st.u + du, r) - s(st.u - du, r)) / (2.0 * du);
        prop_assert!(((su - ev.beta) / su).abs() < 1e-6);
        let dr = 1e-5 * r;
        let sr = (s(st.u, r + dr) - s(st.u, r - dr)) / (2.0 * dr);
        prop_assert!((sr + ev.lambda).abs() <= 1e-6 * ev.lambda.abs().max(1e-3));
        // van der Waals pressure law
        let p = r * t / (1.0 - 0.1 * r) - 0.1 * r * r;
        prop_assert!((ev.p - p).abs() < 1e-12 * p.abs().max(1.0));
    }
}
