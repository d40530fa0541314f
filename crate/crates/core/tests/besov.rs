use onsager_lab::besov::{
    extrapolate_limit, fit_exponent, midpoint_displacement, onsager_conditions, onsager_conditions_with_tolerance, richardson_polynomial,
    scale_ladder, spacetime_vs_space, step_field, structure_function, StructureMode, Verdict,
};
use onsager_lab::fields::{Field, FieldBlock, Grid, IBox, Subdomain};
use onsager_lab::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(nx: usize, periodic: bool) -> Grid {
    let h = 1.0 / nx as f64;
    Grid::new_1d(nx, h, -0.5 + 0.5 * h, periodic, 1, 1.0, 0.0, 1.0)
}

fn whole(g: &Grid) -> Subdomain {
    Subdomain::new(g, g.full_box(), &g.full_box()).unwrap()
}

fn middle(g: &Grid, lo: usize, hi: usize) -> Subdomain {
    Subdomain::new(g, IBox::new([lo, 0, 0], [hi, 1, g.nt]), &g.full_box()).unwrap()
}

#[test]
fn constant_field_has_zero_structure_function() {
    let g = line(64, true);
    let f = Field::constant(g, 2.5);
    let sf = structure_function(&f, &whole(&g), 3.0, &[0.05, 0.1, 0.2], StructureMode::SpaceOnly, "c").unwrap();
    assert!(sf.values.iter().all(|&v| v == 0.0));
}

#[test]
fn unit_step_third_order_closed_form() {
    // |δf(r)| is the indicator of |r| cells, so ‖δf(r)‖₃ = (|r| h)^(1/3)
    let n = 256;
    let g = line(n, false);
    let h = g.dx[0];
    let f = step_field(&g, 0.0, 0.0, 1.0, 0.0);
    let o = middle(&g, 64, 192);
    let ells: Vec<f64> = (1..40).map(|m| (m as f64 + 0.5) * h).collect();
    let sf = structure_function(&f, &o, 3.0, &ells, StructureMode::SpaceOnly, "step").unwrap();
    for (m, v) in (1..40).zip(&sf.values) {
        let want = (m as f64 * h).cbrt();
        assert!((v - want).abs() < 1e-12 * want, "m={m}: {v} vs {want}");
    }
    assert_eq!(sf.lattice_spacing, vec![h]);
    assert!((1..40).zip(&sf.shifts).all(|(m, &n)| n == 2 * m));
}

#[test]
fn step_exponent_is_one_over_p() {
    let n = 4096;
    let g = line(n, false);
    let h = g.dx[0];
    let f = step_field(&g, 0.0, 0.0, 1.0, 0.0);
    let o = middle(&g, 1024, 3072);
    let ells = scale_ladder(h, 16.0 * h, 256.0 * h, 12);
    for p in [3.0, 4.0, 6.0] {
        let sf = structure_function(&f, &o, p, &ells, StructureMode::SpaceOnly, "step").unwrap();
        let fit = fit_exponent(&sf, [ells[0], ells[ells.len() - 1]]).unwrap();
        assert!((fit.sigma - 1.0 / p).abs() < 0.05, "p={p}: {}", fit.sigma);
        assert!(!fit.outside_unit_interval);
    }
}

#[test]
fn smooth_field_is_lipschitz() {
    let n = 1024;
    let g = line(n, true);
    let h = g.dx[0];
    let k = 2.0 * std::f64::consts::PI;
    let f = Field::from_fn(g, |x, _, _| (k * x).sin());
    let ells = scale_ladder(h, 4.0 * h, 64.0 * h, 12);
    let sf = structure_function(&f, &whole(&g), 3.0, &ells, StructureMode::SpaceOnly, "sin").unwrap();
    for (l, s) in ells.iter().zip(&sf.values) {
        // |δf| <= k |r| pointwise on a unit-length domain
        assert!(*s <= k * l * (1.0 + 1e-12));
    }
    let fit = fit_exponent(&sf, [ells[0], ells[ells.len() - 1]]).unwrap();
    assert!(fit.sigma >= 0.95, "{}", fit.sigma);
}

#[test]
fn rough_path_recovers_planted_exponent() {
    let levels = 12;
    let data = midpoint_displacement(levels, 0.5, 7);
    let n = data.len();
    let g = line(n, true);
    let h = g.dx[0];
    let f = Field::from_vec(g, data).unwrap();
    let ells = scale_ladder(h, 8.0 * h, 128.0 * h, 12);
    let sf = structure_function(&f, &whole(&g), 2.0, &ells, StructureMode::SpaceOnly, "mpd").unwrap();
    let fit = fit_exponent(&sf, [ells[0], ells[ells.len() - 1]]).unwrap();
    assert!((fit.sigma - 0.5).abs() < 0.07, "{}", fit.sigma);
}

#[test]
fn short_ladders_are_rejected() {
    let g = line(256, true);
    let h = g.dx[0];
    let f = Field::from_fn(g, |x, _, _| x.sin());
    let ells = scale_ladder(h, 2.0 * h, 12.0 * h, 6);
    let sf = structure_function(&f, &whole(&g), 3.0, &ells, StructureMode::SpaceOnly, "f").unwrap();
    assert!(matches!(fit_exponent(&sf, [ells[0], ells[ells.len() - 1]]), Err(Error::InsufficientScalingRange(_))));
}

#[test]
fn shifts_past_the_margin_are_rejected() {
    let g = line(128, false);
    let f = Field::constant(g, 1.0);
    let o = middle(&g, 32, 96);
    let h = g.dx[0];
    assert!(structure_function(&f, &o, 3.0, &[20.5 * h], StructureMode::SpaceOnly, "f").is_ok());
    assert!(matches!(structure_function(&f, &o, 3.0, &[40.5 * h], StructureMode::SpaceOnly, "f"), Err(Error::ScaleExceedsMargin { .. })));
    assert!(structure_function(&f, &o, 0.5, &[2.5 * h], StructureMode::SpaceOnly, "f").is_err());
}

#[test]
fn onsager_margins() {
    let third = 1.0 / 3.0;
    let r = onsager_conditions_with_tolerance(third, third, third, 1e-12);
    assert!(r.margins.iter().all(|m| m.abs() < 1e-15));
    assert_eq!(r.verdicts, [Verdict::Critical; 3]);
    let r = onsager_conditions(1.0, 1.0, 1.0);
    assert_eq!(r.margins, [2.0, 2.0, 2.0]);
    assert_eq!(r.holds, [true; 3]);
    let r = onsager_conditions(0.9, 0.9, 0.3);
    assert_eq!(r.holds, [true, true, false]);
    assert_eq!(r.verdicts[2], Verdict::Fails);
    // the density exponent enters through the minimum
    let r = onsager_conditions(0.9, 0.1, 0.5);
    assert_eq!(r.holds, [false, true, true]);
}

fn block_of(g: Grid, f: impl Fn(&Grid) -> Field) -> FieldBlock {
    let base = f(&g);
    let rho = base.map(|x| 1.0 + x);
    let u = base.map(|x| 2.0 + 3.0 * x);
    let v = base.map(|x| -0.5 * x);
    FieldBlock::new(g, rho, u, vec![v], 0.0).unwrap()
}

const REACH: usize = 64;

fn spacetime_grid() -> Grid {
    let h = 1.0 / 512.0;
    Grid::new_1d(512, h, -0.5 + 0.5 * h, false, 2 * REACH + 9, h, 0.0, 1.0)
}

fn compare(b: &FieldBlock) -> onsager_lab::besov::SpaceTimeComparison {
    let g = b.grid;
    let h = g.dx[0];
    let o = Subdomain::new(&g, IBox::new([128, 0, REACH], [384, 1, REACH + 9]), &g.full_box()).unwrap();
    let ells = scale_ladder(h, 6.0 * h, 60.0 * h, 12);
    spacetime_vs_space(b, &o, 3.0, &ells, [ells[0], ells[ells.len() - 1]]).unwrap()
}

fn spacetime_case(speed: f64, smooth: bool) -> ([f64; 3], [f64; 3]) {
    let g = spacetime_grid();
    let b = if smooth {
        block_of(g, |g| Field::from_fn(*g, |x, _, t| 0.3 * (2.0 * std::f64::consts::PI * (x - speed * t)).sin()))
    } else {
        block_of(g, |g| step_field(g, 0.0, 0.0, 1.0, speed))
    };
    let c = compare(&b);
    assert_eq!(c.consistent, [true; 3]);
    (c.space.map(|f| f.sigma), c.spacetime.map(|f| f.sigma))
}

#[test]
fn jump_in_time_breaks_the_spacetime_bound() {
    // smooth in space at every instant, discontinuous in time
    let g = spacetime_grid();
    let t_mid = g.coord(onsager_lab::fields::AXIS_T, REACH + 4) + 0.5 * g.dt;
    let b = block_of(g, |g| Field::from_fn(*g, |x, _, t| 0.2 * (2.0 * std::f64::consts::PI * x).sin() + if t > t_mid { 0.3 } else { 0.0 }));
    let c = compare(&b);
    assert!(c.space.iter().all(|f| f.sigma > 0.95));
    assert_eq!(c.consistent, [false; 3], "{:?}", c.spacetime.map(|f| f.sigma));
}

#[test]
fn stationary_step_has_equal_space_and_spacetime_exponents() {
    let (s, st) = spacetime_case(0.0, false);
    for i in 0..3 {
        assert!((s[i] - st[i]).abs() < 0.02, "{s:?} {st:?}");
        assert!((s[i] - 1.0 / 3.0).abs() < 0.06);
    }
}

#[test]
fn moving_step_keeps_its_spacetime_exponent() {
    let (s, st) = spacetime_case(0.5, false);
    for i in 0..3 {
        assert!((s[i] - st[i]).abs() < 0.05, "{s:?} {st:?}");
    }
}

#[test]
fn smooth_wave_is_lipschitz_in_space_time() {
    let (s, st) = spacetime_case(0.5, true);
    for i in 0..3 {
        assert!(s[i] > 0.95 && st[i] > 0.95, "{s:?} {st:?}");
    }
}

fn geometric(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.1 * 0.5f64.powi(k as i32)).collect()
}

#[test]
fn extrapolation_of_linear_series() {
    let x = geometric(6);
    let y: Vec<f64> = x.iter().map(|l| 3.0 + 2.0 * l).collect();
    let e = extrapolate_limit(&x, &y).unwrap();
    assert!((e.y_inf - 3.0).abs() < 1e-6, "{}", e.y_inf);
}

#[test]
fn extrapolation_recovers_fractional_order() {
    let x = geometric(7);
    let y: Vec<f64> = x.iter().map(|l| l.powf(2.0 / 3.0)).collect();
    let e = extrapolate_limit(&x, &y).unwrap();
    assert!(e.y_inf.abs() < 1e-6, "{}", e.y_inf);
    assert!((e.q - 2.0 / 3.0).abs() < 0.02, "{}", e.q);
}

#[test]
fn oscillating_series_is_rejected() {
    let x = geometric(6);
    let y: Vec<f64> = x.iter().enumerate().map(|(k, l)| 1.0 + if k % 2 == 0 { *l } else { -*l }).collect();
    assert!(matches!(extrapolate_limit(&x, &y), Err(Error::NonConvergentSeries(_))));
    assert!(matches!(extrapolate_limit(&x[..4], &y[..4]), Err(Error::NonConvergentSeries(_))));
}

#[test]
fn noisy_planted_limit_within_one_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = geometric(7);
    let y: Vec<f64> = x.iter().map(|l| 1.7 + 0.8 * l.powf(1.3) + 1e-4 * rng.gen_range(-1.0..1.0)).collect();
    let e = extrapolate_limit(&x, &y).unwrap();
    assert!((e.y_inf - 1.7).abs() < 0.017, "{}", e.y_inf);
}

#[test]
fn polynomial_extrapolation_is_exact_on_quadratics() {
    let x = [0.4, 0.2, 0.1];
    let y: Vec<f64> = x.iter().map(|v| 2.0 + v - 3.0 * v * v).collect();
    let (lim, err) = richardson_polynomial(&x, &y).unwrap();
    assert!((lim - 2.0).abs() < 1e-13);
    assert!(err > 0.0);
    assert!(matches!(richardson_polynomial(&[0.1], &[1.0]), Err(Error::InsufficientScan)));
}

fn rough(data: &[f64]) -> (Grid, Field) {
    let g = line(data.len(), true);
    (g, Field::from_vec(g, data.to_vec()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn structure_function_is_monotone_in_scale(data in prop::collection::vec(-1.0f64..1.0, 64), p in 1.0f64..6.0) {
        let (g, f) = rough(&data);
        let h = g.dx[0];
        let ells: Vec<f64> = (1..20).map(|m| (m as f64 + 0.5) * h).collect();
        let sf = structure_function(&f, &whole(&g), p, &ells, StructureMode::SpaceOnly, "r").unwrap();
        for w in sf.values.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn higher_exponents_interpolate(data in prop::collection::vec(-1.0f64..1.0, 64), q in 1.0f64..3.0, dp in 0.5f64..4.0) {
        // ‖δ‖_p <= ‖δ‖_∞^(1-q/p) ‖δ‖_q^(q/p) with ‖δ‖_∞ <= 2 sup|f|
        let (g, f) = rough(&data);
        let h = g.dx[0];
        let p = q + dp;
        let ells: Vec<f64> = (1..10).map(|m| (m as f64 + 0.5) * h).collect();
        let sq = structure_function(&f, &whole(&g), q, &ells, StructureMode::SpaceOnly, "r").unwrap();
        let sp = structure_function(&f, &whole(&g), p, &ells, StructureMode::SpaceOnly, "r").unwrap();
        let m = 2.0 * f.max_abs();
        for (a, b) in sp.values.iter().zip(&sq.values) {
            prop_assert!(*a <= m.powf(1.0 - q / p) * b.powf(q / p) * (1.0 + 1e-10) + 1e-300);
        }
    }
}
