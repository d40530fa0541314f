use onsager_lab::fields::{essential_range_hull, increment, lp_norm, Field, FieldBlock, Grid, IBox, Subdomain};
use onsager_lab::Error;
use proptest::prelude::*;

fn grid(nx: usize, dx: f64, periodic: bool) -> Grid {
    Grid::new_1d(nx, dx, 0.0, periodic, 2, 1.0, 0.0, 1.0)
}

fn slice0(g: &Grid, lo: usize, hi: usize) -> IBox {
    IBox::new([lo, 0, 0], [hi, 1, 1]).intersect(&g.full_box())
}

#[test]
fn increment_of_constant_is_zero() {
    let g = grid(32, 0.1, false);
    let f = Field::constant(g, 3.7);
    let o = Subdomain::new(&g, IBox::new([8, 0, 0], [24, 1, 2]), &g.full_box()).unwrap();
    for r in [-5isize, -1, 1, 4] {
        let inc = increment(&f, [r, 0, 0], &o).unwrap();
        assert!(o.bx.iter().all(|p| inc.field.at(p) == 0.0));
    }
}

#[test]
fn increment_of_linear_on_periodic_axis() {
    let n = 40;
    let dx = 0.25;
    let g = grid(n, dx, true);
    let f = Field::from_fn(g, |x, _, _| x);
    let o = Subdomain::new(&g, g.full_box(), &g.full_box()).unwrap();
    let inc = increment(&f, [1, 0, 0], &o).unwrap();
    for p in o.bx.iter() {
        let want = if p[0] == n - 1 { -(n as f64 - 1.0) * dx } else { dx };
        assert!((inc.field.at(p) - want).abs() < 1e-12);
    }
    assert!((inc.norm - dx).abs() < 1e-15);
}

#[test]
fn increment_of_step_is_indicator() {
    let n = 64;
    let g = grid(n, 1.0 / n as f64, false);
    let j = 32;
    let f = Field::from_fn(g, |x, _, _| if x >= j as f64 / n as f64 - 1e-12 { 1.0 } else { 0.0 });
    let o = Subdomain::new(&g, IBox::new([8, 0, 0], [56, 1, 2]), &g.full_box()).unwrap();
    for r in 1..=5usize {
        let inc = increment(&f, [r as isize, 0, 0], &o).unwrap();
        for p in o.bx.iter() {
            let want = if p[0] + r >= j && p[0] < j { 1.0 } else { 0.0 };
            assert_eq!(inc.field.at(p), want, "r={r} i={}", p[0]);
        }
    }
}

#[test]
fn increment_beyond_margin_is_rejected() {
    let g = grid(32, 0.1, false);
    let f = Field::constant(g, 1.0);
    let o = Subdomain::new(&g, IBox::new([4, 0, 0], [28, 1, 2]), &g.full_box()).unwrap();
    assert!(matches!(increment(&f, [5, 0, 0], &o), Err(Error::ShiftExceedsMargin { axis: 0, .. })));
    assert!(increment(&f, [4, 0, 0], &o).is_ok());
}

#[test]
fn lp_norm_of_constant() {
    let g = grid(3, 1.0, false);
    let f = Field::constant(g, 2.0);
    let n = lp_norm(&f, &slice0(&g, 0, 3), 2.0).unwrap();
    assert!((n - 2.0 * 3f64.sqrt()).abs() < 1e-14);
}

#[test]
fn lp_norm_of_step() {
    let n = 200;
    let dx = 2.0 / n as f64;
    let g = Grid::new_1d(n, dx, -1.0, false, 2, 1.0, 0.0, 1.0);
    let f = Field::from_fn(g, |x, _, _| if x >= -1e-12 { 1.0 } else { 0.0 });
    let v = lp_norm(&f, &slice0(&g, 0, n), 3.0).unwrap();
    assert!((v - 1.0).abs() < 1e-12);
}

#[test]
fn lp_norm_infinity_picks_spike() {
    let g = grid(16, 0.1, false);
    let mut f = Field::zeros(g);
    f.set([5, 0, 0], -7.0);
    assert_eq!(lp_norm(&f, &slice0(&g, 0, 16), f64::INFINITY).unwrap(), 7.0);
}

#[test]
fn lp_norm_rejects_bad_inputs() {
    let g = grid(16, 0.1, false);
    let f = Field::zeros(g);
    assert!(matches!(lp_norm(&f, &IBox::new([3, 0, 0], [3, 1, 1]), 2.0), Err(Error::EmptyDomain)));
    assert!(lp_norm(&f, &slice0(&g, 0, 16), 0.5).is_err());
}

fn block_1d(rho: Vec<f64>, u: Vec<f64>) -> FieldBlock {
    let g = Grid::new_1d(rho.len(), 0.1, 0.0, false, 1 + 1, 0.1, 0.0, 1.0);
    let twice = |v: &Vec<f64>| v.iter().chain(v.iter()).copied().collect::<Vec<_>>();
    let r = Field::from_vec(g, twice(&rho)).unwrap();
    let e = Field::from_vec(g, twice(&u)).unwrap();
    FieldBlock::new(g, r, e, vec![Field::zeros(g)], 0.0).unwrap()
}

#[test]
fn hull_of_constant_state_is_degenerate() {
    let h = essential_range_hull(&block_1d(vec![1.3; 8], vec![2.1; 8]));
    assert_eq!((h.u_min, h.u_max, h.rho_min, h.rho_max), (2.1, 2.1, 1.3, 1.3));
}

#[test]
fn hull_of_two_state_data_spans_both() {
    let mut rho = vec![1.0; 5];
    rho.extend(vec![8.0 / 3.0; 5]);
    let mut u = vec![2.5; 5];
    u.extend(vec![11.25; 5]);
    let h = essential_range_hull(&block_1d(rho, u));
    assert_eq!((h.u_min, h.u_max, h.rho_min, h.rho_max), (2.5, 11.25, 1.0, 8.0 / 3.0));
}

#[test]
fn block_rejects_density_below_floor() {
    let g = grid(4, 0.1, false);
    let r = Field::constant(g, 0.0);
    let e = Field::constant(g, 1.0);
    let res = FieldBlock::new(g, r, e, vec![Field::zeros(g)], 0.0);
    assert!(matches!(res, Err(Error::StateOutsideValidity(_))));
}

#[test]
fn time_slice_keeps_data() {
    let g = Grid::new_1d(8, 0.1, 0.0, true, 5, 0.2, 1.0, 1.0);
    let f = Field::from_fn(g, |x, _, t| x + 10.0 * t);
    let b = FieldBlock::new(g, Field::constant(g, 1.0), f.clone(), vec![Field::zeros(g)], 0.0).unwrap();
    let s = b.time_slice(2, 4).unwrap();
    assert_eq!(s.grid.nt, 2);
    assert!((s.grid.t0 - 1.4).abs() < 1e-15);
    assert_eq!(s.u.at([3, 0, 1]), f.at([3, 0, 3]));
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

proptest! {
    #[test]
    fn increments_compose_on_periodic_axes(data in values(24), r1 in -7isize..7, r2 in -7isize..7) {
        let g = Grid::new_1d(24, 0.5, 0.0, true, 1 + 1, 1.0, 0.0, 1.0);
        let f = Field::from_vec(g, data.iter().chain(data.iter()).copied().collect()).unwrap();
        let o = Subdomain::new(&g, g.full_box(), &g.full_box()).unwrap();
        let both = increment(&f, [r1 + r2, 0, 0], &o).unwrap().field;
        let a = increment(&f, [r1, 0, 0], &o).unwrap().field;
        let b = increment(&f, [r2, 0, 0], &o).unwrap().field;
        for p in o.bx.iter() {
            let shifted = [(p[0] as isize + r2).rem_euclid(24) as usize, p[1], p[2]];
            let sum = a.at(shifted) + b.at(p);
            prop_assert!((both.at(p) - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn lp_norm_monotone_in_p_on_unit_measure(data in values(50), p in 1.0f64..6.0, dp in 0.0f64..4.0) {
        let g = Grid::new_1d(50, 1.0 / 50.0, 0.0, false, 2, 1.0, 0.0, 1.0);
        let f = Field::from_vec(g, data.iter().chain(data.iter()).copied().collect()).unwrap();
        let o = slice0(&g, 0, 50);
        let a = lp_norm(&f, &o, p).unwrap();
        let b = lp_norm(&f, &o, p + dp).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12) + 1e-300);
        prop_assert!(b <= lp_norm(&f, &o, f64::INFINITY).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn shrinking_domain_never_increases_power_integral(data in values(40), lo in 0usize..20, hi in 20usize..=40, p in 1.0f64..6.0) {
        let g = Grid::new_1d(40, 0.1, 0.0, false, 2, 1.0, 0.0, 1.0);
        let f = Field::from_vec(g, data.iter().chain(data.iter()).copied().collect()).unwrap();
        let full = lp_norm(&f, &slice0(&g, 0, 40), p).unwrap().powf(p);
        let part = lp_norm(&f, &slice0(&g, lo, hi), p).unwrap().powf(p);
        prop_assert!(part <= full * (1.0 + 1e-12));
    }

    #[test]
    fn hull_contains_every_sample(rho in prop::collection::vec(0.1f64..5.0, 12), u in prop::collection::vec(0.1f64..5.0, 12)) {
        let b = block_1d(rho.clone(), u.clone());
        let h = essential_range_hull(&b);
        for (r, e) in rho.iter().zip(&u) {
            prop_assert!(h.contains(*e, *r));
        }
    }
}
