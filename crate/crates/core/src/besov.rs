//! Structure functions, Besov-exponent fits, the exponent conditions for
//! anomalous dissipation, space versus space-time regularity, and
//! power-law limit extrapolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field, FieldBlock, Grid, IBox, Subdomain, AXIS_T};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureMode {
    /// Shifts over the space-time ball.
    SpaceTime,
    /// Spatial shifts within each time slice, then the sup over slices.
    SpaceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureFunction {
    pub f_id: String,
    pub p: f64,
    pub region: IBox,
    pub mode: StructureMode,
    pub ells: Vec<f64>,
    /// `S_p(ℓ) = sup_{|R| < ℓ} ‖δf(R)‖_{L^p(O)}`.
    pub values: Vec<f64>,
    /// Metric lattice spacing of each shifted axis.
    pub lattice_spacing: Vec<f64>,
    /// Number of lattice shifts inside each ball `|R| < ℓ`.
    pub shifts: Vec<usize>,
}

fn mode_axes(grid: &Grid, mode: StructureMode) -> Vec<usize> {
    grid.active_axes().into_iter().filter(|&a| mode == StructureMode::SpaceTime || a != AXIS_T).collect()
}

/// Nonzero lattice shifts with metric norm below `ell_max`, sorted by norm.
fn lattice_ball(grid: &Grid, axes: &[usize], ell_max: f64) -> Vec<([isize; 3], f64)> {
    let mut reach = [0isize; 3];
    for &a in axes {
        reach[a] = (ell_max / grid.metric_spacing(a)).ceil() as isize;
    }
    let mut out = Vec::new();
    for r0 in -reach[0]..=reach[0] {
        for r1 in -reach[1]..=reach[1] {
            for r2 in -reach[2]..=reach[2] {
                let r = [r0, r1, r2];
                if r == [0, 0, 0] {
                    continue;
                }
                let n = grid.shift_norm(r);
                if n < ell_max {
                    out.push((r, n));
                }
            }
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

#[inline]
fn pow_abs(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 3.0 {
        a * a * a
    } else if p == 2.0 {
        a * a
    } else if p == 1.0 {
        a
    } else if p == 4.0 {
        (a * a) * (a * a)
    } else if p == 6.0 {
        let s = a * a * a;
        s * s
    } else {
        a.powf(p)
    }
}

fn wrap(i: usize, r: isize, n: usize, periodic: bool) -> usize {
    if periodic {
        (i as isize + r).rem_euclid(n as isize) as usize
    } else {
        (i as isize + r) as usize
    }
}

/// Per-time-slice `Σ |δf|^p` (or max for `p = ∞`) over `O`.
fn slice_sums(f: &Field, o: &IBox, r: [isize; 3], p: f64) -> Vec<f64> {
    let g = &f.grid;
    let s = g.shape();
    let (px, py) = (g.is_periodic(0), g.is_periodic(1));
    let mut out = Vec::with_capacity(o.extent(AXIS_T));
    for k in o.lo[2]..o.hi[2] {
        let kq = (k as isize + r[2]) as usize;
        let mut acc = 0.0f64;
        for j in o.lo[1]..o.hi[1] {
            let jq = wrap(j, r[1], s[1], py);
            let base = s[0] * (j + s[1] * k);
            let baseq = s[0] * (jq + s[1] * kq);
            if p.is_infinite() {
                for i in o.lo[0]..o.hi[0] {
                    let d = (f.data[baseq + wrap(i, r[0], s[0], px)] - f.data[base + i]).abs();
                    if d > acc {
                        acc = d;
                    }
                }
            } else if !px || (o.lo[0] as isize + r[0] >= 0 && (o.hi[0] as isize + r[0]) <= s[0] as isize) {
                let a = &f.data[base + o.lo[0]..base + o.hi[0]];
                let lo = (o.lo[0] as isize + r[0]) as usize;
                let b = &f.data[baseq + lo..baseq + lo + a.len()];
                acc += a.iter().zip(b).map(|(x, y)| pow_abs(y - x, p)).sum::<f64>();
            } else {
                for i in o.lo[0]..o.hi[0] {
                    acc += pow_abs(f.data[baseq + wrap(i, r[0], s[0], px)] - f.data[base + i], p);
                }
            }
        }
        out.push(acc);
    }
    out
}

/// `‖δf(R)‖_{L^p(O)}`, or its sup over time slices in space-only mode.
fn shift_norm_p(f: &Field, o: &IBox, r: [isize; 3], p: f64, mode: StructureMode) -> f64 {
    let g = &f.grid;
    let sums = slice_sums(f, o, r, p);
    if p.is_infinite() {
        return sums.into_iter().fold(0.0, f64::max);
    }
    match mode {
        StructureMode::SpaceTime => (sums.iter().sum::<f64>() * g.cell_measure()).powf(1.0 / p),
        StructureMode::SpaceOnly => {
            let m = g.cell_measure() / g.spacing(AXIS_T);
            (sums.into_iter().fold(0.0, f64::max) * m).powf(1.0 / p)
        }
    }
}

fn check_shift_room(f: &Field, o: &Subdomain, axes: &[usize], ell_max: f64) -> Result<()> {
    let g = &f.grid;
    if !f.valid.contains_box(&o.bx) {
        return Err(Error::InvalidInput("subdomain outside the field's valid region".into()));
    }
    for &a in axes {
        if g.is_periodic(a) {
            if f.valid.extent(a) != g.shape()[a] {
                return Err(Error::ScaleExceedsMargin { ell: ell_max, margin: 0.0 });
            }
            continue;
        }
        let h = g.metric_spacing(a);
        let cells = (o.bx.lo[a] - f.valid.lo[a]).min(f.valid.hi[a] - o.bx.hi[a]) as f64 * h;
        let room = cells.min(o.margins[a]);
        // shifts on this axis reach up to the largest lattice multiple below ell_max
        let reach = ((ell_max / h).ceil() - 1.0) * h;
        if reach > room + 1e-12 * h {
            return Err(Error::ScaleExceedsMargin { ell: ell_max, margin: room });
        }
    }
    Ok(())
}

pub fn structure_function(f: &Field, o: &Subdomain, p: f64, ells: &[f64], mode: StructureMode, f_id: &str) -> Result<StructureFunction> {
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("structure functions need p >= 1, got {p}")));
    }
    if ells.is_empty() || ells.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidInput("scales must be positive".into()));
    }
    if o.bx.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let g = f.grid;
    let axes = mode_axes(&g, mode);
    let ell_max = ells.iter().cloned().fold(0.0, f64::max);
    check_shift_room(f, o, &axes, ell_max)?;
    let ball = lattice_ball(&g, &axes, ell_max);
    let norms: Vec<f64> = ball.par_iter().map(|(r, _)| shift_norm_p(f, &o.bx, *r, p, mode)).collect();
    let values = ells.iter().map(|&l| ball.iter().zip(&norms).take_while(|((_, n), _)| *n < l).map(|(_, &v)| v).fold(0.0, f64::max)).collect();
    let shifts = ells.iter().map(|&l| ball.iter().take_while(|(_, n)| *n < l).count()).collect();
    let lattice_spacing = axes.iter().map(|&a| g.metric_spacing(a)).collect();
    Ok(StructureFunction { f_id: f_id.into(), p, region: o.bx, mode, ells: ells.to_vec(), values, lattice_spacing, shifts })
}

/// Log-spaced scales from `lo` to `hi`, snapped to half-odd multiples of `h`
/// so each scale sits midway between lattice shells.
pub fn scale_ladder(h: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for i in 0..n {
        let l = lo * (hi / lo).powf(i as f64 / (n.max(2) - 1) as f64);
        let m = (l / h - 0.5).round().max(1.0);
        let snapped = (m + 0.5) * h;
        if out.last().map_or(true, |&x| snapped > x) {
            out.push(snapped);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub sigma: f64,
    pub fit_range: [f64; 2],
    pub r_squared: f64,
    pub stderr: f64,
    pub n_points: usize,
    /// Whether the slope lies outside `[0, 1]`; the value is reported unclamped.
    pub outside_unit_interval: bool,
}

/// Least squares `y = a + b x` returning `(a, b, r², stderr(b))`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let se = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (a, b, r2, se)
}

pub fn fit_exponent(sf: &StructureFunction, range: [f64; 2]) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64)> =
        sf.ells.iter().zip(&sf.values).filter(|(l, s)| **l >= range[0] && **l <= range[1] && **s > 0.0).map(|(l, s)| (l.ln(), s.ln())).collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientScalingRange(format!("{} positive points in [{:e}, {:e}]; need at least 8", pts.len(), range[0], range[1])));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, b, r2, se) = linear_fit(&x, &y);
    Ok(ExponentFit {
        sigma: b,
        fit_range: [x[0].exp(), x[x.len() - 1].exp()],
        r_squared: r2,
        stderr: se,
        n_points: pts.len(),
        outside_unit_interval: !(0.0..=1.0).contains(&b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Fails,
    /// Margin within the tolerance band around zero.
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsagerReport {
    /// `2 min(σu, σϱ) + σv - 1`, `min(σu, σϱ) + 2σv - 1`, `3σv - 1`.
    pub margins: [f64; 3],
    /// Strict inequalities `margin > 0`.
    pub holds: [bool; 3],
    pub verdicts: [Verdict; 3],
}

pub fn onsager_conditions(sigma_u: f64, sigma_rho: f64, sigma_v: f64) -> OnsagerReport {
    onsager_conditions_with_tolerance(sigma_u, sigma_rho, sigma_v, 0.0)
}

/// As [`onsager_conditions`], classifying margins with `|m| <= tol` as critical.
pub fn onsager_conditions_with_tolerance(sigma_u: f64, sigma_rho: f64, sigma_v: f64, tol: f64) -> OnsagerReport {
    let m = sigma_u.min(sigma_rho);
    let margins = [2.0 * m + sigma_v - 1.0, m + 2.0 * sigma_v - 1.0, 3.0 * sigma_v - 1.0];
    let verdict = |x: f64| {
        if x.abs() <= tol {
            Verdict::Critical
        } else if x > 0.0 {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    };
    OnsagerReport { margins, holds: margins.map(|x| x > 0.0), verdicts: margins.map(verdict) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeComparison {
    /// Space-only fits of `(u, ϱ, v)`.
    pub space: [ExponentFit; 3],
    pub spacetime: [ExponentFit; 3],
    /// Lower bounds on the space-time exponents from the space-only ones.
    pub predicted: [f64; 3],
    /// `σ_st >= predicted - (stderr_st + stderr_space + FIT_SLACK)`.
    pub consistent: [bool; 3],
}

/// Allowance for the lattice bias of fitted exponents, which the regression
/// standard errors do not capture.
pub const FIT_SLACK: f64 = 0.02;

/// Fits space-only and space-time exponents of `(u, ϱ, v_0)` and checks the
/// space-time lower bounds implied by spatial regularity.
pub fn spacetime_vs_space(block: &FieldBlock, o: &Subdomain, p: f64, ells: &[f64], range: [f64; 2]) -> Result<SpaceTimeComparison> {
    let fields = [(&block.u, "u"), (&block.rho, "rho"), (&block.v[0], "v")];
    let mut space = Vec::new();
    let mut st = Vec::new();
    for (f, id) in fields {
        space.push(fit_exponent(&structure_function(f, o, p, ells, StructureMode::SpaceOnly, id)?, range)?);
        st.push(fit_exponent(&structure_function(f, o, p, ells, StructureMode::SpaceTime, id)?, range)?);
    }
    let (su, sr, sv) = (&space[0], &space[1], &space[2]);
    let min_fit = |c: &[&ExponentFit]| -> (f64, f64) {
        let best = c.iter().min_by(|a, b| a.sigma.total_cmp(&b.sigma)).unwrap();
        (best.sigma, best.stderr)
    };
    let preds = [min_fit(&[su, sr, sv]), min_fit(&[sr, sv]), min_fit(&[su, sr, sv])];
    let predicted = preds.map(|p| p.0);
    let consistent = [0, 1, 2].map(|i| st[i].sigma >= preds[i].0 - (st[i].stderr + preds[i].1 + FIT_SLACK));
    Ok(SpaceTimeComparison { space: [space[0], space[1], space[2]], spacetime: [st[0], st[1], st[2]], predicted, consistent })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitExtrapolation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_inf: f64,
    pub q: f64,
    pub c: f64,
    /// Largest leave-one-out deviation of `y_inf`.
    pub confidence: f64,
    /// Convex hull of the three-point power-law extrapolants of the tail.
    pub hull: [f64; 2],
    /// Whether the least-squares limit had to be moved into the hull.
    pub clipped: bool,
}

const Q_MIN: f64 = 0.05;
const Q_MAX: f64 = 6.0;

/// Best `(a, c, sse)` of `y = a + c x^q` at fixed `q`.
fn fit_at_q(x: &[f64], y: &[f64], q: f64) -> (f64, f64, f64) {
    let z: Vec<f64> = x.iter().map(|v| v.powf(q)).collect();
    let (a, c, _, _) = linear_fit(&z, y);
    let sse = z.iter().zip(y).map(|(zi, yi)| (yi - a - c * zi).powi(2)).sum();
    (a, c, sse)
}

fn power_law_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, Q_MIN);
    let n = 600;
    for i in 0..=n {
        let q = Q_MIN * (Q_MAX / Q_MIN).powf(i as f64 / n as f64);
        let sse = fit_at_q(x, y, q).2;
        if sse < best.0 {
            best = (sse, q);
        }
    }
    // golden-section refinement around the best grid point
    let step = (Q_MAX / Q_MIN).powf(1.0 / n as f64);
    let (mut lo, mut hi) = ((best.1 / step).max(Q_MIN), (best.1 * step).min(Q_MAX));
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - gr * (hi - lo);
        let m2 = lo + gr * (hi - lo);
        if fit_at_q(x, y, m1).2 <= fit_at_q(x, y, m2).2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let q = 0.5 * (lo + hi);
    let (a, c, _) = fit_at_q(x, y, q);
    (a, c, q)
}

/// Exact `y = a + c x^q` through three points with `x1 > x2 > x3 > 0`.
fn three_point(p1: (f64, f64), p2: (f64, f64), p3: (f64, f64)) -> Option<f64> {
    let d12 = p1.1 - p2.1;
    let d23 = p2.1 - p3.1;
    if d23 == 0.0 {
        return if d12 == 0.0 { Some(p3.1) } else { None };
    }
    let ratio = d12 / d23;
    if !(ratio > 0.0) {
        return None;
    }
    let g = |q: f64| (p1.0.powf(q) - p2.0.powf(q)) / (p2.0.powf(q) - p3.0.powf(q)) - ratio;
    let (mut lo, mut hi) = (1e-3, 20.0);
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo.is_finite() && ghi.is_finite()) || glo.signum() == ghi.signum() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if g(m).signum() == glo.signum() {
            lo = m;
        } else {
            hi = m;
        }
    }
    let q = 0.5 * (lo + hi);
    let c = d23 / (p2.0.powf(q) - p3.0.powf(q));
    Some(p3.1 - c * p3.0.powf(q))
}

/// Extrapolates `y(x)` to `x → 0` with `y = y_inf + C x^q`.
pub fn extrapolate_limit(xs: &[f64], ys: &[f64]) -> Result<LimitExtrapolation> {
    extrapolate_limit_tol(xs, ys, 0.0)
}

/// As [`extrapolate_limit`]; successive differences with `|Δy| <= tol` count
/// as converged when checking that the tail is monotone and Cauchy.
pub fn extrapolate_limit_tol(xs: &[f64], ys: &[f64], tol: f64) -> Result<LimitExtrapolation> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput("series lengths differ".into()));
    }
    if xs.len() < 5 {
        return Err(Error::NonConvergentSeries(format!("{} points; need at least 5", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) || xs.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidInput("series needs finite values and x > 0".into()));
    }
    let mut pts: Vec<(f64, f64)> = xs.iter().cloned().zip(ys.iter().cloned()).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    // approach order: decreasing x
    let scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = tol.max(1e-12 * scale);
    let diffs: Vec<f64> = pts.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let signs: Vec<f64> = diffs.iter().filter(|d| d.abs() > tol).map(|d| d.signum()).collect();
    if signs.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::NonConvergentSeries("tail is not monotone".into()));
    }
    let tail: Vec<f64> = diffs.iter().rev().take(3).map(|d| d.abs()).collect();
    if tail.len() == 3 && tail[0] > tol && tail[0] >= tail[2] {
        return Err(Error::NonConvergentSeries("successive differences do not shrink".into()));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (a, c, q) = power_law_fit(&x, &y);
    let mut conf: f64 = 0.0;
    for i in 0..x.len() {
        let xi: Vec<f64> = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
        let yi: Vec<f64> = y.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
        conf = conf.max((power_law_fit(&xi, &yi).0 - a).abs());
    }
    let n = pts.len();
    // Richardson extrapolants of the tail: pairs at the fitted order, and
    // exact three-point power laws where they exist
    let mut ext: Vec<f64> = (n - 4..n - 1)
        .map(|i| {
            let (a0, a1) = (pts[i].0.powf(q), pts[i + 1].0.powf(q));
            (pts[i + 1].1 * a0 - pts[i].1 * a1) / (a0 - a1)
        })
        .collect();
    ext.extend((n - 5..n - 2).filter_map(|i| three_point(pts[i], pts[i + 1], pts[i + 2])));
    let hull = [ext.iter().cloned().fold(f64::INFINITY, f64::min), ext.iter().cloned().fold(f64::NEG_INFINITY, f64::max)];
    let clipped = a < hull[0] || a > hull[1];
    let y_inf = a.clamp(hull[0], hull[1]);
    Ok(LimitExtrapolation { x, y, y_inf, q, c, confidence: conf, hull, clipped })
}

/// Polynomial extrapolation to `x = 0` through all points (Neville), with
/// the difference to the next-lower order as an error estimate.
pub fn richardson_polynomial(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::InsufficientScan);
    }
    let neville = |n: usize| -> f64 {
        let x = &xs[xs.len() - n..];
        let mut p: Vec<f64> = ys[ys.len() - n..].to_vec();
        for m in 1..n {
            for i in 0..n - m {
                p[i] = (x[i] * p[i + 1] - x[i + m] * p[i]) / (x[i] - x[i + m]);
            }
        }
        p[0]
    };
    let full = neville(xs.len());
    let lower = neville(xs.len() - 1);
    Ok((full, (full - lower).abs()))
}

/// Periodic random-midpoint-displacement path with Hurst exponent `h` on
/// `2^levels` points; increments scale as `|r|^h`.
pub fn midpoint_displacement(levels: u32, h: f64, seed: u64) -> Vec<f64> {
    let n = 1usize << levels;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = vec![0.0; n + 1];
    let mut step = n;
    let mut sd = 1.0;
    while step > 1 {
        let half = step / 2;
        sd *= 0.5f64.powf(h);
        let mut i = half;
        while i < n {
            let z: f64 = StandardNormal.sample(&mut rng);
            f[i] = 0.5 * (f[i - half] + f[i + half]) + sd * z;
            i += step;
        }
        step = half;
    }
    f.truncate(n);
    f
}

/// `a + (b - a) H(x - x_jump - speed · t)` on the grid.
pub fn step_field(grid: &Grid, x_jump: f64, a: f64, b: f64, speed: f64) -> Field {
    Field::from_fn(*grid, |x, _, t| if x - x_jump - speed * t >= 0.0 { b } else { a })
}
