//! Space-time lattice data: grids, index boxes, scalar fields, field blocks,
//! shifted increments and L^p norms.
//!
//! Every field lives on a three-axis lattice `(x, y, t)`. One-dimensional
//! data uses a single `y` level. Storage is flat with `x` fastest, so each
//! time level is one contiguous spatial slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AXIS_X: usize = 0;
pub const AXIS_Y: usize = 1;
pub const AXIS_T: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub nx: [usize; 2],
    pub dx: [f64; 2],
    pub x0: [f64; 2],
    pub periodic: [bool; 2],
    pub nt: usize,
    pub dt: f64,
    pub t0: f64,
    pub c_ref: f64,
}

impl Grid {
    pub fn new_1d(nx: usize, dx: f64, x0: f64, periodic: bool, nt: usize, dt: f64, t0: f64, c_ref: f64) -> Self {
        Grid { d: 1, nx: [nx, 1], dx: [dx, 1.0], x0: [x0, 0.0], periodic: [periodic, true], nt, dt, t0, c_ref }
    }

    pub fn new_2d(nx: [usize; 2], dx: [f64; 2], x0: [f64; 2], periodic: [bool; 2], nt: usize, dt: f64, t0: f64, c_ref: f64) -> Self {
        Grid { d: 2, nx, dx, x0, periodic, nt, dt, t0, c_ref }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d != 1 && self.d != 2 {
            return Err(Error::config("grid.d", "must be 1 or 2"));
        }
        for a in 0..self.d {
            if self.nx[a] < 2 {
                return Err(Error::config("grid.nx", "each axis needs at least 2 points"));
            }
            if !(self.dx[a] > 0.0 && self.dx[a].is_finite()) {
                return Err(Error::config("grid.dx", "spacing must be positive"));
            }
        }
        if self.nt < 2 {
            return Err(Error::config("grid.nt", "needs at least 2 time levels"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("grid.dt", "must be positive"));
        }
        if !(self.c_ref > 0.0 && self.c_ref.is_finite()) {
            return Err(Error::config("grid.c_ref", "must be positive"));
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.nx[0], if self.d == 2 { self.nx[1] } else { 1 }, self.nt]
    }

    pub fn len(&self) -> usize {
        let s = self.shape();
        s[0] * s[1] * s[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let s = self.shape();
        i + s[0] * (j + s[1] * k)
    }

    /// Axes that carry data: spatial axes `0..d` plus time.
    pub fn active_axes(&self) -> Vec<usize> {
        if self.d == 2 {
            vec![AXIS_X, AXIS_Y, AXIS_T]
        } else {
            vec![AXIS_X, AXIS_T]
        }
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        match axis {
            AXIS_T => false,
            AXIS_Y if self.d == 1 => true,
            a => self.periodic[a],
        }
    }

    /// Physical spacing per axis (`dt` on the time axis).
    pub fn spacing(&self, axis: usize) -> f64 {
        if axis == AXIS_T {
            self.dt
        } else {
            self.dx[axis]
        }
    }

    /// Spacing in the space-time metric `X = (x, c_ref t)`.
    pub fn metric_spacing(&self, axis: usize) -> f64 {
        if axis == AXIS_T {
            self.c_ref * self.dt
        } else {
            self.dx[axis]
        }
    }

    /// Physical measure of one lattice cell, `∏dx · dt`.
    pub fn cell_measure(&self) -> f64 {
        let mut m = self.dx[0] * self.dt;
        if self.d == 2 {
            m *= self.dx[1];
        }
        m
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if axis == AXIS_T {
            self.t0 + i as f64 * self.dt
        } else {
            self.x0[axis] + i as f64 * self.dx[axis]
        }
    }

    pub fn full_box(&self) -> IBox {
        IBox { lo: [0; 3], hi: self.shape() }
    }

    /// Metric norm of a lattice shift.
    pub fn shift_norm(&self, r: [isize; 3]) -> f64 {
        let mut s = 0.0;
        for (a, &ra) in r.iter().enumerate() {
            let h = self.metric_spacing(a) * ra as f64;
            s += h * h;
        }
        s.sqrt()
    }

    /// Box of all indices, clamped along `axis` to the half-open index range.
    pub fn time_window(&self, k0: usize, k1: usize) -> IBox {
        let mut b = self.full_box();
        b.lo[AXIS_T] = k0;
        b.hi[AXIS_T] = k1;
        b
    }
}

/// Half-open index box `[lo, hi)` on the three lattice axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl IBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        IBox { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.hi[axis].saturating_sub(self.lo[axis])
    }

    pub fn count(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (0..3).map(|a| self.extent(a)).product()
        }
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] < self.hi[a])
    }

    pub fn contains_box(&self, o: &IBox) -> bool {
        o.is_empty() || (0..3).all(|a| o.lo[a] >= self.lo[a] && o.hi[a] <= self.hi[a])
    }

    pub fn intersect(&self, o: &IBox) -> IBox {
        let mut r = *self;
        for a in 0..3 {
            r.lo[a] = self.lo[a].max(o.lo[a]);
            r.hi[a] = self.hi[a].min(o.hi[a]).max(r.lo[a]);
        }
        r
    }

    /// Shrinks by `r[a]` cells on each side of every axis where `shrink[a]` holds.
    pub fn shrink(&self, r: [usize; 3], shrink: [bool; 3]) -> IBox {
        let mut b = *self;
        for a in 0..3 {
            if shrink[a] {
                b.lo[a] = self.lo[a] + r[a];
                b.hi[a] = self.hi[a].saturating_sub(r[a]).max(b.lo[a]);
            }
        }
        b
    }

    pub fn iter(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let b = *self;
        let empty = b.is_empty();
        (b.lo[2]..if empty { b.lo[2] } else { b.hi[2] })
            .flat_map(move |k| (b.lo[1]..b.hi[1]).flat_map(move |j| (b.lo[0]..b.hi[0]).map(move |i| [i, j, k])))
    }
}

/// An open space-time box `O` together with its metric distance to the
/// block boundary along each axis (infinite on periodic axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subdomain {
    pub bx: IBox,
    pub margins: [f64; 3],
}

impl Subdomain {
    /// `O` inside `within` (usually the block's full box or a field's valid box).
    pub fn new(grid: &Grid, bx: IBox, within: &IBox) -> Result<Self> {
        if bx.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if !within.contains_box(&bx) {
            return Err(Error::InvalidInput(format!("subdomain {bx:?} not inside {within:?}")));
        }
        let mut margins = [f64::INFINITY; 3];
        for a in 0..3 {
            if !grid.is_periodic(a) {
                let cells = (bx.lo[a] - within.lo[a]).min(within.hi[a] - bx.hi[a]);
                margins[a] = cells as f64 * grid.metric_spacing(a);
            }
        }
        Ok(Subdomain { bx, margins })
    }

    /// Scalar margin `dist(O, ∂Γ)` in the space-time metric.
    pub fn margin(&self) -> f64 {
        self.margins.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Scalar field on the full lattice; only entries inside `valid` are meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub valid: IBox,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, valid: grid.full_box(), data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field { grid, valid: grid.full_box(), data: vec![c; grid.len()] }
    }

    /// Samples `f(x, y, t)` at every lattice point.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let s = grid.shape();
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..s[2] {
            let t = grid.coord(AXIS_T, k);
            for j in 0..s[1] {
                let y = if grid.d == 2 { grid.coord(AXIS_Y, j) } else { 0.0 };
                for i in 0..s[0] {
                    data.push(f(grid.coord(AXIS_X, i), y, t));
                }
            }
        }
        Field { grid, valid: grid.full_box(), data }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidInput(format!("field length {} != grid size {}", data.len(), grid.len())));
        }
        Ok(Field { grid, valid: grid.full_box(), data })
    }

    #[inline]
    pub fn at(&self, p: [usize; 3]) -> f64 {
        self.data[self.grid.index(p[0], p[1], p[2])]
    }

    #[inline]
    pub fn set(&mut self, p: [usize; 3], v: f64) {
        let i = self.grid.index(p[0], p[1], p[2]);
        self.data[i] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, valid: self.valid, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Pointwise combination; the result is valid on the intersection.
    pub fn zip(&self, o: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field { grid: self.grid, valid: self.valid.intersect(&o.valid), data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn mul(&self, o: &Field) -> Field {
        self.zip(o, |a, b| a * b)
    }

    pub fn add(&self, o: &Field) -> Field {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Field) -> Field {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|x| c * x)
    }

    pub fn with_valid(mut self, valid: IBox) -> Field {
        self.valid = valid;
        self
    }

    /// Max |f| over the valid box.
    pub fn max_abs(&self) -> f64 {
        self.valid.iter().map(|p| self.at(p).abs()).fold(0.0, f64::max)
    }

    /// Centered difference along `axis` in physical units; the valid box
    /// shrinks by one cell on non-periodic axes.
    pub fn central_diff(&self, axis: usize) -> Field {
        let g = self.grid;
        let s = g.shape();
        let per = g.is_periodic(axis);
        let mut shrink = [false; 3];
        shrink[axis] = !per;
        let valid = self.valid.shrink([1; 3], shrink);
        let h = 2.0 * g.spacing(axis);
        let mut out = Field { grid: g, valid, data: vec![0.0; g.len()] };
        for p in valid.iter() {
            let mut pp = p;
            let mut pm = p;
            if per {
                pp[axis] = (p[axis] + 1) % s[axis];
                pm[axis] = (p[axis] + s[axis] - 1) % s[axis];
            } else {
                pp[axis] = p[axis] + 1;
                pm[axis] = p[axis] - 1;
            }
            out.set(p, (self.at(pp) - self.at(pm)) / h);
        }
        out
    }

    /// Fourth-order centered difference along `axis`; the valid box shrinks
    /// by two cells on non-periodic axes.
    pub fn diff4(&self, axis: usize) -> Field {
        let g = self.grid;
        let s = g.shape();
        let n = s[axis] as isize;
        let per = g.is_periodic(axis);
        let mut shrink = [false; 3];
        shrink[axis] = !per;
        let valid = self.valid.shrink([2; 3], shrink);
        let h = 12.0 * g.spacing(axis);
        let mut out = Field { grid: g, valid, data: vec![0.0; g.len()] };
        for p in valid.iter() {
            let at = |o: isize| {
                let mut q = p;
                q[axis] = (p[axis] as isize + o).rem_euclid(n) as usize;
                self.at(q)
            };
            out.set(p, (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / h);
        }
        out
    }
}

/// Primitive fields `(ϱ, v, u)` on a space-time block.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBlock {
    pub grid: Grid,
    pub rho: Field,
    pub u: Field,
    pub v: Vec<Field>,
    pub eps: f64,
}

impl FieldBlock {
    pub fn new(grid: Grid, rho: Field, u: Field, v: Vec<Field>, eps: f64) -> Result<Self> {
        let b = FieldBlock { grid, rho, u, v, eps };
        b.validate(crate::thermo::DEFAULT_RHO_FLOOR)?;
        Ok(b)
    }

    pub fn validate(&self, rho_floor: f64) -> Result<()> {
        self.grid.validate()?;
        if self.v.len() != self.grid.d {
            return Err(Error::InvalidInput(format!("velocity has {} components, d = {}", self.v.len(), self.grid.d)));
        }
        let n = self.grid.len();
        let all = std::iter::once(&self.rho).chain(std::iter::once(&self.u)).chain(self.v.iter());
        for f in all {
            if f.data.len() != n || f.grid != self.grid {
                return Err(Error::InvalidInput("field does not match block grid".into()));
            }
            if f.valid.iter().any(|p| !f.at(p).is_finite()) {
                return Err(Error::InvalidInput("non-finite field entry".into()));
            }
        }
        if let Some(p) = self.rho.valid.iter().find(|&p| self.rho.at(p) < rho_floor) {
            return Err(Error::StateOutsideValidity(format!("rho = {} below floor at {:?}", self.rho.at(p), p)));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidInput("eps must be >= 0".into()));
        }
        Ok(())
    }

    /// Box where every primitive field is valid.
    pub fn valid(&self) -> IBox {
        self.v.iter().fold(self.rho.valid.intersect(&self.u.valid), |b, f| b.intersect(&f.valid))
    }

    /// Momentum component `j_k = ϱ v_k`.
    pub fn momentum(&self, k: usize) -> Field {
        self.rho.mul(&self.v[k])
    }

    /// Total energy density `E = ½ϱ|v|² + u`.
    pub fn total_energy(&self) -> Field {
        let mut e = self.u.clone();
        for vk in &self.v {
            for (i, x) in e.data.iter_mut().enumerate() {
                *x += 0.5 * self.rho.data[i] * vk.data[i] * vk.data[i];
            }
            e.valid = e.valid.intersect(&vk.valid);
        }
        e.valid = e.valid.intersect(&self.rho.valid);
        e
    }

    /// Restricts the block to a time window `[k0, k1)`, copying data.
    pub fn time_slice(&self, k0: usize, k1: usize) -> Result<FieldBlock> {
        if k1 <= k0 || k1 > self.grid.nt {
            return Err(Error::InvalidInput(format!("bad time window [{k0}, {k1})")));
        }
        let mut g = self.grid;
        g.nt = k1 - k0;
        g.t0 = self.grid.coord(AXIS_T, k0);
        let slab = self.grid.shape()[0] * self.grid.shape()[1];
        let cut = |f: &Field| {
            let mut valid = f.valid;
            valid.lo[2] = valid.lo[2].max(k0) - k0;
            valid.hi[2] = valid.hi[2].min(k1).saturating_sub(k0).max(valid.lo[2]);
            Field { grid: g, valid, data: f.data[k0 * slab..k1 * slab].to_vec() }
        };
        Ok(FieldBlock { grid: g, rho: cut(&self.rho), u: cut(&self.u), v: self.v.iter().map(cut).collect(), eps: self.eps })
    }
}

/// A shifted difference `δf(R; X) = f(X + R) - f(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Increment {
    pub shift: [isize; 3],
    pub norm: f64,
    pub field: Field,
}

#[inline]
fn shifted_index(x: usize, r: isize, n: usize, periodic: bool) -> usize {
    if periodic {
        (x as isize + r).rem_euclid(n as isize) as usize
    } else {
        (x as isize + r) as usize
    }
}

/// Shifted increment of `f` over `O`; periodic axes wrap, non-periodic shifts
/// must keep `X + R` inside the field's valid box.
pub fn increment(f: &Field, shift: [isize; 3], o: &Subdomain) -> Result<Increment> {
    let g = f.grid;
    let s = g.shape();
    if o.bx.is_empty() {
        return Err(Error::EmptyDomain);
    }
    if !f.valid.contains_box(&o.bx) {
        return Err(Error::InvalidInput("subdomain outside the field's valid region".into()));
    }
    for (a, &r) in shift.iter().enumerate() {
        if g.is_periodic(a) {
            if f.valid.extent(a) != s[a] && r != 0 {
                return Err(Error::ShiftExceedsMargin { shift, axis: a });
            }
            continue;
        }
        let lo = o.bx.lo[a] as isize + r;
        let hi = o.bx.hi[a] as isize + r;
        let dist = (r as f64 * g.metric_spacing(a)).abs();
        if lo < f.valid.lo[a] as isize || hi > f.valid.hi[a] as isize || dist > o.margins[a] {
            return Err(Error::ShiftExceedsMargin { shift, axis: a });
        }
    }
    let mut out = Field { grid: g, valid: o.bx, data: vec![0.0; g.len()] };
    for p in o.bx.iter() {
        let q = [
            shifted_index(p[0], shift[0], s[0], g.is_periodic(0)),
            shifted_index(p[1], shift[1], s[1], g.is_periodic(1)),
            shifted_index(p[2], shift[2], s[2], false),
        ];
        out.set(p, f.at(q) - f.at(p));
    }
    Ok(Increment { shift, norm: g.shift_norm(shift), field: out })
}

/// `(∫_O |f|^p dX)^{1/p}` by midpoint quadrature with the physical cell
/// measure; `p = ∞` gives `max |f|`.
pub fn lp_norm(f: &Field, o: &IBox, p: f64) -> Result<f64> {
    if o.is_empty() {
        return Err(Error::EmptyDomain);
    }
    if !f.valid.contains_box(o) {
        return Err(Error::InvalidInput("norm domain outside the field's valid region".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs_on(o));
    }
    let acc = lp_power_sum(f, o, p);
    Ok((acc * f.grid.cell_measure()).powf(1.0 / p))
}

/// `Σ_O |f|^p` without the cell measure.
pub(crate) fn lp_power_sum(f: &Field, o: &IBox, p: f64) -> f64 {
    let s = f.grid.shape();
    let mut acc = 0.0;
    for k in o.lo[2]..o.hi[2] {
        for j in o.lo[1]..o.hi[1] {
            let base = s[0] * (j + s[1] * k);
            let row = &f.data[base + o.lo[0]..base + o.hi[0]];
            acc += pow_sum(row, p);
        }
    }
    acc
}

#[inline]
pub(crate) fn pow_sum(row: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        row.iter().map(|x| x * x).sum()
    } else if p == 3.0 {
        row.iter().map(|x| x * x * x.abs()).sum()
    } else if p == 4.0 {
        row.iter().map(|x| (x * x) * (x * x)).sum()
    } else if p == 1.0 {
        row.iter().map(|x| x.abs()).sum()
    } else {
        row.iter().map(|x| x.abs().powf(p)).sum()
    }
}

impl Field {
    pub fn max_abs_on(&self, o: &IBox) -> f64 {
        o.iter().map(|p| self.at(p).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeHull {
    pub u_min: f64,
    pub u_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl RangeHull {
    pub fn contains(&self, u: f64, rho: f64) -> bool {
        u >= self.u_min && u <= self.u_max && rho >= self.rho_min && rho <= self.rho_max
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [(self.u_min, self.rho_min), (self.u_min, self.rho_max), (self.u_max, self.rho_min), (self.u_max, self.rho_max)]
    }
}

/// Componentwise min/max of `(u, ϱ)` over the block's valid region.
pub fn essential_range_hull(block: &FieldBlock) -> RangeHull {
    let bx = block.rho.valid.intersect(&block.u.valid);
    let mut h = RangeHull { u_min: f64::INFINITY, u_max: f64::NEG_INFINITY, rho_min: f64::INFINITY, rho_max: f64::NEG_INFINITY };
    for p in bx.iter() {
        let u = block.u.at(p);
        let r = block.rho.at(p);
        h.u_min = h.u_min.min(u);
        h.u_max = h.u_max.max(u);
        h.rho_min = h.rho_min.min(r);
        h.rho_max = h.rho_max.max(r);
    }
    h
}
