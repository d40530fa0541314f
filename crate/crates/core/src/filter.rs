//! Space-time mollification on the lattice.
//!
//! The filtered field is the discrete correlation
//! `bar f(X) = Σ_R w(R) f(X + R)` over lattice offsets `R` in the metric
//! ball of radius `ℓ`. Derivatives of filtered fields are obtained by
//! correlating with the analytic kernel derivative, never by differencing
//! filtered data.

use std::collections::HashMap;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field, Grid, IBox, AXIS_T, AXIS_Y};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// `(1 - |z|²)^4`
    PolynomialBump,
    /// `exp(-1 / (1 - |z|²))`
    SmoothBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSpec {
    pub profile: Profile,
    #[serde(default)]
    pub causal_in_time: bool,
}

impl Default for MollifierSpec {
    fn default() -> Self {
        MollifierSpec { profile: Profile::SmoothBump, causal_in_time: false }
    }
}

impl MollifierSpec {
    pub fn new(profile: Profile) -> Self {
        MollifierSpec { profile, causal_in_time: false }
    }

    pub fn causal(profile: Profile) -> Self {
        MollifierSpec { profile, causal_in_time: true }
    }

    fn base(&self, r2: f64) -> (f64, f64) {
        // value and d/d(r²)
        if r2 >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - r2;
        match self.profile {
            Profile::PolynomialBump => (q.powi(4), -4.0 * q.powi(3)),
            Profile::SmoothBump => {
                let g = (-1.0 / q).exp();
                (g, -g / (q * q))
            }
        }
    }

    /// Profile value and gradient at `z` (metric coordinates in units of ℓ).
    pub fn eval(&self, z: [f64; 3]) -> (f64, [f64; 3]) {
        let (zz, scale) = if self.causal_in_time { ([2.0 * z[0], 2.0 * z[1], 2.0 * (z[2] - 0.5)], 2.0) } else { (z, 1.0) };
        let r2 = zz[0] * zz[0] + zz[1] * zz[1] + zz[2] * zz[2];
        let (g, dg) = self.base(r2);
        let grad = [scale * 2.0 * zz[0] * dg, scale * 2.0 * zz[1] * dg, scale * 2.0 * zz[2] * dg];
        (g, grad)
    }
}

/// Discrete kernel with value and derivative stencils.
#[derive(Debug, Clone)]
pub struct FilterKernel {
    pub spec: MollifierSpec,
    pub ell: f64,
    pub grid: Grid,
    pub radius: [usize; 3],
    pub offsets: Vec<[isize; 3]>,
    pub weights: Vec<f64>,
    /// Stencils for `∂_x`, `∂_y`, `∂_t` of the filtered field (physical units);
    /// empty for axes the grid does not carry.
    pub dweights: [Vec<f64>; 3],
    /// Rescaling applied to each derivative stencil to make it exact on linear data.
    pub moment_correction: [f64; 3],
}

/// Which stencil of a kernel to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stencil {
    Value,
    Deriv(usize),
}

pub fn build_kernel(spec: MollifierSpec, ell: f64, grid: &Grid) -> Result<FilterKernel> {
    grid.validate()?;
    let axes = grid.active_axes();
    let hmax = axes.iter().map(|&a| grid.metric_spacing(a)).fold(0.0, f64::max);
    if !(ell >= 2.0 * hmax) {
        return Err(Error::ScaleUnresolved { ell, min: 2.0 * hmax });
    }
    let mut radius = [0usize; 3];
    for &a in &axes {
        radius[a] = (ell / grid.metric_spacing(a)).floor() as usize;
    }
    let mut offsets = Vec::new();
    let mut raw = Vec::new();
    let mut graw: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let ri = |a: usize| radius[a] as isize;
    for k in -ri(2)..=ri(2) {
        for j in -ri(1)..=ri(1) {
            for i in -ri(0)..=ri(0) {
                let o = [i, j, k];
                let z = [i as f64 * grid.metric_spacing(0) / ell, j as f64 * grid.metric_spacing(1) / ell, k as f64 * grid.metric_spacing(2) / ell];
                let z = if grid.d == 1 { [z[0], 0.0, z[2]] } else { z };
                let (g, dg) = spec.eval(z);
                if g > 0.0 {
                    offsets.push(o);
                    raw.push(g);
                    for a in 0..3 {
                        // d/dR_a of G(R/ℓ), converted to a physical-time derivative on the t axis.
                        let metric = if a == AXIS_T { grid.c_ref } else { 1.0 };
                        graw[a].push(-dg[a] * metric / ell);
                    }
                }
            }
        }
    }
    let z: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|g| g / z).collect();
    let mut dweights: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut moment_correction = [1.0; 3];
    for &a in &axes {
        let mut dw: Vec<f64> = graw[a].iter().map(|g| g / z).collect();
        let mean = dw.iter().sum::<f64>() / dw.len() as f64;
        for x in dw.iter_mut() {
            *x -= mean;
        }
        let h = grid.spacing(a);
        let m1: f64 = dw.iter().zip(&offsets).map(|(w, o)| w * o[a] as f64 * h).sum();
        if m1.abs() < 1e-300 {
            return Err(Error::ScaleUnresolved { ell, min: 2.0 * hmax });
        }
        for x in dw.iter_mut() {
            *x /= m1;
        }
        moment_correction[a] = 1.0 / m1;
        dweights[a] = dw;
    }
    if grid.d == 1 {
        dweights[AXIS_Y].clear();
    }
    Ok(FilterKernel { spec, ell, grid: *grid, radius, offsets, weights, dweights, moment_correction })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Engine {
    Direct,
    Fft,
    #[default]
    Auto,
}

impl FilterKernel {
    pub fn stencil(&self, s: Stencil) -> &[f64] {
        match s {
            Stencil::Value => &self.weights,
            Stencil::Deriv(a) => &self.dweights[a],
        }
    }

    /// Derivative stencils available on this grid.
    pub fn derivative_axes(&self) -> Vec<usize> {
        self.grid.active_axes()
    }

    /// Output box of filtering a field valid on `input`.
    pub fn output_box(&self, input: &IBox) -> Result<IBox> {
        let g = &self.grid;
        let s = g.shape();
        let mut shrink = [false; 3];
        for a in 0..3 {
            if g.is_periodic(a) {
                if input.extent(a) != s[a] && self.radius[a] > 0 {
                    return Err(Error::ScaleExceedsMargin { ell: self.ell, margin: 0.0 });
                }
            } else {
                shrink[a] = true;
            }
        }
        let out = input.shrink(self.radius, shrink);
        if out.is_empty() {
            let margin =
                (0..3).filter(|&a| !g.is_periodic(a)).map(|a| input.extent(a) as f64 * g.metric_spacing(a) / 2.0).fold(f64::INFINITY, f64::min);
            return Err(Error::ScaleExceedsMargin { ell: self.ell, margin });
        }
        Ok(out)
    }

    /// Applies several stencils to several fields. `out[i][s]` is field `i`
    /// correlated with `stencils[s]`.
    pub fn apply_many(&self, fields: &[&Field], stencils: &[Stencil], engine: Engine) -> Result<Vec<Vec<Field>>> {
        if fields.is_empty() {
            return Ok(Vec::new());
        }
        for s in stencils {
            if let Stencil::Deriv(a) = s {
                if self.dweights[*a].is_empty() {
                    return Err(Error::InvalidInput(format!("no derivative stencil on axis {a}")));
                }
            }
        }
        let use_fft = match engine {
            Engine::Direct => false,
            Engine::Fft => true,
            Engine::Auto => self.offsets.len() > 48,
        };
        if !use_fft {
            return fields.iter().map(|f| stencils.iter().map(|&s| self.apply_direct(f, s)).collect::<Result<Vec<_>>>()).collect();
        }
        // group by valid box so each group shares one FFT layout
        let mut out: Vec<Option<Vec<Field>>> = vec![None; fields.len()];
        let mut groups: Vec<(IBox, Vec<usize>)> = Vec::new();
        for (i, f) in fields.iter().enumerate() {
            match groups.iter_mut().find(|(b, _)| *b == f.valid) {
                Some((_, v)) => v.push(i),
                None => groups.push((f.valid, vec![i])),
            }
        }
        for (bx, idx) in groups {
            let fs: Vec<&Field> = idx.iter().map(|&i| fields[i]).collect();
            let res = self.apply_fft(&fs, stencils, &bx)?;
            for (k, r) in idx.into_iter().zip(res) {
                out[k] = Some(r);
            }
        }
        Ok(out.into_iter().map(|o| o.unwrap()).collect())
    }

    pub fn apply(&self, f: &Field, s: Stencil, engine: Engine) -> Result<Field> {
        Ok(self.apply_many(&[f], &[s], engine)?.pop().unwrap().pop().unwrap())
    }

    /// Reference engine: explicit summation over the stencil.
    pub fn apply_direct(&self, f: &Field, s: Stencil) -> Result<Field> {
        let out_box = self.output_box(&f.valid)?;
        let g = &self.grid;
        let sh = g.shape();
        let w = self.stencil(s);
        let mut out = Field { grid: *g, valid: out_box, data: vec![0.0; g.len()] };
        let wrap = |x: usize, o: isize, n: usize, per: bool| -> usize {
            if per {
                (x as isize + o).rem_euclid(n as isize) as usize
            } else {
                (x as isize + o) as usize
            }
        };
        let per = [g.is_periodic(0), g.is_periodic(1), false];
        for (o, &wv) in self.offsets.iter().zip(w) {
            if wv == 0.0 {
                continue;
            }
            for k in out_box.lo[2]..out_box.hi[2] {
                let ks = wrap(k, o[2], sh[2], false);
                for j in out_box.lo[1]..out_box.hi[1] {
                    let js = wrap(j, o[1], sh[1], per[1]);
                    let dst = sh[0] * (j + sh[1] * k);
                    let src = sh[0] * (js + sh[1] * ks);
                    for i in out_box.lo[0]..out_box.hi[0] {
                        let is = wrap(i, o[0], sh[0], per[0]);
                        out.data[dst + i] += wv * f.data[src + is];
                    }
                }
            }
        }
        Ok(out)
    }

    fn apply_fft(&self, fields: &[&Field], stencils: &[Stencil], input: &IBox) -> Result<Vec<Vec<Field>>> {
        let g = &self.grid;
        let sh = g.shape();
        let out_box = self.output_box(input)?;
        let mut lo = [0usize; 3];
        let mut size = [1usize; 3];
        for a in 0..3 {
            if g.is_periodic(a) {
                lo[a] = 0;
                size[a] = sh[a];
            } else {
                lo[a] = input.lo[a];
                size[a] = if self.radius[a] == 0 { input.extent(a) } else { fast_size(input.extent(a)) };
            }
        }
        let n = size[0] * size[1] * size[2];
        let mut fft = Fft3::new(size);
        // kernel spectra, laid out so that the circular convolution is a correlation
        let spectra: Vec<Vec<Complex64>> = stencils
            .iter()
            .map(|&s| {
                let w = self.stencil(s);
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for (o, &wv) in self.offsets.iter().zip(w) {
                    let p: Vec<usize> = (0..3).map(|a| (-o[a]).rem_euclid(size[a] as isize) as usize).collect();
                    buf[p[0] + size[0] * (p[1] + size[1] * p[2])].re += wv;
                }
                fft.forward(&mut buf);
                buf
            })
            .collect();
        let inv_n = 1.0 / n as f64;
        let pairs: Vec<(usize, Option<usize>)> =
            (0..fields.len()).step_by(2).map(|i| (i, if i + 1 < fields.len() { Some(i + 1) } else { None })).collect();
        let results: Vec<Vec<(usize, Vec<Field>)>> = pairs
            .par_iter()
            .map(|&(i0, i1)| {
                let mut fft = Fft3::new(size);
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for k in 0..input.extent(2).min(size[2]) {
                    for j in 0..input.extent(1).min(size[1]) {
                        for i in 0..input.extent(0).min(size[0]) {
                            let src = g.index(lo[0] + i, lo[1] + j, lo[2] + k);
                            let re = fields[i0].data[src];
                            let im = i1.map_or(0.0, |q| fields[q].data[src]);
                            buf[i + size[0] * (j + size[1] * k)] = Complex64::new(re, im);
                        }
                    }
                }
                fft.forward(&mut buf);
                let mut outs0 = Vec::with_capacity(stencils.len());
                let mut outs1 = Vec::with_capacity(stencils.len());
                let mut work = vec![Complex64::new(0.0, 0.0); n];
                for spec in &spectra {
                    for ((w, b), s) in work.iter_mut().zip(&buf).zip(spec) {
                        *w = b * s;
                    }
                    fft.inverse(&mut work);
                    let mut f0 = Field { grid: *g, valid: out_box, data: vec![0.0; g.len()] };
                    let mut f1 = i1.map(|_| Field { grid: *g, valid: out_box, data: vec![0.0; g.len()] });
                    for p in out_box.iter() {
                        let q = [p[0] - lo[0], p[1] - lo[1], p[2] - lo[2]];
                        let z = work[q[0] + size[0] * (q[1] + size[1] * q[2])];
                        let dst = g.index(p[0], p[1], p[2]);
                        f0.data[dst] = z.re * inv_n;
                        if let Some(f1) = f1.as_mut() {
                            f1.data[dst] = z.im * inv_n;
                        }
                    }
                    outs0.push(f0);
                    if let Some(f1) = f1 {
                        outs1.push(f1);
                    }
                }
                let mut r = vec![(i0, outs0)];
                if let Some(q) = i1 {
                    r.push((q, outs1));
                }
                r
            })
            .collect();
        let mut out: Vec<Vec<Field>> = vec![Vec::new(); fields.len()];
        for (i, v) in results.into_iter().flatten() {
            out[i] = v;
        }
        Ok(out)
    }
}

/// Smallest `2^a 3^b 5^c 7^d >= n`.
fn fast_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut x = m;
        for p in [2, 3, 5, 7] {
            while x % p == 0 {
                x /= p;
            }
        }
        if x == 1 {
            return m;
        }
        m += 1;
    }
}

struct Fft3 {
    size: [usize; 3],
    fwd: Vec<std::sync::Arc<dyn rustfft::Fft<f64>>>,
    inv: Vec<std::sync::Arc<dyn rustfft::Fft<f64>>>,
    line: Vec<Complex64>,
}

impl Fft3 {
    fn new(size: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = size.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = size.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Fft3 { size, fwd, inv, line: Vec::new() }
    }

    fn forward(&mut self, buf: &mut [Complex64]) {
        self.run(buf, false)
    }

    fn inverse(&mut self, buf: &mut [Complex64]) {
        self.run(buf, true)
    }

    fn run(&mut self, buf: &mut [Complex64], inverse: bool) {
        let [n0, n1, n2] = self.size;
        let plans = if inverse { &self.inv } else { &self.fwd };
        if n0 > 1 {
            plans[0].process(buf);
        }
        for (axis, stride, n, count_outer, count_inner) in [(1usize, n0, n1, n2, n0), (2usize, n0 * n1, n2, 1, n0 * n1)] {
            if n <= 1 {
                continue;
            }
            // gather all lines along `axis` into one contiguous buffer
            let lines = count_outer * count_inner;
            self.line.resize(lines * n, Complex64::new(0.0, 0.0));
            let outer_stride = if axis == 1 { n0 * n1 } else { 0 };
            for o in 0..count_outer {
                for c in 0..count_inner {
                    let base = o * outer_stride + c;
                    let dst = (o * count_inner + c) * n;
                    for m in 0..n {
                        self.line[dst + m] = buf[base + m * stride];
                    }
                }
            }
            plans[axis].process(&mut self.line);
            for o in 0..count_outer {
                for c in 0..count_inner {
                    let base = o * outer_stride + c;
                    let src = (o * count_inner + c) * n;
                    for m in 0..n {
                        buf[base + m * stride] = self.line[src + m];
                    }
                }
            }
        }
    }
}

/// `bar f` at scale ℓ.
pub fn coarse_grain(f: &Field, k: &FilterKernel) -> Result<Field> {
    k.apply(f, Stencil::Value, Engine::Auto)
}

/// `∂_axis bar f` through the kernel-derivative stencil.
pub fn grad_filtered(f: &Field, k: &FilterKernel, axis: usize) -> Result<Field> {
    if axis > AXIS_T || k.dweights[axis].is_empty() {
        return Err(Error::InvalidInput(format!("axis {axis} not available")));
    }
    k.apply(f, Stencil::Deriv(axis), Engine::Auto)
}

/// Favre average `bar(ϱ f) / bar ϱ`.
pub fn favre(f: &Field, rho: &Field, k: &FilterKernel) -> Result<Field> {
    let rf = rho.mul(f);
    let out = k.apply_many(&[&rf, rho], &[Stencil::Value], Engine::Auto)?;
    Ok(out[0][0].zip(&out[1][0], |a, b| a / b))
}

/// `τ̄(f, g) = bar(fg) - bar f bar g`.
pub fn cumulant2(f: &Field, g: &Field, k: &FilterKernel) -> Result<Field> {
    let fg = f.mul(g);
    let o = k.apply_many(&[&fg, f, g], &[Stencil::Value], Engine::Auto)?;
    Ok(o[0][0].zip(&o[1][0].mul(&o[2][0]), |a, b| a - b))
}

/// Third cumulant in the iterated form
/// `bar(fgh) - bar f τ̄(g,h) - bar g τ̄(f,h) - bar h τ̄(f,g) - bar f bar g bar h`.
pub fn cumulant3(f: &Field, g: &Field, h: &Field, k: &FilterKernel) -> Result<Field> {
    let fg = f.mul(g);
    let fh = f.mul(h);
    let gh = g.mul(h);
    let fgh = fg.mul(h);
    let o = k.apply_many(&[&fgh, &fg, &fh, &gh, f, g, h], &[Stencil::Value], Engine::Auto)?;
    let v: Vec<&Field> = o.iter().map(|x| &x[0]).collect();
    let (bfgh, bfg, bfh, bgh, bf, bg, bh) = (v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
    let mut out = bfgh.clone();
    for p in out.valid.clone().iter() {
        let (a, b, c) = (bf.at(p), bg.at(p), bh.at(p));
        let t_gh = bgh.at(p) - b * c;
        let t_fh = bfh.at(p) - a * c;
        let t_fg = bfg.at(p) - a * b;
        out.set(p, bfgh.at(p) - a * t_gh - b * t_fh - c * t_fg - a * b * c);
    }
    Ok(out)
}

/// Set partitions of `{0..n}` as lists of bitmasks.
fn set_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b] |= 1 << i;
            rec(i + 1, n, cur, out);
            cur[b] &= !(1 << i);
        }
        cur.push(1 << i);
        rec(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Joint cumulant from the moment function `m(mask)` via the partition formula.
fn cumulant_from_moments(parts: &[Vec<u32>], m: impl Fn(u32) -> f64) -> f64 {
    let mut acc = 0.0;
    for part in parts {
        let b = part.len();
        let sign = if b % 2 == 1 { 1.0 } else { -1.0 };
        let prod: f64 = part.iter().map(|&mask| m(mask)).product();
        acc += sign * factorial(b - 1) * prod;
    }
    acc
}

/// Filtered moments of every sub-product of `fields`, optionally density
/// weighted (`bar(ϱ Π f)/bar ϱ`). Keys are bitmasks over `fields`.
fn filtered_moments(fields: &[&Field], weight: Option<&Field>, k: &FilterKernel) -> Result<HashMap<u32, Field>> {
    let n = fields.len();
    let mut prods: Vec<(u32, Field)> = Vec::new();
    for mask in 1u32..(1 << n) {
        let mut f: Option<Field> = weight.cloned();
        for (i, fi) in fields.iter().enumerate() {
            if mask & (1 << i) != 0 {
                f = Some(match f {
                    None => (*fi).clone(),
                    Some(x) => x.mul(fi),
                });
            }
        }
        prods.push((mask, f.unwrap()));
    }
    let mut refs: Vec<&Field> = prods.iter().map(|(_, f)| f).collect();
    if let Some(w) = weight {
        refs.push(w);
    }
    let out = k.apply_many(&refs, &[Stencil::Value], Engine::Auto)?;
    let mut map = HashMap::new();
    let wbar = weight.map(|_| out.last().unwrap()[0].clone());
    for ((mask, _), o) in prods.iter().zip(&out) {
        let f = match &wbar {
            Some(wb) => o[0].zip(wb, |a, b| a / b),
            None => o[0].clone(),
        };
        map.insert(*mask, f);
    }
    Ok(map)
}

fn cumulant_generic(fields: &[&Field], weight: Option<&Field>, k: &FilterKernel) -> Result<Field> {
    let n = fields.len();
    let moments = filtered_moments(fields, weight, k)?;
    let parts = set_partitions(n);
    let full = (1u32 << n) - 1;
    let mut out = moments[&full].clone();
    for p in out.valid.clone().iter() {
        let v = cumulant_from_moments(&parts, |mask| moments[&mask].at(p));
        out.set(p, v);
    }
    Ok(out)
}

/// Joint coarse-graining cumulant of any order (moment route).
pub fn cumulant_n(fields: &[&Field], k: &FilterKernel) -> Result<Field> {
    if fields.is_empty() || fields.len() > 6 {
        return Err(Error::InvalidInput("cumulant order must be 1..=6".into()));
    }
    cumulant_generic(fields, None, k)
}

/// Joint cumulant of the increments `δf(R; X)` under the kernel weights,
/// evaluated by brute force over the stencil at every output point.
pub fn cumulant_increment(fields: &[&Field], k: &FilterKernel) -> Result<Field> {
    let n = fields.len();
    if n == 0 || n > 6 {
        return Err(Error::InvalidInput("cumulant order must be 1..=6".into()));
    }
    let mut valid = fields[0].valid;
    for f in fields {
        valid = valid.intersect(&f.valid);
    }
    let out_box = k.output_box(&valid)?;
    let g = &k.grid;
    let sh = g.shape();
    let parts = set_partitions(n);
    let mut out = Field { grid: *g, valid: out_box, data: vec![0.0; g.len()] };
    let nm = 1usize << n;
    let mut mom = vec![0.0; nm];
    let mut inc = vec![0.0; n];
    for p in out_box.iter() {
        mom.iter_mut().for_each(|m| *m = 0.0);
        for (o, &w) in k.offsets.iter().zip(&k.weights) {
            let q = [
                if g.is_periodic(0) { (p[0] as isize + o[0]).rem_euclid(sh[0] as isize) as usize } else { (p[0] as isize + o[0]) as usize },
                if g.is_periodic(1) { (p[1] as isize + o[1]).rem_euclid(sh[1] as isize) as usize } else { (p[1] as isize + o[1]) as usize },
                (p[2] as isize + o[2]) as usize,
            ];
            for (i, f) in fields.iter().enumerate() {
                inc[i] = f.at(q) - f.at(p);
            }
            for (mask, m) in mom.iter_mut().enumerate().skip(1) {
                let mut prod = w;
                for (i, x) in inc.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        prod *= x;
                    }
                }
                *m += prod;
            }
        }
        let v = cumulant_from_moments(&parts, |mask| mom[mask as usize]);
        // a first-order cumulant is the mean, which is not shift invariant
        let v = if n == 1 { v + fields[0].at(p) } else { v };
        out.set(p, v);
    }
    Ok(out)
}

/// Favre cumulant `τ̃(f, g)` by density-weighted moments.
pub fn favre_cumulant2(f: &Field, g: &Field, rho: &Field, k: &FilterKernel) -> Result<Field> {
    cumulant_generic(&[f, g], Some(rho), k)
}

/// Favre cumulant `τ̃(f, g, h)` by density-weighted moments.
pub fn favre_cumulant3(f: &Field, g: &Field, h: &Field, rho: &Field, k: &FilterKernel) -> Result<Field> {
    cumulant_generic(&[f, g, h], Some(rho), k)
}

/// `τ̃(f, g)` rewritten through unweighted cumulants of `f`, `g` and `ϱ`.
pub fn favre_cumulant2_expanded(f: &Field, g: &Field, rho: &Field, k: &FilterKernel) -> Result<Field> {
    let t_fg = cumulant2(f, g, k)?;
    let t_rfg = cumulant3(rho, f, g, k)?;
    let t_rf = cumulant2(rho, f, k)?;
    let t_rg = cumulant2(rho, g, k)?;
    let rb = coarse_grain(rho, k)?;
    let mut out = t_fg.clone();
    for p in out.valid.clone().iter() {
        let r = rb.at(p);
        out.set(p, t_fg.at(p) + t_rfg.at(p) / r - t_rf.at(p) * t_rg.at(p) / (r * r));
    }
    Ok(out)
}

/// `τ̃(f, g, h)` rewritten through unweighted cumulants up to fourth order.
pub fn favre_cumulant3_expanded(f: &Field, g: &Field, h: &Field, rho: &Field, k: &FilterKernel) -> Result<Field> {
    let t_fgh = cumulant3(f, g, h, k)?;
    let t_rfgh = cumulant_n(&[rho, f, g, h], k)?;
    let t_rf = cumulant2(rho, f, k)?;
    let t_rg = cumulant2(rho, g, k)?;
    let t_rh = cumulant2(rho, h, k)?;
    let t_rgh = cumulant3(rho, g, h, k)?;
    let t_rfh = cumulant3(rho, f, h, k)?;
    let t_rfg = cumulant3(rho, f, g, k)?;
    let rb = coarse_grain(rho, k)?;
    let mut out = t_fgh.clone();
    for p in out.valid.clone().iter() {
        let r = rb.at(p);
        let cyc = t_rf.at(p) * t_rgh.at(p) + t_rg.at(p) * t_rfh.at(p) + t_rh.at(p) * t_rfg.at(p);
        let v = t_fgh.at(p) + t_rfgh.at(p) / r - cyc / (r * r) + 2.0 * t_rf.at(p) * t_rg.at(p) * t_rh.at(p) / (r * r * r);
        out.set(p, v);
    }
    Ok(out)
}

/// Fluctuation `f'_ℓ = f - bar f` on the filtered valid region.
pub fn fluctuation(f: &Field, k: &FilterKernel) -> Result<Field> {
    let fb = coarse_grain(f, k)?;
    Ok(f.zip(&fb, |a, b| a - b).with_valid(fb.valid))
}

/// `Δ_ℓ h = bar(h(f, g)) - h(bar f, bar g)`.
pub fn composite_defect(h: impl Fn(f64, f64) -> Result<f64>, f: &Field, g: &Field, k: &FilterKernel) -> Result<Field> {
    let valid = f.valid.intersect(&g.valid);
    let mut hf = Field { grid: f.grid, valid, data: vec![0.0; f.grid.len()] };
    for p in valid.iter() {
        hf.set(p, h(f.at(p), g.at(p))?);
    }
    let o = k.apply_many(&[&hf, f, g], &[Stencil::Value], Engine::Auto)?;
    let mut out = o[0][0].clone();
    for p in out.valid.clone().iter() {
        out.set(p, o[0][0].at(p) - h(o[1][0].at(p), o[2][0].at(p))?);
    }
    Ok(out)
}

/// Plain and Favre filtered fields of a block plus the second-order
/// cumulants that enter the budgets.
#[derive(Debug, Clone)]
pub struct FilteredSet {
    pub valid: IBox,
    pub bar: Vec<(String, Field)>,
    pub tilde: Vec<(String, Field)>,
    pub cumulants: Vec<(String, Field)>,
}

impl FilteredSet {
    pub fn get(&self, name: &str) -> Option<&Field> {
        self.bar.iter().chain(&self.tilde).chain(&self.cumulants).find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

pub fn filtered_set(block: &crate::fields::FieldBlock, k: &FilterKernel) -> Result<FilteredSet> {
    let d = block.grid.d;
    let mut bar = Vec::new();
    let mut tilde = Vec::new();
    let mut cum = Vec::new();
    bar.push(("rho".to_string(), coarse_grain(&block.rho, k)?));
    bar.push(("u".to_string(), coarse_grain(&block.u, k)?));
    let names = ["x", "y"];
    for a in 0..d {
        bar.push((format!("v_{}", names[a]), coarse_grain(&block.v[a], k)?));
        tilde.push((format!("v_{}", names[a]), favre(&block.v[a], &block.rho, k)?));
        cum.push((format!("tau(rho,v_{})", names[a]), cumulant2(&block.rho, &block.v[a], k)?));
        cum.push((format!("tau(u,v_{})", names[a]), cumulant2(&block.u, &block.v[a], k)?));
        for b in a..d {
            cum.push((format!("tau~(v_{},v_{})", names[a], names[b]), favre_cumulant2(&block.v[a], &block.v[b], &block.rho, k)?));
        }
    }
    tilde.push(("u_m".to_string(), favre(&block.u.zip(&block.rho, |u, r| u / r), &block.rho, k)?));
    let valid = bar[0].1.valid;
    Ok(FilteredSet { valid, bar, tilde, cumulants: cum })
}
