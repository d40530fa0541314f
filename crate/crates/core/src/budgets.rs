//! Coarse-grained balance equations: every flux, source and residual of the
//! filtered mass, momentum, energy and entropy budgets, the pointwise
//! viscous dissipation fields, and smearing against test functions.
//!
//! All filtered quantities are built from a fixed list of filtered "basic"
//! products (ϱ, j, v, u, p, E, ϱvv, ϱ|v|²v, uv, pv and, for viscous data,
//! the stress, its work and the heat flux). Their kernel-derivative
//! gradients make each one a [`Jet`]; all other terms follow by the chain
//! rule, so time derivatives and divergences are exact for the filtered
//! fields.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field, FieldBlock, Grid, IBox, AXIS_T, AXIS_X, AXIS_Y};
use crate::filter::{Engine, FilterKernel, Stencil};
use crate::jet::Jet;
use crate::thermo::{EosSpec, ThermoState, TransportModel};

/// Smooth tensor-product bump supported on a space-time box.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub name: String,
    pub center: [f64; 3],
    pub half_width: [f64; 3],
    pub amplitude: f64,
    pub support: IBox,
    pub values: Field,
    /// `Σ φ · cell measure`.
    pub quadrature_weight: f64,
}

/// `exp(1 - 1/(1 - z²))` on `|z| < 1`, normalized to 1 at the center.
pub fn bump1(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - z * z)).exp()
    }
}

impl TestFunction {
    pub fn bump(name: &str, grid: &Grid, center: [f64; 3], half_width: [f64; 3]) -> Result<Self> {
        let axes = grid.active_axes();
        for &a in &axes {
            if !(half_width[a] > 0.0) {
                return Err(Error::InvalidInput(format!("test function half width on axis {a} must be > 0")));
            }
        }
        let mut tf = TestFunction {
            name: name.to_string(),
            center,
            half_width,
            amplitude: 1.0,
            support: grid.full_box(),
            values: Field::zeros(*grid),
            quadrature_weight: 0.0,
        };
        let s = grid.shape();
        let mut lo = [0usize; 3];
        let mut hi = [1usize; 3];
        for &a in &axes {
            let idx: Vec<usize> = (0..s[a]).filter(|&i| ((grid.coord(a, i) - center[a]) / half_width[a]).abs() < 1.0).collect();
            if idx.is_empty() {
                return Err(Error::InvalidInput(format!("test function support misses the lattice on axis {a}")));
            }
            lo[a] = idx[0];
            hi[a] = idx[idx.len() - 1] + 1;
        }
        tf.support = IBox::new(lo, hi);
        let mut sum = 0.0;
        for p in tf.support.iter() {
            let x = grid.coord(AXIS_X, p[0]);
            let y = if grid.d == 2 { grid.coord(AXIS_Y, p[1]) } else { 0.0 };
            let t = grid.coord(AXIS_T, p[2]);
            let v = tf.eval(x, y, t);
            tf.values.set(p, v);
            sum += v;
        }
        tf.values.valid = tf.support;
        tf.quadrature_weight = sum * grid.cell_measure();
        Ok(tf)
    }

    /// Rescales so that the discrete integral is one.
    pub fn normalized(mut self) -> Self {
        let w = self.quadrature_weight;
        self.amplitude /= w;
        for x in self.values.data.iter_mut() {
            *x /= w;
        }
        self.quadrature_weight = 1.0;
        self
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        let g = &self.values.grid;
        let mut v = self.amplitude * bump1((x - self.center[0]) / self.half_width[0]) * bump1((t - self.center[2]) / self.half_width[2]);
        if g.d == 2 {
            v *= bump1((y - self.center[1]) / self.half_width[1]);
        }
        v
    }

    /// `∫ φ(x, y, t) dt` at a fixed spatial point (trapezoid rule on a fine
    /// grid, spectrally accurate for this flat-ended integrand).
    pub fn time_integral_at(&self, x: f64, y: f64) -> f64 {
        let n = 4000;
        let t0 = self.center[2] - self.half_width[2];
        let h = 2.0 * self.half_width[2] / n as f64;
        (1..n).map(|i| self.eval(x, y, t0 + i as f64 * h)).sum::<f64>() * h
    }
}

/// `Σ φ f · cell measure` over the support of `φ`.
pub fn smear(f: &Field, phi: &TestFunction) -> Result<f64> {
    if !f.valid.contains_box(&phi.support) {
        return Err(Error::SupportExceedsValidRegion);
    }
    let mut acc = 0.0;
    for p in phi.support.iter() {
        acc += phi.values.at(p) * f.at(p);
    }
    Ok(acc * f.grid.cell_measure())
}

/// Pointwise viscous dissipation and entropy production.
#[derive(Debug, Clone)]
pub struct DissipationFields {
    pub q_eta: Field,
    pub q_zeta: Field,
    pub q: Field,
    pub sigma_eta: Field,
    pub sigma_zeta: Field,
    pub sigma_kappa: Field,
    pub sigma: Field,
}

/// Pointwise NS quantities needed by the filtered budgets.
#[derive(Debug, Clone)]
pub struct ViscousPointwise {
    pub temperature: Field,
    pub pressure: Field,
    /// Symmetric stress components in `(0,0), (0,1), (1,1)` order.
    pub stress: Vec<Field>,
    pub heat_flux: Vec<Field>,
    pub theta: Field,
    pub dissipation: DissipationFields,
}

fn sym_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..d {
        for k in i..d {
            v.push((i, k));
        }
    }
    v
}

fn sym_index(d: usize, i: usize, k: usize) -> usize {
    let (a, b) = if i <= k { (i, k) } else { (k, i) };
    sym_pairs(d).iter().position(|&(x, y)| x == a && y == b).unwrap()
}

/// Pressure and temperature at every valid lattice point.
pub fn pointwise_thermo(block: &FieldBlock, eos: &EosSpec) -> Result<(Field, Field)> {
    let valid = block.valid();
    let mut p = Field::zeros(block.grid).with_valid(valid);
    let mut t = Field::zeros(block.grid).with_valid(valid);
    for x in valid.iter() {
        let ev = eos.eval(ThermoState::new(block.u.at(x), block.rho.at(x)))?;
        p.set(x, ev.p);
        t.set(x, ev.t);
    }
    Ok((p, t))
}

pub fn viscous_pointwise(block: &FieldBlock, eos: &EosSpec, transport: &TransportModel) -> Result<ViscousPointwise> {
    if block.eps <= 0.0 || transport.eps <= 0.0 {
        return Err(Error::RequiresViscousData);
    }
    let g = block.grid;
    let d = g.d;
    let (pressure, temperature) = pointwise_thermo(block, eos)?;
    // grad[k][i] = ∂_k v_i
    let grad: Vec<Vec<Field>> = (0..d).map(|k| (0..d).map(|i| block.v[i].diff4(k)).collect()).collect();
    let grad_t: Vec<Field> = (0..d).map(|k| temperature.diff4(k)).collect();
    let mut valid = grad_t.iter().fold(temperature.valid, |b, f| b.intersect(&f.valid));
    for row in &grad {
        for f in row {
            valid = valid.intersect(&f.valid);
        }
    }
    let z = || Field::zeros(g).with_valid(valid);
    let pairs = sym_pairs(d);
    let mut stress: Vec<Field> = pairs.iter().map(|_| z()).collect();
    let mut heat_flux: Vec<Field> = (0..d).map(|_| z()).collect();
    let mut theta = z();
    let (mut q_eta, mut q_zeta, mut sig_k) = (z(), z(), z());
    for x in valid.iter() {
        let tt = temperature.at(x);
        let tr = transport.at_temperature(tt);
        let th: f64 = (0..d).map(|k| grad[k][k].at(x)).sum();
        theta.set(x, th);
        if d == 1 {
            let (a_eta, a_zeta) = transport.longitudinal_parts(tr);
            let vx = grad[0][0].at(x);
            stress[0].set(x, -(a_eta + a_zeta) * vx);
            q_eta.set(x, a_eta * vx * vx);
            q_zeta.set(x, a_zeta * vx * vx);
        } else {
            let mut s2 = 0.0;
            for (m, &(i, k)) in pairs.iter().enumerate() {
                let mut s = 0.5 * (grad[k][i].at(x) + grad[i][k].at(x));
                if i == k {
                    s -= th / d as f64;
                }
                let w = if i == k { 1.0 } else { 2.0 };
                s2 += w * s * s;
                let iso = if i == k { tr.zeta * th } else { 0.0 };
                stress[m].set(x, -2.0 * tr.eta * s - iso);
            }
            q_eta.set(x, 2.0 * tr.eta * s2);
            q_zeta.set(x, tr.zeta * th * th);
        }
        let mut gt2 = 0.0;
        for k in 0..d {
            let gk = grad_t[k].at(x);
            heat_flux[k].set(x, -tr.kappa * gk);
            gt2 += gk * gk;
        }
        sig_k.set(x, tr.kappa * gt2 / (tt * tt));
    }
    let q = q_eta.add(&q_zeta);
    let sigma_eta = q_eta.zip(&temperature, |a, t| a / t).with_valid(valid);
    let sigma_zeta = q_zeta.zip(&temperature, |a, t| a / t).with_valid(valid);
    let sigma = sigma_eta.add(&sigma_zeta).add(&sig_k);
    Ok(ViscousPointwise {
        temperature,
        pressure,
        stress,
        heat_flux,
        theta,
        dissipation: DissipationFields { q_eta, q_zeta, q, sigma_eta, sigma_zeta, sigma_kappa: sig_k, sigma },
    })
}

pub fn dissipation_fields(block: &FieldBlock, eos: &EosSpec, transport: &TransportModel) -> Result<DissipationFields> {
    Ok(viscous_pointwise(block, eos, transport)?.dissipation)
}

/// Terms and residual of one balance equation at one scale.
#[derive(Debug, Clone)]
pub struct BudgetReport {
    pub equation: String,
    pub ell: f64,
    pub valid: IBox,
    pub terms: BTreeMap<String, Field>,
    pub residual: Option<Field>,
}

impl BudgetReport {
    pub fn term(&self, name: &str) -> Result<&Field> {
        self.terms.get(name).ok_or_else(|| Error::InvalidInput(format!("no term `{name}` in {} report", self.equation)))
    }

    /// Smeared value of every term (and the residual) against each test function.
    pub fn smeared(&self, phis: &[TestFunction]) -> Result<Vec<SmearedValue>> {
        let mut out = Vec::new();
        for phi in phis {
            for (name, f) in &self.terms {
                out.push(SmearedValue {
                    equation: self.equation.clone(),
                    term: name.clone(),
                    test_fn: phi.name.clone(),
                    ell: self.ell,
                    value: smear(f, phi)?,
                });
            }
            if let Some(r) = &self.residual {
                out.push(SmearedValue {
                    equation: self.equation.clone(),
                    term: "residual".into(),
                    test_fn: phi.name.clone(),
                    ell: self.ell,
                    value: smear(r, phi)?,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmearedValue {
    pub equation: String,
    pub term: String,
    pub test_fn: String,
    pub ell: f64,
    pub value: f64,
}

/// Options for [`compute_budgets`].
#[derive(Debug, Clone, Default)]
pub struct BudgetOptions {
    /// Restrict term evaluation to this box (intersected with the valid region).
    pub region: Option<IBox>,
    /// Demand the viscous-only balances; errors on inviscid data.
    pub require_viscous: bool,
    pub engine: Engine,
}

/// Every balance at one filter scale.
#[derive(Debug, Clone)]
pub struct BudgetSet {
    pub ell: f64,
    pub valid: IBox,
    pub viscous: bool,
    pub reports: Vec<BudgetReport>,
}

impl BudgetSet {
    pub fn report(&self, equation: &str) -> Result<&BudgetReport> {
        self.reports.iter().find(|r| r.equation == equation).ok_or_else(|| Error::InvalidInput(format!("no `{equation}` report")))
    }

    pub fn term(&self, equation: &str, name: &str) -> Result<&Field> {
        self.report(equation)?.term(name)
    }

    pub fn smeared(&self, phis: &[TestFunction]) -> Result<Vec<SmearedValue>> {
        let mut v = Vec::new();
        for r in &self.reports {
            v.extend(r.smeared(phis)?);
        }
        Ok(v)
    }
}

pub mod eq {
    pub const MASS: &str = "mass";
    pub const MOMENTUM: &str = "momentum";
    pub const TOTAL_ENERGY: &str = "total_energy";
    pub const RESOLVED_KE: &str = "resolved_ke";
    pub const SUBSCALE_KE: &str = "subscale_ke";
    pub const RESOLVED_IE: &str = "resolved_ie";
    pub const INTRINSIC_IE: &str = "intrinsic_ie";
    pub const RESOLVED_ENTROPY: &str = "resolved_entropy";
    pub const INTRINSIC_ENTROPY: &str = "intrinsic_entropy";
    pub const PRESSURE_DILATATION: &str = "pressure_dilatation";
    pub const IDENTITIES: &str = "identities";
}

struct Store {
    grid: Grid,
    valid: IBox,
    fields: BTreeMap<String, Field>,
}

impl Store {
    fn new(grid: Grid, valid: IBox) -> Self {
        Store { grid, valid, fields: BTreeMap::new() }
    }
    fn put(&mut self, name: &str, p: [usize; 3], v: f64) {
        let (g, valid) = (self.grid, self.valid);
        self.fields.entry(name.to_string()).or_insert_with(|| Field::zeros(g).with_valid(valid)).set(p, v);
    }
    fn take(&mut self, name: &str) -> Field {
        self.fields.remove(name).unwrap_or_else(|| Field::zeros(self.grid).with_valid(self.valid))
    }
}

const AX: [&str; 2] = ["x", "y"];

/// Computes every coarse-grained balance at the kernel's scale.
pub fn compute_budgets(block: &FieldBlock, k: &FilterKernel, eos: &EosSpec, transport: &TransportModel, opts: &BudgetOptions) -> Result<BudgetSet> {
    let g = block.grid;
    if g != k.grid {
        return Err(Error::InvalidInput("kernel built for a different grid".into()));
    }
    let d = g.d;
    let viscous = block.eps > 0.0 && transport.eps > 0.0;
    if opts.require_viscous && !viscous {
        return Err(Error::RequiresViscousData);
    }
    let (pressure, _) = pointwise_thermo(block, eos)?;
    let visc = if viscous { Some(viscous_pointwise(block, eos, transport)?) } else { None };
    let pairs = sym_pairs(d);

    // basic products
    let mut grads: Vec<(String, Field)> = Vec::new();
    let mut values: Vec<(String, Field)> = Vec::new();
    let v2 = block.v.iter().fold(Field::zeros(g).with_valid(block.valid()), |acc, vk| acc.add(&vk.mul(vk)));
    grads.push(("rho".into(), block.rho.clone()));
    grads.push(("u".into(), block.u.clone()));
    grads.push(("p".into(), pressure.clone()));
    grads.push(("E".into(), block.total_energy()));
    for a in 0..d {
        let j = block.momentum(a);
        grads.push((format!("rv2v_{}", AX[a]), j.mul(&v2)));
        grads.push((format!("j_{}", AX[a]), j));
        grads.push((format!("v_{}", AX[a]), block.v[a].clone()));
        grads.push((format!("uv_{}", AX[a]), block.u.mul(&block.v[a])));
        grads.push((format!("pv_{}", AX[a]), pressure.mul(&block.v[a])));
    }
    for &(i, kk) in &pairs {
        grads.push((format!("rvv_{}{}", AX[i], AX[kk]), block.rho.mul(&block.v[i]).mul(&block.v[kk])));
    }
    if let Some(vp) = &visc {
        for (m, &(i, kk)) in pairs.iter().enumerate() {
            grads.push((format!("T_{}{}", AX[i], AX[kk]), vp.stress[m].clone()));
        }
        for a in 0..d {
            // (T·v)_a = Σ_i T_ai v_i
            let mut tv = Field::zeros(g).with_valid(vp.theta.valid);
            for i in 0..d {
                tv = tv.add(&vp.stress[sym_index(d, a, i)].mul(&block.v[i]));
            }
            grads.push((format!("Tv_{}", AX[a]), tv));
            grads.push((format!("q_{}", AX[a]), vp.heat_flux[a].clone()));
        }
        values.push(("Q".into(), vp.dissipation.q.clone()));
        values.push(("ptheta".into(), pressure.mul(&vp.theta)));
    }
    let axes = g.active_axes();
    let mut stencils = vec![Stencil::Value];
    stencils.extend(axes.iter().map(|&a| Stencil::Deriv(a)));
    let grad_refs: Vec<&Field> = grads.iter().map(|(_, f)| f).collect();
    let gout = k.apply_many(&grad_refs, &stencils, opts.engine)?;
    let val_refs: Vec<&Field> = values.iter().map(|(_, f)| f).collect();
    let vout = k.apply_many(&val_refs, &[Stencil::Value], opts.engine)?;

    let mut valid = gout.iter().flatten().chain(vout.iter().flatten()).fold(g.full_box(), |b, f| b.intersect(&f.valid));
    if let Some(r) = opts.region {
        valid = valid.intersect(&r);
    }
    if valid.is_empty() {
        return Err(Error::ScaleExceedsMargin { ell: k.ell, margin: 0.0 });
    }
    let gidx: BTreeMap<&str, usize> = grads.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();
    let vidx: BTreeMap<&str, usize> = values.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();
    let jet = |name: &str, p: [usize; 3]| -> Jet {
        let o = &gout[gidx[name]];
        let mut j = Jet::constant(o[0].at(p));
        for (s, &a) in axes.iter().enumerate() {
            j.g[a] = o[s + 1].at(p);
        }
        j
    };
    let val = |name: &str, p: [usize; 3]| -> f64 { vout[vidx[name]][0].at(p) };
    let zero = Jet::ZERO;

    let mut st = Store::new(g, valid);
    for p in valid.iter() {
        let rho = jet("rho", p);
        let u = jet("u", p);
        let pb = jet("p", p);
        let e = jet("E", p);
        let j: Vec<Jet> = (0..d).map(|a| jet(&format!("j_{}", AX[a]), p)).collect();
        let vb: Vec<Jet> = (0..d).map(|a| jet(&format!("v_{}", AX[a]), p)).collect();
        let uv: Vec<Jet> = (0..d).map(|a| jet(&format!("uv_{}", AX[a]), p)).collect();
        let pv: Vec<Jet> = (0..d).map(|a| jet(&format!("pv_{}", AX[a]), p)).collect();
        let rv2v: Vec<Jet> = (0..d).map(|a| jet(&format!("rv2v_{}", AX[a]), p)).collect();
        let rvv = |i: usize, kk: usize| {
            let (a, b) = if i <= kk { (i, kk) } else { (kk, i) };
            jet(&format!("rvv_{}{}", AX[a], AX[b]), p)
        };
        let tt = |i: usize, kk: usize| {
            if !viscous {
                return zero;
            }
            let (a, b) = if i <= kk { (i, kk) } else { (kk, i) };
            jet(&format!("T_{}{}", AX[a], AX[b]), p)
        };
        let tv: Vec<Jet> = (0..d).map(|a| if viscous { jet(&format!("Tv_{}", AX[a]), p) } else { zero }).collect();
        let qf: Vec<Jet> = (0..d).map(|a| if viscous { jet(&format!("q_{}", AX[a]), p) } else { zero }).collect();

        // mass and momentum
        let mass_res = rho.dt() + (0..d).map(|a| j[a].g[a]).sum::<f64>();
        st.put("residual:mass", p, mass_res);
        for i in 0..d {
            let r = j[i].dt() + (0..d).map(|a| rvv(i, a).g[a] + tt(i, a).g[a]).sum::<f64>() + pb.g[i];
            st.put(&format!("residual:momentum_{}", AX[i]), p, r);
        }

        // resolved kinetic energy
        let vt: Vec<Jet> = j.iter().map(|&ja| ja / rho).collect();
        let ke = 0.5 * j.iter().map(|&ja| ja * ja).sum::<Jet>() / rho;
        let theta_bar: f64 = (0..d).map(|a| vb[a].g[a]).sum();
        let tau_rv: Vec<Jet> = (0..d).map(|a| j[a] - rho * vb[a]).collect();
        let rt = |i: usize, kk: usize| rvv(i, kk) - j[i] * j[kk] / rho;
        let mut jv = Vec::with_capacity(d);
        let mut jv_alt = Vec::with_capacity(d);
        for a in 0..d {
            let visc_term: Jet = (0..d).map(|i| vt[i] * tt(i, a)).sum();
            let conv: Jet = (0..d).map(|i| vt[i] * rt(i, a)).sum();
            jv.push((ke + pb) * vt[a] + conv - (pb / rho) * tau_rv[a] + visc_term);
            let conv2: Jet = (0..d).map(|i| vt[i] * rvv(i, a)).sum();
            jv_alt.push(pb * vb[a] + conv2 - ke * vt[a] + visc_term);
        }
        let mut q_flux = 0.0;
        let mut d_v = 0.0;
        for a in 0..d {
            q_flux += pb.g[a] / rho.v * tau_rv[a].v;
            for i in 0..d {
                q_flux -= vt[i].g[a] * rt(i, a).v;
                d_v -= vt[i].g[a] * tt(i, a).v;
            }
        }
        let div_jv: f64 = (0..d).map(|a| jv[a].g[a]).sum();
        let pbth = pb.v * theta_bar;
        let ke_res = ke.dt() + div_jv - pbth + q_flux + d_v;
        st.put("ke_resolved", p, ke.v);
        for a in 0..d {
            st.put(&format!("J_v_{}", AX[a]), p, jv[a].v);
        }
        st.put("Q_flux", p, q_flux);
        st.put("D_v", p, d_v);
        st.put("p_bar_theta_bar", p, pbth);
        st.put("theta_bar", p, theta_bar);
        st.put("residual:resolved_ke", p, ke_res);

        // subscale kinetic energy
        let kk_sub = 0.5 * (0..d).map(|i| rt(i, i)).sum::<Jet>();
        let mut jk = Vec::with_capacity(d);
        let mut jk_alt = Vec::with_capacity(d);
        for a in 0..d {
            let mut t3 = rv2v[a];
            for i in 0..d {
                t3 = t3 - 2.0 * vt[i] * rt(i, a) - vt[a] * rt(i, i) - rho * vt[i] * vt[i] * vt[a];
            }
            let tvt: Jet = (0..d).map(|i| tt(i, a) * vt[i]).sum();
            jk.push(kk_sub * vt[a] + (pv[a] - pb * vb[a]) + 0.5 * t3 + tv[a] - tvt);
            jk_alt.push(pv[a] + 0.5 * rv2v[a] + tv[a] - jv[a]);
        }
        let div_jk: f64 = (0..d).map(|a| jk[a].g[a]).sum();
        st.put("k", p, kk_sub.v);
        for a in 0..d {
            st.put(&format!("J_k_{}", AX[a]), p, jk[a].v);
        }
        st.put("D_k", p, d_v);
        let (qbar, tau_pth) = if viscous {
            let qb = val("Q", p);
            let tp = val("ptheta", p) - pbth;
            st.put("Q_bar", p, qb);
            st.put("p_theta_bar", p, val("ptheta", p));
            st.put("tau_p_theta", p, tp);
            st.put("Q_inert", p, q_flux + tp);
            st.put("residual:subscale_ke", p, kk_sub.dt() + div_jk - (tp - qb) - q_flux - d_v);
            (qb, tp)
        } else {
            (0.0, 0.0)
        };

        // internal energy
        let ustar = e - ke;
        let mut jus = Vec::with_capacity(d);
        let mut jus_alt = Vec::with_capacity(d);
        for a in 0..d {
            let mut t3 = rv2v[a];
            for i in 0..d {
                t3 = t3 - 2.0 * vt[i] * rt(i, a) - vt[a] * rt(i, i) - rho * vt[i] * vt[i] * vt[a];
            }
            let tvt: Jet = (0..d).map(|i| tt(i, a) * vt[i]).sum();
            let tau_hv = uv[a] + pv[a] - (u + pb) * vb[a];
            jus.push(u * vb[a] + tau_hv + kk_sub * vt[a] + 0.5 * t3 + qf[a] + tv[a] - tvt);
            jus_alt.push(uv[a] + qf[a] + jk[a]);
        }
        let div_jus: f64 = (0..d).map(|a| jus[a].g[a]).sum();
        let ie_star_res = ustar.dt() + div_jus - q_flux + pbth - d_v;
        st.put("u_star", p, ustar.v);
        for a in 0..d {
            st.put(&format!("J_ustar_{}", AX[a]), p, jus[a].v);
        }
        st.put("residual:intrinsic_ie", p, ie_star_res);
        if viscous {
            let div_ju: f64 = (0..d).map(|a| uv[a].g[a] + qf[a].g[a]).sum();
            st.put("u_bar", p, u.v);
            for a in 0..d {
                st.put(&format!("J_u_{}", AX[a]), p, uv[a].v + qf[a].v);
            }
            st.put("residual:resolved_ie", p, u.dt() + div_ju - qbar + val("ptheta", p));
        }
        let div_te: f64 = (0..d).map(|a| (uv[a] + pv[a] + 0.5 * rv2v[a] + tv[a] + qf[a]).g[a]).sum();
        let te_res = e.dt() + div_te;
        st.put("residual:total_energy", p, te_res);

        // entropy
        let state = ThermoState::new(u.v, rho.v);
        let ev = eos.eval(state)?;
        let hs = eos.hessian(state)?;
        let s_ = Jet::chain2(u, rho, ev.s, ev.beta, -ev.lambda);
        let beta_ = Jet::chain2(u, rho, ev.beta, hs.s_uu, hs.s_ur);
        let lam_ = Jet::chain2(u, rho, ev.lambda, -hs.s_ur, -hs.s_rr);
        let t_ = beta_.recip();
        let bp = Jet::new(
            ev.beta * ev.p,
            [-u.v * beta_.g[0] + rho.v * lam_.g[0], -u.v * beta_.g[1] + rho.v * lam_.g[1], -u.v * beta_.g[2] + rho.v * lam_.g[2]],
        );
        let p_ = bp / beta_;
        let mut js = Vec::with_capacity(d);
        for a in 0..d {
            let tau_uv = uv[a] - u * vb[a];
            js.push(s_ * vb[a] + beta_ * (tau_uv + qf[a]) - lam_ * tau_rv[a]);
        }
        let i_flux = ev.beta * (pb.v - p_.v) * theta_bar;
        let mut sig_flux = 0.0;
        let mut d_s = 0.0;
        for a in 0..d {
            let tau_uv = uv[a].v - u.v * vb[a].v;
            sig_flux += beta_.g[a] * tau_uv - lam_.g[a] * tau_rv[a].v;
            d_s -= qf[a].v * t_.g[a] / (t_.v * t_.v);
        }
        let div_js: f64 = (0..d).map(|a| js[a].g[a]).sum();
        st.put("s_resolved", p, s_.v);
        st.put("p_under", p, p_.v);
        st.put("beta_under", p, ev.beta);
        for a in 0..d {
            st.put(&format!("J_s_{}", AX[a]), p, js[a].v);
        }
        st.put("I_flux", p, i_flux);
        st.put("Sigma_flux", p, sig_flux);
        st.put("D_s", p, d_s);
        if viscous {
            let r = s_.dt() + div_js - (qbar - tau_pth) / t_.v + i_flux - sig_flux - d_s;
            st.put("residual:resolved_entropy", p, r);
        }
        let sstar = s_ + beta_ * kk_sub;
        let mut jss = Vec::with_capacity(d);
        for a in 0..d {
            jss.push(js[a] + beta_ * jk[a]);
        }
        let sig_flux_star = sig_flux + ev.beta * q_flux + beta_.dt() * kk_sub.v + (0..d).map(|a| beta_.g[a] * jk[a].v).sum::<f64>();
        let sig_inert = -i_flux + sig_flux_star;
        let div_jss: f64 = (0..d).map(|a| jss[a].g[a]).sum();
        st.put("s_star", p, sstar.v);
        for a in 0..d {
            st.put(&format!("J_sstar_{}", AX[a]), p, jss[a].v);
        }
        st.put("Sigma_flux_star", p, sig_flux_star);
        st.put("Sigma_inert_star", p, sig_inert);
        st.put("residual:intrinsic_entropy", p, sstar.dt() + div_jss + i_flux - sig_flux_star - d_s - ev.beta * d_v);

        // identities (relative to a local scale)
        let kin_scale = 0.5 * (0..d).map(|i| rvv(i, i).v.abs()).sum::<f64>();
        let id_ke = ke.v + kk_sub.v - 0.5 * (0..d).map(|i| rvv(i, i).v).sum::<f64>();
        st.put("identity:ke_split", p, id_ke / kin_scale.max(f64::MIN_POSITIVE));
        let e_scale = e.v.abs().max(u.v.abs());
        st.put("identity:energy_split", p, (e.v - ke.v - (u.v + kk_sub.v)) / e_scale);
        let dual = ev.beta * (ustar.v + p_.v) - ev.lambda * rho.v;
        let s_scale = sstar.v.abs().max(ev.beta * (ustar.v.abs() + p_.v.abs())).max(ev.lambda.abs() * rho.v);
        st.put("identity:s_star_dual", p, (dual - sstar.v) / s_scale);
        // inertial production recovered from the intrinsic balances themselves
        let sig_inert_b = sstar.dt() + div_jss - d_s - ev.beta * d_v - ev.beta * ie_star_res + ev.lambda * mass_res;
        let inert_scale = (sstar.dt().abs() + div_jss.abs() + ev.beta * (ie_star_res.abs() + d_v.abs()) + (ev.lambda * mass_res).abs() + d_s.abs())
            .max(f64::MIN_POSITIVE);
        st.put("identity:sigma_inert_split", p, (sig_inert - sig_inert_b) / inert_scale);
        let te_scale = (ke.dt().abs() + ustar.dt().abs() + div_jv.abs() + div_jus.abs()).max(f64::MIN_POSITIVE);
        st.put("identity:energy_consistency", p, (ke_res + ie_star_res - te_res) / te_scale);
        let mut flux_dev: f64 = 0.0;
        let mut flux_scale: f64 = f64::MIN_POSITIVE;
        for a in 0..d {
            for (x, y) in [(jv[a], jv_alt[a]), (jk[a], jk_alt[a]), (jus[a], jus_alt[a])] {
                flux_dev = flux_dev.max((x.v - y.v).abs());
                flux_scale = flux_scale.max(x.v.abs()).max(y.v.abs());
                for c in 0..3 {
                    flux_dev = flux_dev.max((x.g[c] - y.g[c]).abs() * k.ell);
                    flux_scale = flux_scale.max(x.g[c].abs() * k.ell);
                }
            }
        }
        st.put("identity:flux_forms", p, flux_dev / flux_scale);
    }

    let mut reports = Vec::new();
    let mut mk = |equation: &str, names: &[String], residual: Option<&str>, st: &mut Store| {
        let mut terms = BTreeMap::new();
        for n in names {
            if st.fields.contains_key(n) {
                terms.insert(n.clone(), st.take(n));
            }
        }
        let residual = residual.and_then(|r| if st.fields.contains_key(r) { Some(st.take(r)) } else { None });
        reports.push(BudgetReport { equation: equation.into(), ell: k.ell, valid, terms, residual });
    };
    let vec_names = |stem: &str| -> Vec<String> { (0..d).map(|a| format!("{stem}_{}", AX[a])).collect() };
    let names = |fixed: &[&str], vecs: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
        for s in vecs {
            v.extend(vec_names(s));
        }
        v
    };
    mk(eq::MASS, &[], Some("residual:mass"), &mut st);
    for a in 0..d {
        let r = format!("residual:momentum_{}", AX[a]);
        mk(&format!("{}_{}", eq::MOMENTUM, AX[a]), &[], Some(&r), &mut st);
    }
    mk(eq::TOTAL_ENERGY, &[], Some("residual:total_energy"), &mut st);
    mk(eq::RESOLVED_KE, &names(&["ke_resolved", "Q_flux", "D_v", "p_bar_theta_bar", "theta_bar"], &["J_v"]), Some("residual:resolved_ke"), &mut st);
    mk(eq::PRESSURE_DILATATION, &names(&["p_theta_bar", "tau_p_theta", "Q_inert", "Q_bar"], &[]), None, &mut st);
    mk(eq::SUBSCALE_KE, &names(&["k", "D_k"], &["J_k"]), Some("residual:subscale_ke"), &mut st);
    mk(eq::RESOLVED_IE, &names(&["u_bar"], &["J_u"]), Some("residual:resolved_ie"), &mut st);
    mk(eq::INTRINSIC_IE, &names(&["u_star"], &["J_ustar"]), Some("residual:intrinsic_ie"), &mut st);
    mk(
        eq::RESOLVED_ENTROPY,
        &names(&["s_resolved", "p_under", "beta_under", "I_flux", "Sigma_flux", "D_s"], &["J_s"]),
        Some("residual:resolved_entropy"),
        &mut st,
    );
    mk(eq::INTRINSIC_ENTROPY, &names(&["s_star", "Sigma_flux_star", "Sigma_inert_star"], &["J_sstar"]), Some("residual:intrinsic_entropy"), &mut st);
    let ids: Vec<String> = st.fields.keys().filter(|n| n.starts_with("identity:")).cloned().collect();
    mk(eq::IDENTITIES, &ids, None, &mut st);
    Ok(BudgetSet { ell: k.ell, valid, viscous, reports })
}

fn single(
    block: &FieldBlock,
    k: &FilterKernel,
    eos: &EosSpec,
    tr: &TransportModel,
    eqs: &[&str],
    require_viscous: bool,
) -> Result<Vec<BudgetReport>> {
    let set = compute_budgets(block, k, eos, tr, &BudgetOptions { require_viscous, ..Default::default() })?;
    eqs.iter().map(|e| set.report(e).cloned()).collect()
}

pub fn kinetic_budget(block: &FieldBlock, k: &FilterKernel, eos: &EosSpec, tr: &TransportModel) -> Result<BudgetReport> {
    Ok(single(block, k, eos, tr, &[eq::RESOLVED_KE], false)?.remove(0))
}

/// Subscale kinetic energy budget; `full` demands the viscous residual.
pub fn subscale_ke_budget(block: &FieldBlock, k: &FilterKernel, eos: &EosSpec, tr: &TransportModel, full: bool) -> Result<BudgetReport> {
    Ok(single(block, k, eos, tr, &[eq::SUBSCALE_KE], full)?.remove(0))
}

/// Resolved and intrinsic internal-energy budgets.
pub fn internal_budgets(block: &FieldBlock, k: &FilterKernel, eos: &EosSpec, tr: &TransportModel) -> Result<(BudgetReport, BudgetReport)> {
    let mut v = single(block, k, eos, tr, &[eq::RESOLVED_IE, eq::INTRINSIC_IE], false)?;
    let b = v.pop().unwrap();
    Ok((v.pop().unwrap(), b))
}

/// Resolved and intrinsic entropy budgets.
pub fn entropy_budgets(block: &FieldBlock, k: &FilterKernel, eos: &EosSpec, tr: &TransportModel) -> Result<(BudgetReport, BudgetReport)> {
    let mut v = single(block, k, eos, tr, &[eq::RESOLVED_ENTROPY, eq::INTRINSIC_ENTROPY], false)?;
    let b = v.pop().unwrap();
    Ok((v.pop().unwrap(), b))
}

/// `bar p bar Θ`, `bar(pΘ)` (viscous data only) and `τ̄(p, Θ)`.
pub fn pressure_dilatation(block: &FieldBlock, k: &FilterKernel, eos: &EosSpec, tr: &TransportModel) -> Result<BudgetReport> {
    let set = compute_budgets(block, k, eos, tr, &BudgetOptions::default())?;
    let mut r = set.report(eq::PRESSURE_DILATATION)?.clone();
    let ke = set.report(eq::RESOLVED_KE)?;
    r.terms.insert("p_bar_theta_bar".into(), ke.term("p_bar_theta_bar")?.clone());
    Ok(r)
}

/// Residuals of the filtered conservation laws (mass, momentum, total energy).
pub fn cg_solution_residuals(block: &FieldBlock, k: &FilterKernel, eos: &EosSpec, tr: &TransportModel) -> Result<Vec<BudgetReport>> {
    let set = compute_budgets(block, k, eos, tr, &BudgetOptions::default())?;
    Ok(set
        .reports
        .iter()
        .filter(|r| r.equation == eq::MASS || r.equation.starts_with(eq::MOMENTUM) || r.equation == eq::TOTAL_ENERGY)
        .cloned()
        .collect())
}
