//! Equations of state, pointwise thermodynamics and transport coefficients.
//!
//! Entropy density `s(u, ϱ)` is the fundamental relation; temperature,
//! chemical potential and pressure follow from its derivatives and the
//! homogeneous Gibbs relation `T s = u + p - μ ϱ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RHO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EosKind {
    IdealGas,
    VanDerWaals,
}

fn one() -> f64 {
    1.0
}
fn zero() -> f64 {
    0.0
}
fn default_floor() -> f64 {
    DEFAULT_RHO_FLOOR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EosSpec {
    pub kind: EosKind,
    pub alpha: f64,
    #[serde(default = "one")]
    pub k_b: f64,
    #[serde(default = "zero")]
    pub s0: f64,
    #[serde(default = "zero")]
    pub a: f64,
    #[serde(default = "zero")]
    pub b: f64,
    #[serde(default = "default_floor")]
    pub rho_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoState {
    pub u: f64,
    pub rho: f64,
}

impl ThermoState {
    pub fn new(u: f64, rho: f64) -> Self {
        ThermoState { u, rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoEval {
    pub p: f64,
    pub t: f64,
    pub mu: f64,
    pub s: f64,
    pub s_m: f64,
    pub beta: f64,
    pub lambda: f64,
    pub h: f64,
    pub sound_speed: f64,
}

impl ThermoEval {
    /// `|T s - (u + p - μ ϱ)|` relative to the largest participating magnitude.
    pub fn gibbs_residual(&self, state: ThermoState) -> f64 {
        let lhs = self.t * self.s;
        let rhs = state.u + self.p - self.mu * state.rho;
        let scale = state.u.abs().max(self.p.abs()).max(lhs.abs()).max(f64::MIN_POSITIVE);
        (lhs - rhs).abs() / scale
    }
}

/// Second derivatives of `s` in `(u, ϱ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyHessian {
    pub s_uu: f64,
    pub s_ur: f64,
    pub s_rr: f64,
}

impl EntropyHessian {
    pub fn eigenvalues(&self) -> (f64, f64) {
        let tr = self.s_uu + self.s_rr;
        let det = self.s_uu * self.s_rr - self.s_ur * self.s_ur;
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        (0.5 * tr - disc, 0.5 * tr + disc)
    }
}

impl EosSpec {
    pub fn ideal_gas(alpha: f64) -> Self {
        EosSpec { kind: EosKind::IdealGas, alpha, k_b: 1.0, s0: 0.0, a: 0.0, b: 0.0, rho_floor: DEFAULT_RHO_FLOOR }
    }

    pub fn van_der_waals(alpha: f64, a: f64, b: f64) -> Self {
        EosSpec { kind: EosKind::VanDerWaals, alpha, k_b: 1.0, s0: 0.0, a, b, rho_floor: DEFAULT_RHO_FLOOR }
    }

    /// Ratio of specific heats `1 + 1/α` (ideal gas).
    pub fn gamma(&self) -> f64 {
        1.0 + 1.0 / self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.k_b, self.s0, self.a, self.b, self.rho_floor].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::config("eos", "non-finite parameter"));
        }
        if self.alpha <= 0.0 {
            return Err(Error::config("eos.alpha", "must be > 0"));
        }
        if self.k_b <= 0.0 {
            return Err(Error::config("eos.k_b", "must be > 0"));
        }
        if self.rho_floor <= 0.0 {
            return Err(Error::config("eos.rho_floor", "must be > 0"));
        }
        if self.kind == EosKind::VanDerWaals {
            if self.a <= 0.0 {
                return Err(Error::config("eos.a", "must be > 0 for van der Waals"));
            }
            if self.b <= 0.0 {
                return Err(Error::config("eos.b", "must be > 0 for van der Waals"));
            }
        }
        Ok(())
    }

    /// Specific internal energy at temperature `t` and density `rho`.
    pub fn internal_energy(&self, t: f64, rho: f64) -> f64 {
        match self.kind {
            EosKind::IdealGas => self.alpha * self.k_b * rho * t,
            EosKind::VanDerWaals => rho * (self.alpha * self.k_b * t - self.a * rho),
        }
    }

    /// Internal energy density giving pressure `p` at density `rho`.
    pub fn internal_energy_from_pressure(&self, p: f64, rho: f64) -> f64 {
        match self.kind {
            EosKind::IdealGas => self.alpha * p,
            EosKind::VanDerWaals => {
                let a = self.a;
                self.alpha * (1.0 - self.b * rho) * (p + a * rho * rho) - a * rho * rho
            }
        }
    }

    fn check_basic(&self, st: ThermoState) -> Result<()> {
        if !(st.u.is_finite() && st.rho.is_finite()) {
            return Err(Error::StateOutsideValidity(format!("non-finite state u={} rho={}", st.u, st.rho)));
        }
        if st.rho < self.rho_floor {
            return Err(Error::StateOutsideValidity(format!("rho={} below floor {}", st.rho, self.rho_floor)));
        }
        match self.kind {
            EosKind::IdealGas => {
                if st.u <= 0.0 {
                    return Err(Error::StateOutsideValidity(format!("T <= 0 (u={})", st.u)));
                }
            }
            EosKind::VanDerWaals => {
                if self.b * st.rho >= 1.0 {
                    return Err(Error::StateOutsideValidity(format!("b*rho={} >= 1", self.b * st.rho)));
                }
                let w = st.u / st.rho + self.a * st.rho;
                if w <= 0.0 {
                    return Err(Error::StateOutsideValidity(format!("T <= 0 (u={}, rho={})", st.u, st.rho)));
                }
                let h = self.hessian_unchecked(st);
                let (_, lmax) = h.eigenvalues();
                let scale = h.s_uu.abs().max(h.s_rr.abs()).max(h.s_ur.abs());
                if lmax > 1e-12 * scale {
                    return Err(Error::StateOutsideValidity(format!("entropy not concave at u={}, rho={}", st.u, st.rho)));
                }
            }
        }
        Ok(())
    }

    fn entropy_unchecked(&self, st: ThermoState) -> f64 {
        let k = self.k_b;
        let al = self.alpha;
        match self.kind {
            EosKind::IdealGas => al * k * st.rho * ((st.u).ln() - self.gamma() * st.rho.ln() + self.s0),
            EosKind::VanDerWaals => {
                let w = st.u / st.rho + self.a * st.rho;
                k * st.rho * (1.0 / st.rho - self.b).ln() + al * k * st.rho * (w.ln() + self.s0)
            }
        }
    }

    /// First derivatives `(∂s/∂u, ∂s/∂ϱ)`.
    fn gradient_unchecked(&self, st: ThermoState) -> (f64, f64) {
        let k = self.k_b;
        let al = self.alpha;
        match self.kind {
            EosKind::IdealGas => {
                let s = self.entropy_unchecked(st);
                (al * k * st.rho / st.u, s / st.rho - k * (al + 1.0))
            }
            EosKind::VanDerWaals => {
                let r = st.rho;
                let w = st.u / r + self.a * r;
                let g = (1.0 / r - self.b).ln();
                let gp = -1.0 / (r - self.b * r * r);
                let f_r = (self.a - st.u / (r * r)) / w;
                let s_u = al * k / w;
                let s_r = k * g + k * r * gp + al * k * (w.ln() + self.s0) + al * k * r * f_r;
                (s_u, s_r)
            }
        }
    }

    fn hessian_unchecked(&self, st: ThermoState) -> EntropyHessian {
        let k = self.k_b;
        let al = self.alpha;
        match self.kind {
            EosKind::IdealGas => EntropyHessian { s_uu: -al * k * st.rho / (st.u * st.u), s_ur: al * k / st.u, s_rr: -k * (al + 1.0) / st.rho },
            EosKind::VanDerWaals => {
                let r = st.rho;
                let u = st.u;
                let w = u / r + self.a * r;
                let w_r = self.a - u / (r * r);
                let q = r - self.b * r * r;
                let gp = -1.0 / q;
                let gpp = (1.0 - 2.0 * self.b * r) / (q * q);
                let f_r = w_r / w;
                let f_rr = (2.0 * u / (r * r * r)) / w - f_r * f_r;
                EntropyHessian {
                    s_uu: -al * k / (w * w * r),
                    s_ur: -al * k * w_r / (w * w),
                    s_rr: 2.0 * k * gp + k * r * gpp + 2.0 * al * k * f_r + al * k * r * f_rr,
                }
            }
        }
    }

    /// Pressure and its partial derivatives `(p, ∂p/∂u, ∂p/∂ϱ)`.
    fn pressure_unchecked(&self, st: ThermoState) -> (f64, f64, f64) {
        match self.kind {
            EosKind::IdealGas => (st.u / self.alpha, 1.0 / self.alpha, 0.0),
            EosKind::VanDerWaals => {
                let (r, u, a, b, al) = (st.rho, st.u, self.a, self.b, self.alpha);
                let one_m = 1.0 - b * r;
                let num = u + a * r * r;
                let p = num / (al * one_m) - a * r * r;
                let p_u = 1.0 / (al * one_m);
                let p_r = 2.0 * a * r / (al * one_m) + b * num / (al * one_m * one_m) - 2.0 * a * r;
                (p, p_u, p_r)
            }
        }
    }

    pub fn entropy(&self, st: ThermoState) -> Result<f64> {
        self.check_basic(st)?;
        Ok(self.entropy_unchecked(st))
    }

    pub fn hessian(&self, st: ThermoState) -> Result<EntropyHessian> {
        self.check_basic(st)?;
        Ok(self.hessian_unchecked(st))
    }

    /// Pressure derivatives `(∂p/∂u, ∂p/∂ϱ)`.
    pub fn pressure_derivatives(&self, st: ThermoState) -> Result<(f64, f64)> {
        self.check_basic(st)?;
        let (_, pu, pr) = self.pressure_unchecked(st);
        Ok((pu, pr))
    }

    pub fn pressure(&self, st: ThermoState) -> Result<f64> {
        self.check_basic(st)?;
        Ok(self.pressure_unchecked(st).0)
    }

    /// `(p, T, c)` without the entropy evaluation.
    pub fn mechanical(&self, st: ThermoState) -> Result<(f64, f64, f64)> {
        if !(st.rho >= self.rho_floor && st.u.is_finite()) {
            return Err(Error::StateOutsideValidity(format!("rho={} u={}", st.rho, st.u)));
        }
        let t = match self.kind {
            EosKind::IdealGas => st.u / (self.alpha * self.k_b * st.rho),
            EosKind::VanDerWaals => {
                if self.b * st.rho >= 1.0 {
                    return Err(Error::StateOutsideValidity(format!("b*rho={} >= 1", self.b * st.rho)));
                }
                (st.u / st.rho + self.a * st.rho) / (self.alpha * self.k_b)
            }
        };
        if !(t > 0.0) {
            return Err(Error::StateOutsideValidity(format!("T <= 0 (u={}, rho={})", st.u, st.rho)));
        }
        let (p, p_u, p_r) = self.pressure_unchecked(st);
        let c2 = p_r + p_u * (st.u + p) / st.rho;
        if !(c2 > 0.0) {
            return Err(Error::StateOutsideValidity(format!("imaginary sound speed at u={} rho={}", st.u, st.rho)));
        }
        Ok((p, t, c2.sqrt()))
    }

    pub fn eval(&self, st: ThermoState) -> Result<ThermoEval> {
        self.check_basic(st)?;
        let s = self.entropy_unchecked(st);
        let (s_u, s_r) = self.gradient_unchecked(st);
        let t = 1.0 / s_u;
        let mu = -t * s_r;
        let (p, p_u, p_r) = self.pressure_unchecked(st);
        let h = st.u + p;
        let c2 = p_r + p_u * h / st.rho;
        if c2 <= 0.0 {
            return Err(Error::StateOutsideValidity(format!("imaginary sound speed at u={} rho={}", st.u, st.rho)));
        }
        Ok(ThermoEval { p, t, mu, s, s_m: s / st.rho, beta: s_u, lambda: mu / t, h, sound_speed: c2.sqrt() })
    }
}

pub fn entropy(eos: &EosSpec, state: ThermoState) -> Result<f64> {
    eos.entropy(state)
}

pub fn eval_thermo(eos: &EosSpec, state: ThermoState) -> Result<ThermoEval> {
    eos.eval(state)
}

/// A transport coefficient as a function of temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", deny_unknown_fields)]
pub enum Coefficient {
    Constant { value: f64 },
    PowerLaw { reference: f64, t_ref: f64, exponent: f64 },
}

impl Coefficient {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Coefficient::Constant { value } => value,
            Coefficient::PowerLaw { reference, t_ref, exponent } => reference * (t / t_ref).powf(exponent),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            Coefficient::Constant { value } if value < 0.0 || !value.is_finite() => Err(Error::config(name, "coefficient must be finite and >= 0")),
            Coefficient::PowerLaw { reference, t_ref, exponent } if reference < 0.0 || t_ref <= 0.0 || !exponent.is_finite() => {
                Err(Error::config(name, "power law needs reference >= 0, t_ref > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// How the 1-D longitudinal viscosity is assembled from shear and bulk parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum ViscosityMode {
    /// Longitudinal coefficient `2η(1 - 1/d_phys) + ζ` for planar flow embedded in `d_phys` dimensions.
    Effective { d_phys: u32 },
    /// Deviatoric stress in the grid dimension itself; in 1-D the shear part vanishes.
    Deviatoric,
}

impl Default for ViscosityMode {
    fn default() -> Self {
        ViscosityMode::Effective { d_phys: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportModel {
    pub eta: Coefficient,
    pub zeta: Coefficient,
    pub kappa: Coefficient,
    pub eps: f64,
    #[serde(default)]
    pub viscosity_mode: ViscosityMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transport {
    pub eta: f64,
    pub zeta: f64,
    pub kappa: f64,
}

impl TransportModel {
    pub fn constant(eta: f64, zeta: f64, kappa: f64, eps: f64) -> Self {
        TransportModel {
            eta: Coefficient::Constant { value: eta },
            zeta: Coefficient::Constant { value: zeta },
            kappa: Coefficient::Constant { value: kappa },
            eps,
            viscosity_mode: ViscosityMode::default(),
        }
    }

    pub fn inviscid() -> Self {
        Self::constant(0.0, 0.0, 0.0, 0.0)
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::config("transport.eps", "must be finite and >= 0"));
        }
        self.eta.validate("transport.eta")?;
        self.zeta.validate("transport.zeta")?;
        self.kappa.validate("transport.kappa")?;
        if let ViscosityMode::Effective { d_phys } = self.viscosity_mode {
            if d_phys == 0 {
                return Err(Error::config("transport.viscosity_mode.d_phys", "must be >= 1"));
            }
        }
        Ok(())
    }

    /// ε-scaled coefficients at temperature `t`.
    pub fn at_temperature(&self, t: f64) -> Transport {
        if self.eps == 0.0 {
            return Transport { eta: 0.0, zeta: 0.0, kappa: 0.0 };
        }
        Transport { eta: self.eps * self.eta.at(t), zeta: self.eps * self.zeta.at(t), kappa: self.eps * self.kappa.at(t) }
    }

    /// Shear and bulk contributions `(a_eta, a_zeta)` to the coefficient of `(∂_x v)²` in 1-D.
    pub fn longitudinal_parts(&self, tr: Transport) -> (f64, f64) {
        match self.viscosity_mode {
            ViscosityMode::Effective { d_phys } => (2.0 * tr.eta * (1.0 - 1.0 / d_phys as f64), tr.zeta),
            ViscosityMode::Deviatoric => (0.0, tr.zeta),
        }
    }

    /// Longitudinal 1-D viscosity at temperature `t`.
    pub fn longitudinal(&self, t: f64) -> f64 {
        let (a, b) = self.longitudinal_parts(self.at_temperature(t));
        a + b
    }
}

/// ε-scaled `(η, ζ, κ)` at the given state.
pub fn transport(model: &TransportModel, eos: &EosSpec, state: ThermoState) -> Result<Transport> {
    let ev = eos.eval(state)?;
    Ok(model.at_temperature(ev.t))
}
