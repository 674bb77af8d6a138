//! Lindblad dynamics of the joint cavity ⊗ qubit density matrix.
//!
//! Time is measured in units of the QEC cycle duration τ throughout. The
//! generator is
//!
//! ```text
//! L ρ = κ D[a]ρ + γ_cd D[n]ρ + γ₁ D[σ₊]ρ + (2/T_φ) D[σz/2]ρ − i[H, ρ]
//! ```
//!
//! with κ = 1/T_s, γ_cd = 2/T_φc (white and lumped terms summed), γ₁ = 1/T₁ and
//! 1/T_φ = 1/T₂ − 1/(2T₁). Every term maps ρ_ij onto itself, onto
//! ρ_{i+2,j+2} (photon loss) or onto ρ_{i+1,j+1} (ancilla decay), so the
//! generator is block diagonal over the diagonals k = i − j of ρ. The
//! [`IdleChannel`] propagator exploits that structure.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    annihilation, c, kron, number_operator, pauli_z, sigma_plus, CMat, DensityMatrix, HilbertConfig, Operator,
    QUBIT_DIM,
};

/// Component lifetimes in units of τ. `f64::INFINITY` switches a channel off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub t_s: f64,
    pub t1: f64,
    pub t2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_phi_c_white: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_phi_c_lump: Option<f64>,
    #[serde(default = "default_tau_cycle_us")]
    pub tau_cycle_us: f64,
}

fn default_tau_cycle_us() -> f64 {
    NoiseModel::TAU_CYCLE_US
}

/// Named lifetime tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    Low,
    Medium,
    High,
    Noiseless,
}

impl NoisePreset {
    pub fn name(&self) -> &'static str {
        match self {
            NoisePreset::Low => "low",
            NoisePreset::Medium => "medium",
            NoisePreset::High => "high",
            NoisePreset::Noiseless => "noiseless",
        }
    }
}

impl fmt::Display for NoisePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoisePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(NoisePreset::Low),
            "medium" => Ok(NoisePreset::Medium),
            "high" => Ok(NoisePreset::High),
            "noiseless" | "none" => Ok(NoisePreset::Noiseless),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl NoiseModel {
    pub const TAU_CYCLE_US: f64 = 10.0;
    /// Residual cavity dephasing lumped into a single 24 ms term.
    pub const LUMPED_DEPHASING_US: f64 = 24_000.0;

    pub fn custom(t_s: f64, t1: f64, t2: f64) -> Result<Self> {
        let m = NoiseModel {
            t_s,
            t1,
            t2,
            t_phi_c_white: None,
            t_phi_c_lump: None,
            tau_cycle_us: Self::TAU_CYCLE_US,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_preset(p: NoisePreset) -> Self {
        let (t_s, t1, t2) = match p {
            NoisePreset::Low => (61.0, 28.0, 23.8),
            NoisePreset::Medium => (49.0, 10.0, 12.0),
            NoisePreset::High => (24.5, 5.0, 6.0),
            NoisePreset::Noiseless => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
        };
        NoiseModel {
            t_s,
            t1,
            t2,
            t_phi_c_white: None,
            t_phi_c_lump: None,
            tau_cycle_us: Self::TAU_CYCLE_US,
        }
    }

    /// Preset by name: "low", "medium", "high" or "noiseless".
    pub fn preset(name: &str) -> Result<Self> {
        Ok(Self::from_preset(name.parse()?))
    }

    pub fn low() -> Self {
        Self::from_preset(NoisePreset::Low)
    }

    pub fn medium() -> Self {
        Self::from_preset(NoisePreset::Medium)
    }

    pub fn high() -> Self {
        Self::from_preset(NoisePreset::High)
    }

    pub fn noiseless() -> Self {
        Self::from_preset(NoisePreset::Noiseless)
    }

    pub fn with_white_cavity_dephasing(mut self, t_phi_c: f64) -> Self {
        self.t_phi_c_white = Some(t_phi_c);
        self
    }

    /// Adds the 24 ms lumped cavity dephasing, converted to units of τ.
    pub fn with_lumped_cavity_dephasing(mut self) -> Self {
        self.t_phi_c_lump = Some(Self::LUMPED_DEPHASING_US / self.tau_cycle_us);
        self
    }

    /// Qubit pure-dephasing time T_φ = 1/(1/T₂ − 1/(2T₁)). Infinite when
    /// T₂ = 2T₁.
    pub fn t_phi(&self) -> Result<f64> {
        let rate = self.pure_dephasing_rate()?;
        Ok(if rate == 0.0 { f64::INFINITY } else { 1.0 / rate })
    }

    fn pure_dephasing_rate(&self) -> Result<f64> {
        let rate = 1.0 / self.t2 - 0.5 / self.t1;
        let scale = 1.0 / self.t2 + 0.5 / self.t1;
        if rate < -1e-12 * scale {
            return Err(Error::InvalidNoise(format!(
                "T2 = {} exceeds 2 T1 = {}; pure dephasing time would be negative",
                self.t2,
                2.0 * self.t1
            )));
        }
        Ok(rate.max(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::InvalidNoise(format!("{name} must be positive, got {v}")))
            }
        };
        positive("t_s", self.t_s)?;
        positive("t1", self.t1)?;
        positive("t2", self.t2)?;
        if let Some(t) = self.t_phi_c_white {
            positive("t_phi_c_white", t)?;
        }
        if let Some(t) = self.t_phi_c_lump {
            positive("t_phi_c_lump", t)?;
        }
        if !(self.tau_cycle_us > 0.0 && self.tau_cycle_us.is_finite()) {
            return Err(Error::InvalidNoise(format!(
                "tau_cycle_us must be positive and finite, got {}",
                self.tau_cycle_us
            )));
        }
        self.pure_dephasing_rate()?;
        Ok(())
    }

    /// Dissipator coefficients, in units of 1/τ.
    pub fn rates(&self) -> Result<Rates> {
        self.validate()?;
        let inv = |t: Option<f64>| t.map_or(0.0, |t| 1.0 / t);
        Ok(Rates {
            kappa: 1.0 / self.t_s,
            gamma_cd: 2.0 * (inv(self.t_phi_c_white) + inv(self.t_phi_c_lump)),
            gamma1: 1.0 / self.t1,
            gamma_phi: self.pure_dephasing_rate()?,
        })
    }

    /// Converts a time in τ to microseconds.
    pub fn to_us(&self, t: f64) -> f64 {
        t * self.tau_cycle_us
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::low()
    }
}

/// Coefficients of the four dissipators. `gamma_phi` is 1/T_φ, so the
/// dephasing dissipator D[σz/2] enters with weight 2·gamma_phi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub kappa: f64,
    pub gamma_cd: f64,
    pub gamma1: f64,
    pub gamma_phi: f64,
}

/// H = ½χ n σz + ½K n², in rad/μs. Off unless `enabled`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HamiltonianParams {
    pub chi: f64,
    pub kerr: f64,
    #[serde(default)]
    pub enabled: bool,
}

impl HamiltonianParams {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn new(chi: f64, kerr: f64) -> Self {
        HamiltonianParams {
            chi,
            kerr,
            enabled: true,
        }
    }
}

/// Fixed RK4 step and the self-convergence tolerance, both in units of τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub tolerance: f64,
}

impl IntegratorConfig {
    pub const DEFAULT_DT: f64 = 1.0 / 2000.0;

    pub fn new(dt: f64) -> Result<Self> {
        let cfg = IntegratorConfig {
            dt,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive and finite, got {}", self.dt),
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: format!("must be positive, got {}", self.tolerance),
            });
        }
        Ok(())
    }

    /// Whole steps and the leftover fractional step for `duration`.
    pub fn steps(&self, duration: f64) -> (u64, f64) {
        let x = duration / self.dt;
        let n = x.round();
        if (x - n).abs() < 1e-9 * x.max(1.0) {
            (n as u64, 0.0)
        } else {
            let n = x.floor();
            (n as u64, duration - n * self.dt)
        }
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: Self::DEFAULT_DT,
            tolerance: 1e-9,
        }
    }
}

/// The Lindblad generator on a fixed joint space, stored as per-entry
/// coefficients.
#[derive(Debug, Clone)]
pub struct Generator {
    n_fock: usize,
    rates: Rates,
    /// Diagonal of H in rad/τ, indexed by joint index.
    h: Vec<f64>,
    /// Column-major tables of `diag`, `loss` and `decay`.
    coef: Vec<Complex64>,
    loss_w: Vec<f64>,
    decay_w: Vec<f64>,
}

impl Generator {
    pub fn new(noise: &NoiseModel, ham: &HamiltonianParams, cfg: &HilbertConfig) -> Result<Self> {
        let rates = noise.rates()?;
        let d = cfg.joint_dim();
        let mut h = vec![0.0; d];
        if ham.enabled {
            if !(ham.chi.is_finite() && ham.kerr.is_finite()) {
                return Err(Error::NonFinite);
            }
            for (i, hi) in h.iter_mut().enumerate() {
                let n = (i / 2) as f64;
                let sz = if i % 2 == 0 { 1.0 } else { -1.0 };
                *hi = noise.tau_cycle_us * (0.5 * ham.chi * n * sz + 0.5 * ham.kerr * n * n);
            }
        }
        let mut gen = Generator {
            n_fock: cfg.n_fock(),
            rates,
            h,
            coef: Vec::new(),
            loss_w: Vec::new(),
            decay_w: Vec::new(),
        };
        let idx = || (0..d).flat_map(move |j| (0..d).map(move |i| (i, j)));
        gen.coef = idx().map(|(i, j)| gen.diag(i, j)).collect();
        gen.loss_w = idx().map(|(i, j)| gen.loss(i, j)).collect();
        gen.decay_w = idx().map(|(i, j)| gen.decay(i, j)).collect();
        Ok(gen)
    }

    pub fn dim(&self) -> usize {
        self.n_fock * QUBIT_DIM
    }

    pub fn rates(&self) -> &Rates {
        &self.rates
    }

    /// Coefficient multiplying ρ_ij in (Lρ)_ij.
    #[inline]
    fn diag(&self, i: usize, j: usize) -> Complex64 {
        let r = &self.rates;
        let (ni, nj) = ((i / 2) as f64, (j / 2) as f64);
        let (ei, ej) = ((i % 2) as f64, (j % 2) as f64);
        let mut re = -0.5 * r.kappa * (ni + nj) - 0.5 * r.gamma_cd * (ni - nj) * (ni - nj) - 0.5 * r.gamma1 * (ei + ej);
        if i % 2 != j % 2 {
            re -= r.gamma_phi;
        }
        c(re, -(self.h[i] - self.h[j]))
    }

    /// Weight of ρ_{i+2,j+2} in (Lρ)_ij.
    #[inline]
    fn loss(&self, i: usize, j: usize) -> f64 {
        let (ni, nj) = (i / 2, j / 2);
        self.rates.kappa * (((ni + 1) * (nj + 1)) as f64).sqrt()
    }

    /// Weight of ρ_{i+1,j+1} in (Lρ)_ij; nonzero only when both are |g⟩.
    #[inline]
    fn decay(&self, i: usize, j: usize) -> f64 {
        if i % 2 == 0 && j % 2 == 0 {
            self.rates.gamma1
        } else {
            0.0
        }
    }

    /// L(ρ) for any (not necessarily Hermitian) matrix on the joint space.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        self.apply_into(rho, &mut out);
        out
    }

    fn apply_into(&self, rho: &CMat, out: &mut CMat) {
        let d = self.dim();
        let (r, o) = (rho.as_slice(), out.as_mut_slice());
        for j in 0..d {
            let col = j * d..(j + 1) * d;
            for ((o, c), x) in o[col.clone()].iter_mut().zip(&self.coef[col.clone()]).zip(&r[col]) {
                *o = c * x;
            }
            if j + 2 < d {
                let k0 = j * d;
                let src = &r[k0 + 2 + 2 * d..k0 + 3 * d];
                for ((o, w), x) in o[k0..k0 + d - 2].iter_mut().zip(&self.loss_w[k0..k0 + d - 2]).zip(src) {
                    *o += x * w;
                }
            }
            if j % 2 == 0 && j + 1 < d {
                let k0 = j * d;
                for i in (0..d - 1).step_by(2) {
                    o[k0 + i] += r[k0 + i + 1 + d] * self.decay_w[k0 + i];
                }
            }
        }
    }

    /// Heisenberg-picture generator L†, the adjoint under ⟨A, B⟩ = Tr(A†B).
    pub fn apply_adjoint(&self, g: &CMat) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                let mut v = self.diag(i, j).conj() * g[(i, j)];
                if i >= 2 && j >= 2 {
                    v += g[(i - 2, j - 2)] * self.loss(i - 2, j - 2);
                }
                if i >= 1 && j >= 1 {
                    let w = self.decay(i - 1, j - 1);
                    if w != 0.0 {
                        v += g[(i - 1, j - 1)] * w;
                    }
                }
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Band matrix M_k acting on the entries ρ_{m+k,m}, m = 0..d−k.
    fn band(&self, k: usize) -> Tri {
        let len = self.dim() - k;
        let mut m = Tri::zeros(len);
        for r in 0..len {
            let (i, j) = (r + k, r);
            *m.at_mut(r, r) = self.diag(i, j);
            if r + 1 < len {
                *m.at_mut(r, r + 1) = c(self.decay(i, j), 0.0);
            }
            if r + 2 < len {
                *m.at_mut(r, r + 2) = c(self.loss(i, j), 0.0);
            }
        }
        m
    }
}

/// L(ρ) for the given noise and Hamiltonian.
pub fn lindblad_rhs(rho: &DensityMatrix, noise: &NoiseModel, ham: &HamiltonianParams) -> Result<Operator> {
    let cfg = joint_config(rho.dim())?;
    let gen = Generator::new(noise, ham, &cfg)?;
    Ok(Operator::from_raw(gen.apply(rho.matrix())))
}

/// The same generator assembled from explicit dissipators. Slow; kept as an
/// independent reference for the structured form.
pub fn lindblad_rhs_dense(rho: &DensityMatrix, noise: &NoiseModel, ham: &HamiltonianParams) -> Result<Operator> {
    let cfg = joint_config(rho.dim())?;
    let r = noise.rates()?;
    let iq = Operator::identity(QUBIT_DIM);
    let ic = Operator::identity(cfg.n_fock());
    let a = kron(&annihilation(&cfg), &iq);
    let n = kron(&number_operator(&cfg), &iq);
    let sp = kron(&ic, &sigma_plus());
    let sz2 = kron(&ic, &pauli_z().scale(c(0.5, 0.0)));
    let mut out = Operator::zeros(rho.dim());
    for (rate, op) in [
        (r.kappa, &a),
        (r.gamma_cd, &n),
        (r.gamma1, &sp),
        (2.0 * r.gamma_phi, &sz2),
    ] {
        if rate != 0.0 {
            let d = crate::fock::dissipator_apply(op, rho)?;
            out = out.add(&d.scale(c(rate, 0.0)));
        }
    }
    if ham.enabled {
        let nz = kron(&number_operator(&cfg), &pauli_z());
        let n2 = &n * &n;
        let h = nz
            .scale(c(0.5 * ham.chi, 0.0))
            .add(&n2.scale(c(0.5 * ham.kerr, 0.0)))
            .scale(c(noise.tau_cycle_us, 0.0));
        out = out.sub(&h.commutator(rho.op()).scale(c(0.0, 1.0)));
    }
    Ok(out)
}

fn joint_config(dim: usize) -> Result<HilbertConfig> {
    if dim % QUBIT_DIM != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim + 1,
            found: dim,
        });
    }
    HilbertConfig::new(dim / QUBIT_DIM)
}

/// Fixed-step RK4 evolution over `duration` (in τ), symmetrizing after every
/// step and closing with a fractional step when dt does not divide the
/// duration.
pub fn evolve_rk4(
    rho: &DensityMatrix,
    duration: f64,
    noise: &NoiseModel,
    ham: &HamiltonianParams,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParameter {
            name: "duration",
            reason: format!("must be finite and non-negative, got {duration}"),
        });
    }
    cfg.validate()?;
    let gen = Generator::new(noise, ham, &joint_config(rho.dim())?)?;
    let mut state = rho.matrix().clone();
    let (n, rest) = cfg.steps(duration);
    let mut stepper = Rk4::new(rho.dim());
    for _ in 0..n {
        stepper.step(&gen, &mut state, cfg.dt);
    }
    if rest > 0.0 {
        stepper.step(&gen, &mut state, rest);
    }
    if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(DensityMatrix::from_raw(state))
}

struct Rk4 {
    k: CMat,
    acc: CMat,
    tmp: CMat,
}

impl Rk4 {
    fn new(d: usize) -> Self {
        Rk4 {
            k: CMat::zeros(d, d),
            acc: CMat::zeros(d, d),
            tmp: CMat::zeros(d, d),
        }
    }

    fn step(&mut self, gen: &Generator, rho: &mut CMat, h: f64) {
        gen.apply_into(rho, &mut self.k);
        self.acc.copy_from(&self.k);
        for (w, frac) in [(2.0, 0.5), (2.0, 0.5), (1.0, 1.0)] {
            axpy(&mut self.tmp, rho, h * frac, &self.k);
            gen.apply_into(&self.tmp, &mut self.k);
            for (a, k) in self.acc.iter_mut().zip(self.k.iter()) {
                *a += k * w;
            }
        }
        for (r, a) in rho.iter_mut().zip(self.acc.iter()) {
            *r += a * (h / 6.0);
        }
        let d = rho.nrows();
        let m = rho.as_mut_slice();
        for j in 0..d {
            for i in 0..j {
                let v = (m[i + j * d] + m[j + i * d].conj()) * 0.5;
                m[i + j * d] = v;
                m[j + i * d] = v.conj();
            }
            m[j + j * d].im = 0.0;
        }
    }
}

/// out = x + s·y
fn axpy(out: &mut CMat, x: &CMat, s: f64, y: &CMat) {
    for ((o, a), b) in out.iter_mut().zip(x.iter()).zip(y.iter()) {
        *o = a + b * s;
    }
}

/// Upper-triangular square matrix, packed by rows.
#[derive(Debug, Clone)]
struct Tri {
    n: usize,
    data: Vec<Complex64>,
}

impl Tri {
    fn zeros(n: usize) -> Self {
        Tri {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * (n + 1) / 2],
        }
    }

    fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        for r in 0..n {
            *t.at_mut(r, r) = c(1.0, 0.0);
        }
        t
    }

    #[inline]
    fn row(&self, r: usize) -> &[Complex64] {
        let o = self.row_start(r);
        &self.data[o..o + self.n - r]
    }

    #[inline]
    fn row_start(&self, r: usize) -> usize {
        // rows 0..r hold n, n−1, …, n−r+1 entries
        r * self.n - r * r.saturating_sub(1) / 2
    }

    #[inline]
    fn at_mut(&mut self, r: usize, col: usize) -> &mut Complex64 {
        let o = self.row_start(r);
        &mut self.data[o + col - r]
    }

    fn mul(&self, other: &Tri) -> Tri {
        let n = self.n;
        let mut out = Tri::zeros(n);
        for r in 0..n {
            let a = self.row(r);
            let o = out.row_start(r);
            let dst = &mut out.data[o..o + n - r];
            for (t_off, &art) in a.iter().enumerate() {
                if art == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let t = r + t_off;
                let b = other.row(t);
                for (x, &y) in dst[t_off..].iter_mut().zip(b) {
                    *x += art * y;
                }
            }
        }
        out
    }

    /// I + s·self.
    fn scaled_add_identity(&self, s: Complex64) -> Tri {
        let mut out = self.clone();
        for z in out.data.iter_mut() {
            *z *= s;
        }
        for r in 0..self.n {
            *out.at_mut(r, r) += c(1.0, 0.0);
        }
        out
    }

    fn pow(&self, mut e: u64) -> Tri {
        let mut result = Tri::identity(self.n);
        let mut base = self.clone();
        let mut first = true;
        while e > 0 {
            if e & 1 == 1 {
                result = if first { base.clone() } else { result.mul(&base) };
                first = false;
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// RK4 update polynomial 1 + x + x²/2 + x³/6 + x⁴/24 at x = hM.
    fn rk4_poly(m: &Tri, h: f64) -> Tri {
        let hm = {
            let mut t = m.clone();
            for z in t.data.iter_mut() {
                *z *= h;
            }
            t
        };
        // Horner: I + x(I + x/2(I + x/3(I + x/4)))
        let mut p = hm.scaled_add_identity(c(0.25, 0.0));
        for k in [3.0, 2.0, 1.0] {
            p = hm.mul(&p).scaled_add_identity(c(1.0 / k, 0.0));
        }
        p
    }
}

/// Dissipative idling for a fixed duration, precomputed as the exact RK4
/// propagator of every diagonal band of ρ.
#[derive(Debug, Clone)]
pub struct IdleChannel {
    dim: usize,
    duration: f64,
    bands: Option<Vec<Tri>>,
}

impl IdleChannel {
    pub fn new(gen: &Generator, duration: f64, cfg: &IntegratorConfig) -> Result<Self> {
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(Error::InvalidParameter {
                name: "duration",
                reason: format!("must be finite and non-negative, got {duration}"),
            });
        }
        cfg.validate()?;
        let d = gen.dim();
        if duration == 0.0 {
            return Ok(IdleChannel {
                dim: d,
                duration,
                bands: None,
            });
        }
        let (n, rest) = cfg.steps(duration);
        let bands: Vec<Tri> = (0..d)
            .into_par_iter()
            .map(|k| {
                let m = gen.band(k);
                let mut e = Tri::rk4_poly(&m, cfg.dt).pow(n);
                if rest > 0.0 {
                    e = Tri::rk4_poly(&m, rest).mul(&e);
                }
                e
            })
            .collect();
        Ok(IdleChannel {
            dim: d,
            duration,
            bands: Some(bands),
        })
    }

    pub fn identity(dim: usize) -> Self {
        IdleChannel {
            dim,
            duration: 0.0,
            bands: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn is_identity(&self) -> bool {
        self.bands.is_none()
    }

    /// E(ρ).
    pub fn apply(&self, rho: &CMat) -> CMat {
        self.map(rho, false)
    }

    /// E†(G), the adjoint under ⟨A, B⟩ = Tr(A†B).
    pub fn apply_adjoint(&self, g: &CMat) -> CMat {
        self.map(g, true)
    }

    fn map(&self, x: &CMat, adjoint: bool) -> CMat {
        let Some(bands) = &self.bands else {
            return x.clone();
        };
        let d = self.dim;
        let mut out = CMat::zeros(d, d);
        let mut v = Vec::with_capacity(d);
        let mut w = vec![Complex64::new(0.0, 0.0); d];
        for (k, e) in bands.iter().enumerate() {
            let len = d - k;
            // lower band ρ_{m+k,m} uses E_k; upper band ρ_{m,m+k} uses conj(E_k)
            for lower in [true, false] {
                if !lower && k == 0 {
                    continue;
                }
                v.clear();
                for m in 0..len {
                    v.push(if lower { x[(m + k, m)] } else { x[(m, m + k)] });
                }
                let conj = !lower;
                w[..len].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for r in 0..len {
                    let row = e.row(r);
                    if !adjoint {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (t, &er) in row.iter().enumerate() {
                            let er = if conj { er.conj() } else { er };
                            acc += er * v[r + t];
                        }
                        w[r] = acc;
                    } else {
                        let vr = v[r];
                        for (t, &er) in row.iter().enumerate() {
                            let er = if conj { er } else { er.conj() };
                            w[r + t] += er * vr;
                        }
                    }
                }
                for m in 0..len {
                    if lower {
                        out[(m + k, m)] = w[m];
                    } else {
                        out[(m, m + k)] = w[m];
                    }
                }
            }
        }
        out
    }
}
