//! Finite-energy GKP code: lattices, logical states, logical Paulis and
//! stabilizers, plus fidelity and expectation utilities.

mod export;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, c, partial_trace_qubit, CMat, CVec, DensityMatrix, HilbertConfig, Operator};

pub use export::{ket_to_csv, ket_to_json, wigner_csv, wigner_grid};

/// Lattice geometry of the code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeKind {
    Square,
    Rectangular { l: f64 },
    Hexagonal,
}

/// Code parameters α, β with α*β − αβ* = iπ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeLattice {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub kind: LatticeKind,
}

impl CodeLattice {
    pub fn square() -> Self {
        let a = (PI / 2.0).sqrt();
        Self {
            alpha: c(a, 0.0),
            beta: c(0.0, a),
            kind: LatticeKind::Square,
        }
    }

    pub fn rectangular(l: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "l",
                reason: format!("rectangular scaling must be positive, got {l}"),
            });
        }
        let a = (PI / 2.0).sqrt();
        Ok(Self {
            alpha: c(l * a, 0.0),
            beta: c(0.0, a / l),
            kind: LatticeKind::Rectangular { l },
        })
    }

    pub fn hexagonal() -> Self {
        let r = (PI / 3f64.sqrt()).sqrt();
        Self {
            alpha: c(r, 0.0),
            beta: Complex64::from_polar(r, 2.0 * PI / 3.0),
            kind: LatticeKind::Hexagonal,
        }
    }

    pub fn from_kind(kind: LatticeKind) -> Result<Self> {
        match kind {
            LatticeKind::Square => Ok(Self::square()),
            LatticeKind::Rectangular { l } => Self::rectangular(l),
            LatticeKind::Hexagonal => Ok(Self::hexagonal()),
        }
    }

    /// α*β − αβ*, which equals iπ for a valid lattice.
    pub fn commutation_phase(&self) -> Complex64 {
        self.alpha.conj() * self.beta - self.alpha * self.beta.conj()
    }

    pub fn validate(&self) -> Result<()> {
        let dev = (self.commutation_phase() - c(0.0, PI)).norm();
        if dev > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "lattice",
                reason: format!("α*β − αβ* deviates from iπ by {dev:e}"),
            });
        }
        Ok(())
    }
}

impl Default for CodeLattice {
    fn default() -> Self {
        Self::square()
    }
}

/// The six logical Pauli eigenstates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicalLabel {
    #[serde(rename = "+Z")]
    PlusZ,
    #[serde(rename = "-Z")]
    MinusZ,
    #[serde(rename = "+X")]
    PlusX,
    #[serde(rename = "-X")]
    MinusX,
    #[serde(rename = "+Y")]
    PlusY,
    #[serde(rename = "-Y")]
    MinusY,
}

impl LogicalLabel {
    pub const ALL: [LogicalLabel; 6] = [
        LogicalLabel::PlusX,
        LogicalLabel::MinusX,
        LogicalLabel::PlusY,
        LogicalLabel::MinusY,
        LogicalLabel::PlusZ,
        LogicalLabel::MinusZ,
    ];

    /// The Pauli this state is an eigenstate of, and its eigenvalue sign.
    pub fn axis(&self) -> (PauliAxis, f64) {
        match self {
            LogicalLabel::PlusX => (PauliAxis::X, 1.0),
            LogicalLabel::MinusX => (PauliAxis::X, -1.0),
            LogicalLabel::PlusY => (PauliAxis::Y, 1.0),
            LogicalLabel::MinusY => (PauliAxis::Y, -1.0),
            LogicalLabel::PlusZ => (PauliAxis::Z, 1.0),
            LogicalLabel::MinusZ => (PauliAxis::Z, -1.0),
        }
    }
}

impl fmt::Display for LogicalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LogicalLabel::PlusZ => "+Z",
            LogicalLabel::MinusZ => "-Z",
            LogicalLabel::PlusX => "+X",
            LogicalLabel::MinusX => "-X",
            LogicalLabel::PlusY => "+Y",
            LogicalLabel::MinusY => "-Y",
        };
        f.write_str(s)
    }
}

impl FromStr for LogicalLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+Z" | "Z" | "0" => Ok(LogicalLabel::PlusZ),
            "-Z" | "1" => Ok(LogicalLabel::MinusZ),
            "+X" | "X" => Ok(LogicalLabel::PlusX),
            "-X" => Ok(LogicalLabel::MinusX),
            "+Y" | "Y" => Ok(LogicalLabel::PlusY),
            "-Y" => Ok(LogicalLabel::MinusY),
            other => Err(Error::Config(format!("unknown logical state `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilizerAxis {
    X,
    Z,
}

/// Everything needed to build one finite-energy logical state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GkpStateSpec {
    pub label: LogicalLabel,
    pub delta: f64,
    pub lattice: CodeLattice,
    pub cfg: HilbertConfig,
    /// Largest norm fraction allowed beyond the Fock cutoff before the
    /// construction is rejected.
    pub truncation_tolerance: f64,
}

impl GkpStateSpec {
    pub const DEFAULT_DELTA: f64 = 0.34;
    pub const DEFAULT_TRUNCATION_TOLERANCE: f64 = 1e-6;

    pub fn new(label: LogicalLabel, delta: f64, cfg: HilbertConfig) -> Self {
        Self {
            label,
            delta,
            lattice: CodeLattice::square(),
            cfg,
            truncation_tolerance: Self::DEFAULT_TRUNCATION_TOLERANCE,
        }
    }

    pub fn with_lattice(mut self, lattice: CodeLattice) -> Self {
        self.lattice = lattice;
        self
    }

    pub fn with_truncation_tolerance(mut self, tol: f64) -> Self {
        self.truncation_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("envelope Δ must lie in (0, 1), got {}", self.delta),
            });
        }
        if !(self.truncation_tolerance >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "truncation_tolerance",
                reason: "must be non-negative".into(),
            });
        }
        self.lattice.validate()
    }
}

/// Relative change below which another coherent-state shell is not added.
const SHELL_TOL: f64 = 1e-10;
const MAX_SHELLS: i64 = 60;

struct EnvelopeBasis {
    delta: f64,
    ln_fact: Vec<f64>,
}

impl EnvelopeBasis {
    fn new(delta: f64, dim: usize) -> Self {
        let mut ln_fact = Vec::with_capacity(dim);
        let mut acc = 0.0;
        for k in 0..dim {
            if k > 0 {
                acc += (k as f64).ln();
            }
            ln_fact.push(acc);
        }
        Self { delta, ln_fact }
    }

    /// Adds `weight · e^{−Δ²n̂}|γ⟩` to `out`, evaluated exactly in the Fock
    /// basis through log-magnitudes so large |γ| does not overflow.
    fn accumulate(&self, gamma: Complex64, weight: Complex64, out: &mut CVec) {
        let r = gamma.norm();
        let d2 = self.delta * self.delta;
        if r == 0.0 {
            out[0] += weight;
            return;
        }
        let ln_r = r.ln();
        let arg = gamma.arg();
        for n in 0..out.len() {
            let nf = n as f64;
            let ln_mag = -0.5 * r * r + nf * (ln_r - d2) - 0.5 * self.ln_fact[n];
            if ln_mag < -745.0 {
                continue;
            }
            out[n] += weight * Complex64::from_polar(ln_mag.exp(), nf * arg);
        }
    }
}

fn shell_points(k_max: i64) -> impl Iterator<Item = (i64, i64)> {
    (-k_max..=k_max)
        .flat_map(move |k| (-k_max..=k_max).filter_map(move |l| (k.abs().max(l.abs()) == k_max).then_some((k, l))))
}

/// Envelope-filtered |0_L⟩ (`mu = 0`) or |1_L⟩ (`mu = 1`), unnormalized,
/// with lattice shells added until the normalized ket stops changing.
fn codeword(basis: &EnvelopeBasis, lattice: &CodeLattice, mu: u8, dim: usize) -> CVec {
    let (alpha, beta) = (lattice.alpha, lattice.beta);
    let term = |k: i64, l: i64| -> (Complex64, Complex64) {
        let (kf, lf) = (k as f64, l as f64);
        if mu == 0 {
            (
                alpha * (2.0 * kf) + beta * lf,
                Complex64::from_polar(1.0, -PI * kf * lf),
            )
        } else {
            (
                alpha * (2.0 * kf + 1.0) + beta * lf,
                Complex64::from_polar(1.0, -PI * (kf * lf + lf / 2.0)),
            )
        }
    };
    let mut sum = CVec::zeros(dim);
    let (g0, w0) = term(0, 0);
    basis.accumulate(g0, w0, &mut sum);
    let mut prev = sum.normalize();
    for shell in 1..=MAX_SHELLS {
        for (k, l) in shell_points(shell) {
            let (g, w) = term(k, l);
            basis.accumulate(g, w, &mut sum);
        }
        let next = sum.normalize();
        if (&next - &prev).norm() < SHELL_TOL {
            return sum;
        }
        prev = next;
    }
    log::warn!("coherent-state lattice sum did not converge within {MAX_SHELLS} shells");
    sum
}

fn auxiliary_dim(spec: &GkpStateSpec) -> usize {
    let tail = (40.0 / (2.0 * spec.delta * spec.delta)).ceil() as usize;
    (spec.cfg.n_fock() + tail).clamp(spec.cfg.n_fock() + 20, 6000)
}

/// Normalized Fock-basis amplitudes of the requested logical state, truncated
/// to `n_fock`. Fails when more than `truncation_tolerance` of the norm lies
/// beyond the cutoff.
pub fn logical_ket(spec: &GkpStateSpec) -> Result<CVec> {
    spec.validate()?;
    let dim = auxiliary_dim(spec);
    let basis = EnvelopeBasis::new(spec.delta, dim);
    let zero = codeword(&basis, &spec.lattice, 0, dim).normalize();
    let one = codeword(&basis, &spec.lattice, 1, dim).normalize();
    let full = match spec.label {
        LogicalLabel::PlusZ => zero,
        LogicalLabel::MinusZ => one,
        LogicalLabel::PlusX => &zero + &one,
        LogicalLabel::MinusX => &zero - &one,
        LogicalLabel::PlusY => &zero + one.map(|z| z * c(0.0, 1.0)),
        LogicalLabel::MinusY => &zero - one.map(|z| z * c(0.0, 1.0)),
    }
    .normalize();
    let n = spec.cfg.n_fock();
    let lost: f64 = full.iter().skip(n).map(|z| z.norm_sqr()).sum();
    if lost > spec.truncation_tolerance {
        return Err(Error::TruncationOverflow {
            lost,
            n_fock: n,
            tolerance: spec.truncation_tolerance,
        });
    }
    Ok(full.rows(0, n).into_owned().normalize())
}

/// Cavity-only pure density matrix of the logical state.
pub fn logical_state(spec: &GkpStateSpec) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_pure(&logical_ket(spec)?))
}

/// Bare logical Pauli: X = D(α), Z = D(β), Y = i·X·Z.
pub fn pauli_operator(lattice: &CodeLattice, which: PauliAxis, cfg: &HilbertConfig) -> Operator {
    match which {
        PauliAxis::X => fock::displacement(lattice.alpha, cfg),
        PauliAxis::Z => fock::displacement(lattice.beta, cfg),
        PauliAxis::Y => {
            let x = fock::displacement(lattice.alpha, cfg);
            let z = fock::displacement(lattice.beta, cfg);
            (&x * &z).scale(c(0.0, 1.0))
        }
    }
}

/// Bare stabilizers S_X = D(2α), S_Z = D(2β).
pub fn stabilizer(lattice: &CodeLattice, which: StabilizerAxis, cfg: &HilbertConfig) -> Operator {
    match which {
        StabilizerAxis::X => fock::displacement(lattice.alpha * 2.0, cfg),
        StabilizerAxis::Z => fock::displacement(lattice.beta * 2.0, cfg),
    }
}

fn purity(m: &CMat) -> f64 {
    // Tr(σ²) = Σ |σ_ij|² for Hermitian σ.
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Uhlmann fidelity (Tr√(√σ ρ √σ))². A pure σ uses the shortcut Tr(σρ).
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            found: rho.dim(),
        });
    }
    for m in [rho, sigma] {
        let dev = m.op().hermiticity_deviation();
        if dev > DensityMatrix::HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
    }
    let (r, s) = (rho.matrix(), sigma.matrix());
    let f = if (purity(s) - 1.0).abs() < 1e-10 {
        sigma.expect(rho.op()).re
    } else if (purity(r) - 1.0).abs() < 1e-10 {
        rho.expect(sigma.op()).re
    } else {
        let sqrt_s = hermitian_sqrt(s);
        let inner = &sqrt_s * r * &sqrt_s;
        let inner = (&inner + inner.adjoint()).map(|z| z * 0.5);
        let tr: f64 = inner.symmetric_eigenvalues().iter().map(|l| l.max(0.0).sqrt()).sum();
        tr * tr
    };
    Ok(f.clamp(0.0, 1.0))
}

fn hermitian_sqrt(m: &CMat) -> CMat {
    let herm = (m + m.adjoint()).map(|z| z * 0.5);
    let eig = herm.symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = CMat::from_diagonal(&eig.eigenvalues.map(|l| c(l.max(0.0).sqrt(), 0.0)));
    v * d * v.adjoint()
}

/// Re Tr(P ρ). A joint cavity ⊗ qubit state is reduced to the cavity first.
pub fn logical_expectation(rho: &DensityMatrix, pauli: &Operator) -> Result<f64> {
    let reduced;
    let r = if rho.dim() == pauli.dim() {
        rho
    } else if rho.dim() == 2 * pauli.dim() {
        reduced = rho.cavity_marginal();
        &reduced
    } else {
        return Err(Error::DimensionMismatch {
            expected: pauli.dim(),
            found: rho.dim(),
        });
    };
    Ok(r.expect(pauli).re)
}

/// ⟨n̂⟩ of a cavity-only state.
pub fn mean_photon(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    (0..m.nrows()).map(|i| m[(i, i)].re * i as f64).sum()
}

/// ⟨n̂⟩ of a joint cavity ⊗ qubit state.
pub fn mean_photon_joint(rho: &DensityMatrix) -> f64 {
    mean_photon(&DensityMatrix::from_raw(partial_trace_qubit(rho.matrix())))
}

#[cfg(test)]
mod tests;
