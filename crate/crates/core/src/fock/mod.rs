//! Truncated Fock-space operator algebra.
//!
//! Joint cavity ⊗ qubit operators use the ordering `index = n * 2 + q`, with
//! the cavity factor first and the qubit factor second, `q = 0` for |g⟩ and
//! `q = 1` for |e⟩.

mod expm;

use std::io::{Read, Write};
use std::ops::Mul;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[allow(unused_imports)]
pub(crate) use expm::norm1;
pub use expm::{expm, expm_frechet, expm_taylor};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const QUBIT_DIM: usize = 2;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Cavity truncation. The ancilla qubit dimension is fixed to 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertConfig {
    n_fock: usize,
}

impl HilbertConfig {
    pub const DEFAULT_N_FOCK: usize = 100;

    pub fn new(n_fock: usize) -> Result<Self> {
        if n_fock < 2 {
            return Err(Error::InvalidParameter {
                name: "n_fock",
                reason: format!("must be at least 2, got {n_fock}"),
            });
        }
        Ok(Self { n_fock })
    }

    pub fn n_fock(&self) -> usize {
        self.n_fock
    }

    pub fn qubit_dim(&self) -> usize {
        QUBIT_DIM
    }

    pub fn joint_dim(&self) -> usize {
        QUBIT_DIM * self.n_fock
    }
}

impl Default for HilbertConfig {
    fn default() -> Self {
        Self {
            n_fock: Self::DEFAULT_N_FOCK,
        }
    }
}

/// Dense square complex matrix on a truncated Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator(CMat);

impl Operator {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is square and finite by construction.
    pub(crate) fn from_raw(m: CMat) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMat::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMat::zeros(dim, dim))
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        Self(CMat::from_diagonal(&CVec::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn add(&self, other: &Operator) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Operator) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// Largest elementwise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.0.adjoint() * &self.0;
        Operator(prod).max_abs_diff(&Operator::identity(self.dim())) < tol
    }

    /// Row-major JSON dump: `{"dim": d, "data": [re, im, re, im, ...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.dim();
        let mut data = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.0[(i, j)];
                data.push(z.re);
                data.push(z.im);
            }
        }
        serde_json::json!({ "dim": n, "data": data })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Dump {
            dim: usize,
            data: Vec<f64>,
        }
        let dump: Dump = serde_json::from_value(value.clone())?;
        if dump.data.len() != 2 * dump.dim * dump.dim {
            return Err(Error::DimensionMismatch {
                expected: 2 * dump.dim * dump.dim,
                found: dump.data.len(),
            });
        }
        let n = dump.dim;
        Operator::new(CMat::from_fn(n, n, |i, j| {
            let k = 2 * (i * n + j);
            c(dump.data[k], dump.data[k + 1])
        }))
    }

    /// Binary dump: little-endian u64 dimension followed by row-major
    /// (re, im) float64 pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        w.write_all(&(n as u64).to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                let z = self.0[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let n = u64::from_le_bytes(buf) as usize;
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf);
                r.read_exact(&mut buf)?;
                let im = f64::from_le_bytes(buf);
                m[(i, j)] = c(re, im);
            }
        }
        Operator::new(m)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

/// Density matrix on the joint space or, where stated, the cavity alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-8;
    pub const POSITIVITY_TOL: f64 = 1e-8;

    /// Validates Hermiticity and unit trace.
    pub fn new(op: Operator) -> Result<Self> {
        let dev = op.hermiticity_deviation();
        if dev > Self::HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::Numerical(format!("density matrix trace {tr} differs from 1")));
        }
        Ok(Self(op))
    }

    pub(crate) fn from_raw(m: CMat) -> Self {
        Self(Operator::from_raw(m))
    }

    /// |ψ⟩⟨ψ| for a ket normalized here.
    pub fn from_pure(ket: &CVec) -> Self {
        let norm = ket.norm();
        let psi = ket.map(|z| z / norm);
        Self(Operator::from_raw(&psi * psi.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(Operator::from_raw(CMat::identity(dim, dim).map(|z| z / dim as f64)))
    }

    pub fn fock(n: usize, dim: usize) -> Self {
        let mut ket = CVec::zeros(dim);
        ket[n] = c(1.0, 0.0);
        Self::from_pure(&ket)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn op(&self) -> &Operator {
        &self.0
    }

    pub fn matrix(&self) -> &CMat {
        self.0.matrix()
    }

    pub fn into_matrix(self) -> CMat {
        self.0.into_matrix()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.matrix();
        let herm = (m + m.adjoint()).map(|z| z * 0.5);
        herm.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Expectation Tr(A ρ).
    pub fn expect(&self, a: &Operator) -> Complex64 {
        let m = self.matrix();
        let a = a.matrix();
        let n = m.nrows();
        let mut acc = c(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += a[(i, k)] * m[(k, i)];
            }
        }
        acc
    }

    /// Reduced cavity state Tr_q ρ of a joint density matrix.
    pub fn cavity_marginal(&self) -> DensityMatrix {
        DensityMatrix::from_raw(partial_trace_qubit(self.matrix()))
    }

    /// ρ_c ⊗ |g⟩⟨g| for a cavity-only density matrix.
    pub fn with_ground_qubit(&self) -> DensityMatrix {
        DensityMatrix::from_raw(tensor_ground(self.matrix()))
    }
}

/// Tr_q of a joint (cavity ⊗ qubit) matrix.
pub fn partial_trace_qubit(m: &CMat) -> CMat {
    let n = m.nrows() / QUBIT_DIM;
    CMat::from_fn(n, n, |i, j| m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)])
}

/// M_c ⊗ |g⟩⟨g|.
pub fn tensor_ground(m: &CMat) -> CMat {
    let n = m.nrows();
    let mut out = CMat::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            out[(2 * i, 2 * j)] = m[(i, j)];
        }
    }
    out
}

/// Cavity annihilation operator, a[m, m+1] = sqrt(m+1).
pub fn annihilation(cfg: &HilbertConfig) -> Operator {
    let n = cfg.n_fock();
    let mut m = CMat::zeros(n, n);
    for k in 0..n - 1 {
        m[(k, k + 1)] = c(((k + 1) as f64).sqrt(), 0.0);
    }
    Operator::from_raw(m)
}

pub fn creation(cfg: &HilbertConfig) -> Operator {
    annihilation(cfg).dagger()
}

pub fn number_operator(cfg: &HilbertConfig) -> Operator {
    let entries: Vec<Complex64> = (0..cfg.n_fock()).map(|k| c(k as f64, 0.0)).collect();
    Operator::diagonal(&entries)
}

pub fn pauli_x() -> Operator {
    Operator::from_raw(CMat::from_row_slice(
        2,
        2,
        &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)],
    ))
}

pub fn pauli_y() -> Operator {
    Operator::from_raw(CMat::from_row_slice(
        2,
        2,
        &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)],
    ))
}

pub fn pauli_z() -> Operator {
    Operator::diagonal(&[c(1., 0.), c(-1., 0.)])
}

/// σ₋ = (σx − iσy)/2 = |e⟩⟨g|, raising g → e with |g⟩ = (1, 0).
pub fn sigma_minus() -> Operator {
    Operator::from_raw(CMat::from_row_slice(
        2,
        2,
        &[c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)],
    ))
}

/// σ₊ = (σx + iσy)/2 = |g⟩⟨e|, lowering e → g.
pub fn sigma_plus() -> Operator {
    sigma_minus().dagger()
}

/// exp(m), with the Taylor series truncated once a term falls below `tol`
/// relative to the partial sum.
pub fn matrix_exp(m: &Operator, tol: f64) -> Result<Operator> {
    if m.matrix().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    Ok(Operator::from_raw(expm_taylor(m.matrix(), tol)))
}

/// Generator ζa† − ζ*a of the displacement.
pub fn displacement_generator(zeta: Complex64, n_fock: usize) -> CMat {
    let mut g = CMat::zeros(n_fock, n_fock);
    for k in 0..n_fock - 1 {
        let s = ((k + 1) as f64).sqrt();
        g[(k + 1, k)] = zeta * s;
        g[(k, k + 1)] = -zeta.conj() * s;
    }
    g
}

pub(crate) fn truncation_guard(zeta: Complex64, n_fock: usize) {
    if zeta.norm_sqr() > n_fock as f64 / 4.0 {
        log::warn!(
            "displacement |ζ|² = {:.3} exceeds n_fock/4 = {:.2}; truncation error may be significant",
            zeta.norm_sqr(),
            n_fock as f64 / 4.0
        );
    }
}

/// D(ζ) = exp(ζa† − ζ*a) on the truncated cavity space.
pub fn displacement(zeta: Complex64, cfg: &HilbertConfig) -> Operator {
    truncation_guard(zeta, cfg.n_fock());
    Operator::from_raw(expm(&displacement_generator(zeta, cfg.n_fock())))
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator::from_raw(a.matrix().kronecker(b.matrix()))
}

/// D[A]ρ = AρA† − (A†Aρ + ρA†A)/2.
pub fn dissipator_apply(a: &Operator, rho: &DensityMatrix) -> Result<Operator> {
    if a.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: rho.dim(),
        });
    }
    let am = a.matrix();
    let r = rho.matrix();
    let ad = am.adjoint();
    let ada = &ad * am;
    let out = am * r * &ad - (&ada * r + r * &ada).map(|z| z * 0.5);
    Ok(Operator::from_raw(out))
}
