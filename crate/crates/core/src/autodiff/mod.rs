//! Reverse-mode differentiation over complex matrices.
//!
//! Simulation and policy code is written once against [`Backend`]. The
//! [`Plain`] backend evaluates directly; the [`Tape`] backend records every
//! operation so that gradients of a real scalar with respect to any leaf can
//! be pulled back in one pass. Real scalars and vectors are carried as 1×1
//! and n×1 complex matrices with zero imaginary part.
//!
//! Cotangents follow Ḡ = ∂L/∂Re(X) + i ∂L/∂Im(X), so for a real leaf the
//! gradient is Re(Ḡ).

pub(crate) mod kernels;

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{c, displacement_generator, expm, expm_frechet, CMat};
use crate::lindblad::IdleChannel;

/// Elementwise real functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealFn {
    Tanh,
    Sigmoid,
    Ln,
    Recip,
}

impl RealFn {
    #[inline]
    fn eval(self, x: f64) -> f64 {
        match self {
            RealFn::Tanh => x.tanh(),
            RealFn::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            RealFn::Ln => x.ln(),
            RealFn::Recip => 1.0 / x,
        }
    }

    /// f'(x) given x and y = f(x).
    #[inline]
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            RealFn::Tanh => 1.0 - y * y,
            RealFn::Sigmoid => y * (1.0 - y),
            RealFn::Ln => 1.0 / x,
            RealFn::Recip => -y * y,
        }
    }
}

pub trait Backend {
    type M: Clone;

    /// A value that gradients do not flow into.
    fn constant(&mut self, m: CMat) -> Self::M;
    /// A leaf whose gradient is tracked.
    fn param(&mut self, m: CMat) -> Self::M;
    fn value<'a>(&'a self, x: &'a Self::M) -> &'a CMat;

    fn add(&mut self, a: &Self::M, b: &Self::M) -> Self::M;
    fn sub(&mut self, a: &Self::M, b: &Self::M) -> Self::M;
    /// a + C for a constant C.
    fn add_const(&mut self, a: &Self::M, k: &CMat) -> Self::M;
    /// s·a for a real constant s.
    fn scale(&mut self, a: &Self::M, s: f64) -> Self::M;
    /// s·a for a 1×1 value s.
    fn mul_scalar(&mut self, a: &Self::M, s: &Self::M) -> Self::M;
    fn matmul(&mut self, a: &Self::M, b: &Self::M) -> Self::M;
    fn hadamard(&mut self, a: &Self::M, b: &Self::M) -> Self::M;
    fn map_real(&mut self, a: &Self::M, f: RealFn) -> Self::M;
    fn element(&mut self, a: &Self::M, i: usize, j: usize) -> Self::M;
    fn re(&mut self, a: &Self::M) -> Self::M;
    fn trace(&mut self, a: &Self::M) -> Self::M;
    /// Tr(C a) for a constant C.
    fn trace_with(&mut self, a: &Self::M, k: &Arc<CMat>) -> Self::M;

    /// Qubit rotation R(φ, θ) from two 1×1 values.
    fn rotation(&mut self, phi: &Self::M, theta: &Self::M) -> Self::M;
    /// Cavity displacement D(re + i·im) on `n_fock` levels.
    fn displacement(&mut self, re: &Self::M, im: &Self::M, n_fock: usize) -> Self::M;
    /// (I ⊗ R) ρ (I ⊗ R)†.
    fn apply_qubit(&mut self, rho: &Self::M, r: &Self::M) -> Self::M;
    /// ECD ρ ECD† where `d` is D(β/2).
    fn apply_ecd(&mut self, rho: &Self::M, d: &Self::M) -> Self::M;
    /// (U ⊗ I) ρ (U ⊗ I)† for a constant cavity unitary.
    fn apply_cavity(&mut self, rho: &Self::M, u: &Arc<CMat>) -> Self::M;
    /// Virtual rotation exp(iθn) by a 1×1 angle.
    fn apply_vr(&mut self, rho: &Self::M, theta: &Self::M) -> Self::M;
    fn idle(&mut self, rho: &Self::M, ch: &Arc<IdleChannel>) -> Self::M;
    /// Unnormalized projection of the ancilla onto |q⟩.
    fn project(&mut self, rho: &Self::M, q: usize) -> Self::M;
    /// Tr_q(ρ) ⊗ |g⟩⟨g|.
    fn reset(&mut self, rho: &Self::M) -> Self::M;

    fn scalar(&mut self, x: f64) -> Self::M {
        self.constant(CMat::from_element(1, 1, c(x, 0.0)))
    }

    fn real(&self, x: &Self::M) -> f64 {
        self.value(x)[(0, 0)].re
    }

    fn detach(&mut self, x: &Self::M) -> Self::M {
        let v = self.value(x).clone();
        self.constant(v)
    }

    /// Constant vector from real entries.
    fn vector(&mut self, v: &[f64]) -> Self::M {
        self.constant(real_column(v))
    }
}

pub(crate) fn real_column(v: &[f64]) -> CMat {
    CMat::from_iterator(v.len(), 1, v.iter().map(|&x| c(x, 0.0)))
}

pub(crate) fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| c(x, 0.0))
}

/// Direct evaluation without recording.
#[derive(Debug, Clone, Copy, Default)]
pub struct Plain;

impl Backend for Plain {
    type M = CMat;

    fn constant(&mut self, m: CMat) -> CMat {
        m
    }

    fn param(&mut self, m: CMat) -> CMat {
        m
    }

    fn value<'a>(&'a self, x: &'a CMat) -> &'a CMat {
        x
    }

    fn add(&mut self, a: &CMat, b: &CMat) -> CMat {
        a + b
    }

    fn sub(&mut self, a: &CMat, b: &CMat) -> CMat {
        a - b
    }

    fn add_const(&mut self, a: &CMat, k: &CMat) -> CMat {
        a + k
    }

    fn scale(&mut self, a: &CMat, s: f64) -> CMat {
        a * c(s, 0.0)
    }

    fn mul_scalar(&mut self, a: &CMat, s: &CMat) -> CMat {
        a * s[(0, 0)]
    }

    fn matmul(&mut self, a: &CMat, b: &CMat) -> CMat {
        a * b
    }

    fn hadamard(&mut self, a: &CMat, b: &CMat) -> CMat {
        a.component_mul(b)
    }

    fn map_real(&mut self, a: &CMat, f: RealFn) -> CMat {
        a.map(|z| c(f.eval(z.re), 0.0))
    }

    fn element(&mut self, a: &CMat, i: usize, j: usize) -> CMat {
        CMat::from_element(1, 1, a[(i, j)])
    }

    fn re(&mut self, a: &CMat) -> CMat {
        a.map(|z| c(z.re, 0.0))
    }

    fn trace(&mut self, a: &CMat) -> CMat {
        CMat::from_element(1, 1, a.trace())
    }

    fn trace_with(&mut self, a: &CMat, k: &Arc<CMat>) -> CMat {
        CMat::from_element(1, 1, trace_product(k, a))
    }

    fn rotation(&mut self, phi: &CMat, theta: &CMat) -> CMat {
        kernels::rotation(phi[(0, 0)].re, theta[(0, 0)].re)
    }

    fn displacement(&mut self, re: &CMat, im: &CMat, n_fock: usize) -> CMat {
        let zeta = c(re[(0, 0)].re, im[(0, 0)].re);
        crate::fock::truncation_guard(zeta, n_fock);
        expm(&displacement_generator(zeta, n_fock))
    }

    fn apply_qubit(&mut self, rho: &CMat, r: &CMat) -> CMat {
        kernels::qubit_conj(rho, r)
    }

    fn apply_ecd(&mut self, rho: &CMat, d: &CMat) -> CMat {
        kernels::ecd_conj(rho, d)
    }

    fn apply_cavity(&mut self, rho: &CMat, u: &Arc<CMat>) -> CMat {
        kernels::cavity_conj(rho, u)
    }

    fn apply_vr(&mut self, rho: &CMat, theta: &CMat) -> CMat {
        kernels::vr_conj(rho, theta[(0, 0)].re)
    }

    fn idle(&mut self, rho: &CMat, ch: &Arc<IdleChannel>) -> CMat {
        ch.apply(rho)
    }

    fn project(&mut self, rho: &CMat, q: usize) -> CMat {
        kernels::project(rho, q)
    }

    fn reset(&mut self, rho: &CMat) -> CMat {
        kernels::reset(rho)
    }
}

/// Tr(K A) without forming the product.
pub(crate) fn trace_product(k: &CMat, a: &CMat) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            acc += k[(i, j)] * a[(j, i)];
        }
    }
    acc
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    MatMul(Var, Var),
    Hadamard(Var, Var),
    Real(Var, RealFn),
    Element(Var, usize, usize),
    Re(Var),
    Trace(Var),
    TraceWith(Var, Arc<CMat>),
    Rotation(Var, Var),
    Displacement { re: Var, im: Var, generator: CMat },
    Qubit(Var, Var),
    Ecd(Var, Var),
    Cavity(Var, Arc<CMat>),
    Vr(Var, Var),
    Idle(Var, Arc<IdleChannel>),
    Project(Var, usize),
    Reset(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: CMat,
    op: Op,
    tracked: bool,
}

/// Recording backend. One tape per trajectory; tapes are not shared across
/// threads.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: CMat, op: Op, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            value,
            op: if tracked { op } else { Op::Leaf },
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn v(&self, x: Var) -> &CMat {
        &self.nodes[x.0].value
    }

    fn s(&self, x: Var) -> f64 {
        self.nodes[x.0].value[(0, 0)].re
    }

    /// Gradients of the real 1×1 value `out` with respect to every tracked
    /// node.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.v(out).shape();
        if shape != (1, 1) {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: shape.0 * shape.1,
            });
        }
        let mut g: Vec<Option<CMat>> = vec![None; out.0 + 1];
        g[out.0] = Some(CMat::from_element(1, 1, c(1.0, 0.0)));
        for idx in (0..=out.0).rev() {
            let Some(gy) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let y = &node.value;
            let acc = |g: &mut Vec<Option<CMat>>, x: Var, d: CMat| {
                if !self.nodes[x.0].tracked {
                    return;
                }
                match &mut g[x.0] {
                    Some(e) => *e += d,
                    slot => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {
                    g[idx] = Some(gy);
                    continue;
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, gy.clone());
                    acc(&mut g, *b, gy);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *b, -&gy);
                    acc(&mut g, *a, gy);
                }
                Op::AddConst(a) => acc(&mut g, *a, gy),
                Op::Scale(a, s) => acc(&mut g, *a, gy * c(*s, 0.0)),
                Op::MulScalar(a, s) => {
                    let av = self.v(*a);
                    let sv = self.v(*s)[(0, 0)];
                    let ds: Complex64 = av.iter().zip(gy.iter()).map(|(x, y)| x.conj() * y).sum();
                    acc(&mut g, *s, CMat::from_element(1, 1, ds));
                    acc(&mut g, *a, gy * sv.conj());
                }
                Op::MatMul(a, b) => {
                    let da = &gy * self.v(*b).adjoint();
                    let db = self.v(*a).adjoint() * &gy;
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::Hadamard(a, b) => {
                    let da = gy.component_mul(&self.v(*b).map(|z| z.conj()));
                    let db = gy.component_mul(&self.v(*a).map(|z| z.conj()));
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::Real(a, f) => {
                    let x = self.v(*a);
                    let d = CMat::from_fn(x.nrows(), x.ncols(), |i, j| {
                        c(f.deriv(x[(i, j)].re, y[(i, j)].re) * gy[(i, j)].re, 0.0)
                    });
                    acc(&mut g, *a, d);
                }
                Op::Element(a, i, j) => {
                    let (r, cc) = self.v(*a).shape();
                    let mut d = CMat::zeros(r, cc);
                    d[(*i, *j)] = gy[(0, 0)];
                    acc(&mut g, *a, d);
                }
                Op::Re(a) => acc(&mut g, *a, gy.map(|z| c(z.re, 0.0))),
                Op::Trace(a) => {
                    let n = self.v(*a).nrows();
                    acc(&mut g, *a, CMat::identity(n, n) * gy[(0, 0)]);
                }
                Op::TraceWith(a, k) => acc(&mut g, *a, k.adjoint() * gy[(0, 0)]),
                Op::Rotation(phi, theta) => {
                    let (dphi, dtheta) = kernels::rotation_partials(self.s(*phi), self.s(*theta));
                    let gp = kernels::real_inner(&dphi, &gy);
                    let gt = kernels::real_inner(&dtheta, &gy);
                    acc(&mut g, *phi, CMat::from_element(1, 1, c(gp, 0.0)));
                    acc(&mut g, *theta, CMat::from_element(1, 1, c(gt, 0.0)));
                }
                Op::Displacement { re, im, generator } => {
                    let gg = expm_frechet(&generator.adjoint(), &gy);
                    let n = generator.nrows();
                    let kre = displacement_generator(c(1.0, 0.0), n);
                    let kim = displacement_generator(c(0.0, 1.0), n);
                    let gre = kernels::real_inner(&kre, &gg);
                    let gim = kernels::real_inner(&kim, &gg);
                    acc(&mut g, *re, CMat::from_element(1, 1, c(gre, 0.0)));
                    acc(&mut g, *im, CMat::from_element(1, 1, c(gim, 0.0)));
                }
                Op::Qubit(rho, r) => {
                    let rv = self.v(*r);
                    let dr = kernels::qubit_conj_grad_r(self.v(*rho), rv, &gy);
                    let drho = kernels::qubit_conj(&gy, &rv.adjoint());
                    acc(&mut g, *r, dr);
                    acc(&mut g, *rho, drho);
                }
                Op::Ecd(rho, d) => {
                    let dv = self.v(*d);
                    let dd = kernels::ecd_grad_d(self.v(*rho), dv, &gy);
                    let drho = kernels::ecd_conj(&gy, dv);
                    acc(&mut g, *d, dd);
                    acc(&mut g, *rho, drho);
                }
                Op::Cavity(rho, u) => acc(&mut g, *rho, kernels::cavity_conj(&gy, &u.adjoint())),
                Op::Vr(rho, theta) => {
                    let gt = kernels::vr_grad_theta(y, &gy);
                    let drho = kernels::vr_conj(&gy, -self.s(*theta));
                    acc(&mut g, *theta, CMat::from_element(1, 1, c(gt, 0.0)));
                    acc(&mut g, *rho, drho);
                }
                Op::Idle(rho, ch) => acc(&mut g, *rho, ch.apply_adjoint(&gy)),
                Op::Project(rho, q) => acc(&mut g, *rho, kernels::project(&gy, *q)),
                Op::Reset(rho) => acc(&mut g, *rho, kernels::reset_adjoint(&gy)),
            }
        }
        Ok(Gradients { g })
    }
}

/// Result of [`Tape::backward`]; only leaves keep their cotangent.
#[derive(Debug, Clone)]
pub struct Gradients {
    g: Vec<Option<CMat>>,
}

impl Gradients {
    pub fn wrt(&self, x: Var) -> Option<&CMat> {
        self.g.get(x.0).and_then(|o| o.as_ref())
    }

    /// Real gradient of a real-valued leaf; zeros if it was unreachable.
    pub fn real(&self, x: Var, shape: (usize, usize)) -> DMatrix<f64> {
        match self.wrt(x) {
            Some(m) => m.map(|z| z.re),
            None => DMatrix::zeros(shape.0, shape.1),
        }
    }

    pub fn scalar(&self, x: Var) -> f64 {
        self.wrt(x).map_or(0.0, |m| m[(0, 0)].re)
    }
}

impl Backend for Tape {
    type M = Var;

    fn constant(&mut self, m: CMat) -> Var {
        self.nodes.push(Node {
            value: m,
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn param(&mut self, m: CMat) -> Var {
        self.nodes.push(Node {
            value: m,
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn value<'a>(&'a self, x: &'a Var) -> &'a CMat {
        self.v(*x)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.v(*a) + self.v(*b);
        self.push(v, Op::Add(*a, *b), &[*a, *b])
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.v(*a) - self.v(*b);
        self.push(v, Op::Sub(*a, *b), &[*a, *b])
    }

    fn add_const(&mut self, a: &Var, k: &CMat) -> Var {
        let v = self.v(*a) + k;
        self.push(v, Op::AddConst(*a), &[*a])
    }

    fn scale(&mut self, a: &Var, s: f64) -> Var {
        let v = self.v(*a) * c(s, 0.0);
        self.push(v, Op::Scale(*a, s), &[*a])
    }

    fn mul_scalar(&mut self, a: &Var, s: &Var) -> Var {
        let v = self.v(*a) * self.v(*s)[(0, 0)];
        self.push(v, Op::MulScalar(*a, *s), &[*a, *s])
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.v(*a) * self.v(*b);
        self.push(v, Op::MatMul(*a, *b), &[*a, *b])
    }

    fn hadamard(&mut self, a: &Var, b: &Var) -> Var {
        let v = self.v(*a).component_mul(self.v(*b));
        self.push(v, Op::Hadamard(*a, *b), &[*a, *b])
    }

    fn map_real(&mut self, a: &Var, f: RealFn) -> Var {
        let v = self.v(*a).map(|z| c(f.eval(z.re), 0.0));
        self.push(v, Op::Real(*a, f), &[*a])
    }

    fn element(&mut self, a: &Var, i: usize, j: usize) -> Var {
        let v = CMat::from_element(1, 1, self.v(*a)[(i, j)]);
        self.push(v, Op::Element(*a, i, j), &[*a])
    }

    fn re(&mut self, a: &Var) -> Var {
        let v = self.v(*a).map(|z| c(z.re, 0.0));
        self.push(v, Op::Re(*a), &[*a])
    }

    fn trace(&mut self, a: &Var) -> Var {
        let v = CMat::from_element(1, 1, self.v(*a).trace());
        self.push(v, Op::Trace(*a), &[*a])
    }

    fn trace_with(&mut self, a: &Var, k: &Arc<CMat>) -> Var {
        let v = CMat::from_element(1, 1, trace_product(k, self.v(*a)));
        self.push(v, Op::TraceWith(*a, k.clone()), &[*a])
    }

    fn rotation(&mut self, phi: &Var, theta: &Var) -> Var {
        let v = kernels::rotation(self.s(*phi), self.s(*theta));
        self.push(v, Op::Rotation(*phi, *theta), &[*phi, *theta])
    }

    fn displacement(&mut self, re: &Var, im: &Var, n_fock: usize) -> Var {
        let zeta = c(self.s(*re), self.s(*im));
        crate::fock::truncation_guard(zeta, n_fock);
        let generator = displacement_generator(zeta, n_fock);
        let v = expm(&generator);
        self.push(
            v,
            Op::Displacement {
                re: *re,
                im: *im,
                generator,
            },
            &[*re, *im],
        )
    }

    fn apply_qubit(&mut self, rho: &Var, r: &Var) -> Var {
        let v = kernels::qubit_conj(self.v(*rho), self.v(*r));
        self.push(v, Op::Qubit(*rho, *r), &[*rho, *r])
    }

    fn apply_ecd(&mut self, rho: &Var, d: &Var) -> Var {
        let v = kernels::ecd_conj(self.v(*rho), self.v(*d));
        self.push(v, Op::Ecd(*rho, *d), &[*rho, *d])
    }

    fn apply_cavity(&mut self, rho: &Var, u: &Arc<CMat>) -> Var {
        let v = kernels::cavity_conj(self.v(*rho), u);
        self.push(v, Op::Cavity(*rho, u.clone()), &[*rho])
    }

    fn apply_vr(&mut self, rho: &Var, theta: &Var) -> Var {
        let v = kernels::vr_conj(self.v(*rho), self.s(*theta));
        self.push(v, Op::Vr(*rho, *theta), &[*rho, *theta])
    }

    fn idle(&mut self, rho: &Var, ch: &Arc<IdleChannel>) -> Var {
        let v = ch.apply(self.v(*rho));
        self.push(v, Op::Idle(*rho, ch.clone()), &[*rho])
    }

    fn project(&mut self, rho: &Var, q: usize) -> Var {
        let v = kernels::project(self.v(*rho), q);
        self.push(v, Op::Project(*rho, q), &[*rho])
    }

    fn reset(&mut self, rho: &Var) -> Var {
        let v = kernels::reset(self.v(*rho));
        self.push(v, Op::Reset(*rho), &[*rho])
    }
}
