//! Forward maps of the circuit primitives and the pieces of their reverse
//! rules. Joint matrices use the cavity ⊗ qubit ordering `n * 2 + q`.

use num_complex::Complex64;

use crate::fock::{c, CMat};

/// The N×N cavity block ⟨·, a| M |·, b⟩ of a joint matrix.
pub(crate) fn block(m: &CMat, a: usize, b: usize) -> CMat {
    let n = m.nrows() / 2;
    CMat::from_fn(n, n, |i, j| m[(2 * i + a, 2 * j + b)])
}

pub(crate) fn assemble(gg: &CMat, ge: &CMat, eg: &CMat, ee: &CMat) -> CMat {
    let n = gg.nrows();
    let mut out = CMat::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            out[(2 * i, 2 * j)] = gg[(i, j)];
            out[(2 * i, 2 * j + 1)] = ge[(i, j)];
            out[(2 * i + 1, 2 * j)] = eg[(i, j)];
            out[(2 * i + 1, 2 * j + 1)] = ee[(i, j)];
        }
    }
    out
}

/// R(φ, θ) = exp(−iθ/2 (σx cos φ + σy sin φ)).
pub(crate) fn rotation(phi: f64, theta: f64) -> CMat {
    let (s, co) = (0.5 * theta).sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    CMat::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s) * e.conj(), c(0.0, -s) * e, c(co, 0.0)])
}

/// (∂R/∂φ, ∂R/∂θ).
pub(crate) fn rotation_partials(phi: f64, theta: f64) -> (CMat, CMat) {
    let (s, co) = (0.5 * theta).sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    let dphi = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), -e.conj() * s, e * s, c(0.0, 0.0)]);
    let dtheta = CMat::from_row_slice(
        2,
        2,
        &[
            c(-0.5 * s, 0.0),
            c(0.0, -0.5 * co) * e.conj(),
            c(0.0, -0.5 * co) * e,
            c(-0.5 * s, 0.0),
        ],
    );
    (dphi, dtheta)
}

#[inline]
fn qblock(m: &CMat, n: usize, k: usize) -> [[Complex64; 2]; 2] {
    [
        [m[(2 * n, 2 * k)], m[(2 * n, 2 * k + 1)]],
        [m[(2 * n + 1, 2 * k)], m[(2 * n + 1, 2 * k + 1)]],
    ]
}

#[inline]
fn mul2(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut o = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    o
}

#[inline]
fn adj2(a: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

fn to2(r: &CMat) -> [[Complex64; 2]; 2] {
    [[r[(0, 0)], r[(0, 1)]], [r[(1, 0)], r[(1, 1)]]]
}

/// (I ⊗ R) ρ (I ⊗ R)†.
pub(crate) fn qubit_conj(rho: &CMat, r: &CMat) -> CMat {
    let n = rho.nrows() / 2;
    let r2 = to2(r);
    let rh = adj2(&r2);
    let mut out = CMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        for m in 0..n {
            let y = mul2(&mul2(&r2, &qblock(rho, m, k)), &rh);
            for a in 0..2 {
                for b in 0..2 {
                    out[(2 * m + a, 2 * k + b)] = y[a][b];
                }
            }
        }
    }
    out
}

/// Cotangent of R for Y = (I ⊗ R) ρ (I ⊗ R)†.
pub(crate) fn qubit_conj_grad_r(rho: &CMat, r: &CMat, gbar: &CMat) -> CMat {
    let n = rho.nrows() / 2;
    let r2 = to2(r);
    let mut acc = [[Complex64::new(0.0, 0.0); 2]; 2];
    for k in 0..n {
        for m in 0..n {
            let g = qblock(gbar, m, k);
            let x = qblock(rho, m, k);
            let t1 = mul2(&mul2(&g, &r2), &adj2(&x));
            let t2 = mul2(&mul2(&adj2(&g), &r2), &x);
            for a in 0..2 {
                for b in 0..2 {
                    acc[a][b] += t1[a][b] + t2[a][b];
                }
            }
        }
    }
    CMat::from_row_slice(2, 2, &[acc[0][0], acc[0][1], acc[1][0], acc[1][1]])
}

/// ECD(β) ρ ECD(β)† with D = D(β/2). ECD is Hermitian, so the same map is
/// its own reverse rule for ρ.
pub(crate) fn ecd_conj(rho: &CMat, d: &CMat) -> CMat {
    let dh = d.adjoint();
    let gg = block(rho, 0, 0);
    let ge = block(rho, 0, 1);
    let eg = block(rho, 1, 0);
    let ee = block(rho, 1, 1);
    assemble(&(&dh * &ee * d), &(&dh * &eg * &dh), &(d * &ge * d), &(d * &gg * &dh))
}

/// Cotangent of D for Y = ECD ρ ECD†.
pub(crate) fn ecd_grad_d(rho: &CMat, d: &CMat, gbar: &CMat) -> CMat {
    let dh = d.adjoint();
    let (rgg, rge, reg, ree) = (block(rho, 0, 0), block(rho, 0, 1), block(rho, 1, 0), block(rho, 1, 1));
    let (ygg, yge, yeg, yee) = (
        block(gbar, 0, 0),
        block(gbar, 0, 1),
        block(gbar, 1, 0),
        block(gbar, 1, 1),
    );
    let u_eg =
        &yeg * &dh * rge.adjoint() + &yee * d * rgg.adjoint() + yge.adjoint() * &dh * &reg + yee.adjoint() * d * &rgg;
    let u_ge =
        &ygg * &dh * ree.adjoint() + &yge * d * reg.adjoint() + ygg.adjoint() * &dh * &ree + yeg.adjoint() * d * &rge;
    u_eg + u_ge.adjoint()
}

/// (U ⊗ I) ρ (U ⊗ I)†.
pub(crate) fn cavity_conj(rho: &CMat, u: &CMat) -> CMat {
    let uh = u.adjoint();
    let f = |a, b| u * block(rho, a, b) * &uh;
    assemble(&f(0, 0), &f(0, 1), &f(1, 0), &f(1, 1))
}

/// VR(θ) ρ VR(θ)† with VR(θ) = exp(iθn).
pub(crate) fn vr_conj(rho: &CMat, theta: f64) -> CMat {
    CMat::from_fn(rho.nrows(), rho.ncols(), |i, j| {
        let dn = (i / 2) as f64 - (j / 2) as f64;
        rho[(i, j)] * Complex64::from_polar(1.0, theta * dn)
    })
}

/// Cotangent of θ for Y = vr_conj(ρ, θ), given Y.
pub(crate) fn vr_grad_theta(y: &CMat, gbar: &CMat) -> f64 {
    let mut acc = 0.0;
    for j in 0..y.ncols() {
        for i in 0..y.nrows() {
            let dn = (i / 2) as f64 - (j / 2) as f64;
            if dn != 0.0 {
                acc += (gbar[(i, j)].conj() * c(0.0, dn) * y[(i, j)]).re;
            }
        }
    }
    acc
}

/// (I ⊗ |q⟩⟨q|) ρ (I ⊗ |q⟩⟨q|).
pub(crate) fn project(rho: &CMat, q: usize) -> CMat {
    CMat::from_fn(rho.nrows(), rho.ncols(), |i, j| {
        if i % 2 == q && j % 2 == q {
            rho[(i, j)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Tr_q(ρ) ⊗ |g⟩⟨g|.
pub(crate) fn reset(rho: &CMat) -> CMat {
    CMat::from_fn(rho.nrows(), rho.ncols(), |i, j| {
        if i % 2 == 0 && j % 2 == 0 {
            rho[(i, j)] + rho[(i + 1, j + 1)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub(crate) fn reset_adjoint(g: &CMat) -> CMat {
    CMat::from_fn(g.nrows(), g.ncols(), |i, j| {
        if i % 2 == j % 2 {
            g[(i - i % 2, j - j % 2)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Re Σ conj(a) ∘ b, the real inner product of two complex matrices.
pub(crate) fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}
