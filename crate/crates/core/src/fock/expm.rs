//! Complex matrix exponential by scaling and squaring.
//!
//! Two cores are provided. [`expm`] uses the degree-13 Padé approximant with
//! the Higham (2005) scaling threshold and is the workhorse for gate
//! construction. [`expm_taylor`] sums the Taylor series of the scaled matrix
//! until the next term drops below a requested tolerance; it is slower and is
//! used as an independent reference.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::CMat;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

pub(crate) fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scaled(a: &CMat, s: f64) -> CMat {
    a.map(|z| z * s)
}

/// exp(A) via Padé(13) scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let norm = norm1(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let a = scaled(a, 0.5f64.powi(squarings as i32));

    let ident = CMat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);

    let u_inner = &a6 * (a6.map(|z| z * b(13)) + a4.map(|z| z * b(11)) + a2.map(|z| z * b(9)));
    let u_tail = a6.map(|z| z * b(7)) + a4.map(|z| z * b(5)) + a2.map(|z| z * b(3)) + ident.map(|z| z * b(1));
    let u = &a * (u_inner + u_tail);

    let v_inner = &a6 * (a6.map(|z| z * b(12)) + a4.map(|z| z * b(10)) + a2.map(|z| z * b(8)));
    let v = v_inner + a6.map(|z| z * b(6)) + a4.map(|z| z * b(4)) + a2.map(|z| z * b(2)) + ident.map(|z| z * b(0));

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// exp(A) by scaled Taylor summation, stopping once a term's 1-norm falls
/// below `tol` times the running sum's 1-norm.
pub fn expm_taylor(a: &CMat, tol: f64) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    let norm = norm1(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let a = scaled(a, 0.5f64.powi(squarings as i32));
    let mut sum = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for k in 1..200 {
        term = (&term * &a).map(|z| z / k as f64);
        sum += &term;
        if norm1(&term) <= tol * norm1(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Fréchet derivative of the exponential at `a` in direction `e`, read off
/// the upper-right block of exp([[A, E], [0, A]]).
pub fn expm_frechet(a: &CMat, e: &CMat) -> CMat {
    let n = a.nrows();
    let mut block = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((n, n), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, n)).copy_from(e);
    let big = expm(&block);
    big.view((0, n), (n, n)).into_owned()
}
