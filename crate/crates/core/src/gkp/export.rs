use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::fock::{c, CMat, CVec};

/// `{"n_fock": N, "re": [...], "im": [...]}`.
pub fn ket_to_json(ket: &CVec) -> serde_json::Value {
    serde_json::json!({
        "n_fock": ket.len(),
        "re": ket.iter().map(|z| z.re).collect::<Vec<_>>(),
        "im": ket.iter().map(|z| z.im).collect::<Vec<_>>(),
    })
}

pub fn ket_to_csv(ket: &CVec) -> String {
    let mut out = String::from("n,re,im\n");
    for (n, z) in ket.iter().enumerate() {
        let _ = writeln!(out, "{n},{:.17e},{:.17e}", z.re, z.im);
    }
    out
}

/// Wigner function W(q, p) of a cavity density matrix on a grid, with
/// q = (a + a†)/√2 so that ∫W dq dp = 1. Rows follow `p`, columns `q`.
///
/// Uses the Laguerre-free iterative recursion over |m⟩⟨n| components.
pub fn wigner_grid(rho: &CMat, qs: &[f64], ps: &[f64]) -> Vec<Vec<f64>> {
    let dim = rho.nrows();
    let mut grid = vec![vec![0.0; qs.len()]; ps.len()];
    let mut wlist = vec![c(0.0, 0.0); dim];
    for (ip, &p) in ps.iter().enumerate() {
        for (iq, &q) in qs.iter().enumerate() {
            let a = Complex64::new(q, p) / 2f64.sqrt();
            let a2 = a * 2.0;
            wlist[0] = c((-2.0 * a.norm_sqr()).exp() / PI, 0.0);
            let mut w = rho[(0, 0)].re * wlist[0].re;
            for n in 1..dim {
                wlist[n] = a2 * wlist[n - 1] / (n as f64).sqrt();
                w += 2.0 * (rho[(0, n)] * wlist[n]).re;
            }
            for m in 1..dim {
                let sm = (m as f64).sqrt();
                let mut temp = wlist[m];
                wlist[m] = (a2.conj() * temp - wlist[m - 1] * sm) / sm;
                w += (rho[(m, m)] * wlist[m]).re;
                for n in m + 1..dim {
                    let temp2 = (a2 * wlist[n - 1] - temp * sm) / (n as f64).sqrt();
                    temp = wlist[n];
                    wlist[n] = temp2;
                    w += 2.0 * (rho[(m, n)] * wlist[n]).re;
                }
            }
            grid[ip][iq] = w;
        }
    }
    grid
}

/// Long-format CSV `q,p,w` for external plotting.
pub fn wigner_csv(rho: &CMat, qs: &[f64], ps: &[f64]) -> String {
    let grid = wigner_grid(rho, qs, ps);
    let mut out = String::from("q,p,w\n");
    for (ip, &p) in ps.iter().enumerate() {
        for (iq, &q) in qs.iter().enumerate() {
            let _ = writeln!(out, "{q:.6},{p:.6},{:.10e}", grid[ip][iq]);
        }
    }
    out
}
