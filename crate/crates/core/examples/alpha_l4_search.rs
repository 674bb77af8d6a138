//! Grid search for the fixed layer-4 cavity displacement.
//!
//! Scores each candidate by the exact expected fidelity of the standard
//! circuit after two full cycles at zero noise, averaged over the six
//! logical states.
//!
//!     cargo run --release --example alpha_l4_search -- [n_fock]

use gkp_qec::fock::DensityMatrix;
use gkp_qec::fock::{c, HilbertConfig};
use gkp_qec::gkp::{logical_ket, GkpStateSpec, LogicalLabel};
use gkp_qec::lindblad::NoiseModel;
use gkp_qec::policies::Policy;
use gkp_qec::sbs::{enumerate_branches, Circuit};
use num_complex::Complex64;

fn main() -> gkp_qec::Result<()> {
    let n_fock: usize = std::env::args().nth(1).map_or(60, |s| s.parse().expect("n_fock"));
    let cfg = HilbertConfig::new(n_fock)?;
    let states: Vec<DensityMatrix> = LogicalLabel::ALL
        .iter()
        .map(|&l| {
            let spec = GkpStateSpec::new(l, 0.34, cfg).with_truncation_tolerance(1e-3);
            Ok(DensityMatrix::from_pure(&logical_ket(&spec)?).with_ground_qubit())
        })
        .collect::<gkp_qec::Result<_>>()?;
    let base = Circuit::with_noise(cfg, NoiseModel::noiseless())?;
    let policy = Policy::standard();

    let mut grid = vec![c(0.0, 0.0)];
    for a in [0.05, 0.1, 0.2, 0.3] {
        grid.extend([c(a, 0.0), c(-a, 0.0), c(0.0, a), c(0.0, -a)]);
    }
    let mut best = (f64::NEG_INFINITY, Complex64::new(0.0, 0.0));
    println!("alpha_re,alpha_im,fidelity");
    for alpha in grid {
        let circ = base.clone().with_alpha_l4(alpha);
        let mut total = 0.0;
        for rho in &states {
            let branches = enumerate_branches(&circ, &policy, rho, 4, None, false)?;
            total += branches.iter().map(|b| b.probability * b.return_value).sum::<f64>();
        }
        let f = total / states.len() as f64;
        println!("{:+.2},{:+.2},{f:.6}", alpha.re, alpha.im);
        if f > best.0 {
            best = (f, alpha);
        }
    }
    println!("best: alpha = {} with fidelity {:.6}", best.1, best.0);
    Ok(())
}
