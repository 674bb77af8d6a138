//! Prepares finite-energy GKP logical states and prints their mean photon
//! number, stabilizer and Pauli expectations.
//!
//!     cargo run --release --example prepare_state -- [n_fock] [delta]

use gkp_qec::fock::HilbertConfig;
use gkp_qec::gkp::{
    logical_expectation, logical_state, mean_photon, pauli_operator, stabilizer, GkpStateSpec, LogicalLabel, PauliAxis,
    StabilizerAxis,
};

fn main() -> gkp_qec::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_fock: usize = args.next().map_or(60, |s| s.parse().expect("n_fock"));
    let delta: f64 = args.next().map_or(0.34, |s| s.parse().expect("delta"));
    let cfg = HilbertConfig::new(n_fock)?;

    println!("state,n,S_X,S_Z,X,Y,Z");
    for label in LogicalLabel::ALL {
        let spec = GkpStateSpec::new(label, delta, cfg).with_truncation_tolerance(1e-2);
        let rho = logical_state(&spec)?;
        let s = |w| logical_expectation(&rho, &stabilizer(&spec.lattice, w, &cfg));
        let p = |w| logical_expectation(&rho, &pauli_operator(&spec.lattice, w, &cfg));
        println!(
            "{label},{:.4},{:.4},{:.4},{:+.4},{:+.4},{:+.4}",
            mean_photon(&rho),
            s(StabilizerAxis::X)?,
            s(StabilizerAxis::Z)?,
            p(PauliAxis::X)?,
            p(PauliAxis::Y)?,
            p(PauliAxis::Z)?,
        );
    }
    Ok(())
}
