//! Runs stochastic error-correction trajectories of +Z with the standard
//! parameters and prints the frame-corrected ⟨Z_L⟩ decay with its fitted
//! lifetime.
//!
//!     cargo run --release --example run_qec -- [n_fock] [n_cycles] [noise]

use gkp_qec::evaluation::{pauli_series, RunConfig};
use gkp_qec::fock::HilbertConfig;
use gkp_qec::gkp::{GkpStateSpec, LogicalLabel};
use gkp_qec::lindblad::NoiseModel;
use gkp_qec::policies::Policy;
use gkp_qec::sbs::Circuit;

fn main() -> gkp_qec::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_fock: usize = args.next().map_or(40, |s| s.parse().expect("n_fock"));
    let n_cycles: usize = args.next().map_or(20, |s| s.parse().expect("n_cycles"));
    let noise = NoiseModel::preset(&args.next().unwrap_or_else(|| "low".into()))?;

    let cfg = HilbertConfig::new(n_fock)?;
    let spec = GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg).with_truncation_tolerance(1e-2);
    let circ = Circuit::with_noise(cfg, noise)?;
    let run = RunConfig {
        n_cycles,
        n_batches: 4,
        batch_size: 8,
        seed: 0,
    };
    let series = pauli_series(&circ, &Policy::standard(), &spec, &run)?;
    println!("cycle,mean,std");
    for ((t, m), s) in series.times.iter().zip(&series.mean).zip(&series.std) {
        println!("{t},{m:.5},{s:.5}");
    }
    match series.fit()?.lifetime {
        Some(t) => println!("lifetime: {t:.1} cycles"),
        None => println!("lifetime: not resolved over {n_cycles} cycles"),
    }
    Ok(())
}
