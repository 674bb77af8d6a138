//! Enumerates the outcome tree of a short error-correction run and optimizes
//! a lookup table of per-history parameters against the exact expected ⟨Z_L⟩.
//!
//!     cargo run --release --example lookup_table -- [n_cycles] [iterations]

use gkp_qec::gkp::{LogicalLabel, PauliAxis};
use gkp_qec::grape::{optimize_lookup, training_task, LookupConfig, Objective, TrainConfig};
use gkp_qec::policies::Policy;
use gkp_qec::sbs::enumerate_branches;

fn main() -> gkp_qec::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_cycles: usize = args.next().map_or(2, |s| s.parse().expect("n_cycles"));
    let iterations: usize = args.next().map_or(60, |s| s.parse().expect("iterations"));
    let cfg = TrainConfig {
        n_cycles_train: n_cycles,
        noise_preset: "high".into(),
        n_fock: 25,
        truncation_tolerance: 1e-2,
        ..TrainConfig::default()
    };
    let (task, spec) = training_task(&cfg)?;
    assert_eq!(spec.label, LogicalLabel::PlusZ);
    let task = task.with_objective(Objective::Pauli(PauliAxis::Z));

    let branches = enumerate_branches(
        &task.circuit,
        &Policy::standard(),
        &task.rho0,
        task.n_half,
        Some(&task.z_obs),
        false,
    )?;
    println!("outcomes,probability,z");
    for b in &branches {
        println!(
            "{},{:.6},{:+.5}",
            b.label(),
            b.probability,
            b.observable.unwrap_or(f64::NAN)
        );
    }

    let res = optimize_lookup(
        &task,
        &LookupConfig {
            max_iterations: iterations,
            ..LookupConfig::default()
        },
    )?;
    println!(
        "standard ⟨Z⟩ {:.5}  lookup ⟨Z⟩ {:.5}  after {} iterations",
        res.initial_value, res.value, res.iterations
    );
    Ok(())
}
