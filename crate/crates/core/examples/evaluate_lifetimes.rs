//! Measures logical lifetimes of −X, −Y and +Z under the standard and the
//! autonomous schedules, with the aggregate lifetime and per-cycle channel
//! infidelities.
//!
//!     cargo run --release --example evaluate_lifetimes -- [n_fock] [n_cycles]

use gkp_qec::evaluation::{pauli_series, LifetimeSummary, RunConfig};
use gkp_qec::fock::HilbertConfig;
use gkp_qec::gkp::{GkpStateSpec, LogicalLabel};
use gkp_qec::lindblad::{HamiltonianParams, IntegratorConfig, NoiseModel};
use gkp_qec::policies::Policy;
use gkp_qec::sbs::{Circuit, Schedule};

fn main() -> gkp_qec::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_fock: usize = args.next().map_or(40, |s| s.parse().expect("n_fock"));
    let n_cycles: usize = args.next().map_or(30, |s| s.parse().expect("n_cycles"));
    let cfg = HilbertConfig::new(n_fock)?;
    let run = RunConfig {
        n_cycles,
        n_batches: 4,
        batch_size: 8,
        seed: 0,
    };
    let integrator = IntegratorConfig::new(IntegratorConfig::DEFAULT_DT)?;
    for (name, schedule) in [
        ("standard", Schedule::standard()),
        ("autonomous", Schedule::autonomous()),
    ] {
        let circ = Circuit::new(
            cfg,
            schedule,
            NoiseModel::high(),
            HamiltonianParams::disabled(),
            integrator,
        )?;
        let mut fits = Vec::new();
        for label in [LogicalLabel::MinusX, LogicalLabel::MinusY, LogicalLabel::PlusZ] {
            let spec = GkpStateSpec::new(label, 0.34, cfg).with_truncation_tolerance(1e-2);
            fits.push((label, pauli_series(&circ, &Policy::standard(), &spec, &run)?.fit()?));
        }
        let s = LifetimeSummary::from_fits(&fits);
        println!("{name}:");
        for (label, fit) in &s.lifetimes {
            println!("  T({label}) = {:.1}", fit.t());
        }
        println!(
            "  aggregate {:.1}  1-F per cycle {:.2e}  1-F_e per cycle {:.2e}",
            s.aggregate_lifetime.unwrap_or(f64::INFINITY),
            s.channel_infidelity_per_cycle.unwrap_or(f64::NAN),
            s.entanglement_infidelity_per_cycle.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
