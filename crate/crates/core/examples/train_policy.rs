//! Trains a small GRU feedback policy with sampled Feedback-GRAPE gradients
//! and compares its exact two-cycle fidelity with the standard parameters.
//!
//!     cargo run --release --example train_policy -- [epochs]

use gkp_qec::grape::{exact_value, train_agent, training_task, Resume, TrainConfig};
use gkp_qec::policies::{BiasInit, Policy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gkp_qec::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(40, |s| s.parse().expect("epochs"));
    let cfg = TrainConfig {
        epochs,
        n_cycles_train: 2,
        learning_rate: 1e-3,
        noise_preset: "high".into(),
        n_fock: 25,
        truncation_tolerance: 1e-2,
        ..TrainConfig::default()
    };
    let (task, _) = training_task(&cfg)?;
    let init = Policy::gru_with(4, 32, &mut ChaCha8Rng::seed_from_u64(0), BiasInit::default());
    let start = Resume {
        policy: init,
        optimizer: None,
        epoch: 0,
    };
    let run = train_agent(&task, start, &cfg, 0, 1, |r| {
        if r.epoch % 10 == 0 {
            println!("epoch {:>4}  batch infidelity {:.5}", r.epoch, r.infidelity);
        }
    })?;
    println!("standard: {:.5}", exact_value(&task, &Policy::standard())?);
    println!("trained:  {:.5}", exact_value(&task, &run.policy)?);
    Ok(())
}
