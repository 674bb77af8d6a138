use gkp_qec::fock::HilbertConfig;
use gkp_qec::gkp::{GkpStateSpec, LogicalLabel};
use gkp_qec::grape::{
    episode_gradient, exact_gradient, exact_value, optimize_lookup, train_agent, Estimator, LookupConfig, Resume, Task,
    TrainConfig,
};
use gkp_qec::lindblad::NoiseModel;
use gkp_qec::policies::{BiasInit, Policy};
use gkp_qec::sbs::{Circuit, Mode, N_PARAMS, STANDARD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn task(n_fock: usize, noise: NoiseModel, n_half: usize) -> Task {
    let cfg = HilbertConfig::new(n_fock).unwrap();
    let spec = GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg).with_truncation_tolerance(0.05);
    let mut t = Task::new(Circuit::with_noise(cfg, noise).unwrap(), &spec, 1).unwrap();
    t.n_half = n_half;
    t
}

#[test]
fn sampled_gradient_is_unbiased() {
    let t = task(20, NoiseModel::high(), 1);
    let mut row = STANDARD;
    for (i, v) in row.iter_mut().enumerate() {
        *v += 0.05 * (i as f64).cos();
    }
    let policy = Policy::open_loop(&[row]).unwrap();
    let (_, exact) = exact_gradient(&t, &policy).unwrap();

    let n = 10_000;
    let mut sum = [0.0; N_PARAMS];
    let mut sq = [0.0; N_PARAMS];
    for k in 0..n {
        let s = episode_gradient(&t, &policy, &Mode::Stochastic { seed: 0, stream: k }).unwrap();
        for j in 0..N_PARAMS {
            sum[j] += s.grad[j];
            sq[j] += s.grad[j] * s.grad[j];
        }
    }
    let n = n as f64;
    for j in 0..N_PARAMS {
        let mean = sum[j] / n;
        let var = (sq[j] / n - mean * mean) * n / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean - exact[j]).abs() <= 3.0 * se + 1e-12,
            "{j}: {mean} vs {} (se {se})",
            exact[j]
        );
    }
}

#[test]
fn noiseless_lookup_matches_trained_gru() {
    let t = task(20, NoiseModel::noiseless(), 2);
    let lookup = optimize_lookup(
        &t,
        &LookupConfig {
            max_iterations: 300,
            ..LookupConfig::default()
        },
    )
    .unwrap();

    let cfg = TrainConfig {
        epochs: 1500,
        learning_rate: 1e-2,
        estimator: Estimator::Exact,
        ..TrainConfig::default()
    };
    let start = Resume {
        policy: Policy::gru_with(4, 16, &mut ChaCha8Rng::seed_from_u64(0), BiasInit::default()),
        optimizer: None,
        epoch: 0,
    };
    let run = train_agent(&t, start, &cfg, 0, 0, |_| {}).unwrap();
    let gru = exact_value(&t, &run.policy).unwrap();
    assert!(run.curve.last().unwrap().infidelity < run.curve[0].infidelity);
    assert!(
        (lookup.value - gru).abs() < 1e-3,
        "lookup {} vs gru {gru}",
        lookup.value
    );
}
