use super::*;
use crate::fock::Operator;
use crate::lindblad::{HamiltonianParams, IntegratorConfig};
use crate::sbs::{Outcome, Schedule, N_PARAMS, STANDARD};

const N: usize = 20;

fn spec(delta: f64) -> GkpStateSpec {
    GkpStateSpec::new(LogicalLabel::PlusZ, delta, HilbertConfig::new(N).unwrap()).with_truncation_tolerance(0.05)
}

fn task(noise: NoiseModel, n_half: usize) -> Task {
    let s = spec(0.34);
    let circ = Circuit::with_noise(s.cfg, noise).unwrap();
    let mut t = Task::new(circ, &s, 1).unwrap();
    t.n_half = n_half;
    t
}

/// Standard parameters with a fixed, non-trivial perturbation per step.
fn perturbed(steps: usize) -> Policy {
    let rows: Vec<[f64; N_PARAMS]> = (0..steps)
        .map(|s| {
            let mut p = STANDARD;
            for (i, v) in p.iter_mut().enumerate() {
                *v += 0.07 * ((i + 3 * s) as f64 * 1.3).sin();
            }
            p
        })
        .collect();
    Policy::open_loop(&rows).unwrap()
}

fn shifted(policy: &Policy, k: usize, h: f64) -> Policy {
    let mut p = policy.clone();
    let mut flat = p.flatten();
    flat[k] += h;
    p.set_flat(&flat).unwrap();
    p
}

fn fd_exact(task: &Task, policy: &Policy, k: usize, h: f64) -> f64 {
    (exact_value(task, &shifted(policy, k, h)).unwrap() - exact_value(task, &shifted(policy, k, -h)).unwrap())
        / (2.0 * h)
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Branch-probability-weighted mean of the per-branch surrogate gradients.
fn tree_average(task: &Task, policy: &Policy) -> Vec<f64> {
    let n = task.n_half;
    let mut total = vec![0.0; policy.n_params()];
    for bits in 0..(1usize << n) {
        let outcomes: Vec<Outcome> = (0..n)
            .map(|k| if bits >> k & 1 == 1 { Outcome::E } else { Outcome::G })
            .collect();
        let s = episode_gradient(task, policy, &Mode::Forced(outcomes)).unwrap();
        let p = s.log_prob.exp();
        for (a, g) in total.iter_mut().zip(&s.grad) {
            *a += p * g;
        }
    }
    total
}

#[test]
#[allow(clippy::needless_range_loop)]
fn deterministic_branch_is_pathwise() {
    let s = spec(0.34);
    let circ = Circuit::new(
        s.cfg,
        Schedule::autonomous(),
        NoiseModel::medium(),
        HamiltonianParams::disabled(),
        IntegratorConfig::new(IntegratorConfig::DEFAULT_DT).unwrap(),
    )
    .unwrap();
    let mut t = Task::new(circ, &s, 1).unwrap();
    t.n_half = 1;
    let policy = perturbed(1);
    let sample = episode_gradient(&t, &policy, &Mode::Autonomous).unwrap();
    assert_eq!(sample.log_prob, 0.0);
    let (v, exact) = exact_gradient(&t, &policy).unwrap();
    assert!((v - sample.return_value).abs() < 1e-12);
    for k in 0..N_PARAMS {
        assert!((exact[k] - sample.grad[k]).abs() < 1e-12);
        let fd = fd_exact(&t, &policy, k, 1e-5);
        assert!(rel(sample.grad[k], fd, 1e-6) < 1e-4, "{k}: {} vs {fd}", sample.grad[k]);
    }
}

#[test]
fn constant_return_has_zero_expected_score() {
    let mut t = task(NoiseModel::medium(), 1);
    let one = joint_observable(&Operator::identity(N));
    t.objective_obs = one;
    let policy = perturbed(1);
    let g = episode_gradient(&t, &policy, &Mode::Forced(vec![Outcome::G])).unwrap();
    let e = episode_gradient(&t, &policy, &Mode::Forced(vec![Outcome::E])).unwrap();
    assert!((g.return_value - 1.0).abs() < 1e-10);
    assert!(g.grad.iter().any(|v| v.abs() > 1e-3));
    let (pg, pe) = (g.log_prob.exp(), e.log_prob.exp());
    assert!((pg + pe - 1.0).abs() < 1e-10);
    for k in 0..N_PARAMS {
        let mean = pg * g.grad[k] + pe * e.grad[k];
        assert!(mean.abs() < 1e-9, "{k}: {mean}");
    }
}

#[test]
fn one_half_cycle_estimator_matches_exact_gradient() {
    let t = task(NoiseModel::medium(), 1);
    let policy = perturbed(1);
    let est = tree_average(&t, &policy);
    let (_, exact) = exact_gradient(&t, &policy).unwrap();
    for k in 0..N_PARAMS {
        let fd = fd_exact(&t, &policy, k, 1e-5);
        assert!(rel(est[k], fd, 1e-6) < 1e-3, "{k}: {} vs {fd}", est[k]);
        assert!(
            (exact[k] - est[k]).abs() < 1e-12 + 1e-8 * est[k].abs(),
            "{k}: {} vs {}",
            exact[k],
            est[k]
        );
    }
}

#[test]
fn lookup_gradient_matches_finite_differences() {
    let t = task(NoiseModel::high(), 2);
    let mut policy = Policy::lookup(2).unwrap();
    let n = policy.n_params();
    policy
        .set_flat(&(0..n).map(|i| 0.3 * (i as f64 * 0.7).cos()).collect::<Vec<_>>())
        .unwrap();
    let (_, g) = exact_gradient(&t, &policy).unwrap();
    for k in (0..n).step_by(2) {
        let fd = fd_exact(&t, &policy, k, 1e-5);
        assert!(rel(g[k], fd, 1e-6) < 1e-4, "{k}: {} vs {fd}", g[k]);
    }
}

#[test]
fn empty_batch_is_rejected() {
    let t = task(NoiseModel::medium(), 2);
    assert!(matches!(batch_gradient(&t, &perturbed(2), &[]), Err(Error::EmptyBatch)));
    assert!(train_agent(
        &t,
        Resume {
            policy: Policy::standard(),
            optimizer: None,
            epoch: 0
        },
        &TrainConfig::default(),
        0,
        0,
        |_| {}
    )
    .is_err());
}

#[test]
fn adam_climbs_a_quadratic() {
    let mut opt = Adam::new(2, 0.05);
    let mut x = [3.0, -2.0];
    for _ in 0..2000 {
        let g = [-2.0 * (x[0] - 1.0), -2.0 * (x[1] + 0.5)];
        opt.ascend(&mut x, &g).unwrap();
    }
    assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3, "{x:?}");
    assert!(opt.ascend(&mut x, &[0.0]).is_err());
}

#[test]
fn divergence_guard_needs_consecutive_epochs() {
    let mut g = DivergenceGuard::default();
    assert!(!g.observe(0.01));
    for _ in 0..DIVERGENCE_PATIENCE - 1 {
        assert!(!g.observe(0.2));
    }
    assert!(!g.observe(0.05));
    for _ in 0..DIVERGENCE_PATIENCE - 1 {
        assert!(!g.observe(0.5));
    }
    assert!(g.observe(0.5));
}

#[test]
fn frame_labels() {
    assert_eq!(frame_label(LogicalLabel::PlusZ, 1), LogicalLabel::MinusZ);
    assert_eq!(frame_label(LogicalLabel::PlusZ, 2), LogicalLabel::PlusZ);
    assert_eq!(frame_label(LogicalLabel::MinusX, 3), LogicalLabel::PlusX);
    assert_eq!(frame_label(LogicalLabel::MinusY, 1), LogicalLabel::MinusY);
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 3,
        n_cycles_train: 1,
        learning_rate: 0.01,
        noise_preset: "high".into(),
        n_fock: N,
        truncation_tolerance: 0.05,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible_and_resumable() {
    let cfg = small_config();
    let (t, _) = training_task(&cfg).unwrap();
    let init = Policy::fnn_with(4, &mut ChaCha8Rng::seed_from_u64(1), BiasInit::Uniform(0.1));
    let fresh = || Resume {
        policy: init.clone(),
        optimizer: None,
        epoch: 0,
    };
    let a = train_agent(&t, fresh(), &cfg, 0, 9, |_| {}).unwrap();
    let b = train_agent(&t, fresh(), &cfg, 0, 9, |_| {}).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.curve.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_ne!(a.policy, init);

    let first = train_agent(
        &t,
        fresh(),
        &TrainConfig {
            epochs: 1,
            ..cfg.clone()
        },
        0,
        9,
        |_| {},
    )
    .unwrap();
    let resumed = Resume {
        policy: first.policy,
        optimizer: Some(first.optimizer),
        epoch: 1,
    };
    let rest = train_agent(&t, resumed, &TrainConfig { epochs: 2, ..cfg }, 0, 9, |_| {}).unwrap();
    assert_eq!(rest.curve[0].epoch, 1);
    assert_eq!(rest.policy, a.policy);
}

#[test]
fn gradient_ascent_improves_the_exact_return() {
    let t = task(NoiseModel::high(), 2);
    let mut cfg = small_config();
    cfg.estimator = Estimator::Exact;
    cfg.epochs = 15;
    cfg.learning_rate = 0.02;
    let init = perturbed(2);
    let before = exact_value(&t, &init).unwrap();
    let start = Resume {
        policy: init,
        optimizer: None,
        epoch: 0,
    };
    let run = train_agent(&t, start, &cfg, 0, 0, |_| {}).unwrap();
    let after = exact_value(&t, &run.policy).unwrap();
    assert!(after > before + 1e-3, "{before} → {after}");
    assert!(run.curve.last().unwrap().infidelity < run.curve[0].infidelity);
}

#[test]
fn lookup_optimum_is_at_least_standard() {
    let t = task(NoiseModel::high(), 2).with_objective(Objective::Pauli(PauliAxis::Z));
    let std_value = exact_value(&t, &Policy::standard()).unwrap();
    let cfg = LookupConfig {
        max_iterations: 30,
        ..LookupConfig::default()
    };
    let res = optimize_lookup(&t, &cfg).unwrap();
    assert!((res.initial_value - std_value).abs() < 1e-12);
    assert!(res.value >= std_value);
    assert!((exact_value(&t, &res.policy).unwrap() - res.value).abs() < 1e-12);
}

#[test]
fn curve_csv_layout() {
    let mut buf = Vec::new();
    write_curve_csv(
        &mut buf,
        &[EpochRecord {
            epoch: 0,
            infidelity: 0.1,
            z: 0.8,
        }],
    )
    .unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "epoch,infidelity,z\n0,0.1,0.8\n");
}
