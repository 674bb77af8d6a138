use super::*;
use crate::autodiff::{Backend, Plain};
use crate::fock::{pauli_x, DensityMatrix, HilbertConfig};
use crate::gkp::{logical_state, pauli_operator, CodeLattice, GkpStateSpec, LogicalLabel, PauliAxis};
use crate::lindblad::{HamiltonianParams, IntegratorConfig, NoiseModel};
use crate::policies::Policy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

const N: usize = 40;

fn cfg(n: usize) -> HilbertConfig {
    HilbertConfig::new(n).unwrap()
}

fn gkp(label: LogicalLabel) -> DensityMatrix {
    let spec = GkpStateSpec::new(label, 0.34, cfg(N)).with_truncation_tolerance(1e-3);
    logical_state(&spec).unwrap().with_ground_qubit()
}

fn circuit(noise: NoiseModel) -> Circuit {
    Circuit::with_noise(cfg(N), noise).unwrap()
}

fn coherent(alpha: Complex64, n: usize) -> CVec {
    displacement(alpha, &cfg(n)).matrix().column(0).into_owned()
}

fn max_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_density(d: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let a = CMat::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::new(Operator::from_raw(m / tr)).unwrap()
}

#[test]
fn ecd_at_zero_is_qubit_flip() {
    let u = gate_ecd(c(0.0, 0.0), &cfg(6));
    let expected = kron(&Operator::identity(6), &pauli_x());
    assert!(u.max_abs_diff(&expected) < 1e-15);
}

#[test]
fn ecd_displaces_and_excites() {
    let n = 30;
    let beta = c(0.5, 0.3);
    let psi = coherent(c(0.4, -0.2), n);
    let mut joint = CVec::zeros(2 * n);
    for k in 0..n {
        joint[2 * k] = psi[k];
    }
    let out = gate_ecd(beta, &cfg(n)).matrix() * &joint;
    let shifted = displacement(beta * 0.5, &cfg(n)).matrix() * &psi;
    for k in 0..n {
        assert!((out[2 * k + 1] - shifted[k]).norm() < 1e-12);
        assert!(out[2 * k].norm() < 1e-15);
    }
}

#[test]
fn ecd_is_an_involution() {
    let beta = c((2.0 * PI).sqrt(), 0.0);
    let u = gate_ecd(beta, &cfg(60));
    let sq = &u * &u;
    assert!(sq.max_abs_diff(&Operator::identity(120)) < 1e-8);
    assert!(u.is_unitary(1e-8));
}

#[test]
fn qubit_rotation_values() {
    for phi in [0.0, 0.7, -2.1] {
        assert!(gate_qubit_rotation(phi, 0.0).max_abs_diff(&Operator::identity(2)) < 1e-15);
    }
    let r = gate_qubit_rotation(0.0, PI);
    assert!(r.max_abs_diff(&pauli_x().scale(c(0.0, -1.0))) < 1e-15);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let l1 = Operator::from_raw(CMat::from_row_slice(
        2,
        2,
        &[c(h, 0.0), c(-h, 0.0), c(h, 0.0), c(h, 0.0)],
    ));
    assert!(gate_qubit_rotation(FRAC_PI_2, FRAC_PI_2).max_abs_diff(&l1) < 1e-15);
}

#[test]
fn virtual_rotation_values() {
    let cfg = cfg(40);
    assert!(gate_virtual_rotation(0.0, &cfg).max_abs_diff(&Operator::identity(40)) < 1e-15);
    assert!(gate_virtual_rotation(2.0 * PI, &cfg).max_abs_diff(&Operator::identity(40)) < 1e-12);
    let alpha = c(1.5, 0.5);
    let rotated = gate_virtual_rotation(FRAC_PI_2, &cfg).matrix() * coherent(alpha, 40);
    let target = coherent(alpha * c(0.0, 1.0), 40);
    assert!(target.dotc(&rotated).norm_sqr() > 1.0 - 1e-8);
}

#[test]
fn schedule_timing() {
    let s = Schedule::standard();
    assert!((s.pre_measurement() - 0.17).abs() < 1e-12);
    assert!((s.total() - 0.5).abs() < 1e-12);
    assert!((Schedule::autonomous().total() - 0.35).abs() < 1e-12);
    let simple = Schedule::simplified();
    assert_eq!(simple.readout, 0.0);
    assert!(simple.layers.iter().all(|&d| d == simple.layers[0]));
    assert!(Schedule { entering: -0.1, ..s }.validate().is_err());
}

#[test]
fn standard_parameters_round_trip() {
    let p = HalfCycleParams::standard();
    assert_eq!(p.phi, [FRAC_PI_2, 0.0, 0.0, FRAC_PI_2]);
    assert_eq!(p.theta, [FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2]);
    assert_eq!(p.beta(0), c(0.0, 0.2));
    assert!((p.beta(1) - c((2.0 * PI).sqrt(), 0.0)).norm() < 1e-15);
    assert_eq!(p.beta(2), c(0.0, 0.2));
    assert_eq!(HalfCycleParams::from_array(&p.to_array(), p.alpha_l4), p);
}

#[test]
fn outcome_strings() {
    let o = parse_outcomes("gge eg").unwrap();
    assert_eq!(o, vec![Outcome::G, Outcome::G, Outcome::E, Outcome::E, Outcome::G]);
    assert_eq!(outcomes_to_string(&o), "ggeeg");
    assert!(parse_outcomes("gx").is_err());
    assert_eq!("e".parse::<Outcome>().unwrap(), Outcome::E);
}

#[test]
fn standard_half_cycle_reads_g() {
    let circ = circuit(NoiseModel::noiseless());
    let rho = gkp(LogicalLabel::PlusZ);
    let mut b = Plain;
    let p: Vec<CMat> = STANDARD.iter().map(|&v| b.scalar(v)).collect();
    let pre = circ.half_cycle(&mut b, rho.matrix(), &p).unwrap();
    let pg: f64 = (0..N).map(|n| pre[(2 * n, 2 * n)].re).sum();
    assert!(pg > 0.9, "p_g = {pg}");
}

#[test]
fn zero_parameters_only_displace() {
    let alpha = c(0.2, -0.1);
    let circ = circuit(NoiseModel::noiseless()).with_alpha_l4(alpha);
    let rho = gkp(LogicalLabel::PlusX);
    let mut b = Plain;
    let p: Vec<CMat> = (0..N_PARAMS).map(|_| b.scalar(0.0)).collect();
    let pre = DensityMatrix::from_raw(circ.half_cycle(&mut b, rho.matrix(), &p).unwrap());
    let d = displacement(alpha, &cfg(N));
    let expected = d.matrix() * rho.cavity_marginal().matrix() * d.matrix().adjoint();
    assert!(max_diff(pre.cavity_marginal().matrix(), &expected) < 1e-12);
    // Three ECD(0) = σx leave the ancilla flipped.
    let pe: f64 = (0..N).map(|n| pre.matrix()[(2 * n + 1, 2 * n + 1)].re).sum();
    assert!((pe - 1.0).abs() < 1e-12);
}

#[test]
fn measurement_probabilities() {
    let rho_c = DensityMatrix::fock(2, 5);
    let g = rho_c.with_ground_qubit();
    let (rec, post) = measure_ancilla_forced(&g, Outcome::G).unwrap();
    assert_eq!(rec.probability, 1.0);
    assert_eq!(post.matrix(), g.matrix());
    assert!(matches!(
        measure_ancilla_forced(&g, Outcome::E),
        Err(Error::ImpossibleBranch { outcome: 'e', .. })
    ));

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let q = CVec::from_vec(vec![c(s, 0.0), c(s, 0.0)]);
    let plus = DensityMatrix::from_raw(rho_c.matrix().kronecker(&(&q * q.adjoint())));
    let (rec, _) = measure_ancilla_forced(&plus, Outcome::E).unwrap();
    assert!((rec.probability - 0.5).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let rho = random_density(12, &mut rng);
        let pg = measure_ancilla_forced(&rho, Outcome::G).unwrap().0.probability;
        let pe = measure_ancilla_forced(&rho, Outcome::E).unwrap().0.probability;
        assert!((pg + pe - 1.0).abs() < 1e-10);
        let (rec, post) = measure_ancilla(&rho, &mut rng).unwrap();
        assert!((rec.log_prob - rec.probability.ln()).abs() < 1e-15);
        assert!((post.trace() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reset_behaviour() {
    let rho_c = random_density(6, &mut ChaCha8Rng::seed_from_u64(5));
    let g = rho_c.with_ground_qubit();
    assert!(max_diff(reset_ancilla(&g).matrix(), g.matrix()) < 1e-15);
    let e_proj = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    let excited = DensityMatrix::from_raw(rho_c.matrix().kronecker(&e_proj));
    assert!(max_diff(reset_ancilla(&excited).matrix(), g.matrix()) < 1e-15);

    let joint = random_density(12, &mut ChaCha8Rng::seed_from_u64(6));
    let after = reset_ancilla(&joint);
    assert!(max_diff(after.cavity_marginal().matrix(), joint.cavity_marginal().matrix()) < 1e-15);
    assert!((after.trace() - joint.trace()).abs() < 1e-15);
}

#[test]
fn trajectory_basics() {
    let circ = circuit(NoiseModel::low());
    let rho = gkp(LogicalLabel::PlusZ);
    let policy = Policy::standard();
    let mode = Mode::Stochastic { seed: 1, stream: 0 };
    let t0 = run_trajectory(&circ, &policy, &rho, 0, &mode, None).unwrap();
    assert_eq!(t0.return_value, 1.0);
    assert!(t0.records.is_empty());

    let t = run_trajectory(&circ, &policy, &rho, 4, &mode, None).unwrap();
    assert_eq!(t.records.len(), 4);
    let sum: f64 = t.records.iter().map(|r| r.log_prob).sum();
    assert!((t.cumulative_log_prob - sum).abs() < 1e-15);
    assert!((t.final_rho.trace() - 1.0).abs() < 1e-8);
    let again = run_trajectory(&circ, &policy, &rho, 4, &mode, None).unwrap();
    assert_eq!(t.outcomes(), again.outcomes());

    let mut buf = Vec::new();
    t.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["params"].as_array().unwrap().len(), N_PARAMS);
}

#[test]
fn autonomous_run_has_no_records() {
    let circ = Circuit::new(
        cfg(N),
        Schedule::autonomous(),
        NoiseModel::low(),
        HamiltonianParams::disabled(),
        IntegratorConfig::default(),
    )
    .unwrap();
    let rho = gkp(LogicalLabel::PlusZ);
    let t = run_trajectory(&circ, &Policy::standard(), &rho, 3, &Mode::Autonomous, None).unwrap();
    assert!(t.records.is_empty());
    assert!((t.final_rho.trace() - 1.0).abs() < 1e-8);
    let measured = circuit(NoiseModel::low());
    assert!(run_trajectory(&measured, &Policy::standard(), &rho, 1, &Mode::Autonomous, None).is_err());
}

#[test]
fn pre_measurement_states_agree_across_modes() {
    let measured = circuit(NoiseModel::medium());
    let autonomous = Circuit::new(
        cfg(N),
        Schedule::autonomous(),
        NoiseModel::medium(),
        HamiltonianParams::disabled(),
        IntegratorConfig::default(),
    )
    .unwrap();
    let rho = gkp(LogicalLabel::PlusY);
    let mut b = Plain;
    let p: Vec<CMat> = STANDARD.iter().map(|&v| b.scalar(v)).collect();
    let a = measured.half_cycle(&mut b, rho.matrix(), &p).unwrap();
    let z = autonomous.half_cycle(&mut b, rho.matrix(), &p).unwrap();
    assert_eq!(a, z);
}

#[test]
fn forced_g_run_keeps_logical_z() {
    let circ = circuit(NoiseModel::low());
    let rho = gkp(LogicalLabel::PlusZ);
    let z = joint_observable(&pauli_operator(&CodeLattice::square(), PauliAxis::Z, &cfg(N)));
    let z0 = trace_product_re(&z, rho.matrix());
    let mode = Mode::Forced(vec![Outcome::G; 10]);
    let t = run_trajectory(&circ, &Policy::standard(), &rho, 10, &mode, Some(&z)).unwrap();
    assert_eq!(t.snapshots.len(), 5);
    let z_end = *t.snapshots.last().unwrap() * frame_sign(PauliAxis::Z, 5);
    assert!((z_end - z0).abs() < 0.1 * z0.abs(), "⟨Z⟩ {z0} → {z_end}");
}

fn trace_product_re(o: &CMat, rho: &CMat) -> f64 {
    (o * rho).trace().re
}

#[test]
fn enumeration_is_consistent() {
    let circ = circuit(NoiseModel::medium());
    let rho = gkp(LogicalLabel::PlusZ);
    let policy = Policy::standard();
    let one = enumerate_branches(&circ, &policy, &rho, 1, None, false).unwrap();
    assert_eq!(one.len(), 2);
    assert!((one.iter().map(|b| b.probability).sum::<f64>() - 1.0).abs() < 1e-8);

    let obs = fidelity_observable(
        &crate::gkp::logical_ket(&GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg(N)).with_truncation_tolerance(1e-3))
            .unwrap(),
    );
    let four = enumerate_branches(&circ, &policy, &rho, 4, Some(&obs), true).unwrap();
    assert_eq!(four.len(), 16);
    assert!((four.iter().map(|b| b.probability).sum::<f64>() - 1.0).abs() < 1e-8);
    let avg: f64 = four.iter().map(|b| b.probability * b.return_value).sum();
    let mut b = Plain;
    let exact = exact_expectation(&mut b, &circ, &policy, &[], rho.matrix(), 4, &obs).unwrap();
    assert!((avg - exact[(0, 0)].re).abs() < 1e-10, "{avg} vs {}", exact[(0, 0)].re);
    for br in &four {
        assert!((br.observable.unwrap() - br.return_value).abs() < 1e-10);
        assert_eq!(br.final_state.as_ref().unwrap().dim(), N);
    }

    let forced = &four[5];
    let t = run_trajectory(&circ, &policy, &rho, 4, &Mode::Forced(forced.outcomes.clone()), None).unwrap();
    let product: f64 = t.records.iter().map(|r| r.probability).product();
    assert!((product - forced.probability).abs() < 1e-10);
    assert!((t.cumulative_log_prob.exp() - forced.probability).abs() < 1e-10);
    assert!((t.return_value - forced.return_value).abs() < 1e-10);

    assert!(matches!(
        enumerate_branches(&circ, &policy, &rho, MAX_ENUMERATION_DEPTH + 1, None, false),
        Err(Error::DepthLimit { .. })
    ));
}

#[test]
fn sampling_matches_enumeration() {
    let circ = circuit(NoiseModel::high());
    let rho = gkp(LogicalLabel::PlusZ);
    let policy = Policy::standard();
    let exact: f64 = enumerate_branches(&circ, &policy, &rho, 2, None, false)
        .unwrap()
        .iter()
        .map(|b| b.probability * b.return_value)
        .sum();
    let n = 2000;
    let returns: Vec<f64> = (0..n)
        .map(|k| {
            let mode = Mode::Stochastic { seed: 11, stream: k };
            run_trajectory(&circ, &policy, &rho, 2, &mode, None)
                .unwrap()
                .return_value
        })
        .collect();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - exact).abs() < 3.0 * se + 1e-12, "{mean} vs {exact} (se {se})");
}

#[test]
fn standard_parameters_are_locally_optimal() {
    let circ = circuit(NoiseModel::noiseless());
    let rho = gkp(LogicalLabel::PlusZ);
    let value = |policy: &Policy| -> f64 {
        enumerate_branches(&circ, policy, &rho, 4, None, false)
            .unwrap()
            .iter()
            .map(|b| b.probability * b.return_value)
            .sum()
    };
    let base = value(&Policy::standard());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..4 {
        let mut p = STANDARD;
        for x in p.iter_mut() {
            *x += rng.gen_range(-0.5..0.5);
        }
        let perturbed = value(&Policy::open_loop(&[p]).unwrap());
        assert!(base >= perturbed, "{base} < {perturbed}");
    }
}

#[test]
fn standard_cycle_acts_as_logical_y() {
    let circ = circuit(NoiseModel::noiseless());
    let spec = |l| GkpStateSpec::new(l, 0.34, cfg(N)).with_truncation_tolerance(1e-3);
    for (axis, plus) in [
        (PauliAxis::X, LogicalLabel::PlusX),
        (PauliAxis::Y, LogicalLabel::PlusY),
        (PauliAxis::Z, LogicalLabel::PlusZ),
    ] {
        let op = joint_observable(&pauli_operator(&CodeLattice::square(), axis, &cfg(N)));
        let rho = logical_state(&spec(plus)).unwrap().with_ground_qubit();
        let start = trace_product_re(&op, rho.matrix());
        let mut b = Plain;
        let after = exact_expectation(&mut b, &circ, &Policy::standard(), &[], rho.matrix(), 2, &op).unwrap();
        let ratio = after[(0, 0)].re / start;
        assert!((ratio - frame_sign(axis, 1)).abs() < 0.05, "{axis:?}: {ratio}");
    }
    assert_eq!(frame_sign(PauliAxis::Z, 2), 1.0);
}
