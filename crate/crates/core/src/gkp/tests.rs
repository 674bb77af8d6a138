use super::*;
use crate::fock::{DensityMatrix, HilbertConfig};

fn cfg(n: usize) -> HilbertConfig {
    HilbertConfig::new(n).unwrap()
}

fn state(label: LogicalLabel, delta: f64, n: usize) -> DensityMatrix {
    logical_state(&GkpStateSpec::new(label, delta, cfg(n))).unwrap()
}

#[test]
fn lattice_constraint_for_all_kinds() {
    for lat in [
        CodeLattice::square(),
        CodeLattice::rectangular(1.3).unwrap(),
        CodeLattice::hexagonal(),
    ] {
        let phase = lat.commutation_phase();
        assert!((phase - c(0.0, PI)).norm() < 1e-12, "{lat:?}");
        lat.validate().unwrap();
    }
    assert!(CodeLattice::rectangular(-1.0).is_err());
}

#[test]
fn states_are_normalized_and_logically_distinct() {
    let plus = logical_ket(&GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg(100))).unwrap();
    let minus = logical_ket(&GkpStateSpec::new(LogicalLabel::MinusZ, 0.34, cfg(100))).unwrap();
    assert!((plus.norm() - 1.0).abs() < 1e-10);
    let overlap = plus.dotc(&minus).norm_sqr();
    assert!(overlap < 0.01, "overlap {overlap}");
}

#[test]
fn stabilizer_expectation_improves_as_delta_shrinks() {
    let sx = stabilizer(&CodeLattice::square(), StabilizerAxis::X, &cfg(100));
    let sz = stabilizer(&CodeLattice::square(), StabilizerAxis::Z, &cfg(100));
    let values: Vec<(f64, f64)> = [0.5, 0.4, 0.3]
        .iter()
        .map(|&d| {
            let rho = state(LogicalLabel::PlusZ, d, 100);
            (
                logical_expectation(&rho, &sx).unwrap(),
                logical_expectation(&rho, &sz).unwrap(),
            )
        })
        .collect();
    assert!(values[0].0 < values[1].0 && values[1].0 < values[2].0, "{values:?}");
    assert!(values[0].1 < values[1].1 && values[1].1 < values[2].1, "{values:?}");
}

#[test]
fn pauli_definitions() {
    let lat = CodeLattice::square();
    let c100 = cfg(100);
    let z = pauli_operator(&lat, PauliAxis::Z, &c100);
    assert!(z.max_abs_diff(&fock::displacement(lat.beta, &c100)) < 1e-15);
    let x = pauli_operator(&lat, PauliAxis::X, &c100);
    let sx = stabilizer(&lat, StabilizerAxis::X, &c100);
    assert!((2.0 * lat.alpha - c((2.0 * PI).sqrt(), 0.0)).norm() < 1e-15);
    assert!((&x * &x).max_abs_diff(&sx) < 1e-8);
}

#[test]
fn stabilizers_commute_within_truncation() {
    let c100 = cfg(100);
    let lat = CodeLattice::square();
    let sx = stabilizer(&lat, StabilizerAxis::X, &c100);
    let sz = stabilizer(&lat, StabilizerAxis::Z, &c100);
    // Truncated displacements only commute on the low-photon block whose
    // images under both stabilizers stay inside the cutoff.
    let comm = sx.commutator(&sz);
    let worst = (0..20)
        .flat_map(|i| (0..20).map(move |j| (i, j)))
        .map(|(i, j)| comm.matrix()[(i, j)].norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn logical_x_flips_z() {
    let c100 = cfg(100);
    let plus = logical_ket(&GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, c100)).unwrap();
    let minus = logical_ket(&GkpStateSpec::new(LogicalLabel::MinusZ, 0.34, c100)).unwrap();
    let x = pauli_operator(&CodeLattice::square(), PauliAxis::X, &c100);
    let flipped = x.matrix() * &plus;
    assert!(minus.dotc(&flipped).norm_sqr() > plus.dotc(&flipped).norm_sqr());
}

#[test]
fn pauli_expectations_have_eigenstate_signs() {
    let c100 = cfg(100);
    let lat = CodeLattice::square();
    for label in LogicalLabel::ALL {
        let rho = state(label, 0.34, 100);
        let (axis, sign) = label.axis();
        let v = logical_expectation(&rho, &pauli_operator(&lat, axis, &c100)).unwrap();
        assert!(v * sign > 0.5, "{label}: {v}");
    }
}

#[test]
fn z_expectation_symmetry_between_codewords() {
    let c100 = cfg(100);
    let z = pauli_operator(&CodeLattice::square(), PauliAxis::Z, &c100);
    let v0 = logical_expectation(&state(LogicalLabel::PlusZ, 0.34, 100), &z).unwrap();
    let v1 = logical_expectation(&state(LogicalLabel::MinusZ, 0.34, 100), &z).unwrap();
    assert!(v0 > 0.0 && v0 <= 1.0);
    // Exact up to the Fock cutoff.
    assert!((v0 + v1).abs() < 1e-4, "{v0} {v1}");
}

#[test]
fn maximally_mixed_expectation_vanishes_for_traceless_displacement() {
    // Tr D(β)/N only vanishes as the cutoff grows.
    let value = |n: usize| {
        let z = fock::displacement(CodeLattice::square().beta, &cfg(n));
        logical_expectation(&DensityMatrix::maximally_mixed(n), &z)
            .unwrap()
            .abs()
    };
    let (coarse, fine) = (value(100), value(400));
    assert!(fine < coarse && fine < 0.01, "{coarse} {fine}");
}

#[test]
fn fidelity_cases() {
    let f = fidelity(&DensityMatrix::fock(0, 3), &DensityMatrix::fock(0, 3)).unwrap();
    assert!((f - 1.0).abs() < 1e-12);
    assert!(fidelity(&DensityMatrix::fock(0, 3), &DensityMatrix::fock(1, 3)).unwrap() < 1e-14);
    let mut m = CMat::zeros(3, 3);
    m[(0, 0)] = c(0.5, 0.0);
    m[(1, 1)] = c(0.3, 0.0);
    m[(2, 2)] = c(0.2, 0.0);
    m[(0, 1)] = c(0.1, 0.05);
    m[(1, 0)] = c(0.1, -0.05);
    let mixed = DensityMatrix::new(Operator::new(m).unwrap()).unwrap();
    let f = fidelity(&mixed, &DensityMatrix::fock(0, 3)).unwrap();
    assert!((f - 0.5).abs() < 1e-12);
    let f_sym = fidelity(&DensityMatrix::fock(0, 3), &mixed).unwrap();
    assert!((f - f_sym).abs() < 1e-12);
}

#[test]
fn fidelity_general_branch_matches_commuting_formula() {
    // Commuting diagonal states: F = (Σ √(p_i q_i))².
    let p: [f64; 3] = [0.6, 0.3, 0.1];
    let q: [f64; 3] = [0.2, 0.5, 0.3];
    let dm = |v: &[f64; 3]| DensityMatrix::new(Operator::diagonal(&v.map(|x| c(x, 0.0)))).unwrap();
    let expected: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a * b).sqrt()).sum::<f64>().powi(2);
    let f = fidelity(&dm(&p), &dm(&q)).unwrap();
    assert!((f - expected).abs() < 1e-12);
    assert!((fidelity(&dm(&q), &dm(&p)).unwrap() - f).abs() < 1e-12);
}

#[test]
fn fidelity_rejects_bad_input() {
    let mut m = CMat::zeros(2, 2);
    m[(0, 0)] = c(1.0, 0.0);
    m[(0, 1)] = c(0.3, 0.0);
    let bad = DensityMatrix::from_raw(m);
    assert!(matches!(
        fidelity(&bad, &DensityMatrix::fock(0, 2)),
        Err(Error::NotHermitian { .. })
    ));
    assert!(fidelity(&DensityMatrix::fock(0, 2), &DensityMatrix::fock(0, 3)).is_err());
}

#[test]
fn mean_photon_number() {
    assert_eq!(mean_photon(&DensityMatrix::fock(0, 5)), 0.0);
    assert!((mean_photon(&DensityMatrix::fock(3, 5)) - 3.0).abs() < 1e-15);
    let joint = DensityMatrix::fock(3, 5).with_ground_qubit();
    assert!((mean_photon_joint(&joint) - 3.0).abs() < 1e-15);
}

#[test]
fn invalid_delta_and_truncation_overflow() {
    assert!(logical_ket(&GkpStateSpec::new(LogicalLabel::PlusZ, 0.0, cfg(50))).is_err());
    assert!(logical_ket(&GkpStateSpec::new(LogicalLabel::PlusZ, 1.2, cfg(50))).is_err());
    let err = logical_ket(&GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg(20))).unwrap_err();
    assert!(matches!(err, Error::TruncationOverflow { .. }));
    let relaxed = GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg(20)).with_truncation_tolerance(0.05);
    assert!(logical_ket(&relaxed).is_ok());
}

#[test]
fn other_lattices_build() {
    for lat in [CodeLattice::rectangular(1.2).unwrap(), CodeLattice::hexagonal()] {
        let spec = GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg(100)).with_lattice(lat);
        let rho = logical_state(&spec).unwrap();
        let z = pauli_operator(&lat, PauliAxis::Z, &cfg(100));
        assert!(logical_expectation(&rho, &z).unwrap() > 0.5);
    }
}

#[test]
fn wigner_of_fock_states_at_origin() {
    let vac = DensityMatrix::fock(0, 6);
    let one = DensityMatrix::fock(1, 6);
    let w0 = wigner_grid(vac.matrix(), &[0.0], &[0.0])[0][0];
    let w1 = wigner_grid(one.matrix(), &[0.0], &[0.0])[0][0];
    assert!((w0 - 1.0 / PI).abs() < 1e-14);
    assert!((w1 + 1.0 / PI).abs() < 1e-14);
    // Normalization of the vacuum on a coarse grid.
    let xs: Vec<f64> = (-60..=60).map(|k| k as f64 * 0.1).collect();
    let grid = wigner_grid(vac.matrix(), &xs, &xs);
    let total: f64 = grid.iter().flatten().sum::<f64>() * 0.01;
    assert!((total - 1.0).abs() < 1e-6);
}

#[test]
fn ket_exports() {
    let ket = logical_ket(&GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg(100))).unwrap();
    let json = ket_to_json(&ket);
    assert_eq!(json["re"].as_array().unwrap().len(), 100);
    let csv = ket_to_csv(&ket);
    assert_eq!(csv.lines().count(), 101);
}
