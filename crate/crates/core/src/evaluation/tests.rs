use super::*;
use crate::fock::c;
use crate::lindblad::NoiseModel;
use crate::sbs::{Outcome, STANDARD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(n: usize) -> HilbertConfig {
    HilbertConfig::new(n).unwrap()
}

#[test]
fn exact_exponential_is_recovered() {
    let series: Vec<(f64, f64)> = (0..100)
        .map(|k| (k as f64 * 10.0, (-(k as f64) * 10.0 / 500.0).exp()))
        .collect();
    let fit = fit_lifetime(&series).unwrap();
    assert!((fit.t() - 500.0).abs() < 0.5, "{fit:?}");
    assert!((fit.amplitude - 1.0).abs() < 1e-6);

    let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (3.0 * t, 0.8 * v)).collect();
    let f2 = fit_lifetime(&scaled).unwrap();
    assert!((f2.t() / fit.t() - 3.0).abs() < 1e-6);
}

#[test]
fn flat_series_is_not_measurable() {
    let series: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 0.9)).collect();
    let fit = fit_lifetime(&series).unwrap();
    assert!(fit.lifetime.is_none());
    assert_eq!(fit.t(), f64::INFINITY);

    // A decay far slower than the window, hidden in noise.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noisy: Vec<(f64, f64, f64)> = (0..20)
        .map(|k| {
            (
                k as f64,
                0.9 * (-(k as f64) / 1e6).exp() + rng.gen_range(-0.01..0.01),
                0.01,
            )
        })
        .collect();
    assert!(fit_lifetime_weighted(&noisy).unwrap().lifetime.is_none());
    assert!(fit_lifetime(&[(0.0, 1.0)]).is_err());
}

#[test]
fn weighted_fit_on_noisy_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let series: Vec<(f64, f64, f64)> = (0..60)
        .map(|k| {
            let t = k as f64 * 5.0;
            let s = 0.005 + 0.001 * k as f64;
            (t, 0.9 * (-t / 120.0).exp() + rng.gen_range(-1.0..1.0) * s, s)
        })
        .collect();
    let fit = fit_lifetime_weighted(&series).unwrap();
    assert!((fit.t() - 120.0).abs() < 10.0, "{fit:?}");
    assert!(fit.rate_std_err > 0.0);
}

#[test]
fn channel_fidelity_formulas() {
    let t = [700.0, 500.0, 900.0];
    assert_eq!(average_channel_fidelity(t, 0.0), 1.0);
    assert!((average_channel_fidelity(t, 1e9) - 0.5).abs() < 1e-12);
    let mut prev = 1.0;
    for k in 1..50 {
        let f = average_channel_fidelity(t, k as f64 * 50.0);
        assert!(f <= prev && (0.5..=1.0).contains(&f));
        prev = f;
    }
    let agg = aggregate_lifetime(&t);
    assert!((agg - 3.0 / (1.0 / 700.0 + 1.0 / 500.0 + 1.0 / 900.0)).abs() < 1e-9);
    assert_eq!(entanglement_fidelity(1.0), 1.0);
    assert_eq!(entanglement_fidelity(0.5), 0.25);
    assert_eq!(average_channel_fidelity([f64::INFINITY; 3], 10.0), 1.0);
}

#[test]
fn decay_rate_values() {
    assert_eq!(dimensionless_decay_rate(0.0, 10.0), 0.0);
    assert!((dimensionless_decay_rate(1.0 / 610.0, 10.0) - 0.0163).abs() < 1e-4);
    assert!((dimensionless_decay_rate(1.0, 1e3) - 1.0).abs() < 1e-12);
}

#[test]
fn displacement_injection() {
    let cfg = cfg(40);
    let spec = GkpStateSpec::new(LogicalLabel::PlusZ, 0.34, cfg).with_truncation_tolerance(1e-3);
    let rho = logical_state(&spec).unwrap();
    let same = inject_displacement_error(&rho, c(0.0, 0.0), &cfg).unwrap();
    assert!((same.matrix() - rho.matrix()).iter().all(|z| z.norm() < 1e-14));
    let z = pauli_operator(&spec.lattice, PauliAxis::Z, &cfg);
    let z0 = rho.expect(&z).re;
    let flipped = inject_displacement_error(&rho, c(0.7, 0.0), &cfg).unwrap();
    let z1 = flipped.expect(&z).re;
    assert!(z0 > 0.5 && z1 < 0.0, "{z0} → {z1}");
    let joint = inject_displacement_error(&rho.with_ground_qubit(), c(0.7, 0.0), &cfg).unwrap();
    assert!((joint.cavity_marginal().matrix() - flipped.matrix())
        .iter()
        .all(|z| z.norm() < 1e-12));
    assert!(inject_displacement_error(&DensityMatrix::fock(0, 7), c(0.1, 0.0), &cfg).is_err());
}

#[test]
fn bias_table_offsets() {
    let b = BiasTable::reference();
    let off = b.offsets();
    assert!((STANDARD[0] + off[0] - (std::f64::consts::FRAC_PI_2 + 0.05)).abs() < 1e-15);
    assert_eq!(off[crate::sbs::idx::BETA_IM + 2], -0.05);
    assert_eq!(off[crate::sbs::idx::THETA_VR], 0.0);
    assert_eq!(BiasTable::zero().offsets(), [0.0; N_PARAMS]);
}

#[test]
fn batch_means_statistics() {
    let rows = vec![vec![1.0, 0.8], vec![1.0, 0.6], vec![1.0, 0.5], vec![1.0, 0.3]];
    let (mean, std, bm) = batch_statistics(&rows, 2).unwrap();
    assert_eq!(bm, vec![vec![1.0, 0.7], vec![1.0, 0.4]]);
    assert!((mean[1] - 0.55).abs() < 1e-15);
    assert_eq!(std[0], 0.0);
    assert!((std[1] - (0.045f64).sqrt()).abs() < 1e-12);
    assert!(batch_statistics(&rows, 3).is_err());
}

fn saturation_series(outcomes: &[Outcome], start: f64, g: (f64, f64), e: (f64, f64)) -> Vec<f64> {
    let mut out = vec![start];
    let mut anchor = start;
    let mut elapsed = 0.0;
    for (k, &o) in outcomes.iter().enumerate() {
        if k > 0 && outcomes[k - 1] != o {
            anchor = *out.last().unwrap();
            elapsed = 0.0;
        }
        elapsed += 1.0;
        let (inf, gamma) = if o == Outcome::G { g } else { e };
        out.push(anchor * (-gamma * elapsed).exp() + inf * (1.0 - (-gamma * elapsed).exp()));
    }
    out
}

#[test]
fn saturation_model_is_recovered() {
    let outcomes = crate::sbs::parse_outcomes("ggggggggggeeeeeeeeeegggggggggg").unwrap();
    let series = saturation_series(&outcomes, 0.3, (1.2, 0.35), (-0.4, 0.6));
    let (g, e) = fit_saturation_series(&series, &outcomes).unwrap();
    assert_eq!(g.segments, 2);
    assert!((g.asymptote.unwrap() - 1.2).abs() < 0.012);
    assert!((g.rate.unwrap() - 0.35).abs() < 0.0035);
    assert!((e.asymptote.unwrap() + 0.4).abs() < 0.004);
    assert!((e.rate.unwrap() - 0.6).abs() < 0.006);

    let flat = vec![0.7; outcomes.len() + 1];
    let (g, e) = fit_saturation_series(&flat, &outcomes).unwrap();
    assert!(g.rate.is_none() && e.rate.is_none());

    let params: Vec<[f64; N_PARAMS]> = series.iter().map(|&v| [v; N_PARAMS]).collect();
    let fits = fit_strategy_saturation(&params, &outcomes).unwrap();
    assert_eq!(fits.len(), N_PARAMS);
    assert!(fit_strategy_saturation(&params[1..], &outcomes).is_err());
}

#[test]
fn short_pauli_series() {
    let cfg = cfg(30);
    let circ = Circuit::with_noise(cfg, NoiseModel::high()).unwrap();
    let spec = GkpStateSpec::new(LogicalLabel::MinusX, 0.34, cfg).with_truncation_tolerance(1e-2);
    let run = RunConfig {
        n_cycles: 3,
        n_batches: 2,
        batch_size: 2,
        seed: 5,
    };
    let s = pauli_series(&circ, &Policy::standard(), &spec, &run).unwrap();
    assert_eq!(s.times, vec![0.0, 1.0, 2.0, 3.0]);
    assert!(s.mean[0] > 0.5);
    assert!(s.mean.iter().all(|&v| v > 0.0), "{:?}", s.mean);
    assert_eq!(s.batch_means.len(), 2);
    let again = pauli_series(&circ, &Policy::standard(), &spec, &run).unwrap();
    assert_eq!(s, again);

    let mut buf = Vec::new();
    write_series_csv(&mut buf, &[s]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
}

#[test]
fn summary_aggregates_axes() {
    let mk = |t: f64| LifetimeFit {
        lifetime: Some(t),
        amplitude: 1.0,
        rate: 1.0 / t,
        rate_std_err: 0.0,
        residual: 0.0,
    };
    let s = LifetimeSummary::from_fits(&[
        (LogicalLabel::MinusX, mk(600.0)),
        (LogicalLabel::MinusY, mk(300.0)),
        (LogicalLabel::PlusZ, mk(600.0)),
    ]);
    assert!((s.aggregate_lifetime.unwrap() - 450.0).abs() < 1e-9);
    let fbar = average_channel_fidelity([600.0, 300.0, 600.0], 1.0);
    assert!((s.entanglement_infidelity_per_cycle.unwrap() - 1.5 * (1.0 - fbar)).abs() < 1e-15);
    let partial = LifetimeSummary::from_fits(&[(LogicalLabel::PlusZ, mk(600.0))]);
    assert!(partial.aggregate_lifetime.is_none());
}
