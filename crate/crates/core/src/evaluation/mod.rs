//! Logical-lifetime estimation and the derived fidelity figures.
//!
//! Pauli expectations are sampled at full-cycle boundaries and multiplied by
//! the circuit's logical frame sign ([`crate::sbs::frame_sign`]) and by the
//! eigenvalue of the initial state, so every series starts near +⟨P⟩(0) and
//! decays towards zero. Times are in units of τ_cycle.

mod fit;

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{displacement, kron, DensityMatrix, HilbertConfig, Operator};
use crate::gkp::{logical_state, pauli_operator, GkpStateSpec, LogicalLabel, PauliAxis};
use crate::policies::Policy;
use crate::sbs::{frame_sign, joint_observable, run_trajectory, Circuit, Mode, N_PARAMS};

pub use fit::{
    fit_lifetime, fit_lifetime_weighted, fit_saturation_series, fit_strategy_saturation, LifetimeFit, Saturation,
    StrategyFit,
};

/// Reference bosonic-channel threshold for (1 − F_e), quoted for comparison
/// only.
pub const THRESHOLD_ENTANGLEMENT_INFIDELITY: f64 = 1e-6;

/// F̄(t) = 1/2 + (1/6) Σ_k e^{−t/T_k} over the X, Y and Z lifetimes.
pub fn average_channel_fidelity(lifetimes: [f64; 3], t: f64) -> f64 {
    0.5 + lifetimes.iter().map(|&tk| (-t / tk).exp()).sum::<f64>() / 6.0
}

/// T = n / Σ 1/T_k.
pub fn aggregate_lifetime(lifetimes: &[f64]) -> f64 {
    lifetimes.len() as f64 / lifetimes.iter().map(|t| 1.0 / t).sum::<f64>()
}

/// F_e = (3F̄ − 1)/2.
pub fn entanglement_fidelity(channel_fidelity: f64) -> f64 {
    (3.0 * channel_fidelity - 1.0) / 2.0
}

/// 1 − F_e after one cycle for lifetimes given in cycles.
pub fn entanglement_infidelity_per_cycle(lifetimes: [f64; 3]) -> f64 {
    1.0 - entanglement_fidelity(average_channel_fidelity(lifetimes, 1.0))
}

/// γ = 1 − e^{−κτ}.
pub fn dimensionless_decay_rate(kappa: f64, tau: f64) -> f64 {
    1.0 - (-kappa * tau).exp()
}

/// D(α) ρ D(α)† on a cavity state, or (D(α) ⊗ I) ρ (D(α) ⊗ I)† on a joint one.
pub fn inject_displacement_error(rho: &DensityMatrix, alpha: Complex64, cfg: &HilbertConfig) -> Result<DensityMatrix> {
    let d = displacement(alpha, cfg);
    let u = if rho.dim() == cfg.n_fock() {
        d
    } else if rho.dim() == cfg.joint_dim() {
        kron(&d, &Operator::identity(2))
    } else {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_fock(),
            found: rho.dim(),
        });
    };
    let m = u.matrix() * rho.matrix() * u.matrix().adjoint();
    DensityMatrix::new(Operator::new(m)?)
}

/// Fixed additive offsets on the gate parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub phi: [f64; 4],
    pub theta: [f64; 4],
    pub beta: [Complex64; 3],
}

impl BiasTable {
    pub fn zero() -> Self {
        BiasTable {
            phi: [0.0; 4],
            theta: [0.0; 4],
            beta: [Complex64::new(0.0, 0.0); 3],
        }
    }

    /// The biased-gate table used for the robustness study.
    pub fn reference() -> Self {
        BiasTable {
            phi: [0.05, -0.03, -0.06, 0.04],
            theta: [-0.03, 0.05, 0.06, 0.04],
            beta: [
                Complex64::new(0.06, -0.04),
                Complex64::new(0.04, -0.02),
                Complex64::new(0.04, -0.05),
            ],
        }
    }

    /// Offsets in parameter-layout order; θ_VR is never biased.
    pub fn offsets(&self) -> [f64; N_PARAMS] {
        use crate::sbs::idx;
        let mut v = [0.0; N_PARAMS];
        v[idx::PHI..idx::PHI + 4].copy_from_slice(&self.phi);
        v[idx::THETA..idx::THETA + 4].copy_from_slice(&self.theta);
        for k in 0..3 {
            v[idx::BETA_RE + k] = self.beta[k].re;
            v[idx::BETA_IM + k] = self.beta[k].im;
        }
        v
    }
}

impl Default for BiasTable {
    fn default() -> Self {
        Self::zero()
    }
}

/// Sampling shape of an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_cycles: usize,
    pub n_batches: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn trajectories(&self) -> usize {
        self.n_batches * self.batch_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_batches == 0 || self.batch_size == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_cycles: 100,
            n_batches: 6,
            batch_size: 85,
            seed: 0,
        }
    }
}

/// Frame-corrected Pauli expectation over time. `mean` and `std` are taken
/// over batch means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliSeries {
    pub label: String,
    pub axis: PauliAxis,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub batch_means: Vec<Vec<f64>>,
}

impl PauliSeries {
    pub fn fit(&self) -> Result<LifetimeFit> {
        let pts: Vec<(f64, f64, f64)> = (0..self.times.len())
            .map(|k| (self.times[k], self.mean[k], self.std[k]))
            .collect();
        fit_lifetime_weighted(&pts)
    }
}

/// Mean and standard deviation over batch means, per time point. `rows` are
/// individual trajectories of equal length.
pub fn batch_statistics(rows: &[Vec<f64>], batch_size: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    if rows.is_empty() || batch_size == 0 || rows.len() % batch_size != 0 {
        return Err(Error::EmptyBatch);
    }
    let len = rows[0].len();
    if rows.iter().any(|r| r.len() != len) {
        return Err(Error::Numerical("trajectories of unequal length".into()));
    }
    let batch_means: Vec<Vec<f64>> = rows
        .chunks(batch_size)
        .map(|chunk| {
            (0..len)
                .map(|k| chunk.iter().map(|r| r[k]).sum::<f64>() / chunk.len() as f64)
                .collect()
        })
        .collect();
    let nb = batch_means.len() as f64;
    let mean: Vec<f64> = (0..len)
        .map(|k| batch_means.iter().map(|b| b[k]).sum::<f64>() / nb)
        .collect();
    let std: Vec<f64> = (0..len)
        .map(|k| {
            if batch_means.len() < 2 {
                0.0
            } else {
                (batch_means.iter().map(|b| (b[k] - mean[k]).powi(2)).sum::<f64>() / (nb - 1.0)).sqrt()
            }
        })
        .collect();
    Ok((mean, std, batch_means))
}

/// Runs `run.trajectories()` trajectories from `rho0` and records the
/// frame-corrected ⟨P⟩ scaled by `sign` at every full-cycle boundary.
#[allow(clippy::too_many_arguments)]
pub fn pauli_series_from(
    circ: &Circuit,
    policy: &Policy,
    rho0: &DensityMatrix,
    axis: PauliAxis,
    sign: f64,
    label: &str,
    lattice: &crate::gkp::CodeLattice,
    run: &RunConfig,
) -> Result<PauliSeries> {
    run.validate()?;
    let obs = joint_observable(&pauli_operator(lattice, axis, circ.cfg()));
    let v0 = sign * (obs.as_ref() * rho0.matrix()).trace().re;
    let autonomous = !circ.schedule().measured();
    let rows: Vec<Vec<f64>> = (0..run.trajectories() as u64)
        .into_par_iter()
        .map(|i| {
            let mode = if autonomous {
                Mode::Autonomous
            } else {
                Mode::Stochastic {
                    seed: run.seed,
                    stream: i,
                }
            };
            let t = run_trajectory(circ, policy, rho0, 2 * run.n_cycles, &mode, Some(&obs))?;
            let mut row = Vec::with_capacity(run.n_cycles + 1);
            row.push(v0);
            for (k, z) in t.snapshots.iter().enumerate() {
                row.push(sign * frame_sign(axis, k + 1) * z);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let (mean, std, batch_means) = batch_statistics(&rows, run.batch_size)?;
    Ok(PauliSeries {
        label: label.to_string(),
        axis,
        times: (0..=run.n_cycles).map(|k| k as f64).collect(),
        mean,
        std,
        batch_means,
    })
}

/// Decay series of a logical eigenstate.
pub fn pauli_series(circ: &Circuit, policy: &Policy, spec: &GkpStateSpec, run: &RunConfig) -> Result<PauliSeries> {
    let rho0 = logical_state(spec)?.with_ground_qubit();
    let (axis, sign) = spec.label.axis();
    pauli_series_from(
        circ,
        policy,
        &rho0,
        axis,
        sign,
        &spec.label.to_string(),
        &spec.lattice,
        run,
    )
}

/// ⟨Z_L⟩ of +Z displaced by α before correction starts.
pub fn injected_series(
    circ: &Circuit,
    policy: &Policy,
    spec: &GkpStateSpec,
    alpha: Complex64,
    run: &RunConfig,
) -> Result<PauliSeries> {
    let rho = logical_state(spec)?;
    let rho0 = inject_displacement_error(&rho, alpha, &spec.cfg)?.with_ground_qubit();
    let (axis, sign) = spec.label.axis();
    pauli_series_from(
        circ,
        policy,
        &rho0,
        axis,
        sign,
        &format!("{}+D({alpha})", spec.label),
        &spec.lattice,
        run,
    )
}

/// One row of the error-injection grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionRow {
    pub alpha: f64,
    pub cycle: usize,
    pub value: f64,
    pub reference: f64,
    pub difference: f64,
}

/// ⟨Z_L⟩(policy) − ⟨Z_L⟩(reference) over real injected displacements and
/// cycle counts.
pub fn injection_grid(
    circ: &Circuit,
    policy: &Policy,
    reference: &Policy,
    spec: &GkpStateSpec,
    alphas: &[f64],
    run: &RunConfig,
) -> Result<Vec<InjectionRow>> {
    let mut rows = Vec::new();
    for &a in alphas {
        let alpha = Complex64::new(a, 0.0);
        let s = injected_series(circ, policy, spec, alpha, run)?;
        let r = injected_series(circ, reference, spec, alpha, run)?;
        for k in 0..s.mean.len() {
            rows.push(InjectionRow {
                alpha: a,
                cycle: k,
                value: s.mean[k],
                reference: r.mean[k],
                difference: s.mean[k] - r.mean[k],
            });
        }
    }
    Ok(rows)
}

/// Lifetime of each named policy with the bias table added to every applied
/// gate parameter.
pub fn biased_sweep(
    circ: &Circuit,
    policies: &[(String, Policy)],
    bias: &BiasTable,
    spec: &GkpStateSpec,
    run: &RunConfig,
) -> Result<Vec<(String, LifetimeFit)>> {
    let biased = circ.clone().with_bias(bias.offsets());
    policies
        .iter()
        .map(|(name, p)| Ok((name.clone(), pauli_series(&biased, p, spec, run)?.fit()?)))
        .collect()
}

/// Lifetimes per logical state and the derived channel figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeSummary {
    pub lifetimes: BTreeMap<String, LifetimeFit>,
    /// 3 / (1/T_X + 1/T_Y + 1/T_Z), when all three axes were measured.
    pub aggregate_lifetime: Option<f64>,
    pub channel_infidelity_per_cycle: Option<f64>,
    pub entanglement_infidelity_per_cycle: Option<f64>,
}

impl LifetimeSummary {
    pub fn from_fits(fits: &[(LogicalLabel, LifetimeFit)]) -> Self {
        let mut per_axis: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut lifetimes = BTreeMap::new();
        for (label, fit) in fits {
            let key = match label.axis().0 {
                PauliAxis::X => "X",
                PauliAxis::Y => "Y",
                PauliAxis::Z => "Z",
            };
            per_axis.entry(key).or_default().push(fit.t());
            lifetimes.insert(label.to_string(), *fit);
        }
        let axes: Option<Vec<f64>> = ["X", "Y", "Z"]
            .iter()
            .map(|k| per_axis.get(k).map(|ts| aggregate_lifetime(ts)))
            .collect();
        let (aggregate, channel, ent) = match axes {
            Some(t) => {
                let t3 = [t[0], t[1], t[2]];
                let fbar = average_channel_fidelity(t3, 1.0);
                (
                    Some(aggregate_lifetime(&t)),
                    Some(1.0 - fbar),
                    Some(1.0 - entanglement_fidelity(fbar)),
                )
            }
            None => (None, None, None),
        };
        LifetimeSummary {
            lifetimes,
            aggregate_lifetime: aggregate.filter(|t| t.is_finite()),
            channel_infidelity_per_cycle: channel,
            entanglement_infidelity_per_cycle: ent,
        }
    }
}

/// CSV with columns label, t, mean, std.
pub fn write_series_csv<W: Write>(w: W, series: &[PauliSeries]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["label", "t", "mean", "std"]).map_err(csv_err)?;
    for s in series {
        for k in 0..s.times.len() {
            out.write_record([
                s.label.clone(),
                s.times[k].to_string(),
                s.mean[k].to_string(),
                s.std[k].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_injection_csv<W: Write>(w: W, rows: &[InjectionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests;
