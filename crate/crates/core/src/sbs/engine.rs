use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{idx, outcomes_to_string, Outcome, Schedule, DEFAULT_ALPHA_L4, N_PARAMS};
use crate::autodiff::{trace_product, Backend, Plain, RealFn};
use crate::error::{Error, Result};
use crate::fock::{displacement, CMat, DensityMatrix, HilbertConfig};
use crate::gkp::fidelity;
use crate::lindblad::{Generator, HamiltonianParams, IdleChannel, IntegratorConfig, NoiseModel};
use crate::policies::{Policy, PolicyState};

/// Deepest exhaustive branch enumeration accepted.
pub const MAX_ENUMERATION_DEPTH: usize = 12;

/// Branches with a smaller probability are treated as impossible.
const MIN_BRANCH_PROBABILITY: f64 = 1e-12;

/// The parameter-independent part of the circuit: schedule, noise and the
/// precomputed idle propagators.
#[derive(Debug, Clone)]
pub struct Circuit {
    cfg: HilbertConfig,
    schedule: Schedule,
    noise: NoiseModel,
    ham: HamiltonianParams,
    integrator: IntegratorConfig,
    alpha_l4: Complex64,
    bias: Option<[f64; N_PARAMS]>,
    channels: Vec<Arc<IdleChannel>>,
    layer4: Option<Arc<CMat>>,
}

impl Circuit {
    pub fn new(
        cfg: HilbertConfig,
        schedule: Schedule,
        noise: NoiseModel,
        ham: HamiltonianParams,
        integrator: IntegratorConfig,
    ) -> Result<Self> {
        schedule.validate()?;
        integrator.validate()?;
        let gen = Generator::new(&noise, &ham, &cfg)?;
        let mut cache: Vec<(f64, Arc<IdleChannel>)> = Vec::new();
        let mut channels = Vec::new();
        for (_, d) in schedule.segments() {
            let ch = match cache.iter().find(|(x, _)| (x - d).abs() < 1e-15) {
                Some((_, ch)) => ch.clone(),
                None => {
                    let ch = Arc::new(IdleChannel::new(&gen, d, &integrator)?);
                    cache.push((d, ch.clone()));
                    ch
                }
            };
            channels.push(ch);
        }
        let mut circ = Circuit {
            cfg,
            schedule,
            noise,
            ham,
            integrator,
            alpha_l4: Complex64::new(0.0, 0.0),
            bias: None,
            channels,
            layer4: None,
        };
        circ.set_alpha_l4(DEFAULT_ALPHA_L4);
        Ok(circ)
    }

    /// Standard schedule, no Hamiltonian, default step.
    pub fn with_noise(cfg: HilbertConfig, noise: NoiseModel) -> Result<Self> {
        Self::new(
            cfg,
            Schedule::standard(),
            noise,
            HamiltonianParams::disabled(),
            IntegratorConfig::default(),
        )
    }

    pub fn with_alpha_l4(mut self, alpha: Complex64) -> Self {
        self.set_alpha_l4(alpha);
        self
    }

    fn set_alpha_l4(&mut self, alpha: Complex64) {
        self.alpha_l4 = alpha;
        self.layer4 = if alpha == Complex64::new(0.0, 0.0) {
            None
        } else {
            Some(Arc::new(displacement(alpha, &self.cfg).into_matrix()))
        };
    }

    /// Fixed offsets added to every applied gate parameter.
    pub fn with_bias(mut self, bias: [f64; N_PARAMS]) -> Self {
        self.bias = if bias.iter().all(|&b| b == 0.0) {
            None
        } else {
            Some(bias)
        };
        self
    }

    pub fn cfg(&self) -> &HilbertConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn hamiltonian(&self) -> &HamiltonianParams {
        &self.ham
    }

    pub fn integrator(&self) -> &IntegratorConfig {
        &self.integrator
    }

    pub fn alpha_l4(&self) -> Complex64 {
        self.alpha_l4
    }

    pub fn bias(&self) -> Option<&[f64; N_PARAMS]> {
        self.bias.as_ref()
    }

    fn biased<B: Backend>(&self, b: &mut B, p: &[B::M]) -> Result<Vec<B::M>> {
        if p.len() != N_PARAMS {
            return Err(Error::ScheduleMismatch(format!(
                "half-cycle needs {N_PARAMS} parameters, got {}",
                p.len()
            )));
        }
        Ok(match &self.bias {
            None => p.to_vec(),
            Some(off) => p
                .iter()
                .zip(off)
                .map(|(x, &o)| b.add_const(x, &CMat::from_element(1, 1, Complex64::new(o, 0.0))))
                .collect(),
        })
    }

    /// Gates and idling up to the readout; returns the pre-measurement state.
    pub fn half_cycle<B: Backend>(&self, b: &mut B, rho: &B::M, p: &[B::M]) -> Result<B::M> {
        let p = self.biased(b, p)?;
        let n = self.cfg.n_fock();
        let mut rho = b.idle(rho, &self.channels[0]);
        for layer in 0..3 {
            let r = b.rotation(&p[idx::PHI + layer], &p[idx::THETA + layer]);
            rho = b.apply_qubit(&rho, &r);
            let re = b.scale(&p[idx::BETA_RE + layer], 0.5);
            let im = b.scale(&p[idx::BETA_IM + layer], 0.5);
            let d = b.displacement(&re, &im, n);
            rho = b.apply_ecd(&rho, &d);
            rho = b.idle(&rho, &self.channels[1 + layer]);
        }
        let r = b.rotation(&p[idx::PHI + 3], &p[idx::THETA + 3]);
        rho = b.apply_qubit(&rho, &r);
        if let Some(u) = &self.layer4 {
            rho = b.apply_cavity(&rho, u);
        }
        Ok(b.idle(&rho, &self.channels[4]))
    }

    /// Reset, readout idling, virtual rotation and the closing idle.
    pub fn finish_half_cycle<B: Backend>(&self, b: &mut B, rho: &B::M, p: &[B::M]) -> Result<B::M> {
        let p = self.biased(b, p)?;
        let rho = b.reset(rho);
        let rho = b.idle(&rho, &self.channels[5]);
        let rho = b.apply_vr(&rho, &p[idx::THETA_VR]);
        Ok(b.idle(&rho, &self.channels[6]))
    }
}

/// Outcome selection for a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Monte-Carlo sampling from ChaCha8 seeded with `seed` on stream `stream`.
    Stochastic { seed: u64, stream: u64 },
    /// Prescribed outcomes, one per half-cycle.
    Forced(Vec<Outcome>),
    /// No readout; requires the autonomous schedule.
    Autonomous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementRecord {
    pub outcome: Outcome,
    pub probability: f64,
    pub log_prob: f64,
}

/// A run on an arbitrary backend.
#[derive(Debug, Clone)]
pub struct Episode<M> {
    pub records: Vec<MeasurementRecord>,
    /// Parameters applied in each half-cycle (before any bias).
    pub params: Vec<[f64; N_PARAMS]>,
    pub rho: M,
    /// Σ ln p over realized outcomes, 1×1.
    pub log_prob: M,
    /// Re Tr(O ρ) at full-cycle boundaries, when an observable was given.
    pub snapshots: Vec<f64>,
}

fn check_mode(circ: &Circuit, mode: &Mode, n_half: usize) -> Result<()> {
    match mode {
        Mode::Autonomous if circ.schedule.measured() => Err(Error::ScheduleMismatch(
            "autonomous mode needs the autonomous schedule".into(),
        )),
        Mode::Forced(o) if circ.schedule.measured() && o.len() < n_half => Err(Error::ScheduleMismatch(format!(
            "{} forced outcomes for {n_half} half-cycles",
            o.len()
        ))),
        _ => Ok(()),
    }
}

/// Runs `n_half` half-cycles from the joint state `rho0`, querying the
/// policy before each one.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<B: Backend>(
    b: &mut B,
    circ: &Circuit,
    policy: &Policy,
    bound: &[B::M],
    rho0: &CMat,
    n_half: usize,
    mode: &Mode,
    observable: Option<&Arc<CMat>>,
) -> Result<Episode<B::M>> {
    check_mode(circ, mode, n_half)?;
    let mut rng = match mode {
        Mode::Stochastic { seed, stream } => {
            let mut r = ChaCha8Rng::seed_from_u64(*seed);
            r.set_stream(*stream);
            Some(r)
        }
        _ => None,
    };
    let mut rho = b.constant(rho0.clone());
    let mut state = policy.initial_state(b);
    let mut last = None;
    let mut log_prob = b.scalar(0.0);
    let mut records = Vec::new();
    let mut params_used = Vec::new();
    let mut snapshots = Vec::new();
    for t in 0..n_half {
        let (p, next) = policy.step(b, bound, &state, last)?;
        state = next;
        let mut arr = [0.0; N_PARAMS];
        for (a, m) in arr.iter_mut().zip(&p) {
            *a = b.real(m);
        }
        params_used.push(arr);
        let pre = circ.half_cycle(b, &rho, &p)?;
        let post = if circ.schedule.measured() {
            let pg = projected_probability(b.value(&pre), 0);
            let outcome = match mode {
                Mode::Forced(o) => o[t],
                Mode::Stochastic { .. } => {
                    let s: f64 = rng.as_mut().expect("stochastic mode has an rng").gen();
                    if pg > s {
                        Outcome::G
                    } else {
                        Outcome::E
                    }
                }
                Mode::Autonomous => unreachable!("rejected by check_mode"),
            };
            let proj = b.project(&pre, outcome.index());
            let tr = b.trace(&proj);
            let prob = b.re(&tr);
            let pv = b.real(&prob);
            if pv < MIN_BRANCH_PROBABILITY {
                return Err(Error::ImpossibleBranch {
                    outcome: outcome.as_char(),
                    probability: pv,
                });
            }
            let inv = b.map_real(&prob, RealFn::Recip);
            let ln = b.map_real(&prob, RealFn::Ln);
            log_prob = b.add(&log_prob, &ln);
            records.push(MeasurementRecord {
                outcome,
                probability: pv,
                log_prob: pv.ln(),
            });
            last = Some(outcome);
            b.mul_scalar(&proj, &inv)
        } else {
            pre
        };
        rho = circ.finish_half_cycle(b, &post, &p)?;
        let tr = b.value(&rho).trace();
        if (tr.re - 1.0).abs() > DensityMatrix::TRACE_TOL || !tr.re.is_finite() {
            return Err(Error::Numerical(format!("trace {} after half-cycle {}", tr.re, t + 1)));
        }
        if let Some(obs) = observable {
            if t % 2 == 1 {
                snapshots.push(trace_product(obs, b.value(&rho)).re);
            }
        }
    }
    Ok(Episode {
        records,
        params: params_used,
        rho,
        log_prob,
        snapshots,
    })
}

/// Projective ancilla readout of a joint state. The outcome is g when
/// p_g exceeds a uniform draw from `rng`.
pub fn measure_ancilla<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    rng: &mut R,
) -> Result<(MeasurementRecord, DensityMatrix)> {
    let pg = projected_probability(rho.matrix(), 0);
    let s: f64 = rng.gen();
    measure_ancilla_forced(rho, if pg > s { Outcome::G } else { Outcome::E })
}

/// Readout conditioned on a prescribed outcome.
pub fn measure_ancilla_forced(rho: &DensityMatrix, outcome: Outcome) -> Result<(MeasurementRecord, DensityMatrix)> {
    let proj = Plain.project(rho.matrix(), outcome.index());
    let p = projected_probability(&proj, outcome.index());
    if p < MIN_BRANCH_PROBABILITY {
        return Err(Error::ImpossibleBranch {
            outcome: outcome.as_char(),
            probability: p,
        });
    }
    let rec = MeasurementRecord {
        outcome,
        probability: p,
        log_prob: p.ln(),
    };
    Ok((rec, DensityMatrix::from_raw(proj.map(|z| z / p))))
}

/// Tr_q ρ ⊗ |g⟩⟨g|.
pub fn reset_ancilla(rho: &DensityMatrix) -> DensityMatrix {
    DensityMatrix::from_raw(Plain.reset(rho.matrix()))
}

fn projected_probability(rho: &CMat, q: usize) -> f64 {
    (0..rho.nrows() / 2).map(|n| rho[(2 * n + q, 2 * n + q)].re).sum()
}

/// A realized trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<MeasurementRecord>,
    pub params: Vec<[f64; N_PARAMS]>,
    pub final_rho: DensityMatrix,
    /// Fidelity of the final cavity state with the initial one.
    pub return_value: f64,
    pub cumulative_log_prob: f64,
    pub snapshots: Vec<f64>,
    pub mode: Mode,
}

#[derive(Serialize)]
struct LogLine<'a> {
    half_cycle: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_p: Option<f64>,
    params: &'a [f64; N_PARAMS],
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
}

impl Trajectory {
    pub fn outcomes(&self) -> String {
        outcomes_to_string(&self.records.iter().map(|r| r.outcome).collect::<Vec<_>>())
    }

    /// One JSON object per half-cycle.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, p) in self.params.iter().enumerate() {
            let rec = self.records.get(k);
            let z = if k % 2 == 1 {
                self.snapshots.get(k / 2).copied()
            } else {
                None
            };
            let line = LogLine {
                half_cycle: k + 1,
                outcome: rec.map(|r| r.outcome),
                p: rec.map(|r| r.probability),
                log_p: rec.map(|r| r.log_prob),
                params: p,
                z,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Plain-valued run from a joint density matrix.
pub fn run_trajectory(
    circ: &Circuit,
    policy: &Policy,
    rho0: &DensityMatrix,
    n_half: usize,
    mode: &Mode,
    observable: Option<&Arc<CMat>>,
) -> Result<Trajectory> {
    if rho0.dim() != circ.cfg.joint_dim() {
        return Err(Error::DimensionMismatch {
            expected: circ.cfg.joint_dim(),
            found: rho0.dim(),
        });
    }
    let mut b = Plain;
    let bound = policy.bind(&mut b, false);
    let ep = run_episode(&mut b, circ, policy, &bound, rho0.matrix(), n_half, mode, observable)?;
    let final_rho = DensityMatrix::from_raw(ep.rho);
    let return_value = if n_half == 0 {
        1.0
    } else {
        fidelity(&final_rho.cavity_marginal(), &rho0.cavity_marginal())?
    };
    Ok(Trajectory {
        cumulative_log_prob: ep.records.iter().map(|r| r.log_prob).sum(),
        records: ep.records,
        params: ep.params,
        final_rho,
        return_value,
        snapshots: ep.snapshots,
        mode: mode.clone(),
    })
}

/// One leaf of the outcome tree.
#[derive(Debug, Clone)]
pub struct Branch {
    pub outcomes: Vec<Outcome>,
    pub probability: f64,
    /// Cavity marginal of the final state, when requested.
    pub final_state: Option<DensityMatrix>,
    pub return_value: f64,
    /// Re Tr(O ρ_final) for the supplied joint observable.
    pub observable: Option<f64>,
}

impl Branch {
    pub fn label(&self) -> String {
        outcomes_to_string(&self.outcomes)
    }
}

struct Walk<'a> {
    circ: &'a Circuit,
    policy: &'a Policy,
    bound: Vec<CMat>,
    target: DensityMatrix,
    observable: Option<&'a Arc<CMat>>,
    keep_states: bool,
    n_half: usize,
}

impl Walk<'_> {
    fn leaf(&self, outcomes: Vec<Outcome>, probability: f64, rho: Option<CMat>) -> Result<Branch> {
        let (ret, obs, state) = match rho {
            Some(r) => {
                let cav = DensityMatrix::from_raw(crate::fock::partial_trace_qubit(&r));
                let ret = fidelity(&cav, &self.target)?;
                let obs = self.observable.map(|o| trace_product(o, &r).re);
                (ret, obs, self.keep_states.then_some(cav))
            }
            None => (0.0, self.observable.map(|_| 0.0), None),
        };
        Ok(Branch {
            outcomes,
            probability,
            final_state: state,
            return_value: ret,
            observable: obs,
        })
    }

    fn recurse(
        &self,
        rho: Option<CMat>,
        state: PolicyState<CMat>,
        last: Option<Outcome>,
        prefix: Vec<Outcome>,
        prob: f64,
    ) -> Result<Vec<Branch>> {
        let t = state.t;
        if t == self.n_half {
            return Ok(vec![self.leaf(prefix, prob, rho)?]);
        }
        let mut b = Plain;
        let (p, next) = self.policy.step(&mut b, &self.bound, &state, last)?;
        let pre = match &rho {
            Some(r) => Some(self.circ.half_cycle(&mut b, r, &p)?),
            None => None,
        };
        if !self.circ.schedule.measured() {
            let post = match pre {
                Some(r) => Some(self.circ.finish_half_cycle(&mut b, &r, &p)?),
                None => None,
            };
            return self.recurse(post, next, None, prefix, prob);
        }
        let child = |o: Outcome| -> Result<Vec<Branch>> {
            let mut b = Plain;
            let (post, pq) = match &pre {
                Some(r) => {
                    let proj = b.project(r, o.index());
                    let pq = projected_probability(&proj, o.index());
                    if pq < MIN_BRANCH_PROBABILITY {
                        (None, pq.max(0.0))
                    } else {
                        let normed = proj.map(|z| z / pq);
                        (Some(self.circ.finish_half_cycle(&mut b, &normed, &p)?), pq)
                    }
                }
                None => (None, 0.0),
            };
            let mut pre_fix = prefix.clone();
            pre_fix.push(o);
            self.recurse(post, next.clone(), Some(o), pre_fix, prob * pq)
        };
        let remaining = self.n_half - t;
        let (g, e) = if remaining >= 3 {
            rayon::join(|| child(Outcome::G), || child(Outcome::E))
        } else {
            (child(Outcome::G), child(Outcome::E))
        };
        let mut out = g?;
        out.extend(e?);
        Ok(out)
    }
}

/// Every outcome sequence of `n_half` half-cycles with its probability,
/// return and optional observable value. With the autonomous schedule the
/// tree has a single branch.
pub fn enumerate_branches(
    circ: &Circuit,
    policy: &Policy,
    rho0: &DensityMatrix,
    n_half: usize,
    observable: Option<&Arc<CMat>>,
    keep_states: bool,
) -> Result<Vec<Branch>> {
    if n_half > MAX_ENUMERATION_DEPTH {
        return Err(Error::DepthLimit {
            depth: n_half,
            limit: MAX_ENUMERATION_DEPTH,
        });
    }
    if rho0.dim() != circ.cfg.joint_dim() {
        return Err(Error::DimensionMismatch {
            expected: circ.cfg.joint_dim(),
            found: rho0.dim(),
        });
    }
    let mut b = Plain;
    let bound = policy.bind(&mut b, false);
    let state = policy.initial_state(&mut b);
    let walk = Walk {
        circ,
        policy,
        bound,
        target: rho0.cavity_marginal(),
        observable,
        keep_states,
        n_half,
    };
    walk.recurse(Some(rho0.matrix().clone()), state, None, Vec::new(), 1.0)
}

/// Σ over all outcome sequences of Re Tr(O ρ̃), where ρ̃ is the unnormalized
/// branch state. This is the exact expectation of O after `n_half`
/// half-cycles, and it is differentiable on any backend.
#[allow(clippy::too_many_arguments)]
pub fn exact_expectation<B: Backend>(
    b: &mut B,
    circ: &Circuit,
    policy: &Policy,
    bound: &[B::M],
    rho0: &CMat,
    n_half: usize,
    observable: &Arc<CMat>,
) -> Result<B::M> {
    if n_half > MAX_ENUMERATION_DEPTH {
        return Err(Error::DepthLimit {
            depth: n_half,
            limit: MAX_ENUMERATION_DEPTH,
        });
    }
    let rho = b.constant(rho0.clone());
    let state = policy.initial_state(b);
    expectation_rec(b, circ, policy, bound, rho, state, None, n_half, observable)
}

#[allow(clippy::too_many_arguments)]
fn expectation_rec<B: Backend>(
    b: &mut B,
    circ: &Circuit,
    policy: &Policy,
    bound: &[B::M],
    rho: B::M,
    state: PolicyState<B::M>,
    last: Option<Outcome>,
    n_half: usize,
    observable: &Arc<CMat>,
) -> Result<B::M> {
    if state.t == n_half {
        let v = b.trace_with(&rho, observable);
        return Ok(b.re(&v));
    }
    let (p, next) = policy.step(b, bound, &state, last)?;
    let pre = circ.half_cycle(b, &rho, &p)?;
    if !circ.schedule.measured() {
        let post = circ.finish_half_cycle(b, &pre, &p)?;
        return expectation_rec(b, circ, policy, bound, post, next, None, n_half, observable);
    }
    let mut total: Option<B::M> = None;
    for o in Outcome::BOTH {
        let proj = b.project(&pre, o.index());
        let post = circ.finish_half_cycle(b, &proj, &p)?;
        let v = expectation_rec(b, circ, policy, bound, post, next.clone(), Some(o), n_half, observable)?;
        total = Some(match total {
            None => v,
            Some(t) => b.add(&t, &v),
        });
    }
    Ok(total.expect("two outcomes"))
}
