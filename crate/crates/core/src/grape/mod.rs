//! Feedback-GRAPE training.
//!
//! Each episode is recorded on its own [`Tape`]. The surrogate
//! L = R + detach(R)·Σ ln p has the gradient ∂R/∂θ + R·∂ln P/∂θ, whose batch
//! mean is an unbiased estimate of ∂⟨R⟩/∂θ. Batch members run in parallel
//! and their gradients are summed in index order, so results do not depend
//! on the thread count.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{trace_product, Backend, Plain, Tape};
use crate::error::{Error, Result};
use crate::evaluation::{pauli_series, LifetimeFit, RunConfig};
use crate::fock::{CMat, DensityMatrix, HilbertConfig};
use crate::gkp::{logical_ket, logical_state, pauli_operator, CodeLattice, GkpStateSpec, LogicalLabel, PauliAxis};
use crate::lindblad::NoiseModel;
use crate::policies::{Architecture, BiasInit, Policy};
use crate::sbs::{exact_expectation, fidelity_observable, frame_sign, joint_observable, run_episode, Circuit, Mode};

/// How the policy gradient is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Monte-Carlo batches with the score-function term.
    #[default]
    Sampled,
    /// Exact gradient of the expected return over the whole outcome tree.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Full cycles per training episode.
    pub n_cycles_train: usize,
    pub learning_rate: f64,
    pub noise_preset: String,
    pub seed: u64,
    pub n_agents: usize,
    pub delta: f64,
    pub n_fock: usize,
    /// Truncation tolerance of the training state.
    pub truncation_tolerance: f64,
    /// Global-norm gradient clip; off when `None`.
    pub clip: Option<f64>,
    pub estimator: Estimator,
    pub bias_init: BiasInit,
    /// Evaluation run used for post-selection.
    pub selection: RunConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 6,
            n_cycles_train: 10,
            learning_rate: 1e-4,
            noise_preset: "low".into(),
            seed: 0,
            n_agents: 20,
            delta: GkpStateSpec::DEFAULT_DELTA,
            n_fock: 100,
            truncation_tolerance: GkpStateSpec::DEFAULT_TRUNCATION_TOLERANCE,
            clip: None,
            estimator: Estimator::Sampled,
            bias_init: BiasInit::default(),
            selection: RunConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("n_cycles_train", self.n_cycles_train),
            ("n_agents", self.n_agents),
            ("n_fock", self.n_fock),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be positive".into(),
                });
            }
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("delta", self.delta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "clip",
                    reason: format!("must be positive, got {c}"),
                });
            }
        }
        self.selection.validate()
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::preset(&self.noise_preset)
    }

    pub fn state_spec(&self, label: LogicalLabel) -> Result<GkpStateSpec> {
        let cfg = HilbertConfig::new(self.n_fock)?;
        Ok(GkpStateSpec::new(label, self.delta, cfg).with_truncation_tolerance(self.truncation_tolerance))
    }
}

/// What an episode is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Fidelity of the final cavity state with the frame-adjusted initial
    /// state.
    Fidelity,
    /// Frame-corrected expectation of a logical Pauli.
    Pauli(PauliAxis),
}

/// The label an eigenstate is carried to by `full_cycles` logical frame
/// steps.
pub fn frame_label(label: LogicalLabel, full_cycles: usize) -> LogicalLabel {
    let (axis, _) = label.axis();
    if frame_sign(axis, full_cycles) > 0.0 {
        return label;
    }
    match label {
        LogicalLabel::PlusZ => LogicalLabel::MinusZ,
        LogicalLabel::MinusZ => LogicalLabel::PlusZ,
        LogicalLabel::PlusX => LogicalLabel::MinusX,
        LogicalLabel::MinusX => LogicalLabel::PlusX,
        y => y,
    }
}

/// A training problem: circuit, initial state, horizon and observables.
#[derive(Debug, Clone)]
pub struct Task {
    pub circuit: Circuit,
    /// Joint initial state with the ancilla in g.
    pub rho0: DensityMatrix,
    pub n_half: usize,
    /// Joint projector onto the frame-adjusted target.
    pub fidelity_obs: Arc<CMat>,
    /// Frame-corrected Z_L ⊗ I.
    pub z_obs: Arc<CMat>,
    pub objective: Objective,
    objective_obs: Arc<CMat>,
    lattice: CodeLattice,
}

impl Task {
    /// Starts from `spec` and scores the state after `n_cycles` full cycles.
    pub fn new(circuit: Circuit, spec: &GkpStateSpec, n_cycles: usize) -> Result<Self> {
        if spec.cfg != *circuit.cfg() {
            return Err(Error::DimensionMismatch {
                expected: circuit.cfg().n_fock(),
                found: spec.cfg.n_fock(),
            });
        }
        let rho0 = logical_state(spec)?.with_ground_qubit();
        let mut target = *spec;
        target.label = frame_label(spec.label, n_cycles);
        let fidelity_obs = fidelity_observable(&logical_ket(&target)?);
        let z_obs = signed(
            pauli_operator(&spec.lattice, PauliAxis::Z, &spec.cfg),
            frame_sign(PauliAxis::Z, n_cycles),
        );
        Ok(Task {
            circuit,
            rho0,
            n_half: 2 * n_cycles,
            objective_obs: fidelity_obs.clone(),
            fidelity_obs,
            z_obs,
            objective: Objective::Fidelity,
            lattice: spec.lattice,
        })
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self.objective_obs = match objective {
            Objective::Fidelity => self.fidelity_obs.clone(),
            Objective::Pauli(axis) => signed(
                pauli_operator(&self.lattice, axis, self.circuit.cfg()),
                frame_sign(axis, self.n_half / 2),
            ),
        };
        self
    }

    pub fn objective_observable(&self) -> &Arc<CMat> {
        &self.objective_obs
    }
}

fn signed(op: crate::fock::Operator, sign: f64) -> Arc<CMat> {
    let o = joint_observable(&op);
    Arc::new(o.as_ref() * crate::fock::c(sign, 0.0))
}

/// One sampled episode and the gradient of its surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSample {
    pub return_value: f64,
    pub fidelity: f64,
    pub z: f64,
    pub log_prob: f64,
    pub grad: Vec<f64>,
}

/// Runs one episode on a tape and differentiates R + detach(R)·Σ ln p.
pub fn episode_gradient(task: &Task, policy: &Policy, mode: &Mode) -> Result<EpisodeSample> {
    let mut t = Tape::new();
    let bound = policy.bind(&mut t, true);
    let ep = run_episode(
        &mut t,
        &task.circuit,
        policy,
        &bound,
        task.rho0.matrix(),
        task.n_half,
        mode,
        None,
    )?;
    let tr = t.trace_with(&ep.rho, &task.objective_obs);
    let r = t.re(&tr);
    let frozen = t.detach(&r);
    let score = t.mul_scalar(&ep.log_prob, &frozen);
    let surrogate = t.add(&r, &score);
    let g = t.backward(surrogate)?;
    let grad = collect_grad(&g, &bound, policy);
    let rho = t.value(&ep.rho);
    let out = EpisodeSample {
        return_value: t.real(&r),
        fidelity: trace_product(&task.fidelity_obs, rho).re,
        z: trace_product(&task.z_obs, rho).re,
        log_prob: t.real(&ep.log_prob),
        grad,
    };
    if !out.return_value.is_finite() || out.grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(out)
}

fn collect_grad(g: &crate::autodiff::Gradients, bound: &[crate::autodiff::Var], policy: &Policy) -> Vec<f64> {
    let mut out = Vec::with_capacity(policy.n_params());
    for (v, tensor) in bound.iter().zip(policy.tensors()) {
        out.extend(g.real(*v, tensor.value.shape()).iter().copied());
    }
    out
}

/// Batch means of the return, fidelity, ⟨Z⟩ and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEstimate {
    pub return_value: f64,
    pub fidelity: f64,
    pub z: f64,
    pub grad: Vec<f64>,
}

/// Mean surrogate gradient over one episode per mode, reduced in order.
pub fn batch_gradient(task: &Task, policy: &Policy, modes: &[Mode]) -> Result<BatchEstimate> {
    if modes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let samples: Vec<EpisodeSample> = modes
        .par_iter()
        .map(|m| episode_gradient(task, policy, m))
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let mut grad = vec![0.0; policy.n_params()];
    let (mut r, mut f, mut z) = (0.0, 0.0, 0.0);
    for s in &samples {
        r += s.return_value;
        f += s.fidelity;
        z += s.z;
        for (a, b) in grad.iter_mut().zip(&s.grad) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|v| *v /= n);
    Ok(BatchEstimate {
        return_value: r / n,
        fidelity: f / n,
        z: z / n,
        grad,
    })
}

/// Expected value of the task objective over the full outcome tree.
pub fn exact_value(task: &Task, policy: &Policy) -> Result<f64> {
    exact_observable(task, policy, &task.objective_obs)
}

/// Expected Re Tr(O ρ) over the full outcome tree.
pub fn exact_observable(task: &Task, policy: &Policy, obs: &Arc<CMat>) -> Result<f64> {
    let mut b = Plain;
    let bound = policy.bind(&mut b, false);
    let v = exact_expectation(
        &mut b,
        &task.circuit,
        policy,
        &bound,
        task.rho0.matrix(),
        task.n_half,
        obs,
    )?;
    Ok(b.real(&v))
}

/// Expected objective and its exact gradient.
pub fn exact_gradient(task: &Task, policy: &Policy) -> Result<(f64, Vec<f64>)> {
    let mut t = Tape::new();
    let bound = policy.bind(&mut t, true);
    let v = exact_expectation(
        &mut t,
        &task.circuit,
        policy,
        &bound,
        task.rho0.matrix(),
        task.n_half,
        &task.objective_obs,
    )?;
    let g = t.backward(v)?;
    Ok((t.real(&v), collect_grad(&g, &bound, policy)))
}

/// Adam for gradient ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// θ ← θ + lr·m̂/(√v̂ + ε).
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                found: grad.len(),
            });
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] += self.learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

fn clip_norm(grad: &mut [f64], max: f64) {
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max {
        grad.iter_mut().for_each(|v| *v *= max / norm);
    }
}

/// One row of a training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub infidelity: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum AgentStatus {
    Completed,
    /// Stopped by the divergence guard at this epoch.
    Diverged {
        epoch: usize,
    },
}

/// Epochs above the divergence threshold before an agent is stopped.
pub const DIVERGENCE_PATIENCE: usize = 50;
/// Infidelity multiple of the first epoch that counts as diverging.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Tracks consecutive epochs whose infidelity exceeds
/// [`DIVERGENCE_FACTOR`] times the first one observed.
#[derive(Debug, Clone, Default)]
pub struct DivergenceGuard {
    baseline: Option<f64>,
    above: usize,
}

impl DivergenceGuard {
    /// Records one epoch; true once the run should be stopped.
    pub fn observe(&mut self, infidelity: f64) -> bool {
        let base = *self.baseline.get_or_insert(infidelity);
        if infidelity > DIVERGENCE_FACTOR * base || !infidelity.is_finite() {
            self.above += 1;
        } else {
            self.above = 0;
        }
        self.above >= DIVERGENCE_PATIENCE
    }
}

#[derive(Debug, Clone)]
pub struct AgentRun {
    pub agent: usize,
    pub seed: u64,
    pub policy: Policy,
    pub optimizer: Adam,
    pub curve: Vec<EpochRecord>,
    pub status: AgentStatus,
}

/// Where a training run starts.
#[derive(Debug, Clone)]
pub struct Resume {
    pub policy: Policy,
    pub optimizer: Option<Adam>,
    /// Number of epochs already done; numbering continues from here.
    pub epoch: usize,
}

/// Trains one policy for `cfg.epochs` epochs. Episode k of epoch e uses
/// stream e·batch_size + k of the agent seed, so a resumed run draws the
/// same outcomes an uninterrupted one would.
pub fn train_agent(
    task: &Task,
    start: Resume,
    cfg: &TrainConfig,
    agent: usize,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<AgentRun> {
    cfg.validate()?;
    let mut policy = start.policy;
    if !policy.is_trainable() {
        return Err(Error::InvalidParameter {
            name: "policy",
            reason: format!("{} policy has no trainable parameters", policy.architecture().name()),
        });
    }
    let mut opt = match start.optimizer {
        Some(o) if o.len() == policy.n_params() => o,
        Some(o) => {
            return Err(Error::DimensionMismatch {
                expected: policy.n_params(),
                found: o.len(),
            })
        }
        None => Adam::new(policy.n_params(), cfg.learning_rate),
    };
    let mut flat = policy.flatten();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut guard = DivergenceGuard::default();
    let mut status = AgentStatus::Completed;
    for epoch in start.epoch..start.epoch + cfg.epochs {
        let (fid, z, mut grad) = match cfg.estimator {
            Estimator::Sampled => {
                let modes: Vec<Mode> = (0..cfg.batch_size)
                    .map(|k| Mode::Stochastic {
                        seed,
                        stream: (epoch * cfg.batch_size + k) as u64,
                    })
                    .collect();
                let est = batch_gradient(task, &policy, &modes)?;
                (est.fidelity, est.z, est.grad)
            }
            Estimator::Exact => {
                let (_, grad) = exact_gradient(task, &policy)?;
                let fid = exact_observable(task, &policy, &task.fidelity_obs)?;
                let z = exact_observable(task, &policy, &task.z_obs)?;
                (fid, z, grad)
            }
        };
        let rec = EpochRecord {
            epoch,
            infidelity: 1.0 - fid,
            z,
        };
        on_epoch(&rec);
        curve.push(rec);
        if guard.observe(rec.infidelity) {
            log::warn!("agent {agent} diverged at epoch {epoch}");
            status = AgentStatus::Diverged { epoch };
            break;
        }
        if let Some(c) = cfg.clip {
            clip_norm(&mut grad, c);
        }
        opt.ascend(&mut flat, &grad)?;
        policy.set_flat(&flat)?;
    }
    Ok(AgentRun {
        agent,
        seed,
        policy,
        optimizer: opt,
        curve,
        status,
    })
}

/// Seed of agent `k`.
pub fn agent_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add(k as u64)
}

/// A trained agent with its post-selection score.
#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub run: AgentRun,
    pub lifetime: LifetimeFit,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: Vec<TrainedAgent>,
    /// Index of the agent with the longest +Z lifetime.
    pub best: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &TrainedAgent {
        &self.agents[self.best]
    }
}

/// Builds the standard-schedule circuit and +Z training task for `cfg`.
pub fn training_task(cfg: &TrainConfig) -> Result<(Task, GkpStateSpec)> {
    cfg.validate()?;
    let spec = cfg.state_spec(LogicalLabel::PlusZ)?;
    let circuit = Circuit::with_noise(spec.cfg, cfg.noise()?)?;
    Ok((Task::new(circuit, &spec, cfg.n_cycles_train)?, spec))
}

/// Trains `cfg.n_agents` independently seeded agents in parallel and
/// post-selects the one with the longest +Z lifetime on the fixed
/// selection run. Diverged agents are only selected if all diverged. With
/// `resume`, every agent continues from that state instead of a fresh
/// initialization.
pub fn train(cfg: &TrainConfig, arch: Architecture, resume: Option<&Resume>) -> Result<TrainOutcome> {
    let (task, spec) = training_task(cfg)?;
    let agents: Vec<TrainedAgent> = (0..cfg.n_agents)
        .into_par_iter()
        .map(|k| {
            let seed = agent_seed(cfg.seed, k);
            let start = match resume {
                Some(r) => r.clone(),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    Resume {
                        policy: Policy::random(arch, &mut rng, cfg.bias_init)?,
                        optimizer: None,
                        epoch: 0,
                    }
                }
            };
            let run = train_agent(&task, start, cfg, k, seed, |r| {
                log::debug!(
                    "agent {k} epoch {} infidelity {:.6} z {:.6}",
                    r.epoch,
                    r.infidelity,
                    r.z
                )
            })?;
            let lifetime = pauli_series(&task.circuit, &run.policy, &spec, &cfg.selection)?.fit()?;
            Ok(TrainedAgent { run, lifetime })
        })
        .collect::<Result<_>>()?;
    let best = post_select(&agents);
    Ok(TrainOutcome { agents, best })
}

fn post_select(agents: &[TrainedAgent]) -> usize {
    let any_ok = agents.iter().any(|a| a.run.status == AgentStatus::Completed);
    let mut best = 0;
    let mut best_t = f64::NEG_INFINITY;
    for (k, a) in agents.iter().enumerate() {
        if any_ok && a.run.status != AgentStatus::Completed {
            continue;
        }
        let t = a.lifetime.t();
        if t > best_t {
            best = k;
            best_t = t;
        }
    }
    best
}

/// CSV with columns epoch, infidelity, z.
pub fn write_curve_csv<W: Write>(w: W, curve: &[EpochRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in curve {
        out.serialize(r).map_err(crate::evaluation::csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LookupConfig {
    pub max_iterations: usize,
    pub learning_rate: f64,
    /// Stop once the objective improved by less than this over `patience`
    /// iterations.
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for LookupConfig {
    fn default() -> Self {
        LookupConfig {
            max_iterations: 400,
            learning_rate: 0.02,
            tolerance: 1e-6,
            patience: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LookupResult {
    pub policy: Policy,
    pub value: f64,
    /// Objective of the all-standard table.
    pub initial_value: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Maximizes the exact expected objective of a lookup table over
/// `task.n_half` half-cycles. The table starts at the standard parameters
/// and the best table seen is returned.
pub fn optimize_lookup(task: &Task, cfg: &LookupConfig) -> Result<LookupResult> {
    let mut policy = Policy::lookup(task.n_half)?;
    let mut flat = policy.flatten();
    let mut opt = Adam::new(flat.len(), cfg.learning_rate);
    let mut best = (f64::NEG_INFINITY, flat.clone());
    let mut trace = Vec::new();
    let mut initial = None;
    let mut since = 0;
    let mut mark = f64::NEG_INFINITY;
    let mut iterations = 0;
    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        let (v, g) = exact_gradient(task, &policy)?;
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        initial.get_or_insert(v);
        trace.push(v);
        if v > best.0 {
            best = (v, flat.clone());
        }
        if v > mark + cfg.tolerance {
            mark = v;
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                break;
            }
        }
        opt.ascend(&mut flat, &g)?;
        policy.set_flat(&flat)?;
    }
    policy.set_flat(&best.1)?;
    Ok(LookupResult {
        policy,
        value: best.0,
        initial_value: initial.unwrap_or(f64::NAN),
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests;
