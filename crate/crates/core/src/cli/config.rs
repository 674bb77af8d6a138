use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::RunConfig;
use crate::fock::HilbertConfig;
use crate::gkp::{CodeLattice, GkpStateSpec, LatticeKind, LogicalLabel};
use crate::grape::{Estimator, LookupConfig, TrainConfig};
use crate::lindblad::{HamiltonianParams, IntegratorConfig, NoiseModel};
use crate::policies::{Architecture, BiasInit, DENSE_HIDDEN, GRU_STATE};
use crate::sbs::{Circuit, Schedule, ScheduleKind};

/// Full experiment description. Every block has defaults except `train`,
/// which the train command requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub hilbert: HilbertBlock,
    #[serde(default)]
    pub code: CodeBlock,
    #[serde(default)]
    pub noise: NoiseBlock,
    #[serde(default)]
    pub schedule: ScheduleBlock,
    #[serde(default)]
    pub policy: PolicyBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub prepare: PrepareBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<EvaluateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enumerate: Option<EnumerateBlock>,
}

fn default_label() -> String {
    "run".into()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            label: default_label(),
            out_dir: default_out_dir(),
            hilbert: HilbertBlock::default(),
            code: CodeBlock::default(),
            noise: NoiseBlock::default(),
            schedule: ScheduleBlock::default(),
            policy: PolicyBlock::default(),
            run: RunBlock::default(),
            prepare: PrepareBlock::default(),
            train: None,
            evaluate: None,
            enumerate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HilbertBlock {
    pub n_fock: usize,
}

impl Default for HilbertBlock {
    fn default() -> Self {
        HilbertBlock { n_fock: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeBlock {
    pub lattice: LatticeKind,
    pub delta: f64,
    pub truncation_tolerance: f64,
    /// Logical state for prepare-state, run-qec and enumerate.
    pub state: LogicalLabel,
}

impl Default for CodeBlock {
    fn default() -> Self {
        CodeBlock {
            lattice: LatticeKind::Square,
            delta: GkpStateSpec::DEFAULT_DELTA,
            truncation_tolerance: 1e-2,
            state: LogicalLabel::PlusZ,
        }
    }
}

/// Either `preset` or all of `t_s`, `t1`, `t2`. Times are in units of τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseBlock {
    pub preset: Option<String>,
    pub t_s: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    /// White cavity dephasing time.
    pub cavity_dephasing: Option<f64>,
    /// Adds the lumped residual cavity dephasing term.
    pub lumped_dephasing: bool,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        NoiseBlock {
            preset: Some("low".into()),
            t_s: None,
            t1: None,
            t2: None,
            cavity_dephasing: None,
            lumped_dephasing: false,
        }
    }
}

impl NoiseBlock {
    pub fn model(&self) -> Result<NoiseModel> {
        let custom = [self.t_s, self.t1, self.t2];
        let mut m = match (&self.preset, custom) {
            (Some(_), [None, None, None]) | (None, [None, None, None]) => {
                NoiseModel::preset(self.preset.as_deref().unwrap_or("low"))?
            }
            (None, [Some(t_s), Some(t1), Some(t2)]) => NoiseModel::custom(t_s, t1, t2)?,
            (Some(_), _) => {
                return Err(Error::Config(
                    "noise: give either `preset` or `t_s`, `t1`, `t2`, not both".into(),
                ))
            }
            (None, _) => {
                return Err(Error::Config(
                    "noise: custom noise needs all of `t_s`, `t1`, `t2`".into(),
                ))
            }
        };
        if let Some(t) = self.cavity_dephasing {
            m = m.with_white_cavity_dephasing(t);
        }
        if self.lumped_dephasing {
            m = m.with_lumped_cavity_dephasing();
        }
        m.validate()?;
        Ok(m)
    }

    /// Preset name, required by the trainer.
    pub fn preset_name(&self) -> Result<String> {
        match (&self.preset, self.t_s, self.cavity_dephasing, self.lumped_dephasing) {
            (Some(p), None, None, false) => Ok(p.clone()),
            _ => Err(Error::Config("train: noise must be a plain `preset`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleBlock {
    pub kind: ScheduleKind,
    /// Layer-4 cavity displacement as [re, im].
    pub alpha_l4: [f64; 2],
    /// Integrator step in units of τ.
    pub dt: f64,
    /// Dispersive shift and Kerr in rad/μs; off when zero.
    pub chi: f64,
    pub kerr: f64,
}

impl Default for ScheduleBlock {
    fn default() -> Self {
        ScheduleBlock {
            kind: ScheduleKind::Standard,
            alpha_l4: [crate::sbs::DEFAULT_ALPHA_L4.re, crate::sbs::DEFAULT_ALPHA_L4.im],
            dt: IntegratorConfig::DEFAULT_DT,
            chi: 0.0,
            kerr: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyBlock {
    /// Policy checkpoint; the standard policy when absent. For `train` this
    /// resumes training.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    #[default]
    Stochastic,
    Forced,
    Autonomous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub n_cycles: usize,
    pub n_batches: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: ModeKind,
    /// Outcome string for forced mode, one g/e per half-cycle.
    pub outcomes: Option<String>,
    /// Number of trajectories whose per-half-cycle log is written.
    pub logged_trajectories: usize,
}

impl Default for RunBlock {
    fn default() -> Self {
        let r = RunConfig::default();
        RunBlock {
            n_cycles: r.n_cycles,
            n_batches: r.n_batches,
            batch_size: r.batch_size,
            seed: r.seed,
            mode: ModeKind::Stochastic,
            outcomes: None,
            logged_trajectories: 1,
        }
    }
}

impl RunBlock {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            n_cycles: self.n_cycles,
            n_batches: self.n_batches,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareBlock {
    /// Δ ladder for the stabilizer report.
    pub deltas: Vec<f64>,
    /// Wigner grid half-width in q and p.
    pub wigner_extent: f64,
    pub wigner_points: usize,
}

impl Default for PrepareBlock {
    fn default() -> Self {
        PrepareBlock {
            deltas: vec![0.5, 0.4, 0.3],
            wigner_extent: 4.0,
            wigner_points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_cycles_train: usize,
    pub learning_rate: f64,
    pub n_agents: usize,
    pub clip: Option<f64>,
    pub estimator: Estimator,
    pub bias_init: BiasInit,
    /// Post-selection run; `[run]` sizes with 100 cycles when absent.
    pub selection: Option<RunConfig>,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainBlock {
            architecture: Architecture::Gru {
                state: GRU_STATE,
                hidden: DENSE_HIDDEN,
            },
            epochs: t.epochs,
            batch_size: t.batch_size,
            n_cycles_train: t.n_cycles_train,
            learning_rate: t.learning_rate,
            n_agents: t.n_agents,
            clip: t.clip,
            estimator: t.estimator,
            bias_init: t.bias_init,
            selection: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateBlock {
    pub states: Vec<LogicalLabel>,
    /// Also evaluate the standard policy and the autonomous variant.
    pub compare_standard: bool,
    pub compare_autonomous: bool,
    /// Real injected displacements; the grid is skipped when empty.
    pub injection_alphas: Vec<f64>,
    pub injection_cycles: usize,
    /// Repeat the +Z run with the reference gate-bias table.
    pub biased: bool,
}

impl Default for EvaluateBlock {
    fn default() -> Self {
        EvaluateBlock {
            states: vec![LogicalLabel::MinusX, LogicalLabel::MinusY, LogicalLabel::PlusZ],
            compare_standard: true,
            compare_autonomous: false,
            injection_alphas: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            injection_cycles: 10,
            biased: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnumerateObjective {
    #[default]
    Z,
    Fidelity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerateBlock {
    pub n_cycles: usize,
    pub optimize_lookup: bool,
    pub objective: EnumerateObjective,
    pub lookup: LookupConfig,
}

impl Default for EnumerateBlock {
    fn default() -> Self {
        EnumerateBlock {
            n_cycles: 2,
            optimize_lookup: false,
            objective: EnumerateObjective::Z,
            lookup: LookupConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn hilbert(&self) -> Result<HilbertConfig> {
        HilbertConfig::new(self.hilbert.n_fock)
    }

    pub fn lattice(&self) -> Result<CodeLattice> {
        CodeLattice::from_kind(self.code.lattice)
    }

    pub fn state_spec(&self, label: LogicalLabel) -> Result<GkpStateSpec> {
        let spec = GkpStateSpec::new(label, self.code.delta, self.hilbert()?)
            .with_lattice(self.lattice()?)
            .with_truncation_tolerance(self.code.truncation_tolerance);
        spec.validate()?;
        Ok(spec)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule::from_kind(self.schedule.kind)
    }

    pub fn circuit_with(&self, schedule: Schedule) -> Result<Circuit> {
        let s = &self.schedule;
        let ham = if s.chi == 0.0 && s.kerr == 0.0 {
            HamiltonianParams::disabled()
        } else {
            HamiltonianParams::new(s.chi, s.kerr)
        };
        let c = Circuit::new(
            self.hilbert()?,
            schedule,
            self.noise.model()?,
            ham,
            IntegratorConfig::new(s.dt)?,
        )?;
        Ok(c.with_alpha_l4(num_complex::Complex64::new(s.alpha_l4[0], s.alpha_l4[1])))
    }

    pub fn circuit(&self) -> Result<Circuit> {
        self.circuit_with(self.schedule())
    }

    /// The trainer configuration assembled from the shared blocks and
    /// `[train]`.
    pub fn train_config(&self) -> Result<(TrainConfig, Architecture)> {
        let t = self
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("missing [train] block".into()))?;
        let selection = t.selection.unwrap_or(RunConfig {
            n_cycles: 100,
            ..self.run.run_config()
        });
        let cfg = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            n_cycles_train: t.n_cycles_train,
            learning_rate: t.learning_rate,
            noise_preset: self.noise.preset_name()?,
            seed: self.run.seed,
            n_agents: t.n_agents,
            delta: self.code.delta,
            n_fock: self.hilbert.n_fock,
            truncation_tolerance: self.code.truncation_tolerance,
            clip: t.clip,
            estimator: t.estimator,
            bias_init: t.bias_init,
            selection,
        };
        cfg.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        Ok((cfg, t.architecture))
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.code.delta <= 0.0 || !self.code.delta.is_finite() {
            return Err(Error::Config(format!(
                "code.delta must be positive, got {}",
                self.code.delta
            )));
        }
        self.hilbert()?;
        self.lattice()?;
        self.noise.model()?;
        IntegratorConfig::new(self.schedule.dt)?;
        if self.run.n_batches == 0 || self.run.batch_size == 0 {
            return Err(Error::Config(
                "run.n_batches and run.batch_size must be positive".into(),
            ));
        }
        if self.run.mode == ModeKind::Forced && self.run.outcomes.is_none() {
            return Err(Error::Config("run.mode = \"forced\" needs run.outcomes".into()));
        }
        Ok(())
    }
}
