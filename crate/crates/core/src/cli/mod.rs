//! Command-line driver: configuration, run directories and the five
//! commands. `src/main.rs` only forwards to [`main`].

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{
    average_channel_fidelity, biased_sweep, injection_grid, pauli_series, write_injection_csv, write_series_csv,
    BiasTable, LifetimeSummary, PauliSeries,
};
use crate::gkp::{
    ket_to_json, logical_ket, logical_state, mean_photon, pauli_operator, stabilizer, wigner_csv, PauliAxis,
    StabilizerAxis,
};
use crate::grape::{optimize_lookup, write_curve_csv, Adam, Objective, Resume, Task};
use crate::policies::{Checkpoint, CheckpointMetadata, Policy};
use crate::sbs::{enumerate_branches, joint_observable, parse_outcomes, run_trajectory, Mode, Schedule, ScheduleKind};

pub use config::{
    CodeBlock, EnumerateBlock, EnumerateObjective, EvaluateBlock, ExperimentConfig, HilbertBlock, ModeKind, NoiseBlock,
    PolicyBlock, PrepareBlock, RunBlock, ScheduleBlock, TrainBlock,
};

#[derive(Debug, Parser)]
#[command(
    name = "gkp-qec",
    version,
    about = "GKP error correction with feedback-trained sBs circuits"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; all available cores by default.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Parent directory for run directories; overrides out_dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the run label.
    #[arg(long, global = true)]
    pub label: Option<String>,
    /// Overrides the noise preset.
    #[arg(long, global = true)]
    pub noise: Option<String>,
    /// Overrides hilbert.n_fock.
    #[arg(long, global = true)]
    pub n_fock: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a logical state and report its photon number, stabilizers and
    /// Wigner function.
    PrepareState {
        #[arg(long)]
        state: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        delta: Option<f64>,
    },
    /// Run error-correction trajectories and write the Pauli time series.
    RunQec {
        #[arg(long)]
        cycles: Option<usize>,
        /// Forced outcome string such as "gggeg"; implies forced mode.
        #[arg(long)]
        outcomes: Option<String>,
        #[arg(long)]
        autonomous: bool,
    },
    /// Train feedback policies and keep the post-selected agent.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Fit lifetimes and write comparison tables.
    Evaluate {
        #[arg(long)]
        cycles: Option<usize>,
    },
    /// Enumerate the outcome tree exactly, optionally optimizing a lookup
    /// table.
    Enumerate {
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long)]
        optimize_lookup: bool,
    },
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// numerical failures and 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::UnknownPreset(_)
        | Error::InvalidParameter { .. }
        | Error::InvalidNoise(_)
        | Error::DepthLimit { .. }
        | Error::ScheduleMismatch(_)
        | Error::TruncationOverflow { .. }
        | Error::DimensionMismatch { .. } => 2,
        Error::Numerical(_) | Error::NonFinite | Error::NotHermitian { .. } | Error::ImpossibleBranch { .. } => 3,
        Error::EmptyBatch => 2,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Resolves the configuration with command-line overrides applied.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let c = &cli.common;
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(l) = &c.label {
        cfg.label = l.clone();
    }
    if let Some(n) = &c.noise {
        cfg.noise = NoiseBlock {
            preset: Some(n.clone()),
            ..NoiseBlock::default()
        };
    }
    if let Some(n) = c.n_fock {
        cfg.hilbert.n_fock = n;
    }
    match &cli.command {
        Command::PrepareState { state, delta } => {
            if let Some(s) = state {
                cfg.code.state = s.parse()?;
            }
            if let Some(d) = delta {
                cfg.code.delta = *d;
            }
        }
        Command::RunQec {
            cycles,
            outcomes,
            autonomous,
        } => {
            if let Some(n) = cycles {
                cfg.run.n_cycles = *n;
            }
            if let Some(o) = outcomes {
                cfg.run.mode = ModeKind::Forced;
                cfg.run.outcomes = Some(o.clone());
            }
            if *autonomous {
                cfg.run.mode = ModeKind::Autonomous;
                cfg.schedule.kind = ScheduleKind::Autonomous;
            }
        }
        Command::Train { epochs, agents } => {
            if let Some(t) = cfg.train.as_mut() {
                if let Some(e) = epochs {
                    t.epochs = *e;
                }
                if let Some(a) = agents {
                    t.n_agents = *a;
                }
            }
        }
        Command::Evaluate { cycles } => {
            if let Some(n) = cycles {
                cfg.run.n_cycles = *n;
            }
        }
        Command::Enumerate {
            cycles,
            optimize_lookup,
        } => {
            let block = cfg.enumerate.get_or_insert_with(EnumerateBlock::default);
            if let Some(n) = cycles {
                block.n_cycles = *n;
            }
            if *optimize_lookup {
                block.optimize_lookup = true;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the parsed command and returns its run directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let cfg = resolve(cli)?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // A pool that is already initialized (e.g. in tests) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut dir = RunDir::create(&cfg)?;
    match &cli.command {
        Command::PrepareState { .. } => prepare_state(&cfg, &dir)?,
        Command::RunQec { .. } => run_qec(&cfg, &mut dir)?,
        Command::Train { .. } => train(&cfg, &mut dir)?,
        Command::Evaluate { .. } => evaluate(&cfg, &mut dir)?,
        Command::Enumerate { .. } => enumerate(&cfg, &mut dir)?,
    }
    Ok(dir.path)
}

/// `<out_dir>/<timestamp>-<label>[-k]/` holding the resolved config, a log
/// and the command outputs.
pub struct RunDir {
    pub path: PathBuf,
    log: File,
}

impl RunDir {
    pub fn create(cfg: &ExperimentConfig) -> Result<Self> {
        let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
        let base = format!("{stamp}-{}", cfg.label);
        fs::create_dir_all(&cfg.out_dir)?;
        let mut path = cfg.out_dir.join(&base);
        let mut k = 1;
        while path.exists() {
            path = cfg.out_dir.join(format!("{base}-{k}"));
            k += 1;
        }
        fs::create_dir(&path)?;
        fs::write(path.join("config.toml"), cfg.to_toml()?)?;
        let log = File::create(path.join("log.txt"))?;
        Ok(RunDir { path, log })
    }

    pub fn note(&mut self, msg: &str) {
        log::info!("{msg}");
        let _ = writeln!(self.log, "{msg}");
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path.join(name))?))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

fn load_policy(cfg: &ExperimentConfig) -> Result<Policy> {
    match &cfg.policy.checkpoint {
        Some(p) => Checkpoint::load(p)
            .map_err(|e| Error::Config(format!("policy.checkpoint {}: {e}", p.display())))?
            .policy(),
        None => Ok(Policy::standard()),
    }
}

fn prepare_state(cfg: &ExperimentConfig, dir: &RunDir) -> Result<()> {
    let spec = cfg.state_spec(cfg.code.state)?;
    let ket = logical_ket(&spec)?;
    let rho = logical_state(&spec)?;
    let lattice = spec.lattice;
    let h = spec.cfg;
    let sx = rho.expect(&stabilizer(&lattice, StabilizerAxis::X, &h));
    let sz = rho.expect(&stabilizer(&lattice, StabilizerAxis::Z, &h));
    let paulis: Vec<_> = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z]
        .iter()
        .map(|&a| (format!("{a:?}"), rho.expect(&pauli_operator(&lattice, a, &h)).re))
        .collect();
    let mut ladder = Vec::new();
    for &d in &cfg.prepare.deltas {
        let s = crate::gkp::GkpStateSpec { delta: d, ..spec };
        let r = logical_state(&s)?;
        ladder.push(json!({
            "delta": d,
            "mean_photon": mean_photon(&r),
            "s_x": r.expect(&stabilizer(&lattice, StabilizerAxis::X, &h)).re,
            "s_z": r.expect(&stabilizer(&lattice, StabilizerAxis::Z, &h)).re,
        }));
    }
    dir.json(
        "report.json",
        &json!({
            "state": spec.label.to_string(),
            "delta": spec.delta,
            "n_fock": h.n_fock(),
            "mean_photon": mean_photon(&rho),
            "stabilizers": {"s_x": [sx.re, sx.im], "s_z": [sz.re, sz.im]},
            "paulis": paulis.into_iter().collect::<std::collections::BTreeMap<_, _>>(),
            "delta_ladder": ladder,
        }),
    )?;
    dir.json("state.json", &ket_to_json(&ket))?;
    let n = cfg.prepare.wigner_points.max(2);
    let e = cfg.prepare.wigner_extent;
    let grid: Vec<f64> = (0..n).map(|k| -e + 2.0 * e * k as f64 / (n - 1) as f64).collect();
    fs::write(dir.path.join("wigner.csv"), wigner_csv(rho.matrix(), &grid, &grid))?;
    Ok(())
}

fn run_qec(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<()> {
    let mut schedule = cfg.schedule();
    if cfg.run.mode == ModeKind::Autonomous {
        schedule = Schedule::from_kind(ScheduleKind::Autonomous);
    }
    let circ = cfg.circuit_with(schedule)?;
    let policy = load_policy(cfg)?;
    let spec = cfg.state_spec(cfg.code.state)?;
    let run = cfg.run.run_config();
    let (axis, sign) = spec.label.axis();
    let n_half = 2 * run.n_cycles;
    let rho0 = logical_state(&spec)?.with_ground_qubit();
    let obs = joint_observable(&pauli_operator(&spec.lattice, axis, &spec.cfg));

    let series = match cfg.run.mode {
        ModeKind::Forced => {
            let text = cfg.run.outcomes.as_deref().unwrap_or_default();
            let outcomes = parse_outcomes(text).map_err(|e| Error::Config(format!("run.outcomes: {e}")))?;
            if outcomes.len() < n_half {
                return Err(Error::Config(format!(
                    "run.outcomes has {} entries, {} half-cycles need one each",
                    outcomes.len(),
                    n_half
                )));
            }
            let t = run_trajectory(&circ, &policy, &rho0, n_half, &Mode::Forced(outcomes), Some(&obs))?;
            t.write_jsonl(dir.file("trajectory_0.jsonl")?)?;
            let v0 = sign * (obs.as_ref() * rho0.matrix()).trace().re;
            let mut mean = vec![v0];
            mean.extend(
                t.snapshots
                    .iter()
                    .enumerate()
                    .map(|(k, z)| sign * crate::sbs::frame_sign(axis, k + 1) * z),
            );
            PauliSeries {
                label: spec.label.to_string(),
                axis,
                times: (0..mean.len()).map(|k| k as f64).collect(),
                std: vec![0.0; mean.len()],
                batch_means: vec![mean.clone()],
                mean,
            }
        }
        ModeKind::Stochastic | ModeKind::Autonomous => {
            for k in 0..cfg.run.logged_trajectories.min(run.trajectories()) {
                let mode = if cfg.run.mode == ModeKind::Autonomous {
                    Mode::Autonomous
                } else {
                    Mode::Stochastic {
                        seed: run.seed,
                        stream: k as u64,
                    }
                };
                let t = run_trajectory(&circ, &policy, &rho0, n_half, &mode, Some(&obs))?;
                t.write_jsonl(dir.file(&format!("trajectory_{k}.jsonl"))?)?;
            }
            pauli_series(&circ, &policy, &spec, &run)?
        }
    };
    write_series_csv(dir.file("series.csv")?, std::slice::from_ref(&series))?;
    let fit = if series.times.len() >= 3 {
        Some(series.fit()?)
    } else {
        None
    };
    dir.note(&format!(
        "{} cycles, final ⟨P⟩ = {:.6}",
        run.n_cycles,
        series.mean.last().copied().unwrap_or(f64::NAN)
    ));
    dir.json(
        "summary.json",
        &json!({ "label": series.label, "fit": fit, "final": series.mean.last() }),
    )?;
    Ok(())
}

fn train(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<()> {
    let (tc, arch) = cfg.train_config()?;
    let resume = match &cfg.policy.checkpoint {
        Some(p) => {
            let ck =
                Checkpoint::load(p).map_err(|e| Error::Config(format!("policy.checkpoint {}: {e}", p.display())))?;
            let opt_path = p.with_extension("adam.json");
            let optimizer: Option<Adam> = if opt_path.exists() {
                Some(serde_json::from_str(&fs::read_to_string(&opt_path)?)?)
            } else {
                None
            };
            Some((ck.policy()?, optimizer, ck.metadata.epochs))
        }
        None => None,
    };
    let resume = resume.map(|(policy, optimizer, epoch)| Resume {
        policy,
        optimizer,
        epoch,
    });
    let out = crate::grape::train(&tc, arch, resume.as_ref())?;
    for a in &out.agents {
        let run = &a.run;
        let k = run.agent;
        write_curve_csv(dir.file(&format!("curve_agent{k}.csv"))?, &run.curve)?;
        let meta = CheckpointMetadata {
            seed: run.seed,
            epochs: run.curve.last().map_or(0, |r| r.epoch + 1),
            noise_preset: tc.noise_preset.clone(),
            n_fock: tc.n_fock,
            delta: tc.delta,
            learning_rate: tc.learning_rate,
            agent: k,
            lifetime: a.lifetime.lifetime,
            created: chrono::Local::now().to_rfc3339(),
        };
        let ck_path = dir.path.join(format!("agent{k}.json"));
        Checkpoint::new(&run.policy, meta).save(&ck_path)?;
        fs::write(
            ck_path.with_extension("adam.json"),
            serde_json::to_string(&run.optimizer)?,
        )?;
        dir.note(&format!(
            "agent {k}: {:?}, lifetime {:?}",
            run.status, a.lifetime.lifetime
        ));
    }
    let best = out.best().run.agent;
    fs::copy(dir.path.join(format!("agent{best}.json")), dir.path.join("best.json"))?;
    fs::copy(
        dir.path.join(format!("agent{best}.adam.json")),
        dir.path.join("best.adam.json"),
    )?;
    dir.json(
        "summary.json",
        &json!({
            "best_agent": best,
            "agents": out.agents.iter().map(|a| json!({
                "agent": a.run.agent,
                "status": a.run.status,
                "lifetime": a.lifetime,
                "final_infidelity": a.run.curve.last().map(|r| r.infidelity),
            })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<()> {
    let block = cfg.evaluate.clone().unwrap_or_default();
    let run = cfg.run.run_config();
    let circ = cfg.circuit()?;
    let mut policies: Vec<(String, Policy, crate::sbs::Circuit)> = Vec::new();
    if cfg.policy.checkpoint.is_some() {
        policies.push(("policy".into(), load_policy(cfg)?, circ.clone()));
    }
    if block.compare_standard || policies.is_empty() {
        policies.push(("standard".into(), Policy::standard(), circ.clone()));
    }
    if block.compare_autonomous {
        policies.push((
            "autonomous".into(),
            Policy::standard(),
            cfg.circuit_with(Schedule::autonomous())?,
        ));
    }
    let mut all_series = Vec::new();
    let mut summary = serde_json::Map::new();
    for (name, policy, c) in &policies {
        let mut fits = Vec::new();
        for &label in &block.states {
            let spec = cfg.state_spec(label)?;
            let mut s = pauli_series(c, policy, &spec, &run)?;
            let fit = s.fit()?;
            dir.note(&format!("{name} {label}: T = {:?}", fit.lifetime));
            fits.push((label, fit));
            s.label = format!("{name}:{}", s.label);
            all_series.push(s);
        }
        let sum = LifetimeSummary::from_fits(&fits);
        let fbar = sum.aggregate_lifetime.map(|t| average_channel_fidelity([t; 3], 1.0));
        let mut v = serde_json::to_value(&sum)?;
        v["channel_fidelity_aggregate"] = json!(fbar);
        summary.insert(name.clone(), v);
    }
    write_series_csv(dir.file("series.csv")?, &all_series)?;

    if !block.injection_alphas.is_empty() {
        let spec = cfg.state_spec(crate::gkp::LogicalLabel::PlusZ)?;
        let inj_run = crate::evaluation::RunConfig {
            n_cycles: block.injection_cycles,
            ..run
        };
        let (_, policy, c) = &policies[0];
        let rows = injection_grid(c, policy, &Policy::standard(), &spec, &block.injection_alphas, &inj_run)?;
        write_injection_csv(dir.file("injection.csv")?, &rows)?;
    }
    if block.biased {
        let spec = cfg.state_spec(crate::gkp::LogicalLabel::PlusZ)?;
        let named: Vec<(String, Policy)> = policies
            .iter()
            .filter(|p| p.0 != "autonomous")
            .map(|p| (p.0.clone(), p.1.clone()))
            .collect();
        let biased = biased_sweep(&circ, &named, &BiasTable::reference(), &spec, &run)?;
        summary.insert(
            "biased".into(),
            json!(biased
                .iter()
                .map(|(n, f)| json!({"policy": n, "fit": f}))
                .collect::<Vec<_>>()),
        );
    }
    dir.json("summary.json", &summary)?;
    Ok(())
}

fn enumerate(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<()> {
    let block = cfg.enumerate.clone().unwrap_or_default();
    let circ = cfg.circuit()?;
    let spec = cfg.state_spec(cfg.code.state)?;
    let n_half = 2 * block.n_cycles;
    if n_half > crate::sbs::MAX_ENUMERATION_DEPTH {
        return Err(Error::DepthLimit {
            depth: n_half,
            limit: crate::sbs::MAX_ENUMERATION_DEPTH,
        });
    }
    let objective = match block.objective {
        EnumerateObjective::Z => Objective::Pauli(spec.label.axis().0),
        EnumerateObjective::Fidelity => Objective::Fidelity,
    };
    let task = Task::new(circ, &spec, block.n_cycles)?.with_objective(objective);
    let policy = load_policy(cfg)?;
    let mut summary = serde_json::Map::new();
    let mut tables = vec![("policy".to_string(), policy)];
    if block.optimize_lookup {
        let res = optimize_lookup(&task, &block.lookup)?;
        dir.note(&format!(
            "lookup: {:.6} after {} iterations (standard {:.6})",
            res.value, res.iterations, res.initial_value
        ));
        summary.insert(
            "lookup".into(),
            json!({"value": res.value, "initial_value": res.initial_value, "iterations": res.iterations}),
        );
        Checkpoint::new(&res.policy, CheckpointMetadata::default()).save(&dir.path.join("lookup.json"))?;
        tables.push(("lookup".into(), res.policy));
    }
    for (name, p) in &tables {
        let branches = enumerate_branches(
            &task.circuit,
            p,
            &task.rho0,
            n_half,
            Some(task.objective_observable()),
            false,
        )?;
        let mut w = csv::Writer::from_writer(dir.file(&format!("branches_{name}.csv"))?);
        w.write_record(["outcomes", "probability", "value", "return"])
            .map_err(crate::evaluation::csv_err)?;
        let mut total_p = 0.0;
        let mut expected = 0.0;
        for b in &branches {
            let v = b.observable.unwrap_or(f64::NAN);
            total_p += b.probability;
            expected += b.probability * v;
            w.write_record([
                b.label(),
                b.probability.to_string(),
                v.to_string(),
                b.return_value.to_string(),
            ])
            .map_err(crate::evaluation::csv_err)?;
        }
        w.flush()?;
        summary.insert(
            name.clone(),
            json!({"branches": branches.len(), "probability_sum": total_p, "expected_value": expected}),
        );
    }
    dir.json("summary.json", &summary)?;
    Ok(())
}

#[cfg(test)]
mod tests;
