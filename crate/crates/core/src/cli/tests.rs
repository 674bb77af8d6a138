use super::*;
use std::path::Path;

const BASE: &str = r#"
label = "t"

[hilbert]
n_fock = 20

[code]
truncation_tolerance = 0.05

[noise]
preset = "high"

[run]
n_cycles = 2
n_batches = 2
batch_size = 2
"#;

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, format!("{BASE}{extra}")).unwrap();
    (dir, path)
}

fn invoke(cfg: &Path, out: &Path, args: &[&str]) -> (i32, Option<PathBuf>) {
    let mut argv = vec![
        "gkp-qec",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    argv.extend_from_slice(args);
    let cli = Cli::try_parse_from(&argv).unwrap();
    match run(&cli) {
        Ok(p) => (0, Some(p)),
        Err(e) => (exit_code(&e), None),
    }
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

#[test]
fn unknown_keys_are_named() {
    let err = ExperimentConfig::from_toml("[noise]\npresett = \"low\"\n").unwrap_err();
    assert!(err.to_string().contains("presett"), "{err}");
    assert_eq!(exit_code(&err), 2);
    let cfg = ExperimentConfig::from_toml("").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_errors_exit_with_two() {
    let (dir, cfg) = setup("");
    assert_eq!(invoke(&cfg, dir.path(), &["prepare-state", "--delta", "0"]).0, 2);
    assert_eq!(invoke(&cfg, dir.path(), &["run-qec", "--noise", "bogus"]).0, 2);
    assert_eq!(invoke(&cfg, dir.path(), &["train"]).0, 2);
    assert_eq!(invoke(&cfg, dir.path(), &["enumerate", "--cycles", "7"]).0, 2);
    assert_eq!(exit_code(&Error::Numerical("trace".into())), 3);
    assert_eq!(main(["gkp-qec", "no-such-command"]), 2);
}

#[test]
fn prepare_state_report() {
    let (dir, cfg) = setup("[prepare]\nwigner_points = 5\n");
    let (code, run) = invoke(&cfg, dir.path(), &["prepare-state"]);
    assert_eq!(code, 0);
    let run = run.unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    let ladder = report["delta_ladder"].as_array().unwrap();
    let sx: Vec<f64> = ladder.iter().map(|r| r["s_x"].as_f64().unwrap()).collect();
    assert!(sx.windows(2).all(|w| w[1] > w[0]), "{sx:?}");
    assert_eq!(lines(&run.join("wigner.csv")).len(), 26);
    assert!(run.join("config.toml").exists() && run.join("state.json").exists());
}

#[test]
fn run_qec_outputs() {
    let (dir, cfg) = setup("");
    let (code, run) = invoke(&cfg, dir.path(), &["run-qec", "--cycles", "0"]);
    assert_eq!(code, 0);
    assert_eq!(lines(&run.unwrap().join("series.csv")).len(), 2);

    let (code, run) = invoke(&cfg, dir.path(), &["run-qec", "--cycles", "2", "--outcomes", "gggg"]);
    assert_eq!(code, 0);
    let run = run.unwrap();
    assert_eq!(lines(&run.join("series.csv")).len(), 4);
    assert_eq!(lines(&run.join("trajectory_0.jsonl")).len(), 4);
    assert_eq!(
        invoke(&cfg, dir.path(), &["run-qec", "--cycles", "2", "--outcomes", "gg"]).0,
        2
    );

    let (a, b) = (
        invoke(&cfg, dir.path(), &["run-qec", "--seed", "3"]).1.unwrap(),
        invoke(&cfg, dir.path(), &["run-qec", "--seed", "3"]).1.unwrap(),
    );
    assert_ne!(a, b);
    assert_eq!(
        fs::read(a.join("series.csv")).unwrap(),
        fs::read(b.join("series.csv")).unwrap()
    );
    let echoed = ExperimentConfig::load(&a.join("config.toml")).unwrap();
    assert_eq!(echoed.run.seed, 3);
}

#[test]
fn train_and_resume() {
    let extra = r#"
[train]
architecture = { kind = "fnn", hidden = 4 }
epochs = 2
batch_size = 2
n_cycles_train = 1
n_agents = 1
learning_rate = 0.01
selection = { n_cycles = 2, n_batches = 2, batch_size = 2, seed = 0 }
"#;
    let (dir, cfg) = setup(extra);
    let (code, run) = invoke(&cfg, dir.path(), &["train"]);
    assert_eq!(code, 0);
    let run = run.unwrap();
    let curve = lines(&run.join("curve_agent0.csv"));
    assert_eq!(curve.len(), 3);
    assert!(curve[1].starts_with("0,") && curve[2].starts_with("1,"));
    assert!(run.join("best.json").exists());

    let resume = format!("{extra}\n[policy]\ncheckpoint = {:?}\n", run.join("best.json"));
    let (dir2, cfg2) = setup(&resume);
    let (code, run2) = invoke(&cfg2, dir2.path(), &["train"]);
    assert_eq!(code, 0);
    let curve = lines(&run2.unwrap().join("curve_agent0.csv"));
    assert!(curve[1].starts_with("2,") && curve[2].starts_with("3,"), "{curve:?}");
}

#[test]
fn evaluate_reports_every_state() {
    let extra = "[evaluate]\ninjection_alphas = [0.3]\ninjection_cycles = 1\n";
    let (dir, cfg) = setup(extra);
    let (code, run) = invoke(&cfg, dir.path(), &["evaluate"]);
    assert_eq!(code, 0);
    let run = run.unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    let lifetimes = summary["standard"]["lifetimes"].as_object().unwrap();
    for k in ["-X", "-Y", "+Z"] {
        assert!(lifetimes.contains_key(k), "{k}");
    }
    assert_eq!(lines(&run.join("series.csv")).len(), 1 + 3 * 3);
    assert_eq!(lines(&run.join("injection.csv")).len(), 3);
}

#[test]
fn enumerate_tree() {
    let (dir, cfg) = setup("");
    let (code, run) = invoke(&cfg, dir.path(), &["enumerate", "--cycles", "2"]);
    assert_eq!(code, 0);
    let run = run.unwrap();
    let rows = lines(&run.join("branches_policy.csv"));
    assert_eq!(rows.len(), 17);
    let total: f64 = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-8);
}
