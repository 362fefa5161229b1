use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
rounds = 2
budget = 10
seeds = [0, 1]

[dataset]
total_classes = 5
per_class = 30
dim = 4

[density]
K = 10

[detector]
hidden = [8]
sgd = { epochs = 5 }

[classifier]
hidden = [8]
sgd = { epochs = 5 }
"#;

fn eaoa(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eaoa"))
        .args(args)
        .env("EAOA_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    (dir, cfg)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_artifacts_under_output_root() {
    let (dir, cfg) = setup();
    let out = eaoa(dir.path(), &["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert!(dir.path().join("eaoa/rounds.csv").is_file());
    // One progress line per round and seed, plus a closing line.
    assert_eq!(
        stderr(&out).lines().filter(|l| l.contains("round")).count(),
        4
    );
}

#[test]
fn bad_value_exits_with_validation_code() {
    let (dir, cfg) = setup();
    let out = eaoa(
        dir.path(),
        &[
            "run",
            "--config",
            &cfg,
            "--set",
            "dataset.mismatch_ratio=1.5",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("dataset.mismatch_ratio"));

    let out = eaoa(
        dir.path(),
        &["run", "--config", &cfg, "--set", "sampler.bogus=1"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sampler.bogus"));

    let out = eaoa(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_with_two() {
    let (dir, cfg) = setup();
    let out = eaoa(
        dir.path(),
        &[
            "run",
            "--config",
            &cfg,
            "--set",
            "dataset.path=/nonexistent/data.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/data.txt"));
}

#[test]
fn override_is_echoed_in_summary() {
    let (dir, cfg) = setup();
    let target = dir.path().join("tp");
    let out = eaoa(
        dir.path(),
        &[
            "run",
            "--config",
            &cfg,
            "--set",
            "sampler.tP=0.8",
            "--out",
            target.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(target.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["sampler"]["tP"], 0.8);
}

#[test]
fn ablate_writes_one_row_per_value() {
    let (dir, cfg) = setup();
    let out = eaoa(
        dir.path(),
        &[
            "ablate",
            "--config",
            &cfg,
            "--axis",
            "lambda_e",
            "--values",
            "0.001,0.005,0.01,0.05,0.1",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("ablate-lambda_e/ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("energy.lambda_e,\"0.001\",eaoa,2,"));
    assert!(dir
        .path()
        .join("ablate-lambda_e/energy.lambda_e=0.1/summary.json")
        .is_file());

    let out = eaoa(
        dir.path(),
        &[
            "ablate", "--config", &cfg, "--axis", "nope", "--values", "1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_then_report() {
    let (dir, cfg) = setup();
    let out = eaoa(
        dir.path(),
        &[
            "sweep",
            "--config",
            &cfg,
            "--strategies",
            "random,certainty",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let sweep = dir.path().join("sweep");
    let a = eaoa(dir.path(), &["report", sweep.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    let table = String::from_utf8(a.stdout.clone()).unwrap();
    assert_eq!(table.lines().count(), 3);
    let b = eaoa(dir.path(), &["report", sweep.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
    assert!(sweep.join("precision_vs_round.csv").is_file());

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = eaoa(dir.path(), &["report", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_matches_library() {
    let (dir, cfg) = setup();
    let out = eaoa(dir.path(), &["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let config = eaoa::config::ExperimentConfig::load(Some(Path::new(&cfg)), &[]).unwrap();
    let lib = eaoa::harness::run_experiment(&config, &|_| {}).unwrap();
    assert_eq!(
        fs::read_to_string(dir.path().join("eaoa/rounds.csv")).unwrap(),
        lib.rounds_csv()
    );
}

#[test]
fn generate_writes_a_loadable_file() {
    let (dir, cfg) = setup();
    let file = dir.path().join("data.txt");
    let out = eaoa(
        dir.path(),
        &[
            "generate",
            "--config",
            &cfg,
            "--out",
            file.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let ds = eaoa::dataset_file::load_dataset(&file).unwrap();
    assert_eq!(ds.len(), 150);
}
