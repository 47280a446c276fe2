use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ris_vi::checkpoint;
use ris_vi::config::RunConfig;
use ris_vi::dataset::{self, Dataset};
use ris_vi::harness::CSV_HEADER;
use ris_vi::inference::{scenario_plan, EncoderPair};

const TINY: &str = r#"{
  "scenario_id": "tiny",
  "scenario": { "m": 2, "n": 4, "n_p": 3, "n_b": 5, "p": 1, "q": 1 },
  "seed": 3,
  "train": { "dataset_size": 24, "mc_samples": 4, "initial_lr": 0.0003, "max_steps": 12, "batch_size": 8, "eval_every": 4 },
  "sweep": { "snr_db": [20.0], "trials": 3, "methods": ["JCE", "perfect_csi", "random_phase"] },
  "out": "out"
}"#;

fn ris_vi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-vi"))
        .current_dir(dir)
        .env_remove("RIS_VI_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = ris_vi(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.json"), config).unwrap();
    dir
}

fn with(f: impl FnOnce(&mut RunConfig)) -> String {
    let mut c = RunConfig::from_json(TINY).unwrap();
    f(&mut c);
    c.to_json()
}

const DATA: &str = "out/tiny_JCE_20dB.data";
const CKPT: &str = "out/tiny_JCE_20dB.ckpt";

#[test]
fn gen_data_writes_the_configured_records() {
    let dir = setup(&with(|c| c.train.dataset_size = 1));
    ok(dir.path(), &["--config", "run.json", "gen-data"]);
    let ds = Dataset::read(&dir.path().join(DATA)).unwrap();
    assert_eq!(ds.records.len(), 1);
    assert!(dir.path().join("out/tiny_JCE_20dB.data.config.json").exists());

    // the file holds exactly what the library generates for the same seed
    let cfg = RunConfig::from_json(&with(|c| c.train.dataset_size = 1)).unwrap();
    let plan = scenario_plan(&cfg.scenario, cfg.seed);
    let again = dataset::generate(cfg.kind, &cfg.scenario, cfg.seed, &plan, 1, ds.config_echo.clone()).unwrap();
    assert_eq!(again, ds);
}

#[test]
fn artifacts_are_byte_identical_across_reruns_and_thread_counts() {
    let runs: Vec<_> = ["1", "4"]
        .iter()
        .map(|threads| {
            let dir = setup(TINY);
            for cmd in ["gen-data", "train", "sweep"] {
                ok(dir.path(), &["--config", "run.json", "--threads", threads, cmd]);
            }
            dir
        })
        .collect();
    for file in [DATA, CKPT, "out/tiny_JCE_20dB_curve.csv", "out/tiny_sweep.csv", "out/tiny_sweep.csv.config.json"] {
        let a = fs::read(runs[0].path().join(file)).unwrap();
        let b = fs::read(runs[1].path().join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn thread_count_can_come_from_the_environment() {
    let dir = setup(TINY);
    let out = Command::new(env!("CARGO_BIN_EXE_ris-vi"))
        .current_dir(dir.path())
        .env("RIS_VI_THREADS", "2")
        .args(["--config", "run.json", "gen-data"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_ris-vi"))
        .current_dir(dir.path())
        .env("RIS_VI_THREADS", "0")
        .args(["--config", "run.json", "gen-data"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_steps_checkpoints_the_initial_weights() {
    let dir = setup(&with(|c| c.train.max_steps = 0));
    ok(dir.path(), &["--config", "run.json", "gen-data"]);
    ok(dir.path(), &["--config", "run.json", "train"]);
    let cfg = RunConfig::from_json(&with(|c| c.train.max_steps = 0)).unwrap();
    let plan = scenario_plan(&cfg.scenario, cfg.seed);
    let init = EncoderPair::init(cfg.kind, &cfg.scenario, cfg.seed, plan, &cfg.heads, cfg.train.initial_lr).unwrap();
    assert_eq!(fs::read(dir.path().join(CKPT)).unwrap(), checkpoint::to_bytes(&init));
}

#[test]
fn training_curve_is_finite() {
    let dir = setup(TINY);
    ok(dir.path(), &["--config", "run.json", "gen-data"]);
    ok(dir.path(), &["--config", "run.json", "train"]);
    let curve = fs::read_to_string(dir.path().join("out/tiny_JCE_20dB_curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("step,train_elbo,holdout_elbo"));
    let rows: Vec<_> = lines.collect();
    assert!(!rows.is_empty());
    for row in rows {
        let holdout: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(holdout.is_finite(), "{row}");
    }
}

#[test]
fn sweep_rows_and_report() {
    let dir = setup(TINY);
    for cmd in ["gen-data", "train", "sweep", "report"] {
        ok(dir.path(), &["--config", "run.json", cmd]);
    }
    let csv = fs::read_to_string(dir.path().join("out/tiny_sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    let report = fs::read_to_string(dir.path().join("out/tiny_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3);
    assert!(report.lines().any(|l| l.starts_with("tiny,20,perfect_csi,3,")));
}

#[test]
fn random_phase_needs_no_checkpoint() {
    let dir = setup(TINY);
    ok(dir.path(), &["--config", "run.json", "sweep", "--methods", "random_phase", "--snr-db", "0,-5"]);
    let csv = fs::read_to_string(dir.path().join("out/tiny_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn empty_snr_list_gives_a_header_only_csv() {
    let dir = setup(&with(|c| c.sweep.snr_db.clear()));
    ok(dir.path(), &["--config", "run.json", "sweep"]);
    let csv = fs::read_to_string(dir.path().join("out/tiny_sweep.csv")).unwrap();
    assert_eq!(csv, format!("{CSV_HEADER}\n"));
}

#[test]
fn missing_checkpoint_exits_3_naming_the_scenario() {
    let dir = setup(TINY);
    let out = ris_vi(dir.path(), &["--config", "run.json", "sweep"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'tiny'"));
}

#[test]
fn bad_configs_and_mismatched_datasets_exit_2() {
    let dir = setup(r#"{ "seeed": 1 }"#);
    assert_eq!(ris_vi(dir.path(), &["--config", "run.json", "gen-data"]).status.code(), Some(2));

    let dir = setup(TINY);
    ok(dir.path(), &["--config", "run.json", "gen-data"]);
    fs::write(dir.path().join("other.json"), with(|c| c.scenario.n_p = 2)).unwrap();
    let out = ris_vi(dir.path(), &["--config", "other.json", "train", "--dataset", DATA]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let out = ris_vi(dir.path(), &["--config", "run.json", "--seed", "4", "train", "--dataset", DATA]);
    assert_eq!(out.status.code(), Some(2));
    let out = ris_vi(dir.path(), &["--config", "run.json", "train", "--kind", "JCCE", "--dataset", DATA]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_3() {
    let dir = setup(TINY);
    assert_eq!(ris_vi(dir.path(), &["--config", "run.json", "train"]).status.code(), Some(3));
}
