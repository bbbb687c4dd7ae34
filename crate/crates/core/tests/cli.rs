use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biosig_affect::pipeline::{ExperimentConfig, RunReport};
use tempfile::TempDir;

const SMALL: &str = r#"
[[corpus.synth]]
n_subjects = 4
trials_per_subject = 2
duration_s = 20.0
seed = 3

[protocol]
k = 2
width_divisor = 64
ae_max_epochs = 1
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biosig-affect")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn setup() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(dir: &Path) -> RunReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn config_errors_exit_2() {
    let (dir, cfg) = setup();
    let out = dir.path().join("o");
    let cases: Vec<Vec<&str>> = vec![
        vec!["preprocess", "-c", "/no/such/config.toml"],
        vec!["preprocess", "-c", s(&cfg), "-o", s(&out), "--set", "protocol.bogus=1"],
        vec!["preprocess", "-c", s(&cfg), "-o", s(&out), "--windows", "/no/such/windows.jsonl"],
        vec!["run", "-c", s(&cfg), "-o", s(&out), "--mode", "latent_everything"],
        vec!["run", "-c", s(&cfg), "-o", s(&out), "--k", "1"],
        vec!["inspect", "/no/such/file.json"],
    ];
    for args in cases {
        let o = cli(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[protocol]\nk = 2\nunknown_key = true\n").unwrap();
    assert_eq!(code(&cli(&["preprocess", "-c", s(&bad)])), 2);
}

#[test]
fn data_errors_exit_3() {
    let (dir, cfg) = setup();
    let w = dir.path().join("broken.jsonl");
    fs::write(&w, "{\"not\": \"a window\"}\n").unwrap();
    let o = cli(&["run", "-c", s(&cfg), "-o", s(&dir.path().join("o")), "--windows", s(&w)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let f = dir.path().join("features.csv");
    fs::write(&f, "id,a\nx,1\n").unwrap();
    let o = cli(&["train-clf", "-c", s(&cfg), "-o", s(&dir.path().join("o")), "--features", s(&f)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_single_trial_writes_two_records() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("one.toml");
    fs::write(&cfg, "[[corpus.synth]]\nn_subjects = 1\ntrials_per_subject = 1\nduration_s = 10.0\n").unwrap();
    let o = cli(&["synth", "-c", s(&cfg), "-o", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
    assert!(dir.path().join("ground_truth.json").exists());
}

#[test]
fn run_writes_consistent_artifacts() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    let o = cli(&["run", "-c", s(&cfg), "-o", s(&out), "--mode", "handcrafted_featfusion"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r.runs.len(), 1);
    for a in &r.artifacts {
        assert!(out.join(a).exists(), "{a}");
    }

    // aggregate counts equal the per-fold prediction files
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for f in 0..2 {
        let mut rdr = csv::Reader::from_path(out.join(format!("predictions/handcrafted_featfusion/fold_{f:02}.csv"))).unwrap();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            match (&rec[2], &rec[3]) {
                ("HIGH", "HIGH") => tp += 1,
                ("LOW", "LOW") => tn += 1,
                ("LOW", "HIGH") => fp += 1,
                _ => fn_ += 1,
            }
        }
    }
    let m = &r.runs[0].report;
    assert_eq!((m.tp, m.tn, m.fp, m.fn_), (tp, tn, fp, fn_));
    assert_eq!(tp + tn + fp + fn_, r.windows);

    // the echoed config reproduces the loaded one
    let echoed = ExperimentConfig::from_toml(&fs::read_to_string(out.join("config.toml")).unwrap(), &[]).unwrap();
    let loaded = ExperimentConfig::load(
        Some(&cfg),
        &[format!("output_dir={:?}", s(&out)), "mode=\"handcrafted_featfusion\"".into()],
    )
    .unwrap();
    assert_eq!(echoed, loaded);

    let o = cli(&["inspect", s(&out.join("report.json"))]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("handcrafted_featfusion"));
}

#[test]
fn repeated_latent_runs_are_identical() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    let args = ["run", "-c", s(&cfg), "-o", s(&out), "--mode", "latent_featfusion"];
    assert_eq!(code(&cli(&args)), 0);
    let first = fs::read(out.join("report.json")).unwrap();
    let model = fs::read(out.join("models/fold_00/ae_ecg.json")).unwrap();
    assert_eq!(code(&cli(&args)), 0);
    assert_eq!(first, fs::read(out.join("report.json")).unwrap());
    assert_eq!(model, fs::read(out.join("models/fold_00/ae_ecg.json")).unwrap());

    let o = cli(&["inspect", s(&out.join("models/fold_00/ae_ecg.json"))]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("<- latent"));
}

#[test]
fn staged_windows_match_monolithic_run() {
    let (dir, cfg) = setup();
    let staged = dir.path().join("staged");
    let mono = dir.path().join("mono");
    assert_eq!(code(&cli(&["preprocess", "-c", s(&cfg), "-o", s(&staged)])), 0);
    let w = staged.join("windows.jsonl");
    let mode = ["--mode", "handcrafted_ecg"];
    assert_eq!(code(&cli(&[&["run", "-c", s(&cfg), "-o", s(&staged), "--windows", s(&w)][..], &mode].concat())), 0);
    assert_eq!(code(&cli(&[&["run", "-c", s(&cfg), "-o", s(&mono)][..], &mode].concat())), 0);
    assert_eq!(report(&staged).runs, report(&mono).runs);
}

#[test]
fn features_then_classifier() {
    let (dir, cfg) = setup();
    let out = dir.path().join("o");
    let o = cli(&["features", "-c", s(&cfg), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f = out.join("features.csv");
    let header = fs::read_to_string(&f).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header.split(',').count(), 1 + 20 + 32);
    let o = cli(&["train-clf", "-c", s(&cfg), "-o", s(&out), "--features", s(&f), "--set", "protocol.classifier={kind=\"knn\", k=3}"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("clf_report.json").exists());
}

#[test]
fn compare_has_one_row_per_mode() {
    let (dir, cfg) = setup();
    let out = dir.path().join("cmp");
    let o = cli(&["compare", "-c", s(&cfg), "-o", s(&out), "--modes", "handcrafted_ecg,handcrafted_eda,handcrafted_decfusion"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("comparison.csv")).unwrap();
    let modes: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(modes, ["handcrafted_ecg", "handcrafted_eda", "handcrafted_decfusion"]);
}
