use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use talr_core::dataset::{save_labels, Split};
use talr_core::report::RunReport;
use talr_core::{BinaryCodebook, HashModel64, Matrix};

fn talr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_talr"))
        .args(args)
        .env_remove("TALR_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_synth(dir: &Path) -> String {
    let d = dir.join("data");
    let out = talr(&[
        "synth",
        "--out",
        p(&d),
        "--train",
        "300",
        "--query",
        "40",
        "--database",
        "200",
        "--dim",
        "8",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    d.to_str().unwrap().to_string()
}

/// Labels 0/1 alternating, queries 0..q, database q..n, no training rows.
fn label_fixture(dir: &Path, codes: &[Vec<i8>], q: usize) -> (String, String, String) {
    let n = codes.len();
    let labels: Vec<Vec<u32>> = (0..n).map(|i| vec![(i % 2) as u32]).collect();
    let lp = dir.join("labels.csv");
    save_labels(&lp, &labels).unwrap();
    let sp = dir.join("split.json");
    Split {
        train: vec![],
        query: (0..q).collect(),
        database: (q..n).collect(),
    }
    .save(&sp)
    .unwrap();
    let cp = dir.join("codes.bin");
    BinaryCodebook::from_pm1(&Matrix::from_rows(codes).unwrap())
        .unwrap()
        .save(&cp)
        .unwrap();
    (p(&lp).to_string(), p(&sp).to_string(), p(&cp).to_string())
}

fn metric(report: &RunReport, name: &str) -> f64 {
    report
        .metrics
        .iter()
        .find(|m| m.metric == name)
        .unwrap()
        .mean
        .unwrap()
}

#[test]
fn zero_epochs_keeps_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let model = dir.path().join("m.bin");
    let out = talr(&[
        "train",
        "--data",
        &data,
        "--epochs",
        "0",
        "--bits",
        "8",
        "--seed",
        "5",
        "--out",
        p(&model),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let init = HashModel64::random(8, 8, false, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(HashModel64::load(&model).unwrap(), init);
}

#[test]
fn training_report_is_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let mut hashes = Vec::new();
    for run in 0..2 {
        let model = dir.path().join(format!("m{run}.bin"));
        let report = dir.path().join(format!("r{run}.json"));
        let out = talr(&[
            "train",
            "--data",
            &data,
            "--epochs",
            "3",
            "--bits",
            "8",
            "--batch-size",
            "64",
            "--seed",
            "9",
            "--out",
            p(&model),
            "--report",
            p(&report),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let r = RunReport::load(&report).unwrap();
        assert_eq!(r.report_version, 1);
        assert!(r.is_consistent(1e-12));
        assert_eq!(r.history.as_ref().unwrap().epochs.len(), 3);
        hashes.push(r.content_sha256);
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn json_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"bits": 4, "training": {"epochs": 1, "batch_size": 32, "objective": "DCG_s"}}"#,
    )
    .unwrap();
    let model = dir.path().join("m.bin");
    let report = dir.path().join("r.json");
    let out = talr(&[
        "train",
        "--data",
        &data,
        "--config",
        p(&cfg),
        "--bits",
        "6",
        "--out",
        p(&model),
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(HashModel64::load(&model).unwrap().num_bits(), 6);
    let r = RunReport::load(&report).unwrap();
    assert_eq!(r.config["training"]["objective"], "DCG_s");
    assert_eq!(r.config["bits"], 6);

    std::fs::write(&cfg, r#"{"training": {"epochz": 1}}"#).unwrap();
    let out = talr(&[
        "train",
        "--data",
        &data,
        "--config",
        p(&cfg),
        "--out",
        p(&model),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epochz"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let model = dir.path().join("m.bin");
    let m = p(&model);
    for args in [
        vec!["train", "--data", &data, "--bits", "0", "--out", m],
        vec!["train", "--data", &data, "--objective", "MAP", "--out", m],
        vec!["train", "--data", &data, "--batch-size", "1", "--out", m],
        vec!["train", "--data", &data, "--lr", "-1", "--out", m],
        vec!["eval", "--data", &data],
        vec!["frobnicate"],
    ] {
        let out = talr(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
    let out = talr(&["train", "--data", &data, "--lr", "-1", "--out", m]);
    assert!(stderr(&out).contains("learning_rate"));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let bad = dir.path().join("bad.bin");
    let full = std::fs::read(Path::new(&data).join("features.bin")).unwrap();
    std::fs::write(&bad, &full[..30]).unwrap();
    let model = dir.path().join("m.bin");
    HashModel64::random(4, 8, false, 1.0, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap()
        .save(&model)
        .unwrap();
    let split = format!("{data}/split.json");
    let out = talr(&[
        "eval",
        "--features",
        p(&bad),
        "--split",
        &split,
        "--model",
        p(&model),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("byte offset"), "{}", stderr(&out));

    let wide = dir.path().join("wide.bin");
    HashModel64::random(4, 9, false, 1.0, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap()
        .save(&wide)
        .unwrap();
    let out = talr(&["eval", "--data", &data, "--model", p(&wide)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn identical_codes_give_the_single_tie_value() {
    let dir = tempfile::tempdir().unwrap();
    let codes = vec![vec![1i8, -1, 1, 1]; 9];
    let (labels, split, cb) = label_fixture(dir.path(), &codes, 1);
    let report = dir.path().join("r.json");
    let out = talr(&[
        "eval",
        "--labels",
        &labels,
        "--split",
        &split,
        "--codes",
        &cb,
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = RunReport::load(&report).unwrap();
    // query 0 has label 0; database items 1..9 hold 4 relevant of 8
    let (n, np) = (8.0f64, 4.0);
    let closed = (1..=8)
        .map(|t| ((np - 1.0) / (n - 1.0) * (t as f64 - 1.0) + 1.0) / t as f64)
        .sum::<f64>()
        / n;
    assert!((metric(&r, "AP_T") - closed).abs() < 1e-12);
    assert!(metric(&r, "AP_pessimistic") < closed && closed < metric(&r, "AP_optimistic"));
}

#[test]
fn perfect_separation_and_full_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let codes: Vec<Vec<i8>> = (0..10)
        .map(|i| {
            if i % 2 == 0 {
                vec![1, 1, 1]
            } else {
                vec![-1, -1, -1]
            }
        })
        .collect();
    let (labels, split, cb) = label_fixture(dir.path(), &codes, 2);
    let report = dir.path().join("r.json");
    let out = talr(&[
        "eval",
        "--labels",
        &labels,
        "--split",
        &split,
        "--codes",
        &cb,
        "--k",
        "8",
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = RunReport::load(&report).unwrap();
    assert_eq!(metric(&r, "AP_T"), 1.0);
    assert_eq!(metric(&r, "AP_T@k"), 1.0);
    assert_eq!(metric(&r, "NDCG_T"), 1.0);
    assert!(r.is_consistent(1e-12));
}

#[test]
fn audit_without_ties_has_empty_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let codes = vec![
        vec![1i8, 1, 1],
        vec![-1, -1, -1],
        vec![1, 1, -1],
        vec![1, -1, -1],
        vec![1, 1, 1],
    ];
    let (labels, split, cb) = label_fixture(dir.path(), &codes, 1);
    let (rows, summary, report) = (
        dir.path().join("rows.csv"),
        dir.path().join("summary.csv"),
        dir.path().join("r.json"),
    );
    let out = talr(&[
        "tiebreak-audit",
        "--labels",
        &labels,
        "--split",
        &split,
        "--codes",
        &cb,
        "--csv",
        p(&rows),
        "--summary-csv",
        p(&summary),
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = RunReport::load(&report).unwrap();
    assert_eq!(r.tiebreak.len(), 1);
    assert_eq!(r.tiebreak[0].mean_range, 0.0);
    assert_eq!(r.tiebreak[0].fraction_within, 1.0);
    let table = std::fs::read_to_string(&rows).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(std::fs::read_to_string(&summary)
        .unwrap()
        .starts_with("bits,"));
}

#[test]
fn audit_ranges_shrink_with_code_length() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let report = dir.path().join("r.json");
    let out = talr(&[
        "tiebreak-audit",
        "--data",
        &data,
        "--bits",
        "12,48",
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = RunReport::load(&report).unwrap();
    assert_eq!(r.tiebreak.len(), 2);
    assert!(r.tiebreak[1].mean_range <= r.tiebreak[0].mean_range);
    assert!(r.tiebreak.iter().all(|s| s.fraction_within == 1.0));
}

#[test]
fn gradcheck_passes_and_catches_corruption() {
    let out = talr(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("PASS").count(), 4, "{text}");

    let out = talr(&[
        "gradcheck",
        "--backprop",
        "naive_numeric",
        "--objective",
        "DCG_r",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = talr(&["gradcheck", "--corrupt-coordinate", "2,3"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("(bit 2, col 3)"), "{}", stderr(&out));
}

#[test]
fn gradcheck_on_file_batches() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path());
    let report = dir.path().join("r.json");
    let out = talr(&[
        "gradcheck",
        "--data",
        &data,
        "--affinity-mode",
        "threshold",
        "--batch",
        "16",
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = RunReport::load(&report).unwrap();
    assert_eq!(r.details["passed"], true);
    assert_eq!(r.details["objectives"].as_array().unwrap().len(), 4);
}

#[test]
fn csv_synth_round_trips_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("csv");
    let out = talr(&[
        "synth",
        "--out",
        p(&d),
        "--csv",
        "--train",
        "100",
        "--query",
        "10",
        "--database",
        "50",
        "--dim",
        "6",
    ]);
    assert_eq!(code(&out), 0);
    assert!(d.join("features.csv").exists() && d.join("labels.csv").exists());
    let model = dir.path().join("m.bin");
    HashModel64::random(8, 6, false, 1.0, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap()
        .save(&model)
        .unwrap();
    let out = talr(&["eval", "--data", p(&d), "--model", p(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("AP_T"));
}

#[test]
fn thread_count_from_environment() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_talr"))
            .args(["gradcheck", "--objective", "AP_s"])
            .env("TALR_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1")), 0);
    assert_eq!(code(&run("0")), 2);
    assert_eq!(code(&run("many")), 2);
}
