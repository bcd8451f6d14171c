use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tamperlens::corpus::{Corpus, CorpusSpec};
use tamperlens::image::{read_gray, write_pgm};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tamperlens"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small corpus on disk plus a calibrated profile, shared by all tests.
struct Workspace {
    _dir: TempDir,
    refs: PathBuf,
    data: PathBuf,
    profile: PathBuf,
    calibrate_stdout: String,
}

fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::generate(&CorpusSpec {
            per_class: 3,
            ..CorpusSpec::default()
        });
        let refs = dir.path().join("refs");
        let data = dir.path().join("data");
        corpus.write_references(&refs).unwrap();
        corpus.write_dataset(&data).unwrap();
        let profile = dir.path().join("profile.json");
        let out = run(&[
            "calibrate",
            "--refs",
            refs.to_str().unwrap(),
            "--out",
            profile.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        Workspace {
            calibrate_stdout: stdout(&out),
            _dir: dir,
            refs,
            data,
            profile,
        }
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn calibrate_writes_profile_and_prints_thresholds() {
    let ws = workspace();
    assert!(ws.calibrate_stdout.contains("match_count_min:"));
    assert!(ws.calibrate_stdout.contains("blur_sharpness_min:"));
    let text = std::fs::read_to_string(&ws.profile).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["version"], 1);
    assert_eq!(json["references"].as_array().unwrap().len(), 8);
}

#[test]
fn calibrate_without_out_prints_profile_json() {
    let ws = workspace();
    let out = run(&["calibrate", "--refs", p(&ws.refs)]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), std::fs::read_to_string(&ws.profile).unwrap());
}

#[test]
fn classify_json_emits_one_record_per_image() {
    let ws = workspace();
    let normal = ws.data.join("normal/normal_000.pgm");
    let rotated = ws.data.join("rotated/rotated_000.pgm");
    let out = run(&[
        "classify",
        "--profile",
        p(&ws.profile),
        "--json",
        p(&normal),
        p(&rotated),
    ]);
    assert!(out.status.success());
    let records: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["label"], "normal");
    assert_eq!(records[1]["label"], "rotated");
    for key in [
        "path",
        "best_ref",
        "good_matches",
        "sharpness",
        "std_dev",
        "rotation_deg",
        "decision_path",
    ] {
        assert!(records[0].get(key).is_some(), "missing {key}");
    }
    assert!(records[1]["decision_path"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r == "rotation_exceeds_limit"));
}

#[test]
fn classify_abnormal_still_exits_zero() {
    let ws = workspace();
    let obstructed = ws.data.join("obstructed/obstructed_000.pgm");
    let out = run(&[
        "classify",
        "--profile",
        p(&ws.profile),
        "--json",
        p(&obstructed),
    ]);
    assert!(out.status.success());
    let record: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(record["label"], "obstructed");
    assert!(record["rotation_deg"].is_null());
}

#[test]
fn evaluate_prints_report() {
    let ws = workspace();
    let out = run(&[
        "evaluate",
        "--profile",
        p(&ws.profile),
        "--dataset",
        p(&ws.data),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    for word in [
        "Accuracy",
        "Precision",
        "Recall",
        "F1-Score",
        "Mean processing time",
    ] {
        assert!(text.contains(word), "missing {word} in\n{text}");
    }

    let out = run(&[
        "evaluate",
        "--profile",
        p(&ws.profile),
        "--dataset",
        p(&ws.data),
        "--json",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n_samples"], 12);
    assert_eq!(report["positive_class"], "abnormal");
}

#[test]
fn synth_subcommands_write_images() {
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    let input = ws.refs.join("ref_03.pgm");
    let original = read_gray(&input).unwrap();
    let cases: [(&str, &[&str]); 4] = [
        ("blur", &["--sigma", "2"]),
        ("rotate", &["--angle", "-30"]),
        ("obstruct", &["--level", "0", "--coverage", "1"]),
        ("jitter", &["--delta", "-15"]),
    ];
    for (mode, extra) in cases {
        let out_path = dir.path().join(format!("{mode}.pgm"));
        let mut args = vec!["synth", mode];
        args.extend_from_slice(extra);
        args.extend(["--in", p(&input), "--out", p(&out_path)]);
        let out = run(&args);
        assert!(
            out.status.success(),
            "{mode}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let img = read_gray(&out_path).unwrap();
        assert_eq!(
            (img.width(), img.height()),
            (original.width(), original.height())
        );
    }
    let covered = read_gray(&dir.path().join("obstruct.pgm")).unwrap();
    assert!(covered.data().iter().all(|&v| v == 0));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["classify", "--json"]).status.code(), Some(2));
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "obstruct",
        "--level",
        "0",
        "--coverage",
        "1.5",
        "--in",
        p(&ws.refs.join("ref_00.pgm")),
        "--out",
        p(&dir.path().join("x.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_and_schema_errors_exit_three() {
    let ws = workspace();
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let img = ws.refs.join("ref_00.pgm");
    assert_eq!(
        run(&["classify", "--profile", p(&missing), p(&img)])
            .status
            .code(),
        Some(3)
    );

    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(&ws.profile).unwrap();
    std::fs::write(&bad, text.replacen("\"version\": 1", "\"version\": 999", 1)).unwrap();
    let out = run(&["classify", "--profile", p(&bad), p(&img)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("999"));

    let data = dir.path().join("data");
    std::fs::create_dir_all(data.join("misc")).unwrap();
    write_pgm(&data.join("misc/a.pgm"), &read_gray(&img).unwrap()).unwrap();
    let out = run(&[
        "evaluate",
        "--profile",
        p(&ws.profile),
        "--dataset",
        p(&data),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown label: misc"));
}
