use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spectrack::eval::{write_boxes, GROUND_TRUTH_FILE, IMAGE_DIR};
use spectrack::synthetic::translating_sequence;

fn spectrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(dir: &Path, frames: usize, with_gt: bool) {
    let seq = translating_sequence(frames, 30, (2.0, 1.0), (120, 90), (30.0, 25.0), 21);
    fs::create_dir_all(dir.join(IMAGE_DIR)).unwrap();
    for (i, f) in seq.frames.iter().enumerate() {
        f.save_png(&dir.join(IMAGE_DIR).join(format!("{:04}.png", i + 1))).unwrap();
    }
    if with_gt {
        write_boxes(fs::File::create(dir.join(GROUND_TRUTH_FILE)).unwrap(), &seq.ground_truth).unwrap();
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn track_writes_one_box_per_frame_and_run_records() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    let out = tmp.path().join("out");
    fixture(&seq, 4, true);
    let o = spectrack(&["track", s(&seq), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let boxes = fs::read_to_string(out.join("boxes.txt")).unwrap();
    assert_eq!(boxes.lines().count(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["tool_version"].as_str().unwrap().starts_with("spectrack"));
    assert_eq!(manifest["seed"], 0);
    assert!(out.join("config.txt").is_file());
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["frames"], 4);
    assert!(timing["frames_per_second"].as_f64().unwrap() > 0.0);
}

#[test]
fn track_without_ground_truth_needs_init() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    let out = tmp.path().join("out");
    fixture(&seq, 3, false);
    let o = spectrack(&["track", s(&seq), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--init"), "{}", stderr(&o));

    let o = spectrack(&["track", s(&seq), "--init", "31,26,30,30", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read_to_string(out.join("boxes.txt")).unwrap();
    assert_eq!(first.lines().next().unwrap(), "31.0000,26.0000,30.0000,30.0000");
}

#[test]
fn malformed_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    fixture(&seq, 2, true);
    let cfg = tmp.path().join("bad.txt");
    fs::write(&cfg, "gamma = 1\nalpha = lots\n").unwrap();
    let o = spectrack(&["track", s(&seq), "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("parse error") && err.contains("alpha"), "{err}");
}

#[test]
fn missing_sequence_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = spectrack(&["track", s(&tmp.path().join("nope")), "--init", "1,1,5,5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("io error"));
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("Walk");
    let out = tmp.path().join("eval");
    fixture(&seq, 3, true);
    let o = spectrack(&["eval", s(&seq.join(GROUND_TRUTH_FILE)), s(&seq), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("Walk.json")).unwrap()).unwrap();
    assert_eq!(result["precision_at_20"], 1.0);
    assert_eq!(result["precision_curve"].as_array().unwrap().len(), 51);
    assert_eq!(result["success_curve"].as_array().unwrap().len(), 21);
    let csv = fs::read_to_string(out.join("Walk.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "frame,cle,overlap");
    assert_eq!(csv.lines().count(), 4);
    assert!(out.join("summary.json").is_file());
}

#[test]
fn eval_rejects_empty_and_mismatched_boxes() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    fixture(&seq, 3, true);
    let empty = tmp.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let o = spectrack(&["eval", s(&empty), s(&seq), "--out", s(&tmp.path().join("e"))]);
    assert!(!o.status.success());

    let short = tmp.path().join("short.txt");
    fs::write(&short, "1,1,10,10\n2,2,10,10\n").unwrap();
    let o = spectrack(&["eval", s(&short), s(&seq), "--out", s(&tmp.path().join("e"))]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains('3') && err.contains('2'), "{err}");
}

#[test]
fn eval_fans_out_over_a_directory_of_results() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("data");
    let results = tmp.path().join("results");
    fs::create_dir_all(&results).unwrap();
    for name in ["A", "B"] {
        fixture(&root.join(name), 2, true);
        fs::copy(root.join(name).join(GROUND_TRUTH_FILE), results.join(format!("{name}.txt"))).unwrap();
    }
    let out = tmp.path().join("eval");
    let o = spectrack(&["eval", s(&results), s(&root), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sequences"].as_array().unwrap().len(), 2);
    assert_eq!(summary["mean_precision_at_20"], 1.0);
}

#[test]
fn selftest_passes_and_is_repeatable() {
    let a = spectrack(&["selftest", "--seed", "5"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let text = String::from_utf8_lossy(&a.stdout).into_owned();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
    let b = spectrack(&["selftest", "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn selftest_detects_a_perturbed_recurrence() {
    let o = spectrack(&["selftest", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(text.lines().any(|l| l.starts_with("FAIL") && l.contains("locality")), "{text}");
}

#[test]
fn manifest_rerun_reproduces_boxes() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    fixture(&seq, 4, true);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert!(spectrack(&["track", s(&seq), "--seed", "9", "--out", s(&first)]).status.success());
    let o = spectrack(&["track", "--manifest", s(&first.join("manifest.json")), "--out", s(&second)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("boxes.txt")).unwrap(),
        fs::read(second.join("boxes.txt")).unwrap()
    );
    let o = spectrack(&["track", "--manifest", s(&first.join("manifest.json")), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(5));
}
