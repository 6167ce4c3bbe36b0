//! End-to-end checks of the binary: exit codes, artifact layout, and the
//! synth → train → predict/evaluate/esa pipeline.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_procdbn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn assert_code(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{what}: stdout {} stderr {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json_file(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn no_temp_residue(dir: &Path) {
    for entry in fs::read_dir(dir).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(
            !name.to_string_lossy().ends_with(".tmp"),
            "leftover temporary file {name:?}"
        );
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_code(&run(&["--help"]), 0, "--help");
    assert_code(&run(&["--version"]), 0, "--version");
    assert_code(&run(&["train", "--help"]), 0, "train --help");
}

#[test]
fn usage_errors_exit_one() {
    assert_code(&run(&[]), 1, "no subcommand");
    assert_code(&run(&["frobnicate"]), 1, "unknown subcommand");
    assert_code(
        &run(&["synth", "--bogus-flag", "1", "--out", "x.csv"]),
        1,
        "unknown flag",
    );
    assert_code(
        &run(&["synth", "--kind", "nope", "--out", "x.csv"]),
        1,
        "invalid kind",
    );
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_code(
        &bin()
            .args(["--threads", "0", "synth", "--kind", "symptom-random", "--out"])
            .arg(&out)
            .output()
            .unwrap(),
        1,
        "zero threads",
    );
}

#[test]
fn missing_input_exits_two() {
    let out = run(&[
        "train",
        "--log",
        "/nonexistent/log.csv",
        "--attr",
        "ctx",
        "--background",
        "ctx",
        "--out",
        "/tmp/never-written.json",
    ]);
    assert_code(&out, 2, "missing log file");
}

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    let log = p("log.csv");
    assert_code(
        &run(&[
            "synth", "--kind", "background-causal", "--traces", "200", "--seed", "7", "--out",
            &log,
        ]),
        0,
        "synth",
    );
    assert!(Path::new(&log).exists());
    // CSV artifacts carry their configuration in a sidecar.
    let sidecar = json_file(&dir.path().join("log.csv.config.json"));
    assert_eq!(sidecar["kind"], "background-causal");

    let model = p("model.json");
    let report = p("model.report.json");
    assert_code(
        &run(&[
            "train", "--log", &log, "--attr", "ctx", "--background", "ctx", "--hidden-states",
            "2,3,4", "--restarts", "3", "--seed", "0", "--out", &model, "--report", &report,
        ]),
        0,
        "train",
    );
    let model_json = json_file(Path::new(&model));
    assert_eq!(model_json["format_version"], 1);
    let report_json = json_file(Path::new(&report));
    assert!(report_json["config"].is_object(), "train report echoes config");
    assert!(report_json["history"].is_array());

    // With the causal generator, after [A,B] under background w the next
    // event is C almost surely.
    let predict = bin()
        .args(["predict", "--model", &model])
        .args(["--prefix", "A,B", "--prefix-background", "w,w"])
        .args(["--next-background", "w"])
        .output()
        .unwrap();
    assert_code(&predict, 0, "predict");
    let answer: Value = serde_json::from_slice(&predict.stdout).unwrap();
    assert_eq!(answer["argmax"], "C");
    let p_c = answer["probabilities"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["label"] == "C")
        .unwrap()["probability"]
        .as_f64()
        .unwrap();
    assert!(p_c >= 0.99, "P(C) = {p_c}");

    let eval = p("eval.json");
    assert_code(
        &run(&["evaluate", "--model", &model, "--log", &log, "--attr", "ctx", "--out", &eval]),
        0,
        "evaluate",
    );
    let eval_json = json_file(Path::new(&eval));
    assert!(eval_json["config"].is_object());
    assert!(eval_json["report"]["accuracy"].as_f64().unwrap() >= 0.99);

    let esa = p("esa.json");
    assert_code(
        &run(&["esa", "--model", &model, "--log", &log, "--attr", "ctx", "--out", &esa]),
        0,
        "esa",
    );
    let esa_json = json_file(Path::new(&esa));
    assert!(esa_json["report"]["summary"]["median"].as_f64().unwrap() > 1.0);

    no_temp_residue(dir.path());
}

#[test]
fn reruns_are_byte_identical_and_csv_has_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    let log = p("log.csv");
    run(&["synth", "--kind", "symptom-causal", "--traces", "120", "--seed", "2", "--out", &log]);
    let model = p("model.json");
    let train_args = [
        "train", "--log", &log, "--attr", "ctx", "--symptom", "ctx", "--hidden-states", "2",
        "--restarts", "2", "--seed", "1", "--out", &model,
    ];
    assert_code(&run(&train_args), 0, "train");
    let first_model = fs::read(&model).unwrap();
    assert_code(&run(&train_args), 0, "train rerun");
    assert_eq!(first_model, fs::read(&model).unwrap(), "train rerun changed bytes");

    let eval_csv = p("eval.csv");
    let eval_args = [
        "evaluate", "--model", &model, "--log", &log, "--attr", "ctx", "--target", "symptom",
        "--format", "csv", "--out", &eval_csv,
    ];
    assert_code(&run(&eval_args), 0, "evaluate csv");
    assert!(dir.path().join("eval.csv.config.json").exists());
    let first_eval = fs::read(&eval_csv).unwrap();
    assert!(first_eval.starts_with(b"metric,"), "csv header");
    assert_code(&run(&eval_args), 0, "evaluate csv rerun");
    assert_eq!(first_eval, fs::read(&eval_csv).unwrap(), "evaluate rerun changed bytes");

    no_temp_residue(dir.path());
}
