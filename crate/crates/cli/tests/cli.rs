use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cornercase(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cornercase"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fast_config(dir: &Path) {
    fs::write(
        dir.join("fast.json"),
        r#"{"hyperopt": {"restarts": 1, "max_evals": 25}, "grid_resolution": 15}"#,
    )
    .unwrap();
}

#[test]
fn full_run_covers_default_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    fast_config(tmp.path());
    let o = cornercase(tmp.path(), &["--config", "fast.json", "--seed", "5", "--out", "o", "run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let names: Vec<&str> = report["datasets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["MC100", "MC1000", "LHC100", "LHC1000"]);
    assert_eq!(report["comparisons"].as_array().unwrap().len(), 4);
    for d in report["datasets"].as_array().unwrap() {
        let acc = d["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    let out = tmp.path().join("o");
    let rows = fs::read_to_string(out.join("data/MC100.csv")).unwrap().lines().count();
    assert_eq!(rows, 101);
    let train_rows = fs::read_to_string(out.join("data/LHC1000_train.csv")).unwrap().lines().count();
    assert_eq!(train_rows, 901);
    let svg = fs::read_to_string(out.join("slices/LHC100.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    assert!(svg.contains("aperture_angle = 17.5"));

    let before = fs::read(out.join("data/LHC100.csv")).unwrap();
    let o = cornercase(tmp.path(), &["--config", "fast.json", "--seed", "5", "--out", "o", "sample", "LHC100"]);
    assert!(o.status.success());
    assert_eq!(before, fs::read(out.join("data/LHC100.csv")).unwrap());

    let o = cornercase(tmp.path(), &["--out", "o", "compare", "MC100", "MC100"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("raw 0.000000, normalized 0.000000"));

    let o = cornercase(
        tmp.path(),
        &["--out", "o", "evaluate", "--model", "o/models/LHC100.json", "--test", "o/data/LHC100_test.csv"],
    );
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["n_test"], 10);
    assert!(m["n_misclassified"].as_u64().unwrap() <= 10);
}

#[test]
fn ad_hoc_dataset_flows_through_the_stages() {
    let tmp = tempfile::tempdir().unwrap();
    fast_config(tmp.path());
    let base = ["--config", "fast.json", "--out", "o"];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = base.iter().chain(extra).copied().collect();
        let o = cornercase(tmp.path(), &args);
        assert!(o.status.success(), "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    assert!(run(&["sample", "--method", "lhc", "--n", "40"]).starts_with("LHC40: 40 points (36 train, 4 test"));
    run(&["train", "LHC40"]);
    run(&["evaluate", "LHC40"]);
    run(&["boundary", "LHC40"]);
    let s = run(&["slice", "LHC40", "--band", "0.5"]);
    assert!(s.contains("band ±0.5"), "{s}");
    let s = run(&["train", "--input", "o/data/LHC40.csv", "--split", "--model-out", "m/x.json"]);
    assert!(s.contains("held out 4 points"), "{s}");
    assert!(tmp.path().join("m/x.json").is_file());
    assert!(tmp.path().join("m/LHC40_test.csv").is_file());
}

#[test]
fn exit_codes_follow_the_convention() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| cornercase(tmp.path(), args).status.code();

    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["sample", "--method", "nope", "--n", "10"]), Some(1));
    assert_eq!(code(&["train", "NOPE"]), Some(1));
    assert_eq!(code(&["--out", "empty", "train", "MC100"]), Some(2));

    fs::write(
        tmp.path().join("bad.csv"),
        "speed_ego,speed_target,aperture_angle,outcome\n50,10,12,collision\n50,10,oops,collision\n",
    )
    .unwrap();
    let o = cornercase(tmp.path(), &["train", "--input", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.csv:3:"));

    fs::write(
        tmp.path().join("one.csv"),
        "speed_ego,speed_target,aperture_angle,outcome\n60,10,12,collision\n65,8,11,collision\n",
    )
    .unwrap();
    assert_eq!(code(&["train", "--input", "one.csv"]), Some(2));

    // Equal speeds that never close the gap cannot finish within the horizon.
    assert_eq!(code(&["simulate", "20.1", "20", "10"]), Some(3));
}

#[test]
fn simulate_reports_near_boundary_outcomes() {
    let tmp = tempfile::tempdir().unwrap();
    let row = |args: &[&str]| -> serde_json::Value {
        let o = cornercase(tmp.path(), args);
        assert!(o.status.success());
        serde_json::from_str(&stdout(&o)).unwrap()
    };
    let hit = row(&["simulate", "47.27", "15.76", "11.36"]);
    assert_eq!(hit["trace"]["outcome"], "collision");
    assert_eq!(hit["oracle"], "collision");
    let miss = row(&["simulate", "46.97", "15.30", "13.33"]);
    assert_eq!(miss["trace"]["outcome"], "no_collision");

    fs::write(tmp.path().join("p.cfg"), "decel = 9\n").unwrap();
    let softer = row(&["--config", "p.cfg", "simulate", "47.27", "15.76", "11.36"]);
    assert_eq!(softer["trace"]["outcome"], "no_collision");
}
