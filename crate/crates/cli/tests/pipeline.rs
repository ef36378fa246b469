use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const PLANT: &str = r#"{
  "kind": "grn",
  "input_box": {"lb": [0, 0, 0], "ub": [1, 1, 1]},
  "output_box": {"lb": [0, 0, 0], "ub": [40, 40, 40]}
}"#;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepc-lab"))
        .args(args)
        .env_remove("DEEPC_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Shared GRN artifacts: plant file, scaler, Hankel set, dataset, schedule.
struct Artifacts {
    dir: tempfile::TempDir,
    plant: PathBuf,
    scaler: PathBuf,
    hankel: PathBuf,
    data: PathBuf,
    schedule: PathBuf,
}

impl Artifacts {
    fn build() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let plant = d.join("plant.json");
        std::fs::write(&plant, PLANT).unwrap();
        ok(&["gen-data", "--plant", s(&plant), "--steps", "200", "--seed", "7", "--out", s(&d.join("hk"))]);
        ok(&[
            "gen-data", "--plant", s(&plant), "--steps", "80", "--episodes", "3", "--seed", "8", "--out",
            s(&d.join("tr")),
        ]);
        let scaler = d.join("scaler.json");
        let ys: Vec<PathBuf> = (0..3).map(|e| d.join(format!("tr/y_{e:03}.csv"))).collect();
        let us: Vec<PathBuf> = (0..3).map(|e| d.join(format!("tr/u_{e:03}.csv"))).collect();
        let hk_y = d.join("hk/y.csv");
        ok(&["fit-scaler", "--y", s(&hk_y), "--y", s(&ys[0]), "--y", s(&ys[1]), "--y", s(&ys[2]), "--out", s(&scaler)]);
        let hankel = d.join("hankel.json");
        ok(&[
            "build-hankel", "--u", s(&d.join("hk/u.csv")), "--y", s(&hk_y), "--T", "200", "--nx", "6",
            "--scaler", s(&scaler), "--out", s(&hankel),
        ]);
        let data = d.join("data.bin");
        let mut args = vec!["make-dataset".to_string()];
        for (u, y) in us.iter().zip(&ys) {
            args.extend(["--u".into(), s(u).into(), "--y".into(), s(y).into()]);
        }
        args.extend(["--scaler".into(), s(&scaler).into(), "--out".into(), s(&data).into()]);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        let schedule = d.join("schedule.json");
        ok(&["grn-schedule", "--steps-each", "10", "--out", s(&schedule)]);
        Self {
            dir,
            plant,
            scaler,
            hankel,
            data,
            schedule,
        }
    }

    fn train(&self, name: &str) -> PathBuf {
        let model = self.dir.path().join(name);
        ok(&[
            "train", "--variant", "I", "--hankel", s(&self.hankel), "--data", s(&self.data), "--plant", s(&self.plant),
            "--scaler", s(&self.scaler), "--epochs", "2", "--batch", "50", "--out", s(&model),
        ]);
        model
    }

    fn run(&self, controller: &str, model: Option<&Path>, name: &str) -> PathBuf {
        let out = self.dir.path().join(name);
        let mut args = vec![
            "run", "--controller", controller, "--hankel", s(&self.hankel), "--plant", s(&self.plant), "--schedule",
            s(&self.schedule), "--scaler", s(&self.scaler), "--steps", "25", "--out", s(&out),
        ];
        if let Some(m) = model {
            args.extend(["--model", s(m)]);
        }
        ok(&args);
        out
    }
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn full_pipeline_produces_consistent_artifacts() {
    let a = Artifacts::build();
    let d = a.dir.path();
    assert!(json(&d.join("hk/pe.json"))["records"][0]["excitation_order"].as_u64().unwrap() > 0);
    let meta = json(&d.join("hankel.meta.json"));
    assert_eq!(meta["dims"]["t"], 200);
    assert_eq!(json(&d.join("data.meta.json"))["samples"], 3 * (80 - 20 + 1));

    let model = a.train("model.json");
    assert!(d.join("model.log.csv").exists());
    let tmeta = json(&d.join("model.meta.json"));
    assert_eq!(tmeta["config"]["train"]["epochs"], 2);
    assert_eq!(tmeta["val_samples"], 18);

    for (ctl, m) in [("deepc", None), ("guarded", Some(model.as_path())), ("open", None)] {
        let out = a.run(ctl, m, &format!("{ctl}.csv"));
        let summary = json(&d.join(format!("{ctl}.summary.json")));
        assert!(summary["summary"]["rmse"].as_f64().unwrap().is_finite());
        assert_eq!(summary["rmse_units"], "scaled");
        assert!(summary["meta"]["config"]["deepc"]["q_weight"].is_number());
        let (header, rows) = csv_rows(&out);
        assert_eq!(&header[..5], ["k", "controlled", "u1", "u2", "u3"]);
        assert_eq!(rows.len(), 25);
        for row in &rows {
            for u in &row[2..5] {
                let v: f64 = u.parse().unwrap();
                assert!((-1e-6..=1.0 + 1e-6).contains(&v), "{ctl}: input {v}");
            }
        }
    }

    let bench = d.join("timing.json");
    ok(&[
        "bench", "--trials", "2", "--controllers", "deepc,deep_deepc_I", "--model", s(&model), "--hankel",
        s(&a.hankel), "--plant", s(&a.plant), "--schedule", s(&a.schedule), "--scaler", s(&a.scaler), "--steps", "15",
        "--out", s(&bench),
    ]);
    let t = json(&bench);
    let rows = t["timing"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["controller"], "deep_deepc_I");
    assert!(rows[1]["ratio_vs_deepc"].as_f64().unwrap() > 0.0);
}

#[test]
fn reruns_are_identical_apart_from_timing() {
    let a = Artifacts::build();
    let b = Artifacts::build();
    for f in ["hk/u.csv", "hk/y.csv", "tr/y_002.csv", "scaler.json", "hankel.json", "data.bin"] {
        assert_eq!(
            std::fs::read(a.dir.path().join(f)).unwrap(),
            std::fs::read(b.dir.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let (ma, mb) = (a.train("m.json"), b.train("m.json"));
    assert_eq!(std::fs::read(&ma).unwrap(), std::fs::read(&mb).unwrap());
    let (ra, rb) = (a.run("deep", Some(&ma), "r.csv"), b.run("deep", Some(&mb), "r.csv"));
    let (h, rows_a) = csv_rows(&ra);
    let (_, rows_b) = csv_rows(&rb);
    let timing = h.iter().position(|c| c == "solve_s").unwrap();
    for (x, y) in rows_a.iter().zip(&rows_b) {
        for (i, (p, q)) in x.iter().zip(y).enumerate() {
            if i != timing {
                assert_eq!(p, q);
            }
        }
    }
}

#[test]
fn mismatched_artifacts_fail_with_one_line() {
    let a = Artifacts::build();
    let d = a.dir.path();
    let short = d.join("short.json");
    ok(&[
        "build-hankel", "--u", s(&d.join("hk/u.csv")), "--y", s(&d.join("hk/y.csv")), "--tini", "5", "--out",
        s(&short),
    ]);
    let out = lab(&[
        "train", "--hankel", s(&short), "--data", s(&a.data), "--plant", s(&a.plant), "--epochs", "1", "--out",
        s(&d.join("never.json")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error:")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].contains("dataset") && lines[0].contains("hankel"), "{err}");
    assert!(!d.join("never.json").exists());

    let model = a.train("m.json");
    let out = lab(&[
        "run", "--controller", "deep", "--model", s(&model), "--hankel", s(&short), "--plant", s(&a.plant),
        "--schedule", s(&a.schedule), "--out", s(&d.join("r.csv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = lab(&["grn-schedule", "--plant", s(&missing), "--out", s(&dir.path().join("s.json"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    let out = Command::new(env!("CARGO_BIN_EXE_deepc-lab"))
        .args(["grn-schedule", "--out", s(&dir.path().join("s.json"))])
        .env("DEEPC_LAB_THREADS", "0")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("DEEPC_LAB_THREADS"));

    let out = Command::new(env!("CARGO_BIN_EXE_deepc-lab"))
        .args(["grn-schedule", "--out", s(&dir.path().join("s.json"))])
        .env("DEEPC_LAB_THREADS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    let sched = json(&dir.path().join("s.json"));
    assert_eq!(sched["setpoints"].as_array().unwrap().len(), 4);
}
