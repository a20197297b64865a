use std::path::{Path, PathBuf};
use std::process::Command;

use image::{GrayImage, Luma};

fn lumadim(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lumadim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn csv_column(path: &Path, column: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn analyze_writes_zero_loss_at_full_brightness() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = lumadim(
        &["analyze", "--scene", "sunrise", "--set", "frame_count=12", "--out", "a"],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    let out = dir.path().join("a");
    assert!(csv_column(&out.join("loss_table.csv"), "1").iter().all(|&v| v == 0.0));
    assert_eq!(csv_column(&out.join("visible_fraction.csv"), "c_v").len(), 12);
    assert!(out.join("config.json").exists() && out.join("loss_table.json").exists());
}

#[test]
fn uniform_gray_frames_have_no_visible_contrast() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        GrayImage::from_pixel(32, 32, Luma([128]))
            .save(dir.path().join(format!("g{i}.png")))
            .unwrap();
    }
    let (code, text) = lumadim(&["analyze", "--frames", "g%d.png", "--out", "a"], dir.path());
    assert_eq!(code, 0, "{text}");
    let cv = csv_column(&dir.path().join("a/visible_fraction.csv"), "c_v");
    assert_eq!(cv, vec![0.0; 3]);
}

#[test]
fn baseline_at_a_fraction_is_that_constant() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = lumadim(
        &[
            "baseline",
            "--scene",
            "library",
            "--set",
            "frame_count=20",
            "--target-fraction",
            "0.3",
            "--out",
            "b",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    let b = csv_column(&dir.path().join("b/schedule.csv"), "b");
    assert_eq!(b, vec![0.3; 20]);
    assert!(
        text.contains("SYNTHETIC"),
        "run must report its calibration curve: {text}"
    );
}

#[test]
fn simulate_with_zero_target_keeps_full_brightness() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = lumadim(
        &[
            "simulate",
            "--scene",
            "living_room",
            "--set",
            "frame_count=30",
            "--c-r",
            "0",
            "--out",
            "s",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    assert!(csv_column(&dir.path().join("s/trace.csv"), "b")
        .iter()
        .all(|&b| b == 1.0));
}

#[test]
fn power_report_compares_equal_power_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = lumadim(
        &[
            "analyze",
            "--scene",
            "basement",
            "--set",
            "frame_count=60",
            "--out",
            "a",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    for (cmd, out) in [("baseline", "b"), ("optimize", "o")] {
        let (code, text) = lumadim(&[cmd, "--table", "a/loss_table.csv", "--out", out], dir.path());
        assert_eq!(code, 0, "{text}");
    }
    let (code, text) = lumadim(
        &[
            "power-report",
            "--table",
            "a/loss_table.csv",
            "--set",
            "baseline_schedule=b/schedule.csv",
            "--set",
            "optimized_schedule=o/schedule.csv",
            "--out",
            "p",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    let report = json(&dir.path().join("p/power_report.json"));
    let full = report["full"]["mean_power"].as_f64().unwrap();
    let (base, ours) = (
        report["baseline"]["mean_power"].as_f64().unwrap(),
        report["ours"]["mean_power"].as_f64().unwrap(),
    );
    assert!((full - (0.001858 * 804.3 + 0.2945)).abs() < 1e-9);
    assert!((base - ours).abs() <= 0.005 * base);
    assert!(report["ours"]["loss_std"].as_f64().unwrap() <= report["baseline"]["loss_std"].as_f64().unwrap());
}

#[test]
fn exit_codes_follow_the_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], i32); 6] = [
        (&["optimize", "--scene", "library", "--set", "gama=2"], 1),
        (&["optimize", "--scene", "nowhere"], 1),
        (&["optimize", "--frames", "missing_%d.png"], 2),
        (
            &[
                "optimize",
                "--scene",
                "library",
                "--set",
                "frame_count=8",
                "--target-power",
                "40",
            ],
            3,
        ),
        (
            &[
                "optimize",
                "--scene",
                "library",
                "--set",
                "frame_count=30",
                "--set",
                "max_iter=1",
            ],
            4,
        ),
        (&["optimize", "--no-such-flag"], 1),
    ];
    for (args, want) in cases {
        let mut full = args.to_vec();
        full.extend(["--out", "x"]);
        let (code, text) = lumadim(&full, dir.path());
        assert_eq!(code, want, "{args:?}: {text}");
    }
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(
        lumadim(&["analyze", "--config", "bad.json", "--out", "x"], dir.path()).0,
        1
    );
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = lumadim(
        &[
            "optimize",
            "--scene",
            "library",
            "--set",
            "frame_count=8",
            "--target-power",
            "40",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(code, 3);
    let names: Vec<String> = files(&dir.path().join("x"))
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    // the snapshot and the completed loss table only; no schedule, no temp files
    assert_eq!(names, ["config.json", "loss_table.csv"]);
}

#[test]
fn snapshot_reproduces_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = lumadim(
        &[
            "optimize",
            "--scene",
            "basement",
            "--set",
            "frame_count=40",
            "--seed",
            "7",
            "--out",
            "one",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    let (code, text) = lumadim(&["optimize", "--config", "one/config.json", "--out", "two"], dir.path());
    assert_eq!(code, 0, "{text}");
    let (a, b) = (files(&dir.path().join("one")), files(&dir.path().join("two")));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    assert_eq!(json(&dir.path().join("two/config.json"))["seed"], 7);
}

#[test]
fn calibrate_fits_synthetic_trials_and_its_curve_is_usable() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = lumadim(&["calibrate", "--seed", "3", "--out", "c"], dir.path());
    assert_eq!(code, 0, "{text}");
    let curve = json(&dir.path().join("c/calibration.json"));
    assert!(curve["provenance"].as_str().unwrap().starts_with("SYNTHETIC"));
    assert_eq!(curve["coefficients"].as_array().unwrap().len(), 5);

    // fitting the written thresholds again gives the same curve
    let (code, text) = lumadim(
        &[
            "calibrate",
            "--set",
            "calibration_input=c/thresholds.csv",
            "--out",
            "c2",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    // (up to the nine significant digits the CSV keeps)
    let refit = json(&dir.path().join("c2/calibration.json"));
    let eval = |c: &serde_json::Value, l: f64| {
        c["coefficients"]
            .as_array()
            .unwrap()
            .iter()
            .rev()
            .fold(0.0, |acc, k| acc * l + k.as_f64().unwrap())
    };
    for l in [1.0, 10.0, 100.0, 400.0, 800.0] {
        let (a, b) = (eval(&refit, l), eval(&curve, l));
        assert!((a - b).abs() <= 1e-6 * b.abs(), "at {l}: {a} vs {b}");
    }

    let (code, text) = lumadim(
        &[
            "baseline",
            "--scene",
            "library",
            "--set",
            "frame_count=5",
            "--set",
            "calibration=c/calibration.json",
            "--out",
            "b",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("simulated observer"), "{text}");
}
