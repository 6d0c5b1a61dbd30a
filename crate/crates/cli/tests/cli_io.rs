//! End-to-end checks of the command-line surface: file round-trips,
//! reproducibility of emitted reports, and exit codes.

use std::path::PathBuf;
use std::process::Command;

fn akb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_akb"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("akb-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_binary_round_trips_through_filter() {
    let dir = temp_dir("roundtrip");
    let sim = dir.join("sim");
    let status = akb()
        .args([
            "simulate",
            "--scenario",
            "scalar-demo",
            "--horizon",
            "0.9",
            "--grid-k",
            "64",
            "--format",
            "both",
            "--out-dir",
        ])
        .arg(&sim)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(sim.join("bundle.csv")).unwrap();
    assert!(csv.starts_with("t,x_1,z_1"));
    assert_eq!(csv.lines().count(), 66);

    let flt = dir.join("flt");
    let status = akb()
        .args(["filter", "--scenario", "scalar-demo", "--horizon", "0.9", "--data"])
        .arg(sim.join("bundle.bin"))
        .args(["--strategy", "classical", "--out-dir"])
        .arg(&flt)
        .status()
        .unwrap();
    assert!(status.success());
    let est = std::fs::read_to_string(flt.join("estimate.csv")).unwrap();
    assert!(est.starts_with("t,x_hat_1,p11_11"));
    let manifest = std::fs::read_to_string(flt.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"filter\""));
}

#[test]
fn ratios_rerun_is_byte_identical_and_reads_back() {
    let dir = temp_dir("ratios");
    let run = |out: &PathBuf| {
        let status = akb()
            .args([
                "ratios",
                "--scenario",
                "scalar-demo",
                "--horizon",
                "0.9",
                "--grid-k",
                "90",
                "--paths",
                "60",
                "--seed",
                "9",
                "--eval-times",
                "0.45,0.9",
                "--out-dir",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    run(&out_a);
    run(&out_b);
    for name in ["ratios_t0.45.csv", "ratios_t0.9.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // The CSV reproduces the JSON report numbers.
    let csv = std::fs::read_to_string(out_a.join("ratios_t0.9.csv")).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("ratios.json")).unwrap())
            .unwrap();
    let r_json = json[0]["reports"][1]["ratios"][0].as_f64().unwrap();
    let last_line = csv.lines().last().unwrap();
    let r_csv: f64 = last_line.split(',').nth(2).unwrap().parse().unwrap();
    assert!((r_csv - r_json).abs() < 1e-6);
}

#[test]
fn config_file_drives_a_run() {
    let dir = temp_dir("config");
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        r#"{
            "scenario": "scalar-demo",
            "horizon": 0.9,
            "grid_k": 45,
            "n_paths": 20,
            "seed": 3,
            "eval_times": [0.9]
        }"#,
    )
    .unwrap();
    let out = dir.join("out");
    let status = akb()
        .args(["ratios", "--config"])
        .arg(&cfg)
        .args(["--out-dir"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("ratios_t0.9.csv").exists());
}

#[test]
fn exit_codes_distinguish_validation_from_numerics() {
    // Unknown scenario: validation failure, exit 2.
    let status = akb()
        .args(["simulate", "--scenario", "not-a-scenario", "--out-dir"])
        .arg(temp_dir("exit2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Structurally singular correlation: Sigma = 1 consumed by rho(t) = t
    // before the horizon ends. Numerical failure, exit 3.
    let dir = temp_dir("exit3");
    let model = dir.join("model.json");
    std::fs::write(
        &model,
        r#"{
            "type": "linear",
            "a": [[0.0]],
            "h": [[1.0]],
            "sigma0": [[1.0]],
            "corr": {
                "sigma": [[1.0]],
                "horizon": 2.0,
                "kernel": {"kind": "linear", "c": [[1.0]]}
            }
        }"#,
    )
    .unwrap();
    let status = akb()
        .args(["kernel", "--scenario"])
        .arg(&model)
        .args(["--horizon", "2.0", "--grid-k", "100", "--out-dir"])
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn kernel_table_json_schema() {
    let dir = temp_dir("kernel");
    let status = akb()
        .args([
            "kernel",
            "--scenario",
            "radar",
            "--gamma",
            "1.0",
            "--grid-k",
            "50",
            "--out-dir",
        ])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("kernel_table.json")).unwrap())
            .unwrap();
    assert_eq!(v["grid"].as_array().unwrap().len(), 51);
    assert_eq!(v["g"].as_array().unwrap().len(), 51);
    assert_eq!(v["g"][0].as_array().unwrap().len(), 12); // 2x6 row-major
    assert_eq!(v["r"][0].as_array().unwrap().len(), 4); // 2x2
    assert!((v["T0"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn volterra_command_reports_dual_readings() {
    let dir = temp_dir("volterra");
    let status = akb()
        .args(["volterra", "--kernel", "ts", "--grid-k", "128", "--out-dir"])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("volterra_report.json")).unwrap())
            .unwrap();
    assert!(v["literal_max_dev"].as_f64().unwrap() < 1e-3);
    assert!(v["row_frozen_max_dev"].as_f64().unwrap() < 1e-3);
    assert!(v["discrepancy"].is_null());
}

#[test]
fn ratios_accepts_gamma_list() {
    let dir = temp_dir("gammalist");
    let status = akb()
        .args([
            "ratios",
            "--scenario",
            "radar",
            "--gamma",
            "1,2",
            "--grid-k",
            "100",
            "--paths",
            "20",
            "--seed",
            "4",
            "--eval-times",
            "0.75,1.0",
            "--out-dir",
        ])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.join("ratios_t1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + one row per gamma
    assert!(csv.lines().nth(1).unwrap().starts_with("1,"));
    assert!(csv.lines().nth(2).unwrap().starts_with("2,"));
}
