//! End-to-end checks of the command-line interface: artifact layout,
//! manifest reproducibility, the analyze round trip and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_afcsim"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("afcsim-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const G2_SCENARIO: &str = r#"
name = "cli-smoke-g2"
seed = 11
integration_time = "40 s"

[source]
rate_per_mw = "20000 /s/mW"
power = "3 mW"
coherence_time = "5 ns"
visibility = 0.84

[signal]
transmission = 0.016667
efficiency = 0.30
dark_rate = "100 Hz"
jitter = "300 ps"

[idler]
transmission = 0.01875
efficiency = 0.08
dark_rate = "10 Hz"
jitter = "100 ps"

[analysis]
tau = "25 ns"
coincidence_window = "10 ns"
bin_width = "1 ns"
histogram_range = "600 ns"

[experiment]
kind = "g2-single"
"#;

#[test]
fn comb_subcommand_reports_expected_delay() {
    let dir = temp_dir("comb");
    let out = bin()
        .args([
            "comb",
            "--period",
            "40 MHz",
            "--finesse",
            "4",
            "--depth",
            "4",
            "--bandwidth",
            "440 MHz",
            "--grid-points",
            "262144",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for file in ["comb.csv", "envelope_out.csv", "echo_report.json", "manifest.json"] {
        assert!(dir.join(file).exists(), "{file} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.join("echo_report.json"))).unwrap();
    let delay = report["echoes"][0]["delay_measured_s"].as_f64().unwrap();
    assert!((delay - 25e-9).abs() < 1e-9, "echo at {delay}");
    let eff = report["echoes"][0]["efficiency"].as_f64().unwrap();
    assert!(eff > 0.2, "efficiency {eff}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn run_is_reproducible_and_analyze_round_trips() {
    let dir = temp_dir("run");
    let scenario_path = dir.join("scenario.toml");
    std::fs::write(&scenario_path, G2_SCENARIO).unwrap();

    let out1 = dir.join("out1");
    let out2 = dir.join("out2");
    for out in [&out1, &out2] {
        let res = bin()
            .arg("run")
            .arg(&scenario_path)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    // byte-level reproducibility of every artifact
    for file in ["summary.json", "histogram.csv", "tags.bin"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    // manifests agree on everything except the literal command line (the
    // two runs wrote to different directories)
    let mut m1: serde_json::Value =
        serde_json::from_str(&read(&out1.join("manifest.json"))).unwrap();
    let mut m2: serde_json::Value =
        serde_json::from_str(&read(&out2.join("manifest.json"))).unwrap();
    m1["command"] = serde_json::Value::Null;
    m2["command"] = serde_json::Value::Null;
    assert_eq!(m1, m2);

    // re-analyzing the recorded stream reproduces the in-memory analysis
    let summary: serde_json::Value =
        serde_json::from_str(&read(&out1.join("summary.json"))).unwrap();
    let g2_run = summary["g2_rows"][0]["g2"].as_f64().unwrap();

    let adir = dir.join("analysis");
    let res = bin()
        .arg("analyze")
        .arg(out1.join("tags.bin"))
        .args(["--window", "10 ns", "--peak", "0 ns", "--out"])
        .arg(&adir)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let analysis: serde_json::Value =
        serde_json::from_str(&read(&adir.join("analysis.json"))).unwrap();
    let g2_analyze = analysis["g2"].as_f64().unwrap();
    assert_eq!(g2_run, g2_analyze, "analyze path must equal in-memory analysis");

    // histograms from both paths are identical
    assert_eq!(
        read(&out1.join("histogram.csv")),
        read(&adir.join("histogram.csv"))
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn seed_override_changes_outputs() {
    let dir = temp_dir("seed");
    let scenario_path = dir.join("scenario.toml");
    std::fs::write(&scenario_path, G2_SCENARIO).unwrap();
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    for (out, seed) in [(&out1, "11"), (&out2, "12")] {
        let res = bin()
            .arg("run")
            .arg(&scenario_path)
            .args(["--seed", seed, "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(res.status.success());
    }
    let a = std::fs::read(out1.join("tags.bin")).unwrap();
    let b = std::fs::read(out2.join("tags.bin")).unwrap();
    assert_ne!(a, b);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = temp_dir("bad");
    // unreadable scenario
    let res = bin()
        .arg("run")
        .arg(dir.join("missing.toml"))
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));

    // bare number where a unit is required
    let bad = G2_SCENARIO.replace("tau = \"25 ns\"", "tau = \"25\"");
    let path = dir.join("bad.toml");
    std::fs::write(&path, bad).unwrap();
    let res = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(res.status.code(), Some(2));

    // malformed comb flags
    let res = bin()
        .args(["comb", "--period", "40 parsec"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn calibrate_prints_rate() {
    let dir = temp_dir("cal");
    let res = bin().args(["calibrate", "--out"]).arg(&dir).output().unwrap();
    assert!(res.status.success());
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("rate_per_mw"), "{text}");
    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.join("summary.json"))).unwrap();
    let rate = summary["calibration"]["rate_per_mw"].as_f64().unwrap();
    assert!(rate > 10.0 && rate < 500.0, "rate {rate}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bell_subcommand_smoke() {
    let dir = temp_dir("bell");
    let res = bin()
        .args(["bell", "--variant", "hybrid", "--integration", "30 s", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.join("summary.json"))).unwrap();
    assert!(summary["bell"]["s"].is_number());
    assert!(dir.join("bell_correlators.csv").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}
