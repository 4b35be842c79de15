use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use interfere::commands::{ContrastOutput, EstimateOutput, ProbcheckOutput, SimulateOutput};

fn interfere(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interfere"))
        .args(args)
        .env("INTERFERE_THREADS", "2")
        .output()
        .expect("spawn interfere")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// 6x5 grid with two thirds treated and enrollment 10.
fn grid_units_with(dir: &Path, outcome: impl Fn(usize) -> usize) -> PathBuf {
    let mut s = String::from("id,x,y,treatment,outcome,enrollment\n");
    for i in 0..30 {
        let (x, y) = (i % 6, i / 6);
        writeln!(s, "u{i},{x},{y},{},{},10", (i % 3 != 0) as u8, outcome(i)).unwrap();
    }
    write(dir, "units.csv", &s)
}

fn grid_units(dir: &Path) -> PathBuf {
    grid_units_with(dir, |i| (i * 13) % 10)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn estimate_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = grid_units(dir.path());
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"bonferroni": [{"d_min": 1, "d": 1}, {"d_min": 2, "d": 3}], "p_method": {"mc": {"samples": 20000, "seed": 3}}}"#,
    );
    let args = ["estimate", "--config", p(&cfg), "--data", p(&data), "--format", "json"];
    let a = interfere(&args);
    let b = interfere(&args);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let parsed: EstimateOutput = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&parsed).unwrap() + "\n", text);
    assert_eq!(parsed.entries.len(), 2);
    assert!(parsed.bonferroni);
    assert!((parsed.alpha_per_config - 0.025).abs() < 1e-15);
    assert!(parsed.entries[0].notes.iter().any(|n| n.contains("spatial information")));
}

#[test]
fn estimate_writes_all_formats_and_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let data = grid_units(dir.path());
    let cfg = write(dir.path(), "cfg.json", r#"{"neighborhood": {"d": 3}, "mapping": {"kind": "threshold", "d_min": 2}}"#);
    let out_dir = dir.path().join("out");
    let mats = dir.path().join("mats");
    let out = interfere(&[
        "estimate", "--config", p(&cfg), "--data", p(&data), "--out", p(&out_dir), "--full-control", "--export-matrices",
        p(&mats),
    ]);
    assert!(matches!(out.status.code(), Some(0 | 3)), "{}", String::from_utf8_lossy(&out.stderr));
    for ext in ["json", "txt", "csv"] {
        assert!(out_dir.join(format!("estimate.{ext}")).exists());
    }
    let json: EstimateOutput = serde_json::from_str(&std::fs::read_to_string(out_dir.join("estimate.json")).unwrap()).unwrap();
    let fc = json.entries[0].full_control.as_ref().unwrap();
    assert!(fc.lower_bound <= fc.mean_enrollment);
    let csv = std::fs::read_to_string(mats.join("P_2_3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 30);
    assert_eq!(out.status.code() == Some(0), json.all_valid());
}

#[test]
fn facebook_counts() {
    let dir = tempfile::tempdir().unwrap();
    let counts = write(dir.path(), "fb.csv", "arm,total,successes\ntreated,60000000,12000000\ncontrol,611000,109000\n");
    let text = stdout(&interfere(&["contrast", "--count-mode", "--data", p(&counts), "--format", "json"]));
    let out: ContrastOutput = serde_json::from_str(&text).unwrap();
    assert!(out.zcat.is_none());
    assert!((out.cat.two_sided.lower - 0.0203).abs() < 5e-4, "{:?}", out.cat.two_sided);
    assert!((out.cat.two_sided.upper - 0.0229).abs() < 5e-4, "{:?}", out.cat.two_sided);
}

#[test]
fn contrast_on_units_adds_zcat_with_neighborhood() {
    let dir = tempfile::tempdir().unwrap();
    let data = grid_units_with(dir.path(), |i| (i * 13) % 10 / 5);
    let cfg = write(dir.path(), "cfg.json", r#"{"neighborhood": {"d": 3}, "mapping": {"kind": "threshold", "d_min": 2}}"#);
    let text = stdout(&interfere(&["contrast", "--config", p(&cfg), "--data", p(&data), "--format", "json"]));
    let out: ContrastOutput = serde_json::from_str(&text).unwrap();
    let zcat = out.zcat.unwrap();
    assert!(zcat.lambda_1.unwrap() >= 0.0);
    assert!(zcat.two_sided.lower <= zcat.delta && zcat.delta <= zcat.two_sided.upper);
    let csv = stdout(&interfere(&["contrast", "--config", p(&cfg), "--data", p(&data), "--format", "csv"]));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn adversarial_simulation_condition_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"simulation": {"scenarios": ["adversarial"], "configs": [{"d_min": 1, "d": 1}], "n": 49, "layout_seed": 1, "seed": 2024}}"#,
    );
    let text = stdout(&interfere(&["simulate", "--config", p(&cfg), "--replicates", "1000", "--format", "json"]));
    let out: SimulateOutput = serde_json::from_str(&text).unwrap();
    let cell = &out.tables[0].cells[0];
    let frac = cell.condition_met_fraction.unwrap();
    assert!((0.41..=0.51).contains(&frac), "{frac}");
}

#[test]
fn probcheck_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = String::from("id,x,treatment,outcome\n");
    for i in 0..12 {
        writeln!(s, "{i},{},{},1", i * i % 17, i % 2).unwrap();
    }
    let data = write(dir.path(), "line.csv", &s);
    let cfg = write(dir.path(), "cfg.json", r#"{"neighborhood": {"d": 4}, "mapping": {"kind": "threshold", "d_min": 2}}"#);
    let text = stdout(&interfere(&[
        "probcheck", "--config", p(&cfg), "--data", p(&data), "--oracle", "--mc-samples", "50000", "--seed", "4",
        "--format", "json",
    ]));
    let out: ProbcheckOutput = serde_json::from_str(&text).unwrap();
    let oracle = out.oracle.unwrap();
    assert!(oracle.max_abs_diff < 1e-12);
    if let Some(dev) = oracle.max_disjoint_deviation {
        assert!(dev < 1e-12);
    }
    let mc = out.mc.unwrap();
    assert!(mc.max_abs_z < 5.0, "{}", mc.max_abs_z);
}

#[test]
fn probcheck_oracle_rejects_large_n() {
    let dir = tempfile::tempdir().unwrap();
    let data = grid_units(dir.path());
    let out = interfere(&["probcheck", "--data", p(&data), "--oracle"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "id,x,treatment,outcome\na,0,1,1\nb,1,2,1\n");
    let out = interfere(&["estimate", "--data", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let one_arm = write(dir.path(), "arm.csv", "id,x,treatment,outcome\na,0,1,1\nb,1,1,0\n");
    let out = interfere(&["contrast", "--data", p(&one_arm)]);
    assert_eq!(out.status.code(), Some(1));

    let out = interfere(&["simulate", "--replicates", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write(dir.path(), "cfg.json", r#"{"rho": 0.5, "bogus": 1}"#);
    let out = interfere(&["simulate", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));

    let out = interfere(&["estimate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn text_output_is_aligned() {
    let dir = tempfile::tempdir().unwrap();
    let data = grid_units(dir.path());
    let text = stdout(&interfere(&["estimate", "--data", p(&data)]));
    let header = text.lines().next().unwrap();
    assert!(header.contains("ci_upper"));
    assert!(text.contains("note:"));
}
