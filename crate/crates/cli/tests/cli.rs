//! End-to-end runs of the binary against the shipped configs.
//!
//! Goldens live in `tests/golden/<config>/`. Set `CROSSBIF_BLESS=1` to
//! rewrite them after an intentional change.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crossbif_cli::configs_dir;
use serde_json::Value;

const SHIPPED: &[&str] = &[
    "transcritical",
    "pitchfork",
    "pitchfork_rotated",
    "definite",
    "rank2",
    "transcritical_unfolded",
    "continue_transcritical",
    "continue_pitchfork",
    "demo_scan",
    "demo_monodromy",
    "harmonic_scan",
    "demo_perturb",
];

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn mode_of(config: &Path) -> String {
    let v: Value = serde_json::from_str(&fs::read_to_string(config).unwrap()).unwrap();
    v["mode"].as_str().unwrap().to_owned()
}

fn crossbif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossbif"))
        .args(args)
        .env_remove("TOOL_THREADS")
        .output()
        .unwrap()
}

fn run_config(name: &str, out: &Path) -> Output {
    let config = configs_dir().join(format!("{name}.json"));
    let mode = mode_of(&config);
    crossbif(&[
        &mode,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    names.sort();
    names
}

/// The report with its `build` line blanked.
fn without_build(report: &str) -> String {
    report
        .lines()
        .map(|l| {
            if l.starts_with("  \"build\": ") {
                "  \"build\": \"*\","
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn shipped_configs_match_goldens() {
    let bless = std::env::var_os("CROSSBIF_BLESS").is_some();
    let tmp = tempfile::tempdir().unwrap();
    for name in SHIPPED {
        let out = tmp.path().join(name);
        let res = run_config(name, &out);
        assert!(res.status.success(), "{name}: {}", String::from_utf8_lossy(&res.stderr));
        let golden = golden_dir().join(name);
        if bless {
            let _ = fs::remove_dir_all(&golden);
            fs::create_dir_all(&golden).unwrap();
            for f in listing(&out) {
                fs::copy(out.join(&f), golden.join(&f)).unwrap();
            }
            continue;
        }
        assert_eq!(listing(&out), listing(&golden), "{name}: artifact set");
        for f in listing(&out) {
            let got = fs::read_to_string(out.join(&f)).unwrap();
            let want = fs::read_to_string(golden.join(&f)).unwrap();
            if f.ends_with(".json") {
                assert_eq!(without_build(&got), without_build(&want), "{name}/{f}");
            } else {
                assert_eq!(got, want, "{name}/{f}");
            }
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["pitchfork", "continue_pitchfork", "demo_perturb"] {
        let (a, b) = (
            tmp.path().join(format!("{name}_1")),
            tmp.path().join(format!("{name}_2")),
        );
        assert!(run_config(name, &a).status.success());
        assert!(run_config(name, &b).status.success());
        for f in listing(&a) {
            assert_eq!(
                fs::read(a.join(&f)).unwrap(),
                fs::read(b.join(&f)).unwrap(),
                "{name}/{f}"
            );
        }
    }
}

#[test]
fn classification_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let report = |name: &str| -> Value {
        let out = tmp.path().join(name);
        assert!(run_config(name, &out).status.success());
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
    };
    let t = report("transcritical");
    assert_eq!(t["schema"], "crossbif.report/1");
    assert_eq!(t["result"]["report"]["kind"], "Rank1CrossTranscritical");
    let f = report("pitchfork");
    assert_eq!(f["result"]["report"]["kind"], "Rank1CrossForkLike");
    let e2 = f["result"]["report"]["eps_b_second"].as_f64().unwrap();
    assert!((e2 - 2.0).abs() <= 1e-8, "eps_B'' = {e2}");
}

#[test]
fn branch_csv_row_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ct");
    assert!(run_config("continue_transcritical", &out).status.success());
    let main = fs::read_to_string(out.join("branch.csv")).unwrap();
    assert_eq!(main.lines().next(), Some("eps,q,p,trace"));
    assert_eq!(main.lines().count(), 8, "7 samples plus the header");
    for f in ["branch_a0.csv", "branch_b0.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn harmonic_scan_trace_is_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("h");
    assert!(run_config("harmonic_scan", &out).status.success());
    let csv = fs::read_to_string(out.join("scan.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("eps,T,trace,phiT,psiT,dphiT,dpsiT"));
    let mut n = 0;
    for l in lines {
        let tr: f64 = l.split(',').nth(2).unwrap().parse().unwrap();
        assert!((tr - 2.0).abs() <= 1e-9, "{l}");
        n += 1;
    }
    assert_eq!(n, 5);
}

#[test]
fn unknown_key_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"mode": "classify-map", "family": {"g": []}, "colour": 1}"#).unwrap();
    let out = tmp.path().join("out");
    let res = crossbif(&[
        "classify-map",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(stderr_json(&res)["error"], "config");
    assert!(listing(&out).is_empty(), "no files on a config error");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("pitchfork.json");
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().to_str().unwrap();
    for args in [
        vec!["continue", "--config", cfg, "--out", out],
        vec!["classify-map", "--config", cfg, "--out", out, "--tol", "trace"],
        vec!["classify-map", "--config", cfg, "--out", out, "--tol", "bogus=1"],
        vec!["classify-map", "--config", "/nonexistent/x.json", "--out", out],
        vec!["explode", "--config", cfg],
    ] {
        let res = crossbif(&args);
        assert_eq!(res.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&res)["error"], "config", "{args:?}");
    }
    let res = Command::new(env!("CARGO_BIN_EXE_crossbif"))
        .args(["classify-map", "--config", cfg, "--out", out])
        .env("TOOL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // The well of (x^2 + y^2)/2 - y^3 is open above E = 1/54.
    let cfg = tmp.path().join("rim.json");
    fs::write(
        &cfg,
        r#"{"mode": "monodromy",
            "potential": {"terms": [{"i": 2, "j": 0, "c": 0.5}, {"i": 0, "j": 2, "c": 0.5}, {"i": 0, "j": 3, "c": -1.0}]},
            "energy": 1.0}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let res = crossbif(&[
        "monodromy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(stderr_json(&res)["error"], "numerical");
    assert!(listing(&out).is_empty());
}

#[test]
fn seed_eps_moves_the_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("transcritical.json");
    let out = tmp.path().join("o");
    let res = crossbif(&[
        "classify-map",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed-eps",
        "-0.5",
    ]);
    assert!(res.status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["seed_eps"], -0.5);
    assert_eq!(v["result"]["report"]["kind"], "NoUnitEigenvalue");
}
