use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_RUN: &str = r#"
[model]
chi = 1.0
a = 1.0
mu = 1.0
alpha = 1.0
beta = 1.0
tau = 1
p = 1.3

[grid]
cells = [16, 16]

[initial]
kind = "gaussian"
width = 0.2
amplitude = 2.0

[time]
horizon = 0.5
"#;

const NBC_BLOWUP: &str = r#"
[nbc]
mu = 1.0
q = 2.0
p = 1.9

[grid]
cells = [128]

[initial]
kind = "constant"
value = 20.0

[time]
horizon = 10.0
"#;

fn ksnbc(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ksnbc"));
    cmd.args(args).env_remove("KSNBC_OUT");
    if let Some(dir) = env_out {
        cmd.env("KSNBC_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_manifest_series_and_snapshots() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "run.toml", SMALL_RUN);
    let out = tmp.path().join("out");
    let o = ksnbc(&["--out", s(&out), "run", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["manifest.json", "series.csv", "config.toml", "snapshots/u_0000.csv", "snapshots/v_0002.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outcome"]["status"]["status"], "Completed");
    assert_eq!(manifest["classification"]["verdict"], "GuaranteedBounded");
    assert!(manifest["compatibility_residual"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["config"]["time"]["dt_max"], 1e-2);
    let header = fs::read_to_string(out.join("series.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "t,mass,l1,l2,l4,llogl,gradv2,gradv4,phi,psi,sup_u,boundary_influx,dt");

    let o = ksnbc(&["report", s(&out)], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 failing verification"));
}

#[test]
fn echoed_config_reproduces_series_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "run.toml", SMALL_RUN);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert_eq!(ksnbc(&["--out", s(&first), "run", s(&cfg)], None).status.code(), Some(0));
    let echo = first.join("config.toml");
    let o = ksnbc(&["--strict", "--out", s(&second), "run", s(&echo)], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(first.join("series.csv")).unwrap(), fs::read(second.join("series.csv")).unwrap());
}

#[test]
fn report_flags_modified_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "run.toml", SMALL_RUN);
    let out = tmp.path().join("out");
    assert_eq!(ksnbc(&["--out", s(&out), "run", s(&cfg)], None).status.code(), Some(0));
    fs::write(out.join("series.csv"), "tampered\n").unwrap();
    let o = ksnbc(&["report", s(&out)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("series.csv"));
}

#[test]
fn supercritical_nbc_exits_with_blowup_code() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "nbc.toml", NBC_BLOWUP);
    let out = tmp.path().join("out");
    let o = ksnbc(&["--out", s(&out), "nbc", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outcome"]["status"]["status"], "BlowUp");
    assert!(manifest["outcome"]["status"]["t"].as_f64().unwrap() < 10.0);
}

#[test]
fn missing_config_names_the_path() {
    let o = ksnbc(&["run", "definitely-missing.toml"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("definitely-missing.toml"));
}

#[test]
fn usage_errors_print_schema() {
    for args in [&["frobnicate"][..], &["run"][..], &["--workers", "x", "run", "a.toml"][..], &["--workers", "0", "run", "a.toml"][..]] {
        let o = ksnbc(args, None);
        assert_eq!(o.status.code(), Some(64), "{args:?}");
        assert!(stderr(&o).contains("[model]"), "{args:?}");
    }
    assert_eq!(ksnbc(&["--help"], None).status.code(), Some(0));
}

#[test]
fn strict_mode_rejects_unknown_keys() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "typo.toml", &SMALL_RUN.replace("horizon = 0.5", "horizon = 0.05\ncadense = 3"));
    let out = tmp.path().join("out");
    let o = ksnbc(&["--strict", "--out", s(&out), "run", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("time.cadense"), "{}", stderr(&o));
    assert!(!out.exists());

    let o = ksnbc(&["--out", s(&out), "run", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning: unknown key `time.cadense`"));
}

#[test]
fn invalid_parameters_are_listed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "bad.toml", &SMALL_RUN.replace("p = 1.3", "p = 1.0").replace("beta = 1.0", "beta = 0.0"));
    let o = ksnbc(&["--out", s(&tmp.path().join("out")), "run", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("p > 1") && err.contains("beta"), "{err}");
}

#[test]
fn output_root_precedence() {
    let tmp = TempDir::new().unwrap();
    let from_config = tmp.path().join("from_config");
    let text = format!("output = {:?}\n{SMALL_RUN}", s(&from_config)).replace("horizon = 0.5", "horizon = 0.02");
    let cfg = write(&tmp, "run.toml", &text);
    let env = tmp.path().join("from_env");
    let flag = tmp.path().join("from_flag");

    assert_eq!(ksnbc(&["run", s(&cfg)], None).status.code(), Some(0));
    assert!(from_config.join("manifest.json").exists());
    assert_eq!(ksnbc(&["run", s(&cfg)], Some(&env)).status.code(), Some(0));
    assert!(env.join("manifest.json").exists());
    assert_eq!(ksnbc(&["--out", s(&flag), "run", s(&cfg)], Some(&env)).status.code(), Some(0));
    assert!(flag.join("manifest.json").exists());
}

#[test]
fn sweep_keeps_one_row_per_cell_including_failures() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{}\n[sweep]\np = [1.2, 1.7]\nmu = [1.0, 2.0]\n", SMALL_RUN.replace("horizon = 0.5", "horizon = 0.05"));
    let cfg = write(&tmp, "sweep.toml", &text);
    let out = tmp.path().join("out");
    let o = ksnbc(&["--workers", "2", "--out", s(&out), "sweep", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ksnbc::harness::SWEEP_COLUMNS.to_vec());
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let outcome = |r: &csv::StringRecord| r[4].to_string();
    assert_eq!(rows.iter().filter(|r| outcome(r) == "Invalid").count(), 2);
    for r in rows.iter().filter(|r| outcome(r) == "Invalid") {
        assert_eq!(&r[1], "1.7");
        assert!(r[16].contains("exploration"), "{}", &r[16]);
    }
    for r in rows.iter().filter(|r| &r[1] == "1.2") {
        assert_eq!(outcome(r), "Completed");
        assert!(out.join(&r[15]).join("manifest.json").exists());
    }
    assert_eq!(ksnbc(&["report", s(&out)], None).status.code(), Some(0));
}

#[test]
fn ineq_campaign_writes_report_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "ineq.toml", "seed = 5\n[ineq]\ncount = 12\ncells = [16, 32]\nmax_wavenumber = 2\n");
    let out = tmp.path().join("out");
    let o = ksnbc(&["--out", s(&out), "ineq", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("ineq.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), ksnbc::inequality_lab::REPORT_COLUMNS.join(","));
    // 4 gny + 1 trace + 3 reg + 1 unif, two grids each
    assert_eq!(lines.count(), 18);
    assert!(text.contains(",5,12"));
}
