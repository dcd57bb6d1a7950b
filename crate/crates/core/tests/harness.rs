use std::path::PathBuf;

use ksnbc::harness::config::{resolve_run, resolve_sweep};
use ksnbc::harness::output::VerdictEntry;
use ksnbc::harness::{parse_config, run_single, run_sweep, Invocation, Loaded, RunKind};
use tempfile::TempDir;

const BASE: &str = r#"
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
kind = "cosine"
k = 1
amplitude = 0.5

[time]
horizon = 1.0

[monitor]
cadence = 2

[sweep]
p = [1.3]
mu = [1.0]
"#;

fn loaded(text: &str) -> Loaded {
    let (file, unknown) = parse_config(text, true).unwrap();
    Loaded { file, unknown, base_dir: PathBuf::new(), path: PathBuf::from("base.toml") }
}

#[test]
fn degenerate_sweep_matches_single_run() {
    let tmp = TempDir::new().unwrap();
    let l = loaded(BASE);
    let single = run_single(&resolve_run(&l, RunKind::Chemotaxis).unwrap(), &tmp.path().join("single"), &Invocation::default())
        .unwrap();
    let sweep = run_sweep(&resolve_sweep(&l).unwrap(), &tmp.path().join("sweep"), &Invocation::default(), Some(1)).unwrap();
    assert_eq!(sweep.rows.len(), 1);
    let row = &sweep.rows[0];
    assert_eq!(row.outcome, "Completed");
    for (name, status, sup) in [
        ("sup_u", &row.verdict_sup_u, row.sup_u),
        ("llogl", &row.verdict_llogl, row.sup_llogl),
        ("phi", &row.verdict_phi, row.sup_phi),
    ] {
        let VerdictEntry::Verdict(v) = &single.manifest.verdicts[name] else { panic!("{name} has no verdict") };
        assert_eq!(&v.status.to_string(), status);
        assert_eq!(Some(v.sup), sup);
    }
    let cell_series = std::fs::read(tmp.path().join("sweep").join(&row.dir).join("series.csv")).unwrap();
    assert_eq!(cell_series, std::fs::read(tmp.path().join("single/series.csv")).unwrap());
}

#[test]
fn manifest_checksums_match_files() {
    let tmp = TempDir::new().unwrap();
    let l = loaded(BASE);
    let report = run_single(&resolve_run(&l, RunKind::Chemotaxis).unwrap(), tmp.path(), &Invocation::default()).unwrap();
    assert!(ksnbc::harness::verify_manifest(tmp.path(), &report.manifest).is_empty());
    assert!(report.manifest.files.iter().any(|f| f.path == "series.csv"));
    assert_eq!(report.manifest.files.len(), 1 + 6 + 1);
}
