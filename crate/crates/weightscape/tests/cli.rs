use std::path::Path;
use std::process::{Command, Output};

use weightscape::store;
use weightscape_core::landscape::{Fingerprint, MinimumCandidate};
use weightscape_core::{Architecture, LandscapeDatabase};

fn weightscape(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weightscape"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = "seed = 5\n[dataset]\nsamples = 400\n[basin]\nwalkers = 2\nn_steps = 2\n[connect]\nbudget = 1\n";

#[test]
fn checkerboard_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--seed",
        "7",
        "dataset",
        "checkerboard",
        "--samples",
        "10000",
        "--tiles",
        "4",
    ];
    let a = weightscape(dir.path(), &[&args[..], &["--out", "a.csv"]].concat());
    let b = weightscape(dir.path(), &[&args[..], &["--out", "b.csv"]].concat());
    assert!(a.status.success() && b.status.success(), "{}", stderr(&a));
    let (fa, fb) = (
        std::fs::read_to_string(dir.path().join("a.csv")).unwrap(),
        std::fs::read_to_string(dir.path().join("b.csv")).unwrap(),
    );
    assert_eq!(fa, fb);
    assert!(fa.starts_with("x,y,label\n"));
    assert_eq!(fa.lines().count(), 10_001);
}

#[test]
fn zero_tiles_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = weightscape(
        dir.path(),
        &["dataset", "checkerboard", "--tiles", "0", "--out", "x.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn unknown_flags_and_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        weightscape(dir.path(), &["explore", "--bogus"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.toml"), "[basin]\nstepz = 3\n").unwrap();
    assert_eq!(
        weightscape(dir.path(), &["--config", "bad.toml", "explore"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unwritable_output_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plain"), "not a directory").unwrap();
    let o = weightscape(
        dir.path(),
        &[
            "dataset",
            "checkerboard",
            "--samples",
            "10",
            "--out",
            "plain/x.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("plain"));
}

#[test]
fn explore_resume_and_fingerprint_guard() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    let base = ["--config", "run.toml", "--out-dir", "out", "--json"];
    let first = weightscape(dir.path(), &[&base[..], &["explore"]].concat());
    assert!(first.status.success(), "{}", stderr(&first));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert!(summary["minima"].as_u64().unwrap() >= 1);
    assert!(summary["best_auc"].as_f64().unwrap() > 0.5);
    let db_file = dir.path().join("out/landscape.json");
    let before = std::fs::read(&db_file).unwrap();

    let again = weightscape(dir.path(), &[&base[..], &["explore", "--resume"]].concat());
    assert!(again.status.success());
    let s: serde_json::Value = serde_json::from_str(&stdout(&again)).unwrap();
    assert_eq!(
        (s["walkers_run"].as_u64(), s["attempts"].as_u64()),
        (Some(0), Some(0))
    );
    assert_eq!(std::fs::read(&db_file).unwrap(), before);

    let other = weightscape(
        dir.path(),
        &[
            "--config",
            "run.toml",
            "--out-dir",
            "out",
            "--seed",
            "6",
            "explore",
        ],
    );
    assert_eq!(other.status.code(), Some(1));
    assert!(stderr(&other).contains("refusing"));
    assert_eq!(std::fs::read(&db_file).unwrap(), before);
}

fn single_minimum_db(path: &Path) {
    let arch = Architecture::parse("2-2-2").unwrap();
    let fp = Fingerprint(1);
    let mut db = LandscapeDatabase::new(fp, arch);
    let params = vec![
        0.5, -0.25, 0.1, 1.0, 0.75, -0.3, 0.2, 0.4, -0.1, -0.2, -0.4, 0.1,
    ];
    db.insert_minimum(
        fp,
        MinimumCandidate {
            params,
            loss: 0.3,
            grad_norm: 1e-7,
            min_hessian_eigenvalue: Some(0.01),
        },
    )
    .unwrap();
    store::save_db(path, &db).unwrap();
}

#[test]
fn graph_writes_every_requested_format() {
    let dir = tempfile::tempdir().unwrap();
    single_minimum_db(&dir.path().join("one.json"));
    let o = weightscape(
        dir.path(),
        &[
            "graph",
            "--db",
            "one.json",
            "--format",
            "json,dot,svg",
            "--out",
            "g/one",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1_1\t1"));
    for ext in ["json", "dot", "svg"] {
        assert!(dir.path().join(format!("g/one.{ext}")).is_file());
    }
    let svg = std::fs::read_to_string(dir.path().join("g/one.svg")).unwrap();
    assert_eq!(svg.matches("<title>minimum").count(), 1);
}

#[test]
fn graph_of_empty_db_fails() {
    let dir = tempfile::tempdir().unwrap();
    store::save_db(
        &dir.path().join("empty.json"),
        &LandscapeDatabase::new(Fingerprint(1), Architecture::parse("2-2-2").unwrap()),
    )
    .unwrap();
    let o = weightscape(dir.path(), &["graph", "--db", "empty.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_reports_trivial_groups_and_bad_labels() {
    let dir = tempfile::tempdir().unwrap();
    single_minimum_db(&dir.path().join("one.json"));
    let o = weightscape(
        dir.path(),
        &[
            "--out-dir",
            "r",
            "analyze",
            "--db",
            "one.json",
            "--group",
            "3_1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("trivially conserved"));
    assert!(
        dir.path().join("r/conserved_3_1.json").is_file()
            && dir.path().join("r/conserved_3_1.txt").is_file()
    );

    let missing = weightscape(
        dir.path(),
        &["analyze", "--db", "one.json", "--group", "3_9"],
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("available: 1_1 (1)"));
    let malformed = weightscape(
        dir.path(),
        &["analyze", "--db", "one.json", "--group", "three"],
    );
    assert_eq!(malformed.status.code(), Some(2));

    let none = weightscape(
        dir.path(),
        &[
            "--json",
            "--out-dir",
            "r",
            "analyze",
            "--db",
            "one.json",
            "--group",
            "1_1",
            "--n",
            "0",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&none)).unwrap();
    assert!(
        v["conserved"].as_array().unwrap().is_empty(),
        "sigma < 0 never holds"
    );
}

#[test]
fn ablate_is_reproducible_and_handles_zero_trials() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    let base = ["--config", "run.toml", "--out-dir", "out"];
    assert!(weightscape(dir.path(), &[&base[..], &["explore"]].concat())
        .status
        .success());
    let ablate = |trials: &str| {
        weightscape(
            dir.path(),
            &[
                &base[..],
                &[
                    "--json", "ablate", "--group", "1_1", "--n", "0.1", "--trials", trials,
                ],
            ]
            .concat(),
        )
    };
    let (a, b) = (ablate("4"), ablate("4"));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let zero: serde_json::Value = serde_json::from_str(&stdout(&ablate("0"))).unwrap();
    assert!(zero["trials"].as_array().unwrap().is_empty());
    assert!(zero["baseline_auc"].as_f64().is_some());
    let all = weightscape(
        dir.path(),
        &[&base[..], &["ablate", "--group", "1_1", "--n", "10"]].concat(),
    );
    assert_eq!(all.status.code(), Some(2));
    assert!(stderr(&all).contains("smaller --n"));
}

#[test]
fn empty_conserved_set_suggests_larger_n() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    let base = ["--config", "run.toml", "--out-dir", "out"];
    assert!(weightscape(dir.path(), &[&base[..], &["explore"]].concat())
        .status
        .success());
    let db = store::load_db(&dir.path().join("out/landscape.json")).unwrap();
    if db.minima().len() < 2 {
        return;
    }
    let g = db.build_disconnectivity(25).unwrap();
    let multi = g
        .nodes
        .iter()
        .find(|n| n.members.len() >= 2)
        .map(|n| n.label());
    if let Some(label) = multi {
        let o = weightscape(
            dir.path(),
            &[&base[..], &["ablate", "--group", &label, "--n", "0"]].concat(),
        );
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains("larger --n"));
    }
}
