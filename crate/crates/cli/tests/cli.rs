//! End-to-end tests of the `augapm` binary: exit codes, diagnostics, and
//! artifact contents, all on simulated leagues.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use augapm::models::Fit;
use augapm::serialize::fit_from_json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_augapm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulate a small league and ingest it, returning the archive path.
fn simulated_archive(dir: &Path) -> PathBuf {
    let sim = dir.join("sim");
    let ing = dir.join("ing");
    assert_ok(&run(&[
        "simulate",
        "--n-teams",
        "6",
        "--seed",
        "11",
        "-o",
        path_str(&sim),
    ]));
    assert_ok(&run(&[
        "ingest",
        "--events",
        path_str(&sim.join("events.csv")),
        "--ratings",
        path_str(&sim.join("ratings.csv")),
        "--season",
        "sim",
        "-o",
        path_str(&ing),
    ]));
    ing.join("dataset.json")
}

#[test]
fn simulated_league_ingests_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = simulated_archive(tmp.path());
    let report = std::fs::read_to_string(tmp.path().join("ing/link_report.txt")).unwrap();
    assert!(report.contains("violations: none"), "{report}");
    assert!(report.contains("unmatched players: none"), "{report}");
    assert!(archive.exists());
}

#[test]
fn corrupted_event_row_fails_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert_ok(&run(&[
        "simulate",
        "--n-teams",
        "4",
        "--seed",
        "2",
        "-o",
        path_str(&sim),
    ]));
    let events = sim.join("events.csv");
    let mut lines: Vec<String> = std::fs::read_to_string(&events)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    // Header is line 1; corrupt the minute field of the first data row.
    let mut fields: Vec<&str> = lines[1].split(',').collect();
    fields[5] = "zero";
    lines[1] = fields.join(",");
    std::fs::write(&events, lines.join("\n")).unwrap();

    let out = run(&[
        "ingest",
        "--events",
        path_str(&events),
        "-o",
        path_str(&tmp.path().join("ing")),
    ]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "diagnostic: {stderr}");
}

#[test]
fn unrated_player_is_listed_but_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert_ok(&run(&[
        "simulate",
        "--n-teams",
        "4",
        "--seed",
        "5",
        "-o",
        path_str(&sim),
    ]));
    // Drop one player's rating row.
    let ratings = sim.join("ratings.csv");
    let text = std::fs::read_to_string(&ratings).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("t00p00,")).collect();
    std::fs::write(&ratings, kept.join("\n")).unwrap();

    let out = run(&[
        "ingest",
        "--events",
        path_str(&sim.join("events.csv")),
        "--ratings",
        path_str(&ratings),
        "-o",
        path_str(&tmp.path().join("ing")),
    ]);
    assert_eq!(code(&out), 0);
    let report = std::fs::read_to_string(tmp.path().join("ing/link_report.txt")).unwrap();
    assert!(report.contains("t00p00"), "{report}");
}

#[test]
fn augmented_without_ratings_warns_and_matches_apm() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert_ok(&run(&[
        "simulate",
        "--n-teams",
        "4",
        "--seed",
        "8",
        "-o",
        path_str(&sim),
    ]));
    // Ratings-free archive: header-only ratings file.
    let ratings = sim.join("ratings.csv");
    std::fs::write(&ratings, "player_id,player_name,overall\n").unwrap();
    let ing = tmp.path().join("ing");
    assert_ok(&run(&[
        "ingest",
        "--events",
        path_str(&sim.join("events.csv")),
        "--ratings",
        path_str(&ratings),
        "-o",
        path_str(&ing),
    ]));
    let archive = ing.join("dataset.json");

    let aug_dir = tmp.path().join("aug");
    let out = run(&[
        "fit",
        "--dataset",
        path_str(&archive),
        "--model",
        "augmented",
        "-o",
        path_str(&aug_dir),
    ]);
    assert_ok(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("centered ratings are zero"), "{stderr}");

    let apm_dir = tmp.path().join("apm");
    assert_ok(&run(&[
        "fit",
        "--dataset",
        path_str(&archive),
        "--model",
        "apm",
        "-o",
        path_str(&apm_dir),
    ]));

    let aug = fit_from_json(&std::fs::read_to_string(aug_dir.join("fit.json")).unwrap()).unwrap();
    let apm = fit_from_json(&std::fs::read_to_string(apm_dir.join("fit.json")).unwrap()).unwrap();
    let (Fit::Posterior(aug), Fit::Posterior(apm)) = (&aug, &apm) else {
        panic!("expected posterior fits");
    };
    let beta = aug.mean.rows(0, apm.mean.len()).clone_owned();
    assert!((beta - &apm.mean).amax() < 1e-10);
}

#[test]
fn fit_is_deterministic_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = simulated_archive(tmp.path());
    for dir in ["f1", "f2"] {
        assert_ok(&run(&[
            "fit",
            "--dataset",
            path_str(&archive),
            "--model",
            "apm",
            "--weighted",
            "-o",
            path_str(&tmp.path().join(dir)),
        ]));
    }
    let a = std::fs::read(tmp.path().join("f1/fit.json")).unwrap();
    let b = std::fs::read(tmp.path().join("f2/fit.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rank_rejects_oversized_top_k() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = simulated_archive(tmp.path());
    let fit_dir = tmp.path().join("fit");
    assert_ok(&run(&[
        "fit",
        "--dataset",
        path_str(&archive),
        "--model",
        "apm",
        "-o",
        path_str(&fit_dir),
    ]));
    let out = run(&[
        "rank",
        "--fit",
        path_str(&fit_dir.join("fit.json")),
        "--dataset",
        path_str(&archive),
        "--draws",
        "100",
        "--top-k",
        "100000",
        "-o",
        path_str(&tmp.path().join("rank")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("top-k"));
}

#[test]
fn rank_rejects_non_posterior_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = simulated_archive(tmp.path());
    let fit_dir = tmp.path().join("fit");
    assert_ok(&run(&[
        "fit",
        "--dataset",
        path_str(&archive),
        "--model",
        "zero",
        "-o",
        path_str(&fit_dir),
    ]));
    let out = run(&[
        "rank",
        "--fit",
        path_str(&fit_dir.join("fit.json")),
        "--dataset",
        path_str(&archive),
        "-o",
        path_str(&tmp.path().join("rank")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn cv_emits_a_row_per_model_and_fold() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = simulated_archive(tmp.path());
    let cv = tmp.path().join("cv");
    assert_ok(&run(&[
        "cv",
        "--dataset",
        path_str(&archive),
        "--k",
        "10",
        "--seed",
        "1",
        "-o",
        path_str(&cv),
    ]));
    let rows = std::fs::read_to_string(cv.join("cv.csv")).unwrap();
    // Header plus 5 models x 10 folds.
    assert_eq!(rows.lines().count(), 1 + 50, "{rows}");
    let summary = std::fs::read_to_string(cv.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 5, "{summary}");
}

#[test]
fn cv_rejects_more_folds_than_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = simulated_archive(tmp.path());
    let out = run(&[
        "cv",
        "--dataset",
        path_str(&archive),
        "--k",
        "1000",
        "-o",
        path_str(&tmp.path().join("cv")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn backtest_emits_monthly_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = simulated_archive(tmp.path());
    let bt = tmp.path().join("bt");
    assert_ok(&run(&[
        "backtest",
        "--dataset",
        path_str(&archive),
        "--models",
        "zero,apm",
        "--horizon",
        "2",
        "-o",
        path_str(&bt),
    ]));
    let rows = std::fs::read_to_string(bt.join("backtest.csv")).unwrap();
    assert!(rows.lines().count() > 2, "{rows}");
    let monthly = std::fs::read_to_string(bt.join("backtest_monthly.csv")).unwrap();
    assert!(monthly.lines().count() > 1, "{monthly}");
}

#[test]
fn simulate_rejects_one_team() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--n-teams",
        "1",
        "-o",
        path_str(&tmp.path().join("sim")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn design_dump_matches_dataset_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = simulated_archive(tmp.path());
    let dd = tmp.path().join("dd");
    assert_ok(&run(&[
        "design-dump",
        "--dataset",
        path_str(&archive),
        "-o",
        path_str(&dd),
    ]));
    let rows = std::fs::read_to_string(dd.join("rows.csv")).unwrap();
    let cols = std::fs::read_to_string(dd.join("columns.csv")).unwrap();
    // 6 teams, 16-player squads, plus the home-advantage column.
    assert_eq!(cols.lines().count(), 1 + 96 + 1, "{cols}");
    assert!(rows.lines().count() > 1);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.toml");
    std::fs::write(&cfg, "n_teams = 4\nseed = 3\n").unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_ok(&run(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "-o",
        path_str(&a),
    ]));
    assert_ok(&run(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "--seed",
        "4",
        "-o",
        path_str(&b),
    ]));
    let ra = std::fs::read_to_string(a.join("run_config.toml")).unwrap();
    let rb = std::fs::read_to_string(b.join("run_config.toml")).unwrap();
    assert!(ra.contains("seed = 3"), "{ra}");
    assert!(rb.contains("seed = 4"), "{rb}");
    assert_ne!(
        std::fs::read(a.join("events.csv")).unwrap(),
        std::fs::read(b.join("events.csv")).unwrap()
    );
}
