use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tmer::synth::{self, SynthConfig};

fn tmer(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmer"))
        .arg("--work-dir")
        .arg(work)
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn small_data(dir: &Path) -> (PathBuf, PathBuf) {
    let data = synth::generate(&SynthConfig {
        users: 40,
        items: 120,
        brands: 6,
        categories: 5,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    synth::write(&data, dir).unwrap()
}

const FAST: [&str; 12] = [
    "--dim", "8", "--heads", "2", "--epochs", "2", "--set", "eval-negatives=30", "--set", "token-epochs=3", "--set",
    "walk-epochs=1",
];

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_artifact_names_the_stage_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = tmer(dir.path(), &["train"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("run `prepare` first"), "{}", stderr(&o));

    let (inter, meta) = small_data(&dir.path().join("data"));
    let o = tmer(
        dir.path(),
        &["prepare", "--interactions", inter.to_str().unwrap(), "--metadata", meta.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tmer(dir.path(), &["sample-paths"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("run `init-embed` first"), "{}", stderr(&o));
}

#[test]
fn prepare_prints_node_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (inter, meta) = small_data(&dir.path().join("data"));
    let o = tmer(
        dir.path(),
        &["prepare", "--interactions", inter.to_str().unwrap(), "--metadata", meta.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["users"], 40);
    assert_eq!(summary["brands"], 6);
    // 2 bridge + 4 train purchases per user stay in the graph
    assert_eq!(summary["graph_purchases"], 40 * 6);
    assert_eq!(summary["test_items"], 40 * 6);
    assert!(dir.path().join("hin.txt").exists());
}

#[test]
fn config_precedence_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "epochs = 9\nheads = 2\n").unwrap();
    let o = tmer(dir.path(), &["--config", conf.to_str().unwrap(), "--epochs", "3", "--seed", "7", "train"]);
    let err = stderr(&o);
    assert!(err.contains("epochs = 3 (flag)"), "{err}");
    assert!(err.contains("heads = 2 (config file)"), "{err}");
    assert!(err.contains("k-paths = 5 (default)"), "{err}");
    assert!(err.contains("seed 7"), "{err}");
}

#[test]
fn bad_flags_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["--ablation", "none", "train"][..],
        &["--dim", "10", "--heads", "4", "train"],
        &["--set", "no-such-key=1", "train"],
        &["--set", "epochs", "train"],
    ] {
        let o = tmer(dir.path(), args);
        assert!(!o.status.success(), "{args:?}");
    }
}

#[test]
fn staged_run_with_ablation_labels_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (inter, meta) = small_data(&dir.path().join("data"));
    let w = dir.path().join("w");
    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = FAST.to_vec();
        args.extend(extra);
        let o = tmer(&w, &args);
        assert!(o.status.success(), "{extra:?}: {}", stderr(&o));
        o
    };
    run(&["prepare", "--interactions", inter.to_str().unwrap(), "--metadata", meta.to_str().unwrap()]);
    run(&["init-embed"]);
    run(&["sample-paths"]);
    run(&["encode-paths"]);
    run(&["--ablation", "RII", "train"]);
    let o = run(&["evaluate"]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["ablation"], "RII");
    assert_eq!(report["negatives"], 30);
    let hr = report["model"]["all"]["10"]["HR"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&hr));
    assert_eq!(report["model"]["instances"], 40 * 6);
    assert_eq!(report["model"]["first_instances"], 40);
    assert!(report["popularity"]["all"]["20"]["NDCG"].is_number());
    assert!(w.join("ranks.tsv").exists());

    let o = run(&["explain"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10 * 5);
    assert!(lines.iter().all(|l| l.split('\t').count() == 4));
    assert_eq!(fs::read_to_string(w.join("explanations.txt")).unwrap(), text);
}

#[test]
fn synth_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = tmer(dir.path(), &["--seed", "4", "synth", "--out", out.to_str().unwrap(), "--users", "10", "--items", "40", "--brands", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("interactions.tsv")).unwrap().lines().count(), 10 * 12);
    assert_eq!(fs::read_to_string(out.join("metadata.tsv")).unwrap().lines().count(), 40);
}
