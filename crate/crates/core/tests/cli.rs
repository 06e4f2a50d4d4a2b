//! The `gnum` binary, driven as a subprocess.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use gnum::graph::{load_dataset, save_dataset, DatasetParts, GraphDataset, LoadOptions};

fn gnum(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gnum"));
    cmd.arg("--quiet").args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = gnum(args, &[]);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Toy dataset in `dir/gen`.
fn toy_dataset(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("gen");
    let mut args = vec!["gen", "--preset", "toy", "--out-dir", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out.join("dataset.gnum.gz")
}

#[test]
fn gen_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let da = fs::read(toy_dataset(a.path(), &["--seed", "3"])).unwrap();
    let db = fs::read(toy_dataset(b.path(), &["--seed", "3"])).unwrap();
    assert_eq!(da, db);
    let dc = fs::read(toy_dataset(b.path(), &["--seed", "4"])).unwrap();
    assert_ne!(da, dc);
}

#[test]
fn config_without_preset_must_be_complete() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.toml");
    ok(&["gen", "--preset", "toy", "--out-dir", p(dir.path())]);
    fs::copy(dir.path().join("synth.toml"), &full).unwrap();
    ok(&["gen", "--config", p(&full), "--out-dir", p(&dir.path().join("again"))]);

    let text = fs::read_to_string(&full).unwrap();
    let partial: String = text.lines().filter(|l| !l.starts_with("kappa1")).map(|l| format!("{l}\n")).collect();
    let cfg = dir.path().join("partial.toml");
    fs::write(&cfg, partial).unwrap();
    let out = gnum(&["gen", "--config", p(&cfg), "--out-dir", p(&dir.path().join("x"))], &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("kappa1"), "{}", stderr(&out));

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, "preset = \"toy\"\nkapa2 = 1.0\n").unwrap();
    let out = gnum(&["gen", "--config", p(&typo), "--out-dir", p(&dir.path().join("y"))], &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("kapa2"));
}

#[test]
fn environment_overrides_sit_below_set_flags() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let out = gnum(&["gen", "--preset", "toy", "--out-dir", p(&a)], &[("GNUM_N_NODES", "37")]);
    assert_eq!(code(&out), 0);
    let ds = load_dataset(a.join("dataset.gnum.gz"), LoadOptions::default()).unwrap();
    assert_eq!(ds.n_nodes(), 37);
    let b = dir.path().join("b");
    let out = gnum(&["gen", "--preset", "toy", "--set", "n_nodes=41", "--out-dir", p(&b)], &[("GNUM_N_NODES", "37")]);
    assert_eq!(code(&out), 0);
    assert!(fs::read_to_string(b.join("synth.toml")).unwrap().contains("n_nodes = 41"));
}

#[test]
fn partial_label_needs_binary_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = toy_dataset(dir.path(), &[]);
    let out =
        gnum(&["train", "--preset", "toy", "--dataset", p(&ds), "--estimator", "pl", "--out-dir", p(dir.path())], &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("binary=true"), "{}", stderr(&out));
    assert!(!dir.path().join("model.ckpt").exists());

    let bin = toy_dataset(&dir.path().join("b"), &["--set", "binary=true", "--set", "monotone=true"]);
    ok(&["train", "--preset", "toy", "--dataset", p(&bin), "--estimator", "pl", "--out-dir", p(&dir.path().join("t"))]);
}

#[test]
fn toy_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let ds = toy_dataset(dir.path(), &[]);
    let t = dir.path().join("train");
    let start = Instant::now();
    ok(&["train", "--preset", "toy", "--dataset", p(&ds), "--out-dir", p(&t)]);
    assert!(start.elapsed().as_secs_f64() < 60.0);
    for f in ["model.ckpt", "history.csv", "train.toml", "manifest.json"] {
        assert!(t.join(f).exists(), "{f}");
    }
    let history = fs::read_to_string(t.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 21);

    let e = dir.path().join("eval");
    ok(&["eval", "--model", p(&t.join("model.ckpt")), "--dataset", p(&ds), "--out-dir", p(&e)]);
    let report = fs::read_to_string(e.join("report.txt")).unwrap();
    for key in ["sqrt_pehe ", "ate_error ", "qini ", "uplift_at_10 ", "neighbor_mse "] {
        assert!(report.lines().any(|l| l.starts_with(key)), "{key} missing from\n{report}");
    }
}

#[test]
fn divergence_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ds = toy_dataset(dir.path(), &[]);
    let t = dir.path().join("t");
    let out = gnum(
        &["train", "--preset", "toy", "--dataset", p(&ds), "--set", "learning_rate=1e300", "--out-dir", p(&t)],
        &[],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(!t.join("model.ckpt").exists());
}

#[test]
fn eval_without_counterfactuals_omits_ground_truth_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let ds_path = toy_dataset(dir.path(), &[]);
    let full = load_dataset(&ds_path, LoadOptions::default()).unwrap();
    let parts = full.into_parts();
    let bare = GraphDataset::new(DatasetParts { outcome_t: None, outcome_c: None, ..parts }).unwrap();
    let bare_path = dir.path().join("bare.gnum.gz");
    save_dataset(&bare_path, &bare).unwrap();

    let t = dir.path().join("t");
    ok(&["train", "--preset", "toy", "--dataset", p(&bare_path), "--out-dir", p(&t)]);
    let e = dir.path().join("e");
    ok(&["eval", "--model", p(&t.join("model.ckpt")), "--dataset", p(&bare_path), "--out-dir", p(&e)]);
    let report = fs::read_to_string(e.join("report.txt")).unwrap();
    assert!(!report.contains("sqrt_pehe") && !report.contains("ate_error"), "{report}");
    assert!(report.lines().any(|l| l.starts_with("qini ")));
}

#[test]
fn qini_table_has_one_row_per_bin_edge() {
    let dir = tempfile::tempdir().unwrap();
    let ds = toy_dataset(dir.path(), &["--set", "n_nodes=2000"]);
    let t = dir.path().join("t");
    ok(&["train", "--preset", "toy", "--dataset", p(&ds), "--set", "epochs=2", "--out-dir", p(&t)]);
    let e = dir.path().join("e");
    ok(&["eval", "--model", p(&t.join("model.ckpt")), "--dataset", p(&ds), "--bins", "20", "--out-dir", p(&e)]);
    let qini = fs::read_to_string(e.join("qini.csv")).unwrap();
    assert_eq!(qini.lines().count(), 1 + 21, "{qini}");
}

fn sweep_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("sweep.toml");
    fs::write(&path, format!("preset = \"toy\"\nsynth_preset = \"toy\"\nseeds = [0]\n{body}\n[train]\nepochs = 2\n"))
        .unwrap();
    path
}

fn data_rows(csv: &Path) -> Vec<String> {
    fs::read_to_string(csv).unwrap().lines().skip(1).map(str::to_string).collect()
}

#[test]
fn sweeps_emit_one_row_per_job() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(
        dir.path(),
        "kind = \"scarcity\"\nestimators = [\"ct\"]\nfractions = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]",
    );
    let s = dir.path().join("s");
    ok(&["sweep", "--config", p(&cfg), "--out-dir", p(&s)]);
    assert_eq!(data_rows(&s.join("sweep.csv")).len(), 9);

    let cfg = sweep_config(
        dir.path(),
        "kind = \"kappa\"\nestimators = [\"ct\", \"two-model\", \"ctm\"]\nkappas = [0.5, 2.0]",
    );
    let k = dir.path().join("k");
    ok(&["sweep", "--config", p(&cfg), "--out-dir", p(&k)]);
    let rows = data_rows(&k.join("sweep.csv"));
    assert_eq!(rows.len(), 6);
    let toml = fs::read_to_string(k.join("sweep.toml")).unwrap();
    assert!(toml.contains("[train-two-model-none]"), "{toml}");
}

#[test]
fn sweep_resumes_finished_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(dir.path(), "kind = \"scarcity\"\nestimators = [\"ct\"]\nfractions = [0.5, 1.0]");
    let s = dir.path().join("s");
    ok(&["sweep", "--config", p(&cfg), "--out-dir", p(&s)]);
    let csv = s.join("sweep.csv");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2);
    // Replace the first row's score with a marker; a resumed run must keep it.
    let (key, _) = rows[0].rsplit_once(',').unwrap();
    let marked = format!("{key},42");
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    fs::write(&csv, format!("{header}\n{marked}\n")).unwrap();
    ok(&["sweep", "--config", p(&cfg), "--out-dir", p(&s)]);
    let again = data_rows(&csv);
    assert_eq!(again, vec![marked, rows[1].clone()]);
}

#[test]
fn report_tabulates_and_verifies_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ds = toy_dataset(dir.path(), &[]);
    let t = dir.path().join("t");
    ok(&["train", "--preset", "toy", "--dataset", p(&ds), "--set", "epochs=3", "--out-dir", p(&t)]);
    let model = t.join("model.ckpt");
    let (e1, e2) = (dir.path().join("e1"), dir.path().join("e2"));
    ok(&["eval", "--model", p(&model), "--dataset", p(&ds), "--split", "test", "--out-dir", p(&e1)]);
    ok(&["eval", "--model", p(&model), "--dataset", p(&ds), "--split", "all", "--out-dir", p(&e2)]);

    let r = dir.path().join("r");
    ok(&["report", p(&e1), p(&e2), "--out-dir", p(&r)]);
    let table = fs::read_to_string(r.join("comparison.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert_eq!(header, "metric,e1,e2");
    assert!(table.lines().skip(1).all(|l| l.split(',').count() == 3));
    assert!(r.join("qini_curves.csv").exists() && r.join("manifest.json").exists());

    let out = gnum(&["report", p(&e1), p(dir.path()), "--out-dir", p(&dir.path().join("r2"))], &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    fs::write(e2.join("qini.csv"), "k,qini_gain\n0,0\n").unwrap();
    let out = gnum(&["report", p(&e1), p(&e2), "--out-dir", p(&dir.path().join("r3"))], &[]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}
