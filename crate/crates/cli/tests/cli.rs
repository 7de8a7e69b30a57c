use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wudiff::ingest::write_canonical;
use wudiff::synthetic::{generate, SyntheticSpec};
use wudiff::FactorModel;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wudiff"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = SyntheticSpec {
        users: 50,
        items: 40,
        density: 0.2,
        ..SyntheticSpec::default()
    };
    let d = generate(&spec).unwrap().dataset;
    write_canonical(&d, &dir.join("data"), &["synthetic".into()]).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

const FAST: &[&str] = &["--folds", "4", "--repeats", "1", "--factors", "4", "--gamma1", "0.3", "--gamma2", "0.3", "--max-epochs", "30", "--seed", "5"];

#[test]
fn prints_version() {
    let out = run(&["--version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["eval", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--ratings"));
}

#[test]
fn config_problems_are_listed_together() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "# comment\nbogus = 1\nfolds = 1\nalpha = -2\n").unwrap();
    let out = run(&["eval", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["`bogus`: unknown key", "folds must be at least 2", "alpha must be", "--ratings"] {
        assert!(err.contains(needle), "{needle:?} missing from {err}");
    }
}

#[test]
fn empty_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let out = run(&["ingest", "--ratings", s(&empty), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn malformed_line_reports_location() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.tsv");
    fs::write(&bad, "1\t1\t4\n2\t1\tfour\n").unwrap();
    let out = run(&["ingest", "--ratings", s(&bad), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.tsv:2"));
}

#[test]
fn reingesting_a_dump_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, t) = dataset(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let first = run(&["ingest", "--ratings", s(&r), "--tags", s(&t), "--out", s(&a)]);
    assert!(first.status.success());
    let second = run(&[
        "ingest",
        "--ratings",
        s(&a.join("ratings.tsv")),
        "--tags",
        s(&a.join("tags.tsv")),
        "--out",
        s(&b),
    ]);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
    for f in ["ratings.tsv", "tags.tsv", "stats.tsv"] {
        let x = fs::read_to_string(a.join(f)).unwrap();
        let y = fs::read_to_string(b.join(f)).unwrap();
        assert_eq!(body(&x), body(&y), "{f}");
    }
    assert!(String::from_utf8_lossy(&first.stdout).contains("users\t50"));
}

#[test]
fn eval_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, t) = dataset(tmp.path());
    let go = |dir: &Path| {
        let mut args = vec!["eval", "--ratings", s(&r), "--tags", s(&t), "--alpha", "0.01", "--out", s(dir)];
        args.extend_from_slice(FAST);
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let a = tmp.path().join("a");
    let read = || ["report.csv", "report.json"].map(|f| fs::read(a.join(f)).unwrap());
    go(&a);
    let first = read();
    go(&a);
    assert_eq!(first, read());
    let csv = fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(csv.contains("# alpha = 0.01"));
    assert!(csv.contains("metric,mean,stddev,r0f0,r0f1,r0f2,r0f3"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], "5");
    assert_eq!(json["report"]["runs"].as_array().unwrap().len(), 4);
}

#[test]
fn rmf_and_zero_alpha_wudiff_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, t) = dataset(tmp.path());
    let go = |model: &str, dir: &Path| {
        let mut args = vec!["eval", "--ratings", s(&r), "--tags", s(&t), "--model", model, "--alpha", "0", "--out", s(dir)];
        args.extend_from_slice(FAST);
        assert!(run(&args).status.success());
        fs::read_to_string(dir.join("report.csv")).unwrap()
    };
    let a = go("rmf", &tmp.path().join("rmf"));
    let b = go("wudiff_rmf", &tmp.path().join("wu"));
    assert_eq!(body(&a), body(&b));
    assert_ne!(a, b, "headers record the model choice");
}

#[test]
fn train_writes_model_history_and_neighbors() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, t) = dataset(tmp.path());
    let out_dir = tmp.path().join("m");
    let mut args = vec!["train", "--ratings", s(&r), "--tags", s(&t), "--alpha", "0.01", "--dump-neighbors", "--out", s(&out_dir)];
    args.extend_from_slice(FAST);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("model.txt")).unwrap();
    assert!(text.contains("# command = train"));
    let m = FactorModel::read(text.as_bytes()).unwrap();
    assert_eq!((m.user_count(), m.item_count(), m.factors()), (50, 40, 4));
    let history = fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert!(history.contains("epoch,train_loss,train_rmse,validation_rmse"));
    let nb = fs::read_to_string(out_dir.join("neighbors.tsv")).unwrap();
    assert!(body(&nb).lines().count() > 0);
}

#[test]
fn sweep_and_groups_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, t) = dataset(tmp.path());
    let sw = tmp.path().join("sw");
    let mut args = vec![
        "sweep", "--ratings", s(&r), "--tags", s(&t), "--sweep-param", "alpha", "--sweep-values", "0,0.01", "--out", s(&sw),
    ];
    args.extend_from_slice(FAST);
    assert!(run(&args).status.success());
    let csv = fs::read_to_string(sw.join("sweep.csv")).unwrap();
    assert_eq!(body(&csv).lines().count(), 3);

    let gr = tmp.path().join("gr");
    let mut args = vec!["groups", "--ratings", s(&r), "--tags", s(&t), "--alpha", "0.01", "--groups", "10:20,*:*", "--out", s(&gr)];
    args.extend_from_slice(FAST);
    assert!(run(&args).status.success());
    let csv = fs::read_to_string(gr.join("groups.csv")).unwrap();
    assert!(csv.contains("group,test_users,test_ratings,rmse_rmf,rmse_wudiff_rmf"));

    let missing = run(&["sweep", "--ratings", s(&r), "--out", s(&sw)]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--sweep-param"));
}

#[test]
fn divergence_has_its_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, _) = dataset(tmp.path());
    let out = run(&[
        "train", "--ratings", s(&r), "--model", "rmf", "--gamma1", "1e6", "--gamma2", "1e6", "--lambda-u", "1", "--lambda-i", "1",
        "--out", s(&tmp.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
