use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kgpath::cli::CONFIG_KEYS;

fn kgpath(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgpath"))
        .current_dir(dir)
        .env_remove("KGPATH_SNAPSHOT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["--set", "embeddings.epochs=5", "--set", "agent.epochs=2"];

fn trained(dir: &Path) {
    let o = kgpath(dir, &["synth", "--patients", "120", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut args = vec!["train"];
    args.extend_from_slice(SMALL);
    let o = kgpath(dir, &args);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn help_documents_every_key_with_its_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = kgpath(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = stdout(&o);
    for (key, _) in CONFIG_KEYS {
        assert!(help.contains(key), "{key} missing from help");
    }
    let line = |key: &str| help.lines().find(|l| l.trim_start().starts_with(&format!("{key} "))).unwrap().to_string();
    assert!(line("agent.horizon").contains("= 2 "));
    assert!(line("agent.entropy_weight").contains("= 0.13"));
    assert!(line("inference.min_edge_prob").contains("= 0.1 "));
    assert!(help.contains("KGPATH_SNAPSHOT_DIR"));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kgpath(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(kgpath(dir.path(), &["--config", "nope.toml", "validate"]).status.code(), Some(1));
    let o = kgpath(dir.path(), &["--set", "agent.horizn=3", "validate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("horizn"));
    assert_eq!(kgpath(dir.path(), &["--set", "agent.gamma=2", "validate"]).status.code(), Some(1));
    assert_eq!(kgpath(dir.path(), &["sweep", "--axis", "depth"]).status.code(), Some(1));
    assert_eq!(kgpath(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn validate_reports_counts_and_unknown_entities() {
    let dir = tempfile::tempdir().unwrap();
    let o = kgpath(dir.path(), &["synth", "--patients", "50", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = kgpath(dir.path(), &["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("21 entities (13 disease, 3 category, 5 risk factor)"));
    assert!(out.contains("patients\t50"));

    let text = fs::read_to_string(dir.path().join("cohort.tsv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    let mut cols: Vec<String> = lines[row].split('\t').map(String::from).collect();
    cols[2] = "hypertension;martian_flu".into();
    lines[row] = cols.join("\t");
    fs::write(dir.path().join("bad.tsv"), lines.join("\n") + "\n").unwrap();
    let o = kgpath(dir.path(), &["--cohort", "bad.tsv", "validate"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("martian_flu"), "{err}");
    assert!(err.contains(&format!("line {}", row + 1)), "{err}");
}

#[test]
fn train_then_predict_and_explain() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    for f in ["embeddings.json", "agent.json", "training_log.jsonl"] {
        assert!(dir.path().join("snapshots").join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(dir.path().join("snapshots/training_log.jsonl")).unwrap();
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["stage"].is_string());
    }

    let o = kgpath(dir.path(), &["predict", "--conditions", "hypertension;obesity", "--top", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("rank\tdisease\tprobability\n"));
    assert!(out.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).count() <= 3);

    let o = kgpath(dir.path(), &["predict", "--conditions", "hypertension", "--explain"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let json = &out[out.find('{').unwrap()..];
    let doc: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(doc["format"], "kgpath-explanation");
    assert!(!doc["paths"].as_array().unwrap().is_empty());

    let o = kgpath(
        dir.path(),
        &["predict", "--conditions", "hypertension", "--explain", "--format", "dot", "--min-edge-prob", "0"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("digraph"));
    assert!(stdout(&o).contains("patient -> "));

    let o = kgpath(dir.path(), &["predict", "--patient", "P001"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = kgpath(dir.path(), &["predict", "--conditions", "martian_flu"]);
    assert_eq!(o.status.code(), Some(2));
    let o = kgpath(dir.path(), &["predict", "--conditions", "hypertension", "--features", "1,2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn agent_stage_needs_embeddings_first() {
    let dir = tempfile::tempdir().unwrap();
    kgpath(dir.path(), &["synth", "--patients", "60"]);
    let o = kgpath(dir.path(), &["train", "--stage", "agent"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--stage embeddings"));
    let mut args = vec!["train", "--stage", "embeddings"];
    args.extend_from_slice(SMALL);
    assert!(kgpath(dir.path(), &args).status.success());
    let mut args = vec!["train", "--stage", "agent"];
    args.extend_from_slice(SMALL);
    let o = kgpath(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("snapshots/agent.json").exists());
}

#[test]
fn snapshot_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    kgpath(dir.path(), &["synth", "--patients", "60"]);
    let mut args = vec!["train"];
    args.extend_from_slice(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_kgpath"))
        .current_dir(dir.path())
        .env("KGPATH_SNAPSHOT_DIR", "elsewhere")
        .args(&args)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("elsewhere/agent.json").exists());
    assert!(!dir.path().join("snapshots").exists());
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    kgpath(dir.path(), &["synth", "--patients", "60"]);
    let o = kgpath(
        dir.path(),
        &["train", "--set", "embeddings.epochs=2", "--set", "agent.epochs=3", "--set", "agent.lr=1e300"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("agent"));
}

#[test]
fn eval_and_sweep_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    kgpath(dir.path(), &["synth", "--patients", "90", "--seed", "4"]);
    let mut args = vec!["eval", "--folds", "3"];
    args.extend_from_slice(SMALL);
    let o = kgpath(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = fs::read_to_string(dir.path().join("reports/eval.tsv")).unwrap();
    assert_eq!(tsv.lines().filter(|l| l.starts_with("default\t")).count(), 5);

    let mut args = vec!["sweep", "--axis", "entropy", "--values", "0,0.1", "--folds", "2"];
    args.extend_from_slice(SMALL);
    let o = kgpath(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains('±')).count(), 2);
    assert!(dir.path().join("reports/sweep-entropy.tsv").exists());
}
