use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 8] = [
    "ingest",
    "synth",
    "build-graph",
    "train",
    "evaluate",
    "ablate",
    "export-instructions",
    "gradcheck",
];

fn manager(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manager"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn help_on_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let top = manager(dir.path(), &["--help"]);
    assert_eq!(code(&top), 0);
    for sub in SUBCOMMANDS {
        assert!(stdout(&top).contains(sub), "{sub} missing from top-level help");
        let o = manager(dir.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub} --help");
        assert!(stdout(&o).contains("--config"), "{sub} help lacks --config");
    }
    let o = manager(dir.path(), &["train", "--help"]);
    for flag in ["--epochs", "--lr-gcn", "--lr-task", "--seed", "--d", "--l", "--variant", "--data", "--kg"] {
        assert!(stdout(&o).contains(flag), "train help lacks {flag}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&manager(dir.path(), &["train", "--no-such-flag"])), 1);
    assert_eq!(code(&manager(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&manager(dir.path(), &["train", "--lr-gcn", "-1"])), 1);
    assert_eq!(code(&manager(dir.path(), &["synth", "--n", "0"])), 1);
    assert_eq!(code(&manager(dir.path(), &["train", "--task", "sideways"])), 1);
}

#[test]
fn missing_inputs_exit_two_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = manager(dir.path(), &["ingest", "--data", "absent.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.jsonl"));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = manager(dir.path(), &["gradcheck", "--seed", "0", "--d", "8", "--l", "2"]);
    assert_eq!(code(&o), 0);
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("max relative error:"))
        .map(str::to_string)
        .expect("summary line");
    let err: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(err < 1e-4, "{line}");
}

#[test]
fn synth_then_train_overfits() {
    let dir = tempfile::tempdir().unwrap();
    let o = manager(dir.path(), &["synth", "--n", "8", "--plant-knowledge", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let o = manager(dir.path(), &["train", "--task", "movement", "--epochs", "500"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("train F1: 1.0000"), "{}", stdout(&o));
    assert!(dir.path().join("model.bin").is_file());
}

#[test]
fn identical_invocations_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |tag: &str| {
        let out = format!("run{tag}");
        assert_eq!(code(&manager(d, &["synth", "--n", "6", "--seed", "4", "--out-dir", &out])), 0);
        let data = format!("{out}/data.jsonl");
        let kg = format!("{out}/kg.tsv");
        let model = format!("{out}/model.bin");
        let common = ["--data", data.as_str(), "--kg", kg.as_str()];
        let mut train = vec!["train", "--epochs", "3", "--seed", "9", "--out", model.as_str()];
        train.extend(common);
        assert_eq!(code(&manager(d, &train)), 0);
        let records = format!("{out}/metrics.jsonl");
        let mut eval = vec!["evaluate", "--model", model.as_str(), "--records", records.as_str(), "--jobs", "3"];
        eval.extend(common);
        assert_eq!(code(&manager(d, &eval)), 0);
        let inst = format!("{out}/inst.jsonl");
        let mut export = vec!["export-instructions", "--task", "volatility", "--model", model.as_str(), "--out", inst.as_str()];
        export.extend(common);
        assert_eq!(code(&manager(d, &export)), 0);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["data.jsonl", "kg.tsv", "features.mgrf", "model.bin", "metrics.jsonl", "inst.jsonl"] {
        let x = fs::read(d.join(&a).join(f)).unwrap();
        let y = fs::read(d.join(&b).join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
}

#[test]
fn config_file_mirrors_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("synth.cfg"), "# synthetic run\nn = 5\nseed = 2\nplant-knowledge = true\n").unwrap();
    let o = manager(dir.path(), &["--config", "synth.cfg", "synth", "--out-dir", "a"]);
    assert_eq!(code(&o), 0);
    let o = manager(dir.path(), &["synth", "--n", "5", "--seed", "2", "--plant-knowledge", "--out-dir", "b"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(dir.path().join("a/data.jsonl")).unwrap(),
        fs::read(dir.path().join("b/data.jsonl")).unwrap()
    );
    let o = manager(dir.path(), &["synth", "--config", "synth.cfg", "--n", "3", "--out-dir", "c"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("c/data.jsonl")).unwrap().lines().count(), 3);

    fs::write(dir.path().join("bad.cfg"), "frobnicate = 1\n").unwrap();
    assert_eq!(code(&manager(dir.path(), &["--config", "bad.cfg", "synth"])), 1);
}

#[test]
fn ablate_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&manager(d, &["synth", "--n", "10", "--plant-knowledge"])), 0);
    let o = manager(d, &["ablate", "--epochs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let records = fs::read_to_string(d.join("ablation.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 7 * 24);
    for v in ["full", "without-text", "without-knowledge", "without-graph", "full-graph"] {
        assert!(stdout(&o).contains(v), "table lacks {v}");
    }

    let ids: Vec<String> = fs::read_to_string(d.join("data.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json_id(l))
        .collect();
    fs::write(d.join("train.txt"), ids[..6].join("\n")).unwrap();
    fs::write(d.join("test.txt"), ids[5..].join("\n")).unwrap();
    assert_eq!(code(&manager(d, &["train", "--epochs", "1", "--split", "train.txt"])), 0);
    // overlapping splits are rejected before evaluation
    let o = manager(d, &["evaluate", "--split", "test.txt", "--train-split", "train.txt"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(&ids[5]));
}

fn serde_json_id(line: &str) -> String {
    let start = line.find("\"id\":\"").unwrap() + 6;
    let end = start + line[start..].find('"').unwrap();
    line[start..end].to_string()
}
