use std::path::Path;
use std::process::{Command, Output};

fn hintdistill(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hintdistill"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn hintdistill")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_tasks_zero_writes_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = hintdistill(
        dir.path(),
        &["gen-tasks", "--env", "house", "--count", "0", "--out", "t.jsonl"],
    );
    assert!(o.status.success());
    assert_eq!(std::fs::read(dir.path().join("t.jsonl")).unwrap().len(), 0);
}

#[test]
fn gen_tasks_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.jsonl", "b.jsonl"] {
        let o = hintdistill(
            dir.path(),
            &["gen-tasks", "--env", "shop", "--count", "5", "--out", out],
        );
        assert!(o.status.success());
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|b| **b == b'\n').count(), 5);
}

#[test]
fn pilot_pipeline_exits_zero_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pilot.json"),
        r#"{"env_kind": "house", "scaffold": "react", "out_dir": "run1"}"#,
    )
    .unwrap();
    let o = hintdistill(dir.path(), &["pipeline", "--config", "pilot.json"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    let o = hintdistill(dir.path(), &["pipeline", "--config", "pilot.json", "--out-dir", "run2"]);
    assert!(o.status.success());
    for f in [
        "bank.json",
        "datasets/sft.jsonl",
        "datasets/distill.jsonl",
        "reports/frontier.csv",
        "run_manifest.json",
    ] {
        let a = std::fs::read(dir.path().join("run1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("run2").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"env_kind": "house", "scaffold": "react", "out_dir": "o", "filter": {"max_invalid": -1}}"#,
    )
    .unwrap();
    let o = hintdistill(dir.path(), &["pipeline", "--config", "bad.json"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("filter.max_invalid"));
}

#[test]
fn stagewise_commands_chain_and_verify_catches_a_plant() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let o = hintdistill(dir.path(), args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    run(&["gen-tasks", "--env", "house", "--count", "20", "--out", "tasks.jsonl"]);
    run(&[
        "rollout",
        "--tasks",
        "tasks.jsonl",
        "--mode",
        "base",
        "--out",
        "base.jsonl",
    ]);
    run(&[
        "extract",
        "--failures",
        "base.jsonl",
        "--backend",
        "rulebased",
        "--out",
        "bank.json",
    ]);
    let o = run(&["bank", "--bank", "bank.json"]);
    assert!(stdout(&o).starts_with("env house hints "));
    run(&[
        "teach",
        "--bank",
        "bank.json",
        "--tasks",
        "tasks.jsonl",
        "-k",
        "3",
        "--scorer",
        "lexical",
        "--out",
        "teach.jsonl",
    ]);
    run(&[
        "dataset",
        "--kind",
        "distill",
        "--in",
        "teach.jsonl",
        "--bank",
        "bank.json",
        "--out",
        "distill.jsonl",
    ]);
    run(&["verify", "--dataset", "distill.jsonl", "--bank", "bank.json"]);
    run(&[
        "report",
        "--input",
        "base=base.jsonl",
        "--input",
        "rag=teach.jsonl",
        "--out-dir",
        "reports",
    ]);
    let csv = std::fs::read_to_string(dir.path().join("reports/frontier.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let o = run(&[
        "sweep-k",
        "--bank",
        "bank.json",
        "--tasks",
        "tasks.jsonl",
        "--ks",
        "1,3",
        "--scorer",
        "lexical",
    ]);
    assert_eq!(stdout(&o).lines().count(), 3);

    let bank: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bank.json")).unwrap()).unwrap();
    let hint = bank["partitions"]
        .as_object()
        .unwrap()
        .values()
        .flat_map(|v| v.as_array().unwrap())
        .next()
        .unwrap()["text"]
        .as_str()
        .unwrap()
        .to_string();
    let first = std::fs::read_to_string(dir.path().join("distill.jsonl")).unwrap();
    let mut example: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    let text = format!("{}\n{hint}\n", example["text"].as_str().unwrap());
    example["text"] = text.into();
    std::fs::write(dir.path().join("planted.jsonl"), format!("{example}\n")).unwrap();
    let o = hintdistill(
        dir.path(),
        &["verify", "--dataset", "planted.jsonl", "--bank", "bank.json"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("1 violations"));
}

#[test]
fn rag_without_a_bank_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = hintdistill(
        dir.path(),
        &[
            "rollout", "--env", "shop", "--count", "2", "--mode", "rag", "--out", "x.jsonl",
        ],
    );
    assert!(!o.status.success());
}
