//! Black-box tests of the `dslbench` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dslbench::dataset::corpus_from_jsonl;
use dslbench::repofs::{canonical_serialize, parse_snapshot};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dslbench"))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn linearize_delinearize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree");
    fs::create_dir_all(tree.join("market/server")).unwrap();
    fs::write(tree.join("market/server/a.dsl"), "entity A {\n}\n").unwrap();

    let doc = dir.path().join("doc.json");
    let output = run(&["linearize", path(&tree), "--out", path(&doc)]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));

    // The emitted document is itself a valid linearized structure.
    let text = fs::read_to_string(&doc).unwrap();
    parse_snapshot(&text).unwrap();

    let out_tree = dir.path().join("restored");
    let output = run(&["delinearize", path(&doc), path(&out_tree)]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert_eq!(
        fs::read_to_string(out_tree.join("market/server/a.dsl")).unwrap(),
        "entity A {\n}\n"
    );
}

#[test]
fn delinearize_into_non_empty_dir_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("doc.json");
    fs::write(&doc, "{}").unwrap();
    let dest = dir.path().join("dest");
    fs::create_dir_all(&dest).unwrap();
    fs::write(dest.join("occupied"), "x").unwrap();

    let output = run(&["delinearize", path(&doc), path(&dest)]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("not empty"));
}

#[test]
fn linearize_missing_dir_exits_two() {
    let output = run(&["linearize", "/no/such/dir"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn eval_with_perfect_predictions_prints_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = fixtures().join("corpus.jsonl");
    let corpus = corpus_from_jsonl(&fs::read_to_string(&corpus_path).unwrap()).unwrap();

    let mut predictions = String::new();
    for example in &corpus {
        predictions.push_str(&serde_json::to_string(&serde_json::json!({
            "example_id": example.id,
            "raw_text": canonical_serialize(&example.target),
        })).unwrap());
        predictions.push('\n');
    }
    let predictions_path = dir.path().join("predictions.jsonl");
    fs::write(&predictions_path, predictions).unwrap();

    let output = run(&[
        "eval",
        "--corpus",
        path(&corpus_path),
        "--predictions",
        path(&predictions_path),
        "--setting",
        "perfect",
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let table = stdout(&output);
    assert!(table.contains("perfect"), "{table}");
    assert!(
        table.contains("1.000  1.000  1.000  1.000            1.000"),
        "{table}"
    );
}

#[test]
fn eval_with_missing_prediction_id_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = fixtures().join("corpus.jsonl");
    let corpus = corpus_from_jsonl(&fs::read_to_string(&corpus_path).unwrap()).unwrap();

    let mut predictions = String::new();
    for example in corpus.iter().skip(1) {
        predictions.push_str(&serde_json::to_string(&serde_json::json!({
            "example_id": example.id,
            "raw_text": "{}",
        })).unwrap());
        predictions.push('\n');
    }
    let predictions_path = dir.path().join("predictions.jsonl");
    fs::write(&predictions_path, predictions).unwrap();

    let output = run(&[
        "eval",
        "--corpus",
        path(&corpus_path),
        "--predictions",
        path(&predictions_path),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("g-add-attr::full"), "{}", stderr(&output));
}

#[test]
fn eval_through_replay_matches_measured_mix() {
    let output = run(&[
        "eval",
        "--corpus",
        path(&fixtures().join("corpus.jsonl")),
        "--replay",
        path(&fixtures().join("replay.jsonl")),
        "--mode",
        "zero-shot",
        "--setting",
        "zero-shot",
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let expected_table = fs::read_to_string(fixtures().join("golden/table.txt")).unwrap();
    assert_eq!(stdout(&output), expected_table);
}

#[test]
fn dataset_build_variant_split_stats_and_sft_flow() {
    let dir = tempfile::tempdir().unwrap();
    let before = dir.path().join("before/market/server");
    let after = dir.path().join("after/market/server");
    fs::create_dir_all(&before).unwrap();
    fs::create_dir_all(&after).unwrap();
    fs::write(before.join("p.dsl"), "entity A {\n}\n").unwrap();
    fs::write(after.join("p.dsl"), "entity A {\n    q: AttributeType2\n}\n").unwrap();

    let corpus = dir.path().join("corpus.jsonl");
    for group in ["g1", "g2", "g3"] {
        let output = run(&[
            "dataset",
            "build",
            "--instruction",
            "add attribute q",
            "--context-dir",
            path(&dir.path().join("before")),
            "--target-dir",
            path(&dir.path().join("after")),
            "--operation",
            "add_attribute",
            "--group-id",
            group,
            "--out",
            path(&corpus),
        ]);
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    }

    let output = run(&[
        "dataset",
        "variant",
        "--corpus",
        path(&corpus),
        "--id",
        "g1::full",
        "--keep",
        "market/server",
        "--out",
        path(&corpus),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));

    // Same seed twice gives byte-identical manifests.
    let manifest_a = dir.path().join("manifest_a.json");
    let manifest_b = dir.path().join("manifest_b.json");
    for manifest in [&manifest_a, &manifest_b] {
        let output = run(&[
            "dataset",
            "split",
            "--corpus",
            path(&corpus),
            "--train-out",
            path(&dir.path().join("train.jsonl")),
            "--eval-out",
            path(&dir.path().join("eval.jsonl")),
            "--manifest",
            path(manifest),
            "--seed",
            "7",
        ]);
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    }
    assert_eq!(
        fs::read(&manifest_a).unwrap(),
        fs::read(&manifest_b).unwrap()
    );

    let output = run(&["dataset", "stats", "--corpus", path(&corpus), "--json"]);
    assert_eq!(output.status.code(), Some(0));
    let stats: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert_eq!(stats["example_count"], 4);
    assert_eq!(stats["variant_ratio"], 0.25);

    // SFT export with a healthy template.
    let template = dir.path().join("template.txt");
    fs::write(&template, "I: {instruction}\nC: {context}\nOut:\n").unwrap();
    let sft = dir.path().join("sft.jsonl");
    let output = run(&[
        "dataset",
        "export-sft",
        "--corpus",
        path(&corpus),
        "--template",
        path(&template),
        "--out",
        path(&sft),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert_eq!(fs::read_to_string(&sft).unwrap().lines().count(), 4);

    // A template that fuses the prompt tail into the target fails alignment.
    fs::write(&template, "I: {instruction}\nC: {context}\nOut:").unwrap();
    let output = run(&[
        "dataset",
        "export-sft",
        "--corpus",
        path(&corpus),
        "--template",
        path(&template),
        "--out",
        path(&sft),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("alignment"), "{}", stderr(&output));
}

#[test]
fn dslcheck_pass_and_fail_exit_codes() {
    let registry = fixtures().join("registry.json");
    let output = run(&[
        "dslcheck",
        path(&fixtures().join("markets/create_1.json")),
        "--registry",
        path(&registry),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).trim_end().ends_with("PASS"));

    let output = run(&[
        "dslcheck",
        path(&fixtures().join("markets/add_attribute_2.json")),
        "--registry",
        path(&registry),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let text = stdout(&output);
    assert!(text.contains("UNKNOWN_TYPE"), "{text}");
    assert!(text.trim_end().ends_with("FAIL"));
}

#[test]
fn dslcheck_reads_directories_too() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("market/server");
    fs::create_dir_all(&tree).unwrap();
    fs::write(tree.join("a.dsl"), "entity A {\n    x: AttributeType1\n}\n").unwrap();
    let output = run(&[
        "dslcheck",
        "--dir",
        path(&dir.path().join("market")),
        "--registry",
        path(&fixtures().join("registry.json")),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
}

#[test]
fn run_replay_writes_deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut all: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> = Vec::new();
    for n in 0..2 {
        let records = dir.path().join(format!("records_{n}.jsonl"));
        let table = dir.path().join(format!("table_{n}.txt"));
        let generations = dir.path().join(format!("generations_{n}.jsonl"));
        let output = run(&[
            "run",
            "--corpus",
            path(&fixtures().join("corpus.jsonl")),
            "--mode",
            "one-shot",
            "--replay",
            path(&fixtures().join("replay.jsonl")),
            "--grammar",
            path(&fixtures().join("grammar.txt")),
            "--demo",
            path(&fixtures().join("demo.json")),
            "--records-out",
            path(&records),
            "--table-out",
            path(&table),
            "--generations-out",
            path(&generations),
        ]);
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
        all.push((
            fs::read(&records).unwrap(),
            fs::read(&table).unwrap(),
            fs::read(&generations).unwrap(),
        ));
    }
    assert_eq!(all[0], all[1]);
    let table = String::from_utf8(all[0].1.clone()).unwrap();
    assert!(table.contains("one-shot"), "{table}");
}

#[test]
fn report_merges_record_files_into_labeled_rows() {
    let dir = tempfile::tempdir().unwrap();
    let golden = fixtures().join("golden/records.jsonl");
    let copy = dir.path().join("other.jsonl");
    fs::copy(&golden, &copy).unwrap();

    let output = run(&[
        "report",
        path(&golden),
        path(&copy),
        "--labels",
        "run-a,run-b",
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let table = stdout(&output);
    assert!(table.contains("run-a"));
    assert!(table.contains("run-b"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn config_file_is_applied_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("dslbench.toml");
    fs::write(&config, "alpha = 1.0\n").unwrap();

    // alpha = 1 turns the near-miss line score from (2/3)^5 into 2/3.
    let corpus = fixtures().join("corpus.jsonl");
    let replay = fixtures().join("replay.jsonl");
    let base_args = [
        "eval",
        "--corpus",
        path(&corpus),
        "--replay",
        path(&replay),
        "--mode",
        "zero-shot",
    ];
    let output = bin()
        .args(base_args)
        .args(["--config", path(&config)])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("0.667"), "{}", stdout(&output));

    let output = bin()
        .args(base_args)
        .args(["--config", path(&config), "--alpha", "5.0"])
        .output()
        .unwrap();
    assert!(stdout(&output).contains("0.533"), "{}", stdout(&output));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("dslbench.toml");
    fs::write(&config, "alpa = 1.0\n").unwrap();
    let output = bin()
        .args(["--config", path(&config), "dataset", "stats", "--corpus", "x"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("alpa"), "{}", stderr(&output));
}
