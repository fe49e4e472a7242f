use std::path::Path;
use std::process::{Command, Output};

fn regalign(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regalign"))
        .current_dir(dir)
        .args(args)
        .env_remove("REGALIGN_IOU_THRESHOLD")
        .env_remove("REGALIGN_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const R1: &str = "<ref>liver</ref><box>[0, 0, 10, 10]</box>";
const R2: &str = "<ref>spleen</ref><box>[50, 50, 80, 90]</box>";

fn record(id: &str, task: &str, pred: &str, reference: &str) -> String {
    serde_json::json!({"id": id, "task": task, "prediction": pred, "reference": reference})
        .to_string()
        + "\n"
}

#[test]
fn perfect_corpus_scores_full_marks() {
    let dir = tempfile::tempdir().unwrap();
    let both = format!("{R1} {R2}");
    let corpus = record("a", "t2r", R1, R1) + &record("b", "t2r", &both, &both);
    std::fs::write(dir.path().join("c.jsonl"), corpus).unwrap();
    let out = regalign(
        dir.path(),
        &["eval", "--input", "c.jsonl", "--output", "m.json"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    let overall = table.lines().find(|l| l.starts_with("overall")).unwrap();
    let cols: Vec<&str> = overall.split_whitespace().collect();
    assert_eq!(&cols[2..11], ["100.00"; 9]);
    assert_eq!(cols[11], "1.0000");

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(report["region"]["overall"]["alignment_f1"], 1.0);
    assert_eq!(
        report["region"]["by_kind"]["multi_object_single_region"]["samples"],
        1
    );
    assert!(!dir.path().join("m.json.errors.jsonl").exists());
}

#[test]
fn macro_mean_over_records() {
    let dir = tempfile::tempdir().unwrap();
    let miss = "<ref>liver</ref><box>[500, 500, 600, 600]</box>";
    let corpus = record("a", "t2r", R1, R1) + &record("b", "t2r", miss, R1);
    std::fs::write(dir.path().join("c.jsonl"), corpus).unwrap();
    let out = regalign(
        dir.path(),
        &["eval", "--input", "c.jsonl", "--output", "m.json"],
    );
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(report["region"]["overall"]["region_f1"], 0.5);
    let overall = stdout(&out)
        .lines()
        .find(|l| l.starts_with("overall"))
        .unwrap()
        .to_string();
    assert_eq!(overall.split_whitespace().nth(7), Some("50.00"));
}

#[test]
fn malformed_reference_is_reported_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let corpus =
        record("good", "t2r", R1, R1) + &record("bad", "t2r", R1, "<ref>x</ref><box>[1, 2]</box>");
    std::fs::write(dir.path().join("c.jsonl"), corpus).unwrap();
    let out = regalign(
        dir.path(),
        &["eval", "--input", "c.jsonl", "--output", "m.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("line 2 (bad): malformed_reference"),
        "{}",
        stderr(&out)
    );
    let errors = std::fs::read_to_string(dir.path().join("m.json.errors.jsonl")).unwrap();
    assert_eq!(errors.lines().count(), 1);
    assert!(errors.contains("\"kind\":\"malformed_reference\""));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(
        (report["scored"].as_u64(), report["errors"].as_u64()),
        (Some(1), Some(1))
    );
    assert_eq!(report["region"]["overall"]["alignment_f1"], 1.0);
}

#[test]
fn threshold_from_flag_env_and_file() {
    let dir = tempfile::tempdir().unwrap();
    // IoU of this pair is 1/7.
    let pred = "<ref>liver</ref><box>[5, 5, 15, 15]</box>";
    std::fs::write(dir.path().join("c.jsonl"), record("a", "t2r", pred, R1)).unwrap();
    std::fs::write(dir.path().join("run.toml"), "iou-threshold = 0.1\n").unwrap();
    let region_f1 = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_regalign"));
        cmd.current_dir(dir.path())
            .args(["eval", "--input", "c.jsonl", "--output", "m.json"])
            .args(extra)
            .env_remove("REGALIGN_CONFIG")
            .env_remove("REGALIGN_IOU_THRESHOLD");
        if let Some(v) = env {
            cmd.env("REGALIGN_IOU_THRESHOLD", v);
        }
        assert!(cmd.output().unwrap().status.success());
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
        report["region"]["overall"]["region_f1"].as_f64().unwrap()
    };
    assert_eq!(region_f1(&[], None), 0.0);
    assert_eq!(region_f1(&["--config", "run.toml"], None), 1.0);
    assert_eq!(region_f1(&["--config", "run.toml"], Some("0.5")), 0.0);
    assert_eq!(region_f1(&["--iou-threshold", "0.1"], Some("0.5")), 1.0);
    let bad = regalign(
        dir.path(),
        &["eval", "--input", "c.jsonl", "--iou-threshold", "0"],
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("iou-threshold"));
}

#[test]
fn refuses_to_overwrite_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.jsonl"), record("a", "t2r", R1, R1)).unwrap();
    let out = regalign(
        dir.path(),
        &["eval", "--input", "c.jsonl", "--output", "c.jsonl"],
    );
    assert!(!out.status.success());
    assert!(std::fs::read_to_string(dir.path().join("c.jsonl"))
        .unwrap()
        .contains("\"id\":\"a\""));
}

#[test]
fn parse_dumps_pairs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("in.txt"),
        format!("{R1} liver. {R2} spleen.\nplain\n"),
    )
    .unwrap();
    let out = regalign(dir.path(), &["parse", "--input", "in.txt"]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["pairs"].as_array().unwrap().len(), 2);
    assert_eq!(
        lines[0]["pairs"][1]["regions"][0],
        serde_json::json!([50, 50, 80, 90])
    );
    assert_eq!(lines[1]["pairs"].as_array().unwrap().len(), 0);

    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    let out = regalign(dir.path(), &["parse", "--input", "empty.txt"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn strict_parse_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("in.txt"),
        format!("{R1}\n<ref>a</ref><box>[1, 2, 3]</box>\n"),
    )
    .unwrap();
    let out = regalign(
        dir.path(),
        &["parse", "--input", "in.txt", "--mode", "strict"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2:"), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 1);

    let lenient = regalign(dir.path(), &["parse", "--input", "in.txt"]);
    assert!(lenient.status.success());
    assert!(stdout(&lenient)
        .lines()
        .nth(1)
        .unwrap()
        .contains("expected 4 coordinates"));
}

#[test]
fn forge_reports_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.txt"), "0000\n0110\n0110\n0000\n").unwrap();
    std::fs::write(
        dir.path().join("man.jsonl"),
        "{\"id\":\"a\",\"image\":\"a.png\",\"label\":\"nodule\",\"mask\":\"m.txt\"}\n\
         {\"id\":\"b\",\"image\":\"b.png\",\"label\":\"nodule\",\"mask\":\"missing.txt\"}\n",
    )
    .unwrap();
    let out = regalign(
        dir.path(),
        &["forge", "--input", "man.jsonl", "--output", "out.jsonl"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("line 2 (b): forge_failed"),
        "{}",
        stderr(&out)
    );
    assert!(stderr(&out).contains("r2t=1 t2r=1"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("out.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn forge_with_custom_templates_and_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    let tdir = dir.path().join("tpl");
    std::fs::create_dir(&tdir).unwrap();
    std::fs::write(
        tdir.join("only.jsonl"),
        "{\"id\":\"q1\",\"direction\":\"region_to_text\",\"question_pattern\":\"What is {box}?\",\"answer_pattern\":\"{object}\"}\n\
         {\"id\":\"q2\",\"direction\":\"t2r\",\"question_pattern\":\"Find {object}.\",\"answer_pattern\":\"<ref>{object}</ref> {box}\"}\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("lex.tsv"), "liver\tliver\thepatic\n").unwrap();
    std::fs::write(dir.path().join("m.txt"), "11\n11\n").unwrap();
    std::fs::write(
        dir.path().join("man.jsonl"),
        "{\"id\":\"a\",\"image\":\"a.png\",\"label\":\"cyst\",\"mask\":\"m.txt\"}\n\
         {\"id\":\"r\",\"image\":\"r.png\",\"report\":\"Hepatic cyst. Normal spleen.\",\"regions\":{\"liver\":[[0,0,500,500]]}}\n",
    )
    .unwrap();
    let out = regalign(
        dir.path(),
        &[
            "forge",
            "--input",
            "man.jsonl",
            "--output",
            "o.jsonl",
            "--templates",
            "tpl",
            "--lexicon",
            "lex.tsv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("o.jsonl")).unwrap();
    let recs: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs[0]["question"], "What is <box>[0, 0, 999, 999]</box>?");
    assert_eq!(
        recs[1]["reference"],
        "<ref>cyst</ref> <box>[0, 0, 999, 999]</box>"
    );
    assert_eq!(
        recs[2]["reference"],
        "<ref>liver</ref><box>[0, 0, 500, 500]</box> Hepatic cyst. Normal spleen."
    );
}

#[test]
fn cot_needs_an_endpoint_or_mock() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("q.jsonl"),
        "{\"id\":\"q\",\"question\":\"Any finding?\",\"image\":\"x.png\"}\n",
    )
    .unwrap();
    let out = regalign(
        dir.path(),
        &["cot", "--input", "q.jsonl", "--output", "t.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--endpoint"));

    let out = regalign(
        dir.path(),
        &[
            "cot", "--input", "q.jsonl", "--output", "t.jsonl", "--mock", "true",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let trace: serde_json::Value = serde_json::from_str(
        std::fs::read_to_string(dir.path().join("t.jsonl"))
            .unwrap()
            .trim(),
    )
    .unwrap();
    assert_eq!(trace["status"], "ok");
    assert_eq!(trace["attempts"], 2);
    assert_eq!(trace["timing_ms"], 0);

    // traces are corpus records: they can be scored directly
    let out = regalign(dir.path(), &["eval", "--input", "t.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("task:vqa"));
}

#[test]
fn cot_failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("q.jsonl"),
        "{\"id\":\"q\",\"question\":\"Any finding?\",\"image\":\"x.png\"}\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("s.jsonl"), "{\"fail\":\"timeout\"}\n").unwrap();
    let out = regalign(
        dir.path(),
        &[
            "cot",
            "--input",
            "q.jsonl",
            "--output",
            "t.jsonl",
            "--mock",
            "true",
            "--mock-script",
            "s.jsonl",
            "--retries",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("timed out after 2 attempt(s)"),
        "{}",
        stderr(&out)
    );
    let trace = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    assert!(trace.contains("\"status\":\"failed\""));
}
