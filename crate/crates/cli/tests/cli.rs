use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn samples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples")
}

fn vid2coach(args: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vid2coach"));
    for var in ["MODEL_BACKEND", "MODEL_FIXTURES", "MODEL_MOCK_STRICT", "MODEL_SCRIPT"] {
        c.env_remove(var);
    }
    c.args(args).output().unwrap()
}

fn sample(rel: &str) -> String {
    samples().join(rel).to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn missing_inputs_exit_2() {
    let o = vid2coach(&[
        "replay",
        "--plan",
        "/nonexistent/plan.json",
        "--fixture",
        &sample("replay/state_machine.json"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/plan.json"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[frames]\nfloor = 0.5\n").unwrap();
    let o = vid2coach(&[
        "--config",
        cfg.to_str().unwrap(),
        "eval-monitor",
        "--labels",
        &sample("eval/toy_labels.csv"),
        "--verdicts",
        &sample("eval/toy_verdicts.json"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_monitor_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("monitor.json");
    let o = vid2coach(&[
        "eval-monitor",
        "--labels",
        &sample("eval/toy_labels.csv"),
        "--verdicts",
        &sample("eval/toy_verdicts.json"),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let md = stdout(&o);
    assert!(md.contains("| punctual | 0.50 (1/2) | 1.00 (2/2) |"), "{md}");
    assert!(md.contains("| iterative | 0.67 (2/3) | 0.00 (0/1) |"), "{md}");
    assert!(md.contains("Overall: 0.75 (9/12 frames)"), "{md}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["frames"], 12);
}

#[test]
fn eval_desc_without_labels_says_unavailable() {
    let o = vid2coach(&["eval-desc", "--items", &sample("eval/descriptions.jsonl"), "--exact"]);
    assert!(o.status.success());
    let md = stdout(&o);
    assert!(md.contains("| flour | 3 | 1 | 1 | 1 | 1 | n/a |"), "{md}");
    assert!(md.contains("Hallucination rate: unavailable"), "{md}");
    let o = vid2coach(&[
        "eval-desc",
        "--items",
        &sample("eval/descriptions.jsonl"),
        "--labels",
        &sample("eval/description_labels.json"),
        "--exact",
    ]);
    assert!(stdout(&o).contains("Hallucination rate: 20.00%"));
}

#[test]
fn misaligned_verdicts_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let verdicts = dir.path().join("v.json");
    std::fs::write(&verdicts, r#"{"f01": "complete"}"#).unwrap();
    let o = vid2coach(&[
        "eval-monitor",
        "--labels",
        &sample("eval/toy_labels.csv"),
        "--verdicts",
        verdicts.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kb_ingest_appends_to_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("kb.jsonl");
    let args = [
        "kb-ingest",
        "--manifest",
        &sample("kb/crafts/manifest.json"),
        "--store",
        store.to_str().unwrap(),
    ];
    assert!(vid2coach(&args).status.success());
    let first = std::fs::read_to_string(&store).unwrap().lines().count();
    assert!(first > 0);
    assert!(vid2coach(&args).status.success());
    let second = std::fs::read_to_string(&store).unwrap();
    assert_eq!(second.lines().count(), 2 * first);
    let ids: std::collections::BTreeSet<String> = second
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["chunk_id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(ids.len(), 2 * first);
}

#[test]
fn compile_writes_plan_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let report = dir.path().join("report.json");
    let o = vid2coach(&[
        "compile",
        "--transcript",
        &sample("cookies/transcript.json"),
        "--video",
        &sample("cookies/video"),
        "--metadata",
        &sample("cookies/metadata.json"),
        "--out",
        plan.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(plan).unwrap()).unwrap();
    assert_eq!(plan["version"], "coachplan/1");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["sentences"], 13);
}
