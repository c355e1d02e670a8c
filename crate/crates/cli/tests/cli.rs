//! Runs the built binary end to end.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

fn apiplan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apiplan"))
        .args(args)
        .current_dir(cwd)
        .env_remove("APIPLAN_LLM_ENDPOINT")
        .env_remove("APIPLAN_LLM_MODEL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let o = apiplan(args, cwd);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(snapshot: &Path) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_apiplan"))
        .args(["serve", "--port", "0", "--snapshot"])
        .arg(snapshot)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().rsplit(' ').next().unwrap().to_string();
    assert!(url.starts_with("http://"), "{line}");
    Server(child, url)
}

#[test]
fn score_command_prints_weighted_score() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(ok(&["eval", "score", "--acc", "98.61", "83.08", "97.22"], d.path()).trim(), "92.74");
    assert_eq!(ok(&["eval", "score", "--acc", "20.14", "13.89", "17.46"], d.path()).trim(), "16.72");
    assert_eq!(ok(&["eval", "score", "--acc", "100", "100", "100"], d.path()).trim(), "100.00");
    assert_eq!(ok(&["eval", "score", "--acc", "10", "40", "--weights", "1", "1"], d.path()).trim(), "25.00");
    let o = apiplan(&["eval", "score", "--acc", "50", "--weights", "0"], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let o = apiplan(&["solutions", "enumerate", "--hops", "0"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hop limit must be positive"));
    assert_eq!(apiplan(&["frobnicate"], d.path()).status.code(), Some(2));
    assert_eq!(apiplan(&["eval", "score"], d.path()).status.code(), Some(2));
    assert_eq!(apiplan(&["--help"], d.path()).status.code(), Some(0));
    let o = apiplan(&["serve", "--snapshot", "missing.json"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not exist"));
}

#[test]
fn graph_and_solutions_write_outputs_and_manifests() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&["graph", "build", "--out", "g"], d.path());
    assert!(out.contains("entries: searchPerson, searchPublication"));
    for f in ["graph.json", "graph.dot", "manifest.json"] {
        assert!(d.path().join("g").join(f).exists(), "{f}");
    }
    let out = ok(&["solutions", "enumerate", "--hops", "3", "--out", "s"], d.path());
    assert!(out.contains("10 concise solutions"));
    assert!(out.contains("searchPublication -> getPublication -> getPersonBasicInfo"));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["library"], 10);
    assert!(m["volatile"]["timestamp"].is_string());
}

#[test]
fn config_file_supplies_defaults() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.toml"), "seed = 9\nhops = 1\nout_dir = \"artifacts\"\n").unwrap();
    let out = ok(&["--config", "run.toml", "solutions", "enumerate"], d.path());
    assert!(out.contains("2 concise solutions"), "{out}");
    ok(&["--config", "run.toml", "corpus", "generate", "--scholars", "20", "--pubs", "40"], d.path());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("artifacts/corpus/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["seed"], 9);
    std::fs::write(d.path().join("bad.toml"), "sede = 9\n").unwrap();
    assert_eq!(apiplan(&["--config", "bad.toml", "graph", "build"], d.path()).status.code(), Some(1));
}

fn strip_volatile(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("volatile");
    v
}

#[test]
fn full_pipeline_over_http_is_idempotent() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(&["corpus", "generate", "--seed", "5", "--scholars", "200", "--pubs", "600", "--out", "c"], p);
    let server = serve(&p.join("c/corpus.json"));
    for out in ["d1", "d2"] {
        let text = ok(&["forge", "dataset", "--snapshot", "c/corpus.json", "--service", &server.1, "--out", out], p);
        assert!(text.contains("39 combinations, 3510 records (2808 train / 702 test)"), "{text}");
    }
    for f in ["train.jsonl", "test.jsonl", "sft.jsonl", "gold_stub.json", "templates.json"] {
        assert_eq!(std::fs::read(p.join("d1").join(f)).unwrap(), std::fs::read(p.join("d2").join(f)).unwrap(), "{f}");
    }
    assert_eq!(strip_volatile(&p.join("d1/manifest.json")), strip_volatile(&p.join("d2/manifest.json")));

    let run = |out: &str, par: &str| {
        ok(
            &[
                "agent",
                "run",
                "--dataset",
                "d1/test.jsonl",
                "--train",
                "d1/train.jsonl",
                "--service",
                &server.1,
                "--backend",
                "stub",
                "--stub-fixtures",
                "d1/gold_stub.json",
                "--parallelism",
                par,
                "--out",
                out,
            ],
            p,
        )
    };
    assert!(run("r1", "1").contains("702 queries, 0 execution errors, 3.0 LLM calls per query"));
    run("r2", "8");
    assert_eq!(
        std::fs::read(p.join("r1/transcripts.jsonl")).unwrap(),
        std::fs::read(p.join("r2/transcripts.jsonl")).unwrap()
    );
    assert!(p.join("r1/timings.json").exists());

    let table =
        ok(&["eval", "grade", "--transcripts", "r1/transcripts.jsonl", "--gold", "d1/test.jsonl", "--out", "e"], p);
    assert!(table.contains("score 100.00"), "{table}");
    let csv = ok(
        &["eval", "grade", "--transcripts", "r1/transcripts.jsonl", "--gold", "d1/test.jsonl", "--format", "csv"],
        p,
    );
    assert!(csv.starts_with("hop,n,EM,DS,WS,WC,EE,ACC"));
    let doc = ok(
        &["eval", "grade", "--transcripts", "r1/transcripts.jsonl", "--gold", "d1/test.jsonl", "--format", "doc"],
        p,
    );
    let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
    assert_eq!(v["score"], 100.0);
    assert!(p.join("e/report.csv").exists());

    // One API call is not enough for any plan that needs two.
    ok(
        &[
            "agent",
            "run",
            "--dataset",
            "d1/test.jsonl",
            "--train",
            "d1/train.jsonl",
            "--snapshot",
            "c/corpus.json",
            "--backend",
            "stub",
            "--stub-fixtures",
            "d1/gold_stub.json",
            "--limits.max_calls",
            "1",
            "--out",
            "r3",
        ],
        p,
    );
    let table = ok(&["eval", "grade", "--transcripts", "r3/transcripts.jsonl", "--gold", "d1/test.jsonl"], p);
    let hop2 = table.lines().find(|l| l.starts_with("2 ")).unwrap();
    let cols: Vec<&str> = hop2.split_whitespace().collect();
    assert_eq!((cols[5], cols[6]), ("100.00", "0.00"), "{table}");
}

#[test]
fn external_transcripts_are_graded() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(&["corpus", "generate", "--seed", "5", "--scholars", "100", "--pubs", "300", "--out", "c"], p);
    ok(&["forge", "dataset", "--snapshot", "c/corpus.json", "--instantiations", "2", "--out", "d"], p);
    let gold = std::fs::read_to_string(p.join("d/test.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(gold.lines().next().unwrap()).unwrap();
    let calls: Vec<serde_json::Value> =
        first["solution"].as_array().unwrap().iter().map(|a| serde_json::json!({ "api": a })).collect();
    let line = serde_json::json!({ "id": first["id"], "calls": calls, "answer_value": first["ground_truth"] });
    std::fs::write(p.join("ext.jsonl"), format!("{line}\n")).unwrap();
    let out = ok(&["eval", "grade", "--external", "--transcripts", "ext.jsonl", "--gold", "d/test.jsonl"], p);
    assert!(out.contains("score 100.00"), "{out}");
    assert!(out.contains("note: baseline solutions are the distinct successful API calls"));
}
