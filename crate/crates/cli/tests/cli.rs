use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use fhirlit_testkit::cohort::{twenty_patient_corpus, write_corpus};
use fhirlit_testkit::fixture_path;
use serde_json::{json, Value};

fn fhirlit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhirlit")).args(args).output().unwrap()
}

fn stdout(output: &Output) -> String {
    assert!(
        output.status.success(),
        "exit {:?}\nstderr: {}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn catalog_prints_one_identifier_per_line() {
    let bundle = fixture_path("gonzalo160_duenas839");
    let out = stdout(&fhirlit(&["catalog", path(&bundle), "--reference-date", "2023-12-01"]));
    assert!(out.lines().any(|l| l.contains("MedicationRequest | Simvastatin 20 MG Oral Tablet | 2020-03-01")));
    let meds = out.lines().filter(|l| l.contains("MedicationRequest | ")).count();
    assert_eq!(meds, 9);
}

#[test]
fn catalog_rejects_a_broken_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{").unwrap();
    let output = fhirlit(&["catalog", path(&bad)]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("malformed"));
}

#[test]
fn summarize_prints_summary_and_interpretation_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let bundle = fixture_path("gonzalo160_duenas839");
    let catalog = stdout(&fhirlit(&["catalog", path(&bundle)]));
    assert!(!catalog.is_empty());
    let raw: Value = serde_json::from_slice(&std::fs::read(&bundle).unwrap()).unwrap();
    let id = raw["entry"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| &e["resource"])
        .find(|r| r["resourceType"] == "MedicationRequest" && r["status"] == "active")
        .unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string();

    let args = ["summarize", path(&bundle), "--id", &id, "--locale", "de", "--backend", "mock", "--cache-dir", path(&cache)];
    let first = stdout(&fhirlit(&args));
    let blocks: Vec<&str> = first.trim_end().split("\n\n").collect();
    assert_eq!(blocks.len(), 3, "{first}");
    assert!(blocks[0].starts_with("MedicationRequest | "));
    assert!(blocks[1].starts_with("Resource: MedicationRequest | "));
    let cached = std::fs::read_to_string(cache.join("summaries.ndjson")).unwrap();
    assert_eq!(cached.lines().count(), 1);
    assert!(cached.contains("\"locale\":\"de\""));

    assert_eq!(stdout(&fhirlit(&args)), first);
    assert_eq!(std::fs::read_to_string(cache.join("summaries.ndjson")).unwrap(), cached);

    let missing = fhirlit(&["summarize", path(&bundle), "--id", "nope", "--cache-dir", path(&cache)]);
    assert!(!missing.status.success());
}

fn write_plan(dir: &Path) -> std::path::PathBuf {
    let plan = json!({
        "patients": [fixture_path("milton509_ortiz186"), fixture_path("edythe31_mcdermott739")],
        "questions": [
            {"id": "Q1", "text": "What medications am I taking?"},
            {"id": "Q2", "text": "Do I have any allergies?"}
        ],
        "repetitions": 2,
        "workers": 2,
        "backend": {
            "kind": "mock",
            "chat": [
                {"call_tool": {"tool": "get_resources", "arguments": {"names": "{identifiers:MedicationRequest}"}}},
                {"emit_text": "You take {identifiers:MedicationRequest}."},
                {"emit_text": "No allergies are recorded."}
            ]
        }
    });
    let path = dir.join("plan.json");
    std::fs::write(&path, plan.to_string()).unwrap();
    path
}

#[test]
fn eval_run_score_aggregate_and_variability() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path());
    let out = dir.path().join("runs");
    let summary = stdout(&fhirlit(&["eval", "run", "--plan", path(&plan), "--out", path(&out)]));
    assert!(summary.contains("4 runs, 8 questions answered, 0 failed"), "{summary}");
    for name in ["milton509_ortiz186_1", "milton509_ortiz186_2", "edythe31_mcdermott739_1", "edythe31_mcdermott739_2"] {
        assert!(out.join(format!("{name}.ndjson")).exists(), "{name}");
    }
    let questions = dir.path().join("questions.json");
    std::fs::write(
        &questions,
        json!([
            {"id": "Q1", "text": "What medications am I taking?"},
            {"id": "Q2", "text": "Do I have any allergies?"}
        ])
        .to_string(),
    )
    .unwrap();

    for (file, ratings) in [("milton509_ortiz186_1", "9\n5\n4\n3\n4\n4\n4\n"), ("edythe31_mcdermott739_1", "4\n5\n4\n2\n4\n4\n")] {
        let transcript = out.join(format!("{file}.ndjson"));
        let mut child = Command::new(env!("CARGO_BIN_EXE_fhirlit"))
            .args(["eval", "score", path(&transcript), "--reviewer", "r1", "--questions", path(&questions)])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(ratings.as_bytes()).unwrap();
        let output = child.wait_with_output().unwrap();
        let text = stdout(&output);
        assert!(text.contains("You take"), "{text}");
        assert!(out.join(format!("{file}.scores.json")).exists());
    }
    let re_prompted = std::fs::read_to_string(out.join("milton509_ortiz186_1.scores.json")).unwrap();
    let sheet: Value = serde_json::from_str(&re_prompted).unwrap();
    assert_eq!(sheet["reviewer"], "r1");
    assert_eq!(sheet["scores"][0]["accuracy"], 5);

    let stats_path = dir.path().join("stats.json");
    let csv = stdout(&fhirlit(&["eval", "aggregate", path(&out), "--out", path(&stats_path)]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("question_id,dimension,mean,std_dev,n"));
    let q1_accuracy = csv.lines().find(|l| l.starts_with("Q1,accuracy,")).unwrap();
    assert!(q1_accuracy.starts_with("Q1,accuracy,4.5,0.5,2"), "{q1_accuracy}");
    let stats: Value = serde_json::from_str(&std::fs::read_to_string(&stats_path).unwrap()).unwrap();
    assert_eq!(stats["std_dev_kind"], "population");

    let sample = stdout(&fhirlit(&["eval", "aggregate", path(&out), "--sample"]));
    let q1_sample = sample.lines().find(|l| l.starts_with("Q1,accuracy,")).unwrap();
    let std: f64 = q1_sample.split(',').nth(3).unwrap().parse().unwrap();
    assert!((std - 0.5f64.sqrt()).abs() < 1e-12, "{q1_sample}");

    let truth = dir.path().join("truth.json");
    std::fs::write(&truth, json!(["amLODIPine", "Jolivette"]).to_string()).unwrap();
    let report: Value = serde_json::from_str(&stdout(&fhirlit(&[
        "eval",
        "variability",
        path(&out),
        "--question",
        "Q1",
        "--truth",
        path(&truth),
        "--questions",
        path(&questions),
    ])))
    .unwrap();
    assert_eq!(report["question_id"], "Q1");
    assert_eq!(report["pooled_omission_rate"], 1.0);
}

#[test]
fn cohort_select_reports_json_markdown_and_infeasibility() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    write_corpus(&corpus, &twenty_patient_corpus());
    let buckets = dir.path().join("buckets.json");
    let list: Vec<Value> = (1..=6).map(|i| json!({"name": format!("bucket {i}"), "codes": [format!("cv{i}")]})).collect();
    std::fs::write(&buckets, Value::from(list).to_string()).unwrap();

    let args = ["cohort", "select", path(&corpus), "--buckets", path(&buckets), "--reference-date", "2023-12-01"];
    let report: Value = serde_json::from_str(&stdout(&fhirlit(&args))).unwrap();
    assert_eq!(report["selected"].as_array().unwrap().len(), 6);
    assert_eq!(report["score"], 60);
    assert_eq!(stdout(&fhirlit(&args)), stdout(&fhirlit(&args)));

    let mut md_args = args.to_vec();
    md_args.push("--markdown");
    let md = stdout(&fhirlit(&md_args));
    assert_eq!(md.lines().count(), 8);

    let mut strict = args.to_vec();
    strict.extend(["--min-with-allergies", "6"]);
    let output = fhirlit(&strict);
    assert_eq!(output.status.code(), Some(2));
    let why: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(why["constraint"], "allergy_quota");
}

fn http(port: u16, request: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(10))).ok()?;
    stream.write_all(request.as_bytes()).ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    Some(response)
}

#[test]
fn serve_answers_over_http_and_keeps_patients_across_restarts() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let start = || {
        Command::new(env!("CARGO_BIN_EXE_fhirlit"))
            .args(["serve", "--port", &port.to_string(), "--data-dir", path(dir.path()), "--backend", "mock"])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap()
    };
    let wait_ready = || {
        let deadline = Instant::now() + Duration::from_secs(20);
        loop {
            if let Some(r) = http(port, "GET /health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n") {
                if r.starts_with("HTTP/1.1 200") {
                    return;
                }
            }
            assert!(Instant::now() < deadline, "server did not come up");
            std::thread::sleep(Duration::from_millis(50));
        }
    };

    let mut server = start();
    wait_ready();
    let bundle = std::fs::read_to_string(fixture_path("milton509_ortiz186")).unwrap();
    let upload = http(
        port,
        &format!(
            "POST /patients HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{bundle}",
            bundle.len()
        ),
    )
    .unwrap();
    assert!(upload.starts_with("HTTP/1.1 201"), "{upload}");
    server.kill().unwrap();
    server.wait().unwrap();

    let mut server = start();
    wait_ready();
    let listed = http(port, "GET /patients HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    server.kill().unwrap();
    server.wait().unwrap();
    assert!(listed.contains("\"catalog_size\""), "{listed}");
    assert!(listed.contains("Milton"));
}
