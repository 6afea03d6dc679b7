use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn debiasqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_debiasqa"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_fixture() {
    let out = debiasqa(&["validate", "--dataset", s(&fixture("minibench.jsonl"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("24 records, 0 invalid"));
}

#[test]
fn validate_names_bad_records() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("minibench.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut bad: serde_json::Value = serde_json::from_str(&lines[3]).unwrap();
    bad["options"].as_array_mut().unwrap().pop();
    let id = bad["id"].as_str().unwrap().to_string();
    lines[3] = bad.to_string();
    lines.push("{not json".into());
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, lines.join("\n")).unwrap();

    let out = debiasqa(&["validate", "--dataset", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&id), "{stdout}");
    assert!(stdout.contains("2 invalid"), "{stdout}");
}

#[test]
fn missing_input_is_an_io_failure() {
    let out = debiasqa(&["validate", "--dataset", "/definitely/not/here.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not/here.jsonl"));
}

#[test]
fn mock_without_script_is_a_config_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = debiasqa(&[
        "run",
        "--dataset",
        s(&fixture("minibench.jsonl")),
        "--mode",
        "base",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = debiasqa(&[
        "run",
        "--dataset",
        s(&fixture("minibench.jsonl")),
        "--corpus",
        s(&fixture("minibench_corpus.jsonl")),
        "--mock-script",
        s(&fixture("minibench_mock.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "config.json",
        "detections.jsonl",
        "guidance.jsonl",
        "prompts.jsonl",
        "answers.jsonl",
        "transcript.jsonl",
        "report.json",
        "report.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let answers = std::fs::read_to_string(dir.path().join("answers.jsonl")).unwrap();
    assert_eq!(answers.lines().count(), 24 * 3);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "dataset": fixture("minibench.jsonl"),
        "corpus": fixture("minibench_corpus.jsonl"),
        "mock_script": fixture("minibench_mock.json"),
        "mode": "decap",
        "seeds": [0],
        "out": "ignored",
    });
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out_dir = dir.path().join("runs");
    let out = debiasqa(&[
        "run",
        "--config",
        s(&cfg_path),
        "--mode",
        "base,def2,decap",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for mode in ["base", "def2", "decap"] {
        let answers = std::fs::read_to_string(out_dir.join(mode).join("answers.jsonl")).unwrap();
        assert_eq!(answers.lines().count(), 24);
    }
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, r#"{"treshold": 0.4}"#).unwrap();
    let out = debiasqa(&["validate", "--config", s(&cfg_path)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_then_report_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = fixture("minibench.jsonl");
    let out = debiasqa(&[
        "detect",
        "--dataset",
        s(&dataset),
        "--mock-script",
        s(&fixture("minibench_mock.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("24 records: 12 predicted ambiguous"));

    let out = debiasqa(&["report", "--run", s(dir.path()), "--dataset", s(&dataset), "--sweep"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<_> = sweep.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[2].starts_with("0.35,"));
}

#[test]
fn report_recomputes_and_resume_reuses_stages() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = fixture("minibench.jsonl");
    let (corpus, script) = (fixture("minibench_corpus.jsonl"), fixture("minibench_mock.json"));
    let args = |extra: &[&str]| {
        let mut v = vec![
            "run",
            "--dataset",
            s(&dataset),
            "--corpus",
            s(&corpus),
            "--mock-script",
            s(&script),
            "--out",
            s(dir.path()),
        ];
        v.extend_from_slice(extra);
        v.into_iter().map(str::to_string).collect::<Vec<_>>()
    };
    let first = debiasqa(&args(&[]).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(first.status.code(), Some(0));
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();

    let resumed = debiasqa(&args(&["--resume"]).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(resumed.status.code(), Some(0));
    let transcript = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert!(
        transcript.lines().all(|l| l.contains("\"answer:")),
        "only answer calls after resume"
    );
    assert_eq!(std::fs::read_to_string(dir.path().join("report.json")).unwrap(), report);

    std::fs::remove_file(dir.path().join("report.json")).unwrap();
    let matrix = dir.path().join("matrix.csv");
    let out = debiasqa(&[
        "report",
        "--run",
        s(dir.path()),
        "--dataset",
        s(&dataset),
        "--matrix",
        s(&matrix),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(dir.path().join("report.json")).unwrap(), report);
    assert!(std::fs::read_to_string(&matrix).unwrap().contains("Religion"));
}

/// Answers every completion with "A" and records (model, prompt) pairs.
fn completion_stub() -> (String, std::sync::mpsc::Receiver<(String, String)>) {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut reader = BufReader::new(stream.unwrap());
            let mut line = String::new();
            let mut len = 0;
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                if line.trim_end().is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    if name.eq_ignore_ascii_case("content-length") {
                        len = value.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let body: serde_json::Value = serde_json::from_slice(&buf).unwrap();
            let _ = tx.send((
                body["model"].as_str().unwrap().to_string(),
                body["prompt"].as_str().unwrap().to_string(),
            ));
            let reply = r#"{"choices":[{"text":"A"}]}"#;
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (base, rx)
}

#[test]
fn http_roles_use_their_own_models() {
    let (base, rx) = completion_stub();
    let dir = tempfile::tempdir().unwrap();
    let records = std::fs::read_to_string(fixture("minibench.jsonl")).unwrap();
    let dataset = dir.path().join("two.jsonl");
    std::fs::write(&dataset, records.lines().take(2).collect::<Vec<_>>().join("\n")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_debiasqa"))
        .env("LLM_BASE_URL", &base)
        .env_remove("LLM_API_KEY")
        .args([
            "run",
            "--backend",
            "http",
            "--model",
            "answerer",
            "--reasoner-model",
            "reasoner",
            "--generator-model",
            "generator",
            "--dataset",
            s(&dataset),
            "--corpus",
            s(&fixture("minibench_corpus.jsonl")),
            "--seeds",
            "0",
            "--out",
            s(&dir.path().join("run")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let seen: Vec<_> = rx.try_iter().collect();
    assert_eq!(seen.len(), 2 * 3);
    for (model, prompt) in &seen {
        let expected = if prompt.ends_with("Response Sentence:") {
            "generator"
        } else if prompt.ends_with("Answer: ") {
            "answerer"
        } else {
            "reasoner"
        };
        assert_eq!(model, expected, "{prompt}");
    }
    for m in ["reasoner", "generator", "answerer"] {
        assert_eq!(seen.iter().filter(|(model, _)| model == m).count(), 2);
    }
}
