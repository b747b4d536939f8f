use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use ffr::cms::{table_items, CmsStore};
use ffr::samples::{word_for_word, PREDICTIONS};

fn ffr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffr")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_predictions(dir: &Path) -> (String, String) {
    let hyp = dir.join("hyp.txt");
    let reference = dir.join("ref.txt");
    let join = |f: fn(&ffr::samples::Prediction) -> &str| {
        PREDICTIONS.iter().map(f).collect::<Vec<_>>().join("\n") + "\n"
    };
    fs::write(&hyp, join(|p| p.hypothesis)).unwrap();
    fs::write(&reference, join(|p| p.reference)).unwrap();
    (p(&hyp).to_owned(), p(&reference).to_owned())
}

#[test]
fn analyze_prints_bucket_table() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.tsv");
    fs::write(&corpus, "yí bo wa\tprends et viens\nhɔn\tfuire\none two three four five six\tx\n").unwrap();
    let out = ffr(&["analyze", "--corpus", p(&corpus)]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("Very Short sentences (1-5 words)"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("Max words") && l.ends_with("6         3")), "{text}");

    let json = ffr(&["analyze", "--corpus", p(&corpus), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["pair_count"], 3);
}

#[test]
fn evaluate_sentence_mode_on_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let (hyp, reference) = write_predictions(dir.path());
    let args = ["evaluate", "--hyp", &hyp, "--ref", &reference, "--mode", "sentence", "--diacritics", "preserve", "--json"];
    let out = ffr(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let scores: Vec<f64> = v["sentence_scores"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(scores, [1.0, 1.0, 0.0, 0.0, 0.0, 0.25]);
    // Same inputs, same bytes.
    assert_eq!(stdout(&ffr(&args)), stdout(&out));
}

#[test]
fn evaluate_identical_files_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    let (_, reference) = write_predictions(dir.path());
    let out = ffr(&["evaluate", "--hyp", &reference, "--ref", &reference, "--metric", "bleu", "--diacritics", "strip"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("100.00"), "{}", stdout(&out));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let out = ffr(&["train", "--config", p(&missing), "--out", p(&dir.path().join("m.ckpt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.cfg"));

    assert_eq!(ffr(&["analyze", "--corpus", "x", "--bogus"]).status.code(), Some(1));
    assert_eq!(ffr(&["no-such-command"]).status.code(), Some(1));

    let hyp = dir.path().join("h.txt");
    let reference = dir.path().join("r.txt");
    fs::write(&hyp, "a\nb\n").unwrap();
    fs::write(&reference, "a\n").unwrap();
    let out = ffr(&["evaluate", "--hyp", p(&hyp), "--ref", p(&reference), "--diacritics", "preserve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_flags_for_every_subcommand() {
    let cases: [(&str, &[&str]); 9] = [
        ("analyze", &["--corpus"]),
        ("split", &["--train", "--val", "--test", "--seed", "--out"]),
        ("build-vocab", &["--side", "--diacritics", "--min-count", "--out"]),
        ("train", &["--config", "--out"]),
        ("translate", &["--checkpoint", "--input", "--output"]),
        ("evaluate", &["--hyp", "--ref", "--mode", "--metric", "--diacritics"]),
        ("cms-serve", &["--port", "--data-dir"]),
        ("cms-export", &["--data-dir", "--session", "--out"]),
        ("--help", &["analyze", "cms-export"]),
    ];
    for (sub, flags) in cases {
        let out = if sub == "--help" { ffr(&["--help"]) } else { ffr(&[sub, "--help"]) };
        assert_eq!(out.status.code(), Some(0), "{sub}");
        let text = stdout(&out);
        for flag in flags {
            assert!(text.contains(flag), "{sub} help lacks {flag}:\n{text}");
        }
    }
}

#[test]
fn split_vocab_train_translate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("all.tsv");
    fs::write(&corpus, word_for_word(24, 3).to_tsv()).unwrap();

    let parts = d.join("parts");
    let out = ffr(&["split", "--corpus", p(&corpus), "--train", "16", "--val", "4", "--test", "4", "--seed", "1", "--out", p(&parts)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), "train\t16\nval\t4\ntest\t4\n");
    let again = d.join("again");
    ffr(&["split", "--corpus", p(&corpus), "--train", "16", "--val", "4", "--test", "4", "--seed", "1", "--out", p(&again)]);
    for name in ["train.tsv", "val.tsv", "test.tsv"] {
        assert_eq!(fs::read(parts.join(name)).unwrap(), fs::read(again.join(name)).unwrap());
    }

    let vocab = d.join("src.vocab");
    let out = ffr(&["build-vocab", "--corpus", p(&corpus), "--side", "src", "--diacritics", "preserve", "--out", p(&vocab)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(vocab.exists());

    let config = d.join("run.cfg");
    fs::write(
        &config,
        "train_corpus = parts/train.tsv\nval_corpus = parts/val.tsv\ndiacritics = preserve\n\
         emb_dim = 8\nhidden_dim = 8\nattn_dim = 4\nepochs = 3\nbatch_size = 4\nlearning_rate = 0.01\nseed = 5\n",
    )
    .unwrap();
    let ckpt = d.join("model.ckpt");
    let out = ffr(&["train", "--config", p(&config), "--out", p(&ckpt)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = stdout(&out);
    assert_eq!(log.lines().next(), Some("epoch\ttrain_loss\tval_loss"));
    assert_eq!(log.lines().count(), 4, "{log}");
    assert!(log.lines().all(|l| l.split('\t').count() == 3));
    let ckpt2 = d.join("model2.ckpt");
    let rerun = ffr(&["train", "--config", p(&config), "--out", p(&ckpt2)]);
    assert_eq!(stdout(&rerun), log);
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&ckpt2).unwrap());

    let input = d.join("in.txt");
    fs::write(&input, "kpɔ́n wa\n\nyí\n").unwrap();
    let output = d.join("out.txt");
    let out = ffr(&["translate", "--checkpoint", p(&ckpt), "--input", p(&input), "--output", p(&output), "--max-len", "6"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<String> = fs::read_to_string(&output).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "");

    fs::write(&ckpt, b"not a checkpoint").unwrap();
    let out = ffr(&["translate", "--checkpoint", p(&ckpt), "--input", p(&input), "--output", p(&output)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cms_export_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let store = CmsStore::open(dir.path()).unwrap();
        let id = store.create_session("cli", table_items()).unwrap();
        store.submit_score(&id, "a", "0", 0.5).unwrap();
        store.submit_score(&id, "b", "0", 1.0).unwrap();
        id
    };
    let out_path = dir.path().join("cms.csv");
    let out = ffr(&["cms-export", "--data-dir", p(dir.path()), "--session", &id, "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&out_path).unwrap();
    assert!(csv.lines().next().unwrap().contains("item_id"), "{csv}");
    assert!(csv.contains("0.75"), "{csv}");

    let out = ffr(&["cms-export", "--data-dir", p(dir.path()), "--session", "missing", "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cms_serve_answers_http() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_ffr"))
        .args(["cms-serve", "--port", &port.to_string(), "--data-dir", p(dir.path())])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Ok(mut stream) = TcpStream::connect(("127.0.0.1", port)) {
            let body = r#"{"name":"s","items":[{"item_id":"x","source":"a","reference":"b","hypothesis":"c"}]}"#;
            write!(
                stream,
                "POST /api/sessions HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\n\
                 Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            let mut text = String::new();
            stream.read_to_string(&mut text).unwrap();
            break text;
        }
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(100));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 201"), "{response}");
    assert!(response.contains("session_id"));
}
