//! Remote classification against a scripted local HTTP server.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use bisift::classify::{run_stage2, ClassifierConfig, Stage2Context, Stage2Mode, Stage2Summary};
use bisift::corpus::ClassifierSource;
use bisift::entropy::annotate_stage1;
use bisift::judge::{JudgeClient, JudgeConfig};
use bisift::{read_corpus, BilingualLabel, Document, FilterConfig, LangIdModel, LanguagePair, Workers};
use serde_json::{json, Value};

#[derive(Clone)]
enum Reply {
    Answer(&'static str),
    Status(u16),
}

struct Request {
    headers: String,
    body: Value,
}

/// Serves replies from the script in order, then repeats `otherwise`.
struct Stub {
    url: String,
    requests: Arc<Mutex<Vec<Request>>>,
}

impl Stub {
    fn start(script: Vec<Reply>, otherwise: Reply) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let mut script: VecDeque<Reply> = script.into();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let Some(req) = read_request(&stream) else { continue };
                log.lock().unwrap().push(req);
                let reply = script.pop_front().unwrap_or_else(|| otherwise.clone());
                respond(stream, &reply);
            }
        });
        Stub { url, requests }
    }

    fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn read_request(stream: &TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream);
    let mut headers = String::new();
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        if line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
        headers.push_str(&line);
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some(Request {
        headers,
        body: serde_json::from_slice(&body).ok()?,
    })
}

fn respond(mut stream: TcpStream, reply: &Reply) {
    let (status, body) = match reply {
        Reply::Answer(text) => (
            200,
            json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
        ),
        Reply::Status(code) => (*code, "{}".to_string()),
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

fn en_fr() -> LanguagePair {
    "en-fr".parse().unwrap()
}

/// The reference documents after stage 1; all three are candidates.
fn candidates() -> Vec<Document> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/table1.jsonl");
    read_corpus(&[path])
        .map(|d| annotate_stage1(d.unwrap(), en_fr(), LangIdModel::bundled(), &FilterConfig::default()))
        .collect()
}

fn judge(url: &str, verify_remotely: bool) -> JudgeClient {
    JudgeClient::new(JudgeConfig {
        endpoint_url: url.into(),
        model_name: "stub-judge".into(),
        api_key: Some("sekret".into()),
        max_retries: 2,
        backoff_ms: 1,
        timeout_secs: 5.0,
        verify_remotely,
        ..JudgeConfig::default()
    })
    .unwrap()
}

fn stage2(docs: Vec<Document>, mode: Stage2Mode, judge: Option<&JudgeClient>) -> (Vec<Document>, Stage2Summary) {
    let config = ClassifierConfig::default();
    let ctx = Stage2Context {
        pair: en_fr(),
        scorer: LangIdModel::bundled(),
        config: &config,
        mode,
        judge,
    };
    let workers = Workers::single();
    let mut stream = run_stage2(docs.into_iter(), &ctx, &workers).unwrap();
    let out: Vec<Document> = stream.by_ref().collect();
    (out, stream.summary())
}

#[test]
fn judge_answer_becomes_the_label() {
    let stub = Stub::start(
        vec![Reply::Answer("YES"), Reply::Answer("PARALLEL")],
        Reply::Status(500),
    );
    let j = judge(&stub.url, true);
    let docs = candidates().into_iter().take(1).collect();
    let (out, summary) = stage2(docs, Stage2Mode::Remote, Some(&j));
    let ann = out[0].annotations.as_ref().unwrap();
    assert_eq!(ann.label, BilingualLabel::Parallel);
    assert_eq!(ann.classifier_source, ClassifierSource::RemoteJudge);
    assert_eq!(summary.parallel, 1);

    let requests = stub.requests.lock().unwrap();
    assert_eq!(requests.len(), 2);
    assert!(requests[0].headers.contains("Bearer sekret"));
    assert_eq!(requests[0].body["model"], "stub-judge");
    let verify_prompt = requests[0].body["messages"][0]["content"].as_str().unwrap();
    assert!(verify_prompt.contains("English and French"));
    assert!(verify_prompt.contains("Bright loft in Old Montréal"));
}

#[test]
fn malformed_answers_are_retried() {
    let stub = Stub::start(
        vec![
            Reply::Answer("I think maybe"),
            Reply::Answer("PARALLEL or CODE_SWITCHING"),
        ],
        Reply::Answer("Code-switching."),
    );
    let j = judge(&stub.url, false);
    let docs = candidates().into_iter().take(1).collect();
    let (out, _) = stage2(docs, Stage2Mode::Remote, Some(&j));
    assert_eq!(out[0].label(), Some(BilingualLabel::CodeSwitching));
    assert_eq!(stub.count(), 3);
}

#[test]
fn judge_rejection_is_monolingual() {
    let stub = Stub::start(vec![], Reply::Answer("NO"));
    let j = judge(&stub.url, true);
    let docs = candidates().into_iter().take(1).collect();
    let (out, summary) = stage2(docs, Stage2Mode::Remote, Some(&j));
    assert_eq!(out[0].label(), Some(BilingualLabel::Monolingual));
    assert_eq!(summary.rejected, 1);
    assert_eq!(stub.count(), 1);
}

#[test]
fn exhausted_retries_leave_the_document_unresolved() {
    let stub = Stub::start(vec![], Reply::Status(503));
    let j = judge(&stub.url, false);
    let docs = candidates().into_iter().take(1).collect();
    let (out, summary) = stage2(docs, Stage2Mode::Remote, Some(&j));
    let ann = out[0].annotations.as_ref().unwrap();
    assert_eq!(ann.label, BilingualLabel::Unresolved);
    assert!(ann.reason.as_deref().unwrap().starts_with("judge:"));
    assert_eq!(summary.unresolved, 1);
    // One attempt plus two retries.
    assert_eq!(stub.count(), 3);
}

#[test]
fn dead_endpoint_falls_back_to_the_heuristic() {
    let url = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}/v1/chat/completions", l.local_addr().unwrap())
    };
    let j = judge(&url, true);
    let (remote, summary) = stage2(candidates(), Stage2Mode::RemoteWithHeuristicFallback, Some(&j));
    let (local, _) = stage2(candidates(), Stage2Mode::Heuristic, None);
    assert_eq!(summary.fallbacks, 3);
    assert_eq!(remote, local);
    let labels: Vec<_> = remote.iter().map(|d| d.label().unwrap()).collect();
    assert_eq!(
        labels,
        [
            BilingualLabel::Parallel,
            BilingualLabel::CodeSwitching,
            BilingualLabel::Miscellaneous
        ]
    );
}

#[test]
fn non_candidates_never_reach_the_judge() {
    let stub = Stub::start(vec![], Reply::Answer("YES PARALLEL"));
    let j = judge(&stub.url, true);
    let mono = annotate_stage1(
        Document::new(
            "m",
            "The library opens at nine every morning. We went to the market on Saturday.",
        ),
        en_fr(),
        LangIdModel::bundled(),
        &FilterConfig::default(),
    );
    assert_eq!(mono.label(), Some(BilingualLabel::Monolingual));
    let (out, summary) = stage2(vec![mono.clone()], Stage2Mode::Remote, Some(&j));
    assert_eq!(out, vec![mono]);
    assert_eq!(summary.passthrough, 1);
    assert_eq!(stub.count(), 0);
}

#[test]
fn remote_mode_without_a_judge_is_rejected() {
    let config = ClassifierConfig::default();
    let ctx = Stage2Context {
        pair: en_fr(),
        scorer: LangIdModel::bundled(),
        config: &config,
        mode: Stage2Mode::Remote,
        judge: None,
    };
    let workers = Workers::single();
    assert!(run_stage2(std::iter::empty(), &ctx, &workers).is_err());
}
