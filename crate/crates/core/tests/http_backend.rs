//! The HTTP backend against a local stub server that speaks the wire
//! format and answers with the mock backend.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use panelwright_core::backends::{
    AssetRole, Backend, BackendConfig, BackendError, BackendsConfig, EmbedPayload, HttpBackend, ImageAsset,
    ImageRequest, MockBackend,
};
use panelwright_core::pipeline::{Pipeline, PipelineConfig};
use serde_json::{json, Value};

struct Stub {
    url: String,
    requests: Arc<AtomicUsize>,
}

/// Serves until the test process exits. The first `failures` requests get
/// a 503. Requests without the expected bearer token get a 401 whose body
/// echoes the header that was sent.
fn serve(token: Option<&'static str>, failures: usize) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let count = requests.clone();
    std::thread::spawn(move || {
        let mock = Arc::new(MockBackend::new(5));
        for stream in listener.incoming().flatten() {
            let (mock, count) = (mock.clone(), count.clone());
            std::thread::spawn(move || {
                let _ = handle(stream, &mock, token, failures, &count);
            });
        }
    });
    Stub { url, requests }
}

fn handle(
    stream: TcpStream,
    mock: &MockBackend,
    token: Option<&str>,
    failures: usize,
    count: &AtomicUsize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let (mut length, mut auth) = (0usize, String::new());
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => auth = value.trim().to_string(),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let n = count.fetch_add(1, Ordering::SeqCst);

    let (status, reply) = if n < failures {
        (503, json!({"error": "warming up"}))
    } else if token.is_some_and(|t| auth != format!("Bearer {t}")) {
        (401, json!({"error": format!("rejected authorization {auth:?}")}))
    } else {
        let req: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        match answer(&path, &req, mock) {
            Ok(v) => (200, v),
            Err(e) => (400, json!({"error": e.to_string()})),
        }
    };
    let text = reply.to_string();
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    out.flush()
}

fn png(v: &Value) -> Result<Vec<u8>, BackendError> {
    B64.decode(v.as_str().unwrap_or("")).map_err(|e| BackendError::InvalidRequest(e.to_string()))
}

fn answer(path: &str, req: &Value, mock: &MockBackend) -> Result<Value, BackendError> {
    match path {
        "/chat/completions" => {
            let content = |i: usize| req["messages"][i]["content"].as_str().unwrap_or("").to_string();
            let reply = mock.chat_complete(&content(0), &content(1))?;
            Ok(json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}))
        }
        "/images/generations" => {
            let r = ImageRequest {
                prompt: req["prompt"].as_str().unwrap_or("").into(),
                negative_prompt: req["negative_prompt"].as_str().unwrap_or("").into(),
                seed: req["seed"].as_u64().unwrap_or(0),
                width: req["width"].as_u64().unwrap_or(0) as u32,
                height: req["height"].as_u64().unwrap_or(0) as u32,
                role: AssetRole::CharacterRef,
                owner_id: "remote".into(),
            };
            let img = mock.text_to_image(&r)?;
            Ok(json!({"data": [{"b64_json": B64.encode(img.to_png())}]}))
        }
        "/multiview" => {
            let reference = ImageAsset::from_png(&png(&req["image"])?, AssetRole::CharacterRef, "remote", None)?;
            let views = mock.image_to_multiview(&reference)?;
            Ok(json!({"images": views.iter().map(|v| B64.encode(v.to_png())).collect::<Vec<_>>()}))
        }
        "/embeddings" => {
            let v = if let Some(t) = req["input"].as_str() {
                mock.embed(EmbedPayload::Text(t))?
            } else {
                let a = ImageAsset::from_png(&png(&req["input_image"])?, AssetRole::Panel, "remote", None)?;
                mock.embed(EmbedPayload::Image(&a))?
            };
            Ok(json!({"data": [{"embedding": v}]}))
        }
        _ => Err(BackendError::InvalidRequest(format!("no route {path}"))),
    }
}

fn config(url: &str, var: Option<&str>) -> BackendConfig {
    let mut c = BackendConfig::http(url);
    c.auth_env_var = var.map(str::to_string);
    c.backoff_ms = 1;
    c.timeout = 30.0;
    c
}

fn script() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/scripts/two_scenes.fountain")
}

fn files_containing(root: &Path, needle: &[u8]) -> Vec<PathBuf> {
    let mut hits = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = std::fs::read(&p).unwrap();
                if bytes.windows(needle.len()).any(|w| w == needle) {
                    hits.push(p);
                }
            }
        }
    }
    hits
}

const SECRET: &str = "sk-stub-7f3a91c2e4d8b6a0";

#[test]
fn full_run_over_http_leaves_no_credential_behind() {
    std::env::set_var("PANELWRIGHT_STUB_KEY_OK", SECRET);
    let stub = serve(Some(SECRET), 0);
    let c = config(&stub.url, Some("PANELWRIGHT_STUB_KEY_OK"));
    let backends = BackendsConfig { chat: c.clone(), image: c.clone(), multiview: c.clone(), embedding: c };
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::mock(3);
    cfg.backends = backends.with_seed(3);
    let p = Pipeline::new(dir.path(), cfg).unwrap();
    let summary = p.run(&script(), None).unwrap();
    assert_eq!(summary.stages.len(), 5);
    assert!(stub.requests.load(Ordering::SeqCst) > 20);
    assert!(dir.path().join("eval/report.json").is_file());

    let stored = std::fs::read_to_string(dir.path().join("backends.json")).unwrap();
    assert!(stored.contains("PANELWRIGHT_STUB_KEY_OK"));
    assert_eq!(files_containing(dir.path(), SECRET.as_bytes()), Vec::<PathBuf>::new());
}

#[test]
fn rejected_credential_is_not_echoed() {
    std::env::set_var("PANELWRIGHT_STUB_KEY_BAD", SECRET);
    let stub = serve(Some("something-else"), 0);
    let b = HttpBackend::new(config(&stub.url, Some("PANELWRIGHT_STUB_KEY_BAD"))).unwrap();
    let err = b.chat_complete("s", "u").unwrap_err();
    assert!(matches!(err, BackendError::NonRetryableStatus { status: 401, .. }), "{err:?}");
    assert!(!err.to_string().contains(SECRET));
    assert!(!format!("{err:?}").contains(SECRET));
    assert_eq!(stub.requests.load(Ordering::SeqCst), 1);

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::mock(1);
    cfg.backends.chat = config(&stub.url, Some("PANELWRIGHT_STUB_KEY_BAD"));
    let p = Pipeline::new(dir.path(), cfg).unwrap();
    let err = p.run(&script(), None).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(!err.to_string().contains(SECRET));
    assert_eq!(files_containing(dir.path(), SECRET.as_bytes()), Vec::<PathBuf>::new());
}

#[test]
fn transient_failures_are_retried_exactly() {
    let stub = serve(None, 2);
    let b = HttpBackend::new(config(&stub.url, None)).unwrap();
    assert!(b.chat_complete("TASK: I4_compose", "u").is_ok());
    assert_eq!(stub.requests.load(Ordering::SeqCst), 3);

    let stub = serve(None, 5);
    let mut c = config(&stub.url, None);
    c.retries = 1;
    let err = HttpBackend::new(c).unwrap().chat_complete("s", "u").unwrap_err();
    assert!(matches!(err, BackendError::RetriesExhausted { attempts: 2, .. }), "{err:?}");
    assert_eq!(stub.requests.load(Ordering::SeqCst), 2);
}

#[test]
fn images_and_embeddings_round_trip() {
    let stub = serve(None, 0);
    let b = HttpBackend::new(config(&stub.url, None)).unwrap();
    let req = ImageRequest {
        prompt: "a lighthouse keeper".into(),
        negative_prompt: String::new(),
        seed: 1,
        width: 256,
        height: 384,
        role: AssetRole::CharacterRef,
        owner_id: "ada".into(),
    };
    let img = b.text_to_image(&req).unwrap();
    assert_eq!((img.width, img.height, img.owner_id.as_str()), (256, 384, "ada"));
    let views = b.image_to_multiview(&img).unwrap();
    assert_eq!(views.len(), 8);
    assert!(views.iter().enumerate().all(|(i, v)| v.view_index == Some(i as u8) && v.owner_id == "ada"));
    let e = b.embed(EmbedPayload::Text("rain on the window")).unwrap();
    let norm: f32 = e.iter().map(|x| x * x).sum::<f32>().sqrt();
    assert!((norm - 1.0).abs() < 1e-5);
    assert_eq!(b.embed(EmbedPayload::Image(&img)).unwrap().len(), 512);
}

#[test]
fn missing_credential_names_the_variable() {
    let stub = serve(Some(SECRET), 0);
    let b = HttpBackend::new(config(&stub.url, Some("PANELWRIGHT_STUB_KEY_UNSET"))).unwrap();
    let err = b.embed(EmbedPayload::Text("x")).unwrap_err();
    assert_eq!(err, BackendError::AuthMissing("PANELWRIGHT_STUB_KEY_UNSET".into()));
    assert_eq!(stub.requests.load(Ordering::SeqCst), 0);
}
