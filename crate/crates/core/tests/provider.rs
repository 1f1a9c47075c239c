use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use entnorm::encoder::provider::{ProviderClient, ProviderConfig};
use entnorm::encoder::Encoder;
use entnorm::Error;

/// Local embedding service. Each text embeds as `[len, first byte, 1]`.
/// Statuses queued in `script` are answered (with an empty body) before
/// normal service resumes.
struct Stub {
    url: String,
    calls: Arc<AtomicUsize>,
    batch_sizes: Arc<Mutex<Vec<usize>>>,
    script: Arc<Mutex<VecDeque<u16>>>,
}

fn embed(text: &str) -> serde_json::Value {
    serde_json::json!([text.len() as f64, *text.as_bytes().first().unwrap_or(&0) as f64, 1.0])
}

fn stub() -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let batch_sizes = Arc::new(Mutex::new(Vec::new()));
    let script = Arc::new(Mutex::new(VecDeque::new()));
    let (c, b, s) = (calls.clone(), batch_sizes.clone(), script.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            c.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = match s.lock().unwrap().pop_front() {
                Some(code) => (code, String::from("{}")),
                None => {
                    let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                    let inputs = req["input"].as_array().unwrap();
                    b.lock().unwrap().push(inputs.len());
                    let data: Vec<serde_json::Value> = inputs
                        .iter()
                        .map(|t| serde_json::json!({ "embedding": embed(t.as_str().unwrap()) }))
                        .collect();
                    (200, serde_json::json!({ "data": data }).to_string())
                }
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    Stub {
        url,
        calls,
        batch_sizes,
        script,
    }
}

fn config(url: &str, cache: &std::path::Path, limit: usize) -> ProviderConfig {
    ProviderConfig {
        token: None,
        batch_limit: limit,
        backoff: Duration::from_millis(1),
        ..ProviderConfig::new(url, cache)
    }
}

fn texts(n: usize, prefix: &str) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

#[test]
fn cold_cache_sends_ceil_n_over_limit_requests() {
    let s = stub();
    let dir = tempfile::tempdir().unwrap();
    let client = ProviderClient::new(config(&s.url, &dir.path().join("c.bin"), 4)).unwrap();
    let out = client.encode_batch(&texts(8, "m")).unwrap();
    assert_eq!(s.calls.load(Ordering::SeqCst), 2);
    assert_eq!(*s.batch_sizes.lock().unwrap(), vec![4, 4]);
    assert_eq!(out.len(), 8);
    assert_eq!(out[3].as_slice(), &[2.0, b'm' as f32, 1.0]);

    client.encode_batch(&texts(9, "m")).unwrap();
    assert_eq!(s.calls.load(Ordering::SeqCst), 3);
    assert_eq!(s.batch_sizes.lock().unwrap()[2], 1);
}

#[test]
fn fully_cached_and_empty_inputs_make_no_calls() {
    let s = stub();
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c.bin");
    let client = ProviderClient::new(config(&s.url, &cache, 16)).unwrap();
    let first = client.encode_batch(&texts(5, "x")).unwrap();
    assert_eq!(s.calls.load(Ordering::SeqCst), 1);
    assert!(client.encode_batch(&[]).unwrap().is_empty());
    assert_eq!(client.encode_batch(&texts(5, "x")).unwrap(), first);
    assert_eq!(s.calls.load(Ordering::SeqCst), 1);

    // a new client reads the cache from disk
    let reopened = ProviderClient::new(config(&s.url, &cache, 16)).unwrap();
    assert_eq!(reopened.encode_batch(&texts(5, "x")).unwrap(), first);
    assert_eq!(s.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn duplicate_texts_are_requested_once() {
    let s = stub();
    let dir = tempfile::tempdir().unwrap();
    let client = ProviderClient::new(config(&s.url, &dir.path().join("c.bin"), 16)).unwrap();
    let input: Vec<String> = ["a", "bb", "a", "bb", "a"].map(String::from).to_vec();
    let out = client.encode_batch(&input).unwrap();
    assert_eq!(*s.batch_sizes.lock().unwrap(), vec![2]);
    assert_eq!(out[0], out[2]);
    assert_eq!(out[1], out[3]);
}

#[test]
fn transient_errors_are_retried() {
    let s = stub();
    s.script.lock().unwrap().extend([503, 429]);
    let dir = tempfile::tempdir().unwrap();
    let client = ProviderClient::new(config(&s.url, &dir.path().join("c.bin"), 16)).unwrap();
    assert_eq!(client.encode_batch(&texts(3, "r")).unwrap().len(), 3);
    assert_eq!(s.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_are_bounded() {
    let s = stub();
    s.script.lock().unwrap().extend([500, 500, 500, 500]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = ProviderConfig {
        max_retries: 2,
        ..config(&s.url, &dir.path().join("c.bin"), 16)
    };
    let client = ProviderClient::new(cfg).unwrap();
    assert!(matches!(
        client.encode_batch(&texts(1, "r")),
        Err(Error::Network { attempts: 3, .. })
    ));
    assert_eq!(s.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub();
    s.script.lock().unwrap().push_back(401);
    let dir = tempfile::tempdir().unwrap();
    let client = ProviderClient::new(config(&s.url, &dir.path().join("c.bin"), 16)).unwrap();
    assert!(matches!(client.encode_batch(&texts(1, "r")), Err(Error::Provider(_))));
    assert_eq!(s.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_is_a_network_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ProviderConfig {
        max_retries: 1,
        ..config(&format!("http://127.0.0.1:{port}/"), &dir.path().join("c.bin"), 16)
    };
    let client = ProviderClient::new(cfg).unwrap();
    assert!(matches!(
        client.encode_batch(&texts(1, "r")),
        Err(Error::Network { attempts: 2, .. })
    ));
}

#[test]
fn blank_text_is_rejected_before_any_call() {
    let s = stub();
    let dir = tempfile::tempdir().unwrap();
    let client = ProviderClient::new(config(&s.url, &dir.path().join("c.bin"), 16)).unwrap();
    let input: Vec<String> = ["ok", "  "].map(String::from).to_vec();
    assert!(matches!(client.encode_batch(&input), Err(Error::EmptyText { index: 1 })));
    assert_eq!(s.calls.load(Ordering::SeqCst), 0);
}
