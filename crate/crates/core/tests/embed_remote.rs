use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use chunkprobe::embed::{fetch_remote, EmbedError, EmbedRequest, RetryPolicy};

/// Serve one scripted `(status, body)` per connection, recording request bodies.
fn mock(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<EmbedRequest>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut first = String::new();
            reader.read_line(&mut first).unwrap();
            assert!(first.starts_with("POST /embed "), "{first}");
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock()
                .unwrap()
                .push(serde_json::from_slice(&buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}"), seen)
}

fn vectors_json(n: usize, dim: usize) -> String {
    let vecs: Vec<Vec<f32>> = (0..n)
        .map(|i| (0..dim).map(|k| (i * dim + k) as f32 * 0.5).collect())
        .collect();
    serde_json::json!({ "dim": dim, "vectors": vecs }).to_string()
}

fn fast() -> RetryPolicy {
    RetryPolicy {
        base_delay: Duration::from_millis(5),
        ..RetryPolicy::default()
    }
}

fn sentences(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("Sentence {i}.")).collect()
}

#[test]
fn two_sentences_accepted_in_order() {
    let (url, seen) = mock(vec![(200, vectors_json(2, 768))]);
    let out = fetch_remote(&url, &sentences(2), "electra", &fast()).unwrap();
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|v| v.len() == 768));
    assert_eq!(out[1][0], 768.0 * 0.5);
    let req = &seen.lock().unwrap()[0];
    assert_eq!(req.model, "electra");
    assert_eq!(req.sentences, sentences(2));
}

#[test]
fn dim_512_rejected() {
    let (url, _) = mock(vec![(200, vectors_json(2, 512))]);
    let err = fetch_remote(&url, &sentences(2), "m", &fast()).unwrap_err();
    assert!(
        matches!(
            err,
            EmbedError::Dimension {
                got: 512,
                expected: 768
            }
        ),
        "{err}"
    );
}

#[test]
fn two_server_errors_then_success() {
    let (url, seen) = mock(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (200, vectors_json(2, 768)),
    ]);
    let out = fetch_remote(&url, &sentences(2), "m", &fast()).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn three_server_errors_give_up() {
    let (url, _) = mock(vec![
        (503, "{}".into()),
        (503, "{}".into()),
        (503, "{}".into()),
    ]);
    let err = fetch_remote(&url, &sentences(1), "m", &fast()).unwrap_err();
    assert!(matches!(err, EmbedError::Remote(_)));
}

#[test]
fn client_error_is_not_retried() {
    let (url, seen) = mock(vec![(400, "{\"error\":\"model mismatch\"}".into())]);
    let err = fetch_remote(&url, &sentences(1), "m", &fast()).unwrap_err();
    assert!(err.to_string().contains("400"));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn count_mismatch_rejected() {
    let (url, _) = mock(vec![(200, vectors_json(1, 768))]);
    assert!(fetch_remote(&url, &sentences(2), "m", &fast()).is_err());
}

#[test]
fn batches_are_concatenated() {
    let (url, seen) = mock(vec![
        (200, vectors_json(2, 768)),
        (200, vectors_json(1, 768)),
    ]);
    let policy = RetryPolicy {
        batch_size: 2,
        ..fast()
    };
    let out = fetch_remote(&url, &sentences(3), "m", &policy).unwrap();
    assert_eq!(out.len(), 3);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[1].sentences, vec!["Sentence 2.".to_string()]);
}
