use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use autonlu_core::llmgen::{GenerationClient, HttpTransport, LlmConfig, LlmUpsampler};
use autonlu_core::synthetic::intent_corpus;
use autonlu_core::train::Upsampler;
use autonlu_core::Error;

struct Seen {
    path: String,
    auth: String,
    body: serde_json::Value,
}

/// Serves `responses` in order, one per connection, and records requests.
fn stub(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let (mut len, mut auth) = (0usize, String::new());
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = v.trim().to_string(),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                auth,
                body: serde_json::from_slice(&buf).unwrap_or(serde_json::Value::Null),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), seen)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn http_client(base: &str, max_retries: usize) -> GenerationClient {
    let cfg = LlmConfig { max_retries, backoff_base_ms: 1, model: "local-model".into(), ..Default::default() };
    GenerationClient::new(cfg, Arc::new(HttpTransport::new(base, "secret-key").unwrap()))
}

#[test]
fn http_wire_format() {
    let (base, seen) = stub(vec![(200, completion(r#"["fly me to rome now", "book a seat to oslo"]"#))]);
    let client = http_client(&base, 0);
    let out = client.generate_paraphrases("book_flight", &["book a flight to rome"], 2).unwrap();
    assert_eq!(out.texts, vec!["fly me to rome now", "book a seat to oslo"]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth, "Bearer secret-key");
    assert_eq!(seen[0].body["model"], "local-model");
    assert_eq!(seen[0].body["temperature"], 0.7);
    let roles: Vec<&str> = seen[0].body["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["system", "user"]);
}

#[test]
fn http_errors_are_retried() {
    let (base, seen) = stub(vec![(500, "{}".into()), (200, completion("A travel assistant domain."))]);
    let client = http_client(&base, 1);
    let corpus = intent_corpus(3, 0).unwrap();
    assert_eq!(client.analyze_domain(&corpus).unwrap(), "A travel assistant domain.");
    assert_eq!(seen.lock().unwrap().len(), 2);

    let (base, _) = stub(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let err = http_client(&base, 2).analyze_domain(&corpus).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 3, .. }), "{err}");
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = http_client(&format!("http://127.0.0.1:{port}"), 1);
    let err = client.generate_paraphrases("x", &["seed"], 1).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 2, .. }));
    assert!(!err.to_string().contains("secret-key"));
}

#[test]
fn upsampler_tops_up_shortfalls() {
    // Every answer repeats the seed, so all generations are rejected.
    let (base, _) = stub((0..3).map(|_| (200, completion(r#"["seed text"]"#))).collect());
    let client = http_client(&base, 0);
    let mut up = LlmUpsampler::new(&client, Default::default());
    let texts = up.generate("label", &["seed text"], 4).unwrap();
    assert_eq!(texts.len(), 4);
}

#[test]
fn mock_is_deterministic_under_seed() {
    let corpus = intent_corpus(10, 1).unwrap();
    let run = |seed| {
        GenerationClient::mock(LlmConfig { seed, ..Default::default() }).generate_test_set(&corpus, 4).unwrap()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).samples, run(4).samples);
}
