//! In-process HTTP mock of an OpenAI-compatible endpoint, with concurrency
//! instrumentation for the bounded-parallelism checks.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

#[derive(Clone)]
pub struct MockOptions {
    /// Artificial handling delay per request.
    pub delay_ms: u64,
    /// When set, requests must carry `Authorization: Bearer <token>`.
    pub required_token: Option<String>,
    /// Fixed chat reply text; default is an echo of the user content.
    pub reply_text: Option<String>,
    /// `usage.completion_tokens` in chat replies; `None` omits usage.
    pub completion_tokens: Option<u64>,
    /// Respond 500 to this many chat requests before succeeding.
    pub fail_first_n: usize,
    /// Verbatim chat response body overriding everything else.
    pub raw_chat_body: Option<String>,
}

impl Default for MockOptions {
    fn default() -> Self {
        MockOptions {
            delay_ms: 0,
            required_token: None,
            reply_text: None,
            completion_tokens: Some(7),
            fail_first_n: 0,
            raw_chat_body: None,
        }
    }
}

pub struct MockServer {
    pub base_url: String,
    max_concurrent: Arc<AtomicUsize>,
    chat_requests: Arc<AtomicUsize>,
    bodies: Arc<std::sync::Mutex<Vec<String>>>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(options: MockOptions) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        listener.set_nonblocking(true).expect("nonblocking listener");
        let port = listener.local_addr().unwrap().port();
        let current = Arc::new(AtomicUsize::new(0));
        let max_concurrent = Arc::new(AtomicUsize::new(0));
        let chat_requests = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(std::sync::Mutex::new(Vec::new()));
        let failures_left = Arc::new(AtomicUsize::new(options.fail_first_n));
        let shutdown = Arc::new(AtomicBool::new(false));

        let handle = {
            let current = Arc::clone(&current);
            let max_concurrent = Arc::clone(&max_concurrent);
            let chat_requests = Arc::clone(&chat_requests);
            let bodies = Arc::clone(&bodies);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                let mut workers = Vec::new();
                while !shutdown.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let current = Arc::clone(&current);
                            let max_concurrent = Arc::clone(&max_concurrent);
                            let chat_requests = Arc::clone(&chat_requests);
                            let bodies = Arc::clone(&bodies);
                            let failures_left = Arc::clone(&failures_left);
                            let options = options.clone();
                            workers.push(std::thread::spawn(move || {
                                handle_connection(
                                    stream,
                                    &options,
                                    &current,
                                    &max_concurrent,
                                    &chat_requests,
                                    &bodies,
                                    &failures_left,
                                );
                            }));
                        }
                        Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(2));
                        }
                        Err(_) => break,
                    }
                }
                for w in workers {
                    let _ = w.join();
                }
            })
        };

        MockServer {
            base_url: format!("http://127.0.0.1:{port}/v1"),
            max_concurrent,
            chat_requests,
            bodies,
            shutdown,
            handle: Some(handle),
        }
    }

    /// Bodies of every chat request seen so far.
    #[allow(dead_code)]
    pub fn request_bodies(&self) -> Vec<String> {
        self.bodies.lock().unwrap().clone()
    }

    pub fn stop(mut self) -> MockStats {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
        MockStats {
            max_concurrent: self.max_concurrent.load(Ordering::SeqCst),
            chat_requests: self.chat_requests.load(Ordering::SeqCst),
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

// Not every test binary reads every stat.
#[allow(dead_code)]
pub struct MockStats {
    pub max_concurrent: usize,
    pub chat_requests: usize,
}

fn handle_connection(
    mut stream: TcpStream,
    options: &MockOptions,
    current: &AtomicUsize,
    max_concurrent: &AtomicUsize,
    chat_requests: &AtomicUsize,
    bodies: &std::sync::Mutex<Vec<String>>,
    failures_left: &AtomicUsize,
) {
    let now = current.fetch_add(1, Ordering::SeqCst) + 1;
    max_concurrent.fetch_max(now, Ordering::SeqCst);
    let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));

    let request = read_request(&mut stream);
    if options.delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(options.delay_ms));
    }

    if let Some((path, headers, body)) = request {
        let authorized = match &options.required_token {
            None => true,
            Some(token) => headers
                .iter()
                .any(|h| h.eq_ignore_ascii_case(&format!("authorization: Bearer {token}"))),
        };
        if !authorized {
            write_response(&mut stream, 401, r#"{"error":"unauthorized"}"#);
        } else if path.ends_with("/models") {
            write_response(
                &mut stream,
                200,
                r#"{"object":"list","data":[{"id":"mock-model"}]}"#,
            );
        } else if path.ends_with("/chat/completions") {
            let n = chat_requests.fetch_add(1, Ordering::SeqCst);
            bodies.lock().unwrap().push(body.clone());
            let fail = failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |left| {
                    left.checked_sub(1)
                })
                .is_ok();
            if fail {
                write_response(&mut stream, 500, r#"{"error":"injected failure"}"#);
            } else if let Some(raw) = &options.raw_chat_body {
                write_response(&mut stream, 200, raw);
            } else {
                let user = extract_user_content(&body).unwrap_or_default();
                let reply = options
                    .reply_text
                    .clone()
                    .unwrap_or_else(|| format!("reply-{n} to: {user}"));
                let usage = match options.completion_tokens {
                    Some(t) => format!(r#","usage":{{"completion_tokens":{t}}}"#),
                    None => String::new(),
                };
                let body = format!(
                    r#"{{"choices":[{{"message":{{"role":"assistant","content":{}}},"finish_reason":"stop"}}]{usage}}}"#,
                    serde_json::to_string(&reply).unwrap()
                );
                write_response(&mut stream, 200, &body);
            }
        } else {
            write_response(&mut stream, 404, r#"{"error":"not found"}"#);
        }
    }

    current.fetch_sub(1, Ordering::SeqCst);
}

fn read_request(stream: &mut TcpStream) -> Option<(String, Vec<String>, String)> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        match stream.read(&mut chunk) {
            Ok(0) => return None,
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = find_subsequence(&buf, b"\r\n\r\n") {
                    break pos + 4;
                }
                if buf.len() > 1 << 20 {
                    return None;
                }
            }
            Err(_) => return None,
        }
    };
    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = head.lines();
    let request_line = lines.next()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    let headers: Vec<String> = lines.map(|l| l.to_string()).collect();
    let content_length = headers
        .iter()
        .find_map(|h| {
            let (name, value) = h.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);
    let mut body = buf[header_end..].to_vec();
    while body.len() < content_length {
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => body.extend_from_slice(&chunk[..n]),
            Err(_) => break,
        }
    }
    Some((path, headers, String::from_utf8_lossy(&body).to_string()))
}

fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn extract_user_content(body: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(body).ok()?;
    let messages = value.get("messages")?.as_array()?;
    messages
        .iter()
        .find(|m| m.get("role").and_then(|r| r.as_str()) == Some("user"))
        .and_then(|m| m.get("content")?.as_str().map(|s| s.to_string()))
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        404 => "Not Found",
        500 => "Internal Server Error",
        _ => "Status",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}
