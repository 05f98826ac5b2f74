//! Minimal in-process explorer API implementing the contract documented in
//! the ingestion module. Only meant for tests.
//!
//! Matching records are served sorted by `tx_id`, not by time, so clients
//! must do their own ordering.

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};
use url::Url;

use super::types::parse_time;

#[derive(Debug, Clone, Default)]
pub struct MockExplorer {
    records: Vec<Value>,
    fail_first: usize,
    throttle_first: usize,
    fail_always: bool,
    required_key: Option<String>,
}

impl MockExplorer {
    /// Serves the given raw sale objects. They are not validated, so
    /// malformed entries can be planted on purpose.
    pub fn new(records: Vec<Value>) -> Self {
        MockExplorer {
            records,
            ..Default::default()
        }
    }

    /// Answer the first `n` requests with HTTP 500.
    pub fn fail_first(mut self, n: usize) -> Self {
        self.fail_first = n;
        self
    }

    /// Answer the first `n` requests with HTTP 429 and `Retry-After: 0`.
    pub fn throttle_first(mut self, n: usize) -> Self {
        self.throttle_first = n;
        self
    }

    pub fn fail_always(mut self) -> Self {
        self.fail_always = true;
        self
    }

    /// Reject requests without `Authorization: Bearer <key>`.
    pub fn require_key(mut self, key: &str) -> Self {
        self.required_key = Some(key.to_string());
        self
    }

    pub fn start(self) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let stop = stop.clone();
            let requests = requests.clone();
            let log = log.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let n = requests.fetch_add(1, Ordering::SeqCst);
                    self.handle(stream, n, &log);
                }
            })
        };
        MockServer {
            base_url: Url::parse(&format!("http://{addr}/api/")).unwrap(),
            stop,
            requests,
            log,
            handle: Some(handle),
        }
    }

    fn handle(&self, mut stream: TcpStream, n: usize, log: &Mutex<Vec<String>>) {
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).is_err() {
            return;
        }
        let mut auth = None;
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) if line == "\r\n" || line == "\n" => break,
                Ok(_) => {
                    if let Some((name, value)) = line.split_once(':') {
                        if name.eq_ignore_ascii_case("authorization") {
                            auth = Some(value.trim().to_string());
                        }
                    }
                }
            }
        }
        let target = request_line.split_whitespace().nth(1).unwrap_or("/");
        log.lock().unwrap().push(target.to_string());

        let (status, extra, body) = if self.fail_always || n < self.fail_first {
            (500, "", json!({"error": "internal"}))
        } else if n < self.fail_first + self.throttle_first {
            (429, "Retry-After: 0\r\n", json!({"error": "slow down"}))
        } else if self
            .required_key
            .as_ref()
            .is_some_and(|k| auth.as_deref() != Some(&format!("Bearer {k}")))
        {
            (401, "", json!({"error": "unauthorized"}))
        } else {
            match self.query(target) {
                Ok(body) => (200, "", body),
                Err(e) => (400, "", json!({ "error": e })),
            }
        };
        let body = body.to_string();
        let reason = match status {
            200 => "OK",
            400 => "Bad Request",
            401 => "Unauthorized",
            429 => "Too Many Requests",
            _ => "Internal Server Error",
        };
        let _ = write!(
            stream,
            "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{extra}\r\n{body}",
            body.len()
        );
        let _ = stream.flush();
        let _ = stream.shutdown(Shutdown::Both);
    }

    fn query(&self, target: &str) -> Result<Value, String> {
        let url = Url::parse(&format!("http://mock{target}")).map_err(|e| e.to_string())?;
        if !url.path().ends_with("/sales") {
            return Err(format!("unknown path {}", url.path()));
        }
        let param = |name: &str| {
            url.query_pairs()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v.into_owned())
        };
        let int = |name: &str| -> Result<i64, String> {
            param(name)
                .ok_or_else(|| format!("missing {name}"))?
                .parse()
                .map_err(|_| format!("bad {name}"))
        };
        let (start, end) = (int("start_time")?, int("end_time")?);
        let page = int("page")?.max(1) as usize;
        let page_size = int("page_size")?.max(1) as usize;
        let collection = param("collection");

        let mut hits: Vec<&Value> = self
            .records
            .iter()
            .filter(|r| {
                block_time(r).is_some_and(|t| start <= t && t < end)
                    && collection
                        .as_ref()
                        .is_none_or(|c| r.get("collection_id").and_then(Value::as_str) == Some(c))
            })
            .collect();
        hits.sort_by(|a, b| {
            let key = |v: &Value| v.get("tx_id").map(|t| t.to_string()).unwrap_or_default();
            key(a).cmp(&key(b))
        });
        let from = (page - 1) * page_size;
        let data: Vec<&Value> = hits.iter().skip(from).take(page_size).copied().collect();
        Ok(json!({ "data": data, "has_more": from + data.len() < hits.len() }))
    }
}

fn block_time(v: &Value) -> Option<i64> {
    match v.get("block_time")? {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => parse_time(s).ok().map(|t| t.timestamp()),
        _ => None,
    }
}

/// Running mock server; stops when dropped.
pub struct MockServer {
    pub base_url: Url,
    stop: Arc<AtomicBool>,
    requests: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<String>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Request targets (path and query) in arrival order.
    pub fn request_log(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(addr) = self.base_url.socket_addrs(|| None).ok().and_then(|a| a.first().copied()) {
            let _ = TcpStream::connect(addr);
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
