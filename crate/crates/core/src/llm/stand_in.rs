//! A local chat-completions endpoint driven by a script, for offline runs.
//!
//! Replies are picked by the first rule whose `contains` text occurs in the
//! user message, falling back to `default_reply`. Faults inject HTTP status
//! codes by request number (0-based, in arrival order).

use std::io;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyRule {
    pub contains: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub request: usize,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StandInScript {
    pub default_reply: String,
    pub rules: Vec<ReplyRule>,
    pub faults: Vec<Fault>,
    /// Every request from this number on is answered with HTTP 500.
    pub fail_from: Option<usize>,
    pub latency_ms: u64,
    /// Reject requests without a bearer credential (HTTP 401).
    pub require_auth: bool,
}

impl Default for StandInScript {
    fn default() -> Self {
        Self {
            default_reply: "high".to_string(),
            rules: Vec::new(),
            faults: Vec::new(),
            fail_from: None,
            latency_ms: 0,
            require_auth: true,
        }
    }
}

impl StandInScript {
    pub fn always(reply: &str) -> Self {
        Self {
            default_reply: reply.to_string(),
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn reply_for(&self, prompt: &str) -> &str {
        self.rules
            .iter()
            .find(|r| prompt.contains(&r.contains))
            .map_or(self.default_reply.as_str(), |r| r.reply.as_str())
    }

    fn status_for(&self, request: usize) -> u16 {
        if self.fail_from.is_some_and(|n| request >= n) {
            return 500;
        }
        self.faults
            .iter()
            .find(|f| f.request == request)
            .map_or(200, |f| f.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub request: usize,
    pub status: u16,
    pub at: Instant,
    pub prompt: String,
}

#[derive(Default)]
struct Shared {
    next: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    log: Mutex<Vec<CallRecord>>,
}

pub struct StandInServer {
    server: Arc<tiny_http::Server>,
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

const WORKERS: usize = 16;

impl StandInServer {
    /// Binds to an ephemeral localhost port and starts serving.
    pub fn start(script: StandInScript) -> io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("stand-in bound to a non-IP address"))?;
        let server = Arc::new(server);
        let shared = Arc::new(Shared::default());
        let script = Arc::new(script);
        let workers = (0..WORKERS)
            .map(|_| {
                let server = Arc::clone(&server);
                let shared = Arc::clone(&shared);
                let script = Arc::clone(&script);
                thread::spawn(move || {
                    while let Ok(request) = server.recv() {
                        handle(request, &script, &shared);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            shared,
            workers,
            addr,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.shared.log.lock().unwrap().clone()
    }

    /// Highest number of requests observed in progress at once.
    pub fn max_concurrency(&self) -> usize {
        self.shared.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for StandInServer {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn handle(mut request: tiny_http::Request, script: &StandInScript, shared: &Shared) {
    let now = shared.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    shared.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let number = shared.next.fetch_add(1, Ordering::SeqCst);

    let mut body = String::new();
    let read = request.as_reader().read_to_string(&mut body);
    let authorized = request.headers().iter().any(|h| {
        h.field.equiv("Authorization")
            && h.value
                .as_str()
                .strip_prefix("Bearer ")
                .is_some_and(|t| !t.trim().is_empty())
    });
    let prompt = read
        .ok()
        .and_then(|_| serde_json::from_str::<serde_json::Value>(&body).ok())
        .and_then(|v| {
            v.pointer("/messages/0/content")
                .and_then(|c| c.as_str())
                .map(str::to_string)
        });

    if script.latency_ms > 0 {
        thread::sleep(Duration::from_millis(script.latency_ms));
    }

    let (status, payload) = if script.require_auth && !authorized {
        (401, json!({"error": {"message": "missing credential"}}))
    } else if let Some(prompt) = &prompt {
        match script.status_for(number) {
            200 => (200, completion(script.reply_for(prompt))),
            s => (s, json!({"error": {"message": format!("scripted status {s}")}})),
        }
    } else {
        (400, json!({"error": {"message": "expected messages[0].content"}}))
    };

    shared.log.lock().unwrap().push(CallRecord {
        request: number,
        status,
        at: Instant::now(),
        prompt: prompt.unwrap_or_default(),
    });
    shared.in_flight.fetch_sub(1, Ordering::SeqCst);

    let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
        .expect("static header");
    let response = tiny_http::Response::from_string(payload.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

fn completion(reply: &str) -> serde_json::Value {
    json!({
        "id": "stand-in",
        "object": "chat.completion",
        "model": "stand-in",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": reply},
            "finish_reason": "stop"
        }]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_match_in_order() {
        let s = StandInScript {
            rules: vec![
                ReplyRule {
                    contains: "rises".into(),
                    reply: "high".into(),
                },
                ReplyRule {
                    contains: "pitch".into(),
                    reply: "low".into(),
                },
            ],
            default_reply: "unsure".into(),
            ..Default::default()
        };
        assert_eq!(s.reply_for("pitch rises"), "high");
        assert_eq!(s.reply_for("pitch falls"), "low");
        assert_eq!(s.reply_for("nothing"), "unsure");
    }

    #[test]
    fn fault_schedule() {
        let s = StandInScript {
            faults: vec![Fault {
                request: 1,
                status: 429,
            }],
            fail_from: Some(5),
            ..Default::default()
        };
        assert_eq!(s.status_for(0), 200);
        assert_eq!(s.status_for(1), 429);
        assert_eq!(s.status_for(4), 200);
        assert_eq!(s.status_for(5), 500);
    }

    #[test]
    fn script_json_defaults() {
        let s: StandInScript = serde_json::from_str(r#"{"default_reply":"low"}"#).unwrap();
        assert_eq!(s.default_reply, "low");
        assert!(s.require_auth);
        assert!(s.rules.is_empty());
    }
}
