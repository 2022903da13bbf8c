//! A local stand-in for the selector endpoint, used by tests and by bench
//! runs that have no live endpoint configured.

use std::collections::BTreeSet;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockBehavior {
    /// Answers with the number of the first listed element not yet explored,
    /// or `1` when everything has been. A pure function of the prompt.
    FirstUnexplored,
    /// Always answers with this text.
    Fixed(String),
    /// Always fails with this HTTP status.
    Status(u16),
}

#[derive(Default)]
struct Shared {
    requests: AtomicUsize,
    stop: AtomicBool,
    last_auth: Mutex<Option<String>>,
}

/// A running mock endpoint; shuts down when dropped.
pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(behavior: MockBehavior) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared::default());
        let worker = shared.clone();
        let handle = std::thread::Builder::new().name("selector-mock".into()).spawn(move || {
            for stream in listener.incoming() {
                if worker.stop.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    if let Err(e) = serve(stream, &behavior, &worker) {
                        tracing::debug!(error = %e, "mock connection failed");
                    }
                }
            }
        })?;
        Ok(Self { addr, shared, handle: Some(handle) })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/select", self.addr)
    }

    /// Number of requests served so far.
    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    pub fn last_auth(&self) -> Option<String> {
        self.shared.last_auth.lock().expect("mock state poisoned").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[derive(Deserialize)]
struct Body {
    prompt: String,
}

fn serve(stream: TcpStream, behavior: &MockBehavior, shared: &Shared) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut auth = None;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line.trim_end().is_empty() {
            break;
        }
        if let Some((k, v)) = line.trim_end().split_once(':') {
            match k.to_ascii_lowercase().as_str() {
                "content-length" => content_length = v.trim().parse().unwrap_or(0),
                "authorization" => auth = Some(v.trim().to_owned()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;
    shared.requests.fetch_add(1, Ordering::SeqCst);
    *shared.last_auth.lock().expect("mock state poisoned") = auth;

    let (status, payload) = match behavior {
        MockBehavior::Status(code) => (*code, r#"{"error":"mock failure"}"#.to_owned()),
        MockBehavior::Fixed(text) => (200, serde_json::json!({ "text": text }).to_string()),
        MockBehavior::FirstUnexplored => match serde_json::from_slice::<Body>(&body) {
            Ok(b) => (200, serde_json::json!({ "text": first_unexplored(&b.prompt).to_string() }).to_string()),
            Err(_) => (400, r#"{"error":"bad request"}"#.to_owned()),
        },
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} MOCK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    out.flush()
}

/// Reads the numbered element list and the explored list back out of a
/// prompt produced by [`super::build_prompt`].
pub fn first_unexplored(prompt: &str) -> usize {
    let mut listed = Vec::new();
    let mut explored = BTreeSet::new();
    let mut in_explored = false;
    for line in prompt.lines() {
        if line.starts_with("Elements already explored") {
            in_explored = true;
        } else if in_explored {
            if let Some(name) = line.strip_prefix("- ") {
                explored.insert(name);
            }
        } else if let Some((num, rest)) = line.split_once(". [") {
            let name = rest.split_once("] ").map(|(_, r)| r).unwrap_or(rest);
            let name = name.rsplit_once(" (x=").map(|(n, _)| n).unwrap_or(name);
            if let Ok(n) = num.parse::<usize>() {
                listed.push((n, name));
            }
        }
    }
    listed.iter().find(|(_, name)| !explored.contains(name)).map(|(n, _)| *n).unwrap_or(1)
}
