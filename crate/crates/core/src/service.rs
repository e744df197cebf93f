//! HTTP prediction service.
//!
//! `GET /info` describes the model, `POST /predict` runs one request object
//! through it, and with a static directory configured every other `GET` is
//! served from that directory (`/` maps to `index.html`). All JSON responses
//! carry permissive CORS headers so a separately hosted page can call them.

use std::fs;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Server};

use crate::error::{Error, Result};
use crate::predictor::Predictor;

/// A response before it is written to the socket.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    fn json(status: u16, value: &Value) -> Self {
        Reply { status, content_type: "application/json; charset=utf-8".into(), body: value.to_string().into_bytes() }
    }

    fn error(status: u16, message: impl Into<String>, field: Option<&str>) -> Self {
        Reply::json(status, &json!({"error": message.into(), "field": field}))
    }

    pub fn json_body(&self) -> Option<Value> {
        serde_json::from_slice(&self.body).ok()
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or_default() {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json; charset=utf-8",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

fn static_file(root: &Path, url_path: &str) -> Reply {
    let relative = url_path.trim_start_matches('/');
    let relative = if relative.is_empty() { "index.html" } else { relative };
    let rel = Path::new(relative);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Reply::error(404, format!("no route for {url_path}"), None);
    }
    let mut path = root.join(rel);
    if path.is_dir() {
        path = path.join("index.html");
    }
    match fs::read(&path) {
        Ok(body) => Reply { status: 200, content_type: content_type(&path).into(), body },
        Err(_) => Reply::error(404, format!("no route for {url_path}"), None),
    }
}

fn predict(predictor: &Predictor, body: &[u8]) -> Reply {
    let input: Value = match serde_json::from_slice(body) {
        Ok(v) => v,
        Err(e) => return Reply::error(400, format!("request body is not valid JSON: {e}"), None),
    };
    match predictor.predict_json(&input) {
        Ok(output) => Reply::json(200, &output),
        Err(Error::Data(e)) => Reply::error(400, e.to_string(), e.field()),
        Err(e) => Reply::error(500, e.to_string(), None),
    }
}

/// Routes one request. Socket-free so it can be exercised directly.
pub fn route(predictor: &Predictor, static_dir: Option<&Path>, method: &str, url: &str, body: &[u8]) -> Reply {
    let path = url.split(['?', '#']).next().unwrap_or_default();
    match (method, path) {
        ("OPTIONS", _) => Reply { status: 204, content_type: "text/plain".into(), body: Vec::new() },
        ("GET", "/info") => Reply::json(200, &predictor.info()),
        ("POST", "/predict") => predict(predictor, body),
        (_, "/info" | "/predict") => Reply::error(405, format!("{method} is not allowed on {path}"), None),
        ("GET", _) => match static_dir {
            Some(root) => static_file(root, path),
            None => Reply::error(404, format!("no route for {path}"), None),
        },
        _ => Reply::error(404, format!("no route for {method} {path}"), None),
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub static_dir: Option<PathBuf>,
    pub workers: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions { host: "127.0.0.1".into(), port: 0, static_dir: None, workers: 8 }
    }
}

/// A running service; dropping it without [`ServiceHandle::stop`] leaves the
/// worker threads running.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Signals the workers and waits for them to finish.
    pub fn stop(self) {
        self.stop.store(true, Ordering::SeqCst);
        for w in self.workers {
            let _ = w.join();
        }
    }

    /// Blocks until the workers exit.
    pub fn wait(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("valid header")
}

/// Starts serving `predictor` on background threads.
pub fn serve(predictor: Predictor, options: ServeOptions) -> Result<ServiceHandle> {
    let server = Server::http((options.host.as_str(), options.port))
        .map_err(|e| Error::io(format!("could not listen on {}:{}", options.host, options.port), std::io::Error::other(e.to_string())))?;
    let addr = server.server_addr().to_ip().ok_or_else(|| Error::io("service address", std::io::Error::other("not an IP socket")))?;
    let server = Arc::new(server);
    let predictor = Arc::new(predictor);
    let stop = Arc::new(AtomicBool::new(false));
    let static_dir = Arc::new(options.static_dir);
    let workers = (0..options.workers.max(1))
        .map(|_| {
            let (server, predictor, stop, static_dir) = (server.clone(), predictor.clone(), stop.clone(), static_dir.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let Ok(Some(mut request)) = server.recv_timeout(Duration::from_millis(50)) else { continue };
                    let mut body = Vec::new();
                    let reply = match request.as_reader().read_to_end(&mut body) {
                        Ok(_) => {
                            let method = match request.method() {
                                Method::Get => "GET",
                                Method::Post => "POST",
                                Method::Options => "OPTIONS",
                                _ => "OTHER",
                            };
                            route(&predictor, static_dir.as_deref(), method, request.url(), &body)
                        }
                        Err(e) => Reply::error(400, format!("could not read request body: {e}"), None),
                    };
                    log::debug!("{} {} -> {}", request.method(), request.url(), reply.status);
                    let response = tiny_http::Response::from_data(reply.body)
                        .with_status_code(reply.status)
                        .with_header(header("Content-Type", &reply.content_type))
                        .with_header(header("Access-Control-Allow-Origin", "*"))
                        .with_header(header("Access-Control-Allow-Methods", "GET, POST, OPTIONS"))
                        .with_header(header("Access-Control-Allow-Headers", "Content-Type"));
                    let _ = request.respond(response);
                }
            })
        })
        .collect();
    Ok(ServiceHandle { addr, stop, workers })
}
