//! Loopback HTTP stubs for the predict and chat-completions protocols.
//!
//! Each stub serves on its own thread and shuts down when dropped.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::json;
use tiny_http::{Header, Response, Server};

use crate::backends::{Denoiser, DenoiserInput, PredictRequest, PredictResponse};
use crate::error::{Error, Result};

/// `(status, JSON body)` for a `(path, request body)`.
pub type Handler = dyn Fn(&str, &str) -> (u16, String) + Send + Sync;

pub struct StubServer {
    url: String,
    stop: Arc<AtomicBool>,
    hits: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Serve `handler` on `addr` (use port 0 for an ephemeral port).
    pub fn serve(addr: &str, handler: Arc<Handler>) -> Result<Self> {
        let server = Server::http(addr)
            .map_err(|e| Error::Config(format!("cannot bind stub server on {addr}: {e}")))?;
        let url = format!(
            "http://{}",
            server
                .server_addr()
                .to_ip()
                .ok_or_else(|| Error::Config("stub server has no IP address".into()))?
        );
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicUsize::new(0));
        let (stop2, hits2) = (stop.clone(), hits.clone());
        let handle = std::thread::spawn(move || {
            while !stop2.load(Ordering::Relaxed) {
                let Ok(Some(mut req)) = server.recv_timeout(Duration::from_millis(25)) else {
                    continue;
                };
                hits2.fetch_add(1, Ordering::Relaxed);
                let mut body = String::new();
                let (status, reply) = match req.as_reader().read_to_string(&mut body) {
                    Ok(_) => handler(req.url(), &body),
                    Err(e) => (400, json!({"error": e.to_string()}).to_string()),
                };
                let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(
                    Response::from_string(reply)
                        .with_status_code(status)
                        .with_header(header),
                );
            }
        });
        Ok(Self {
            url,
            stop,
            hits,
            handle: Some(handle),
        })
    }

    /// A model server computing `backend` in-process.
    pub fn predict(backend: Arc<dyn Denoiser>) -> Result<Self> {
        Self::predict_on("127.0.0.1:0", backend)
    }

    pub fn predict_on(addr: &str, backend: Arc<dyn Denoiser>) -> Result<Self> {
        Self::serve(
            addr,
            Arc::new(move |path: &str, body: &str| predict_handler(backend.as_ref(), path, body)),
        )
    }

    /// A chat-completions server that always answers with `content`.
    pub fn chat(content: impl Into<String>) -> Result<Self> {
        let content = content.into();
        Self::serve(
            "127.0.0.1:0",
            Arc::new(move |path: &str, _body: &str| {
                if path != "/v1/chat/completions" {
                    return (404, json!({"error": "not found"}).to_string());
                }
                let reply = json!({
                    "id": "stub",
                    "object": "chat.completion",
                    "choices": [{
                        "index": 0,
                        "message": {"role": "assistant", "content": content},
                        "finish_reason": "stop",
                    }],
                });
                (200, reply.to_string())
            }),
        )
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    /// Block until the server thread exits (it only exits once dropped).
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn predict_handler(backend: &dyn Denoiser, path: &str, body: &str) -> (u16, String) {
    if path != "/v1/predict" {
        return (404, json!({"error": "not found"}).to_string());
    }
    let req: PredictRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return (400, json!({"error": e.to_string()}).to_string()),
    };
    let (z, y, m, positions) = match req.decode() {
        Ok(parts) => parts,
        Err(e) => return (400, json!({"error": e.to_string()}).to_string()),
    };
    let input = DenoiserInput {
        z: &z,
        y: &y,
        m: &m,
        t: req.t,
        embedding: &req.emb,
        positions: &positions,
    };
    match backend.predict(&input) {
        Ok(x0) => (
            200,
            serde_json::to_string(&PredictResponse::from_latent(&x0)).unwrap(),
        ),
        Err(e) => (422, json!({"error": e.to_string()}).to_string()),
    }
}
