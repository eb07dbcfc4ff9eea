//! In-process HTTP fixtures for tests, benches and demos.
//!
//! One loopback server plays every remote the pipeline talks to: canned
//! repository pages and resolver answers, a knowledge-graph write API that
//! upserts by `natural_key`, and a deterministic `/embed` endpoint. Nothing
//! here touches the network. [`synth`] generates scripts with known chains.

pub mod synth;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

#[derive(Debug, Clone)]
struct Canned {
    status: u16,
    body: Vec<u8>,
    /// Answer this many requests with `fail_status` first.
    failures_left: u32,
    fail_status: u16,
}

/// What the knowledge-graph endpoint has stored.
#[derive(Debug, Default, Clone)]
pub struct GraphStore {
    /// natural_key -> (collection, id, body).
    pub resources: BTreeMap<String, (String, String, Value)>,
    pub created: usize,
    pub next_id: u64,
}

#[derive(Default)]
struct State {
    routes: BTreeMap<String, Canned>,
    graph: Option<GraphStore>,
    embed: bool,
    hits: BTreeMap<String, u32>,
    reject_token: Option<String>,
}

pub struct FixtureServer {
    server: Arc<Server>,
    state: Arc<Mutex<State>>,
    handle: Option<JoinHandle<()>>,
    base_url: String,
}

impl FixtureServer {
    pub fn start() -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind loopback"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let state = Arc::new(Mutex::new(State::default()));
        let (s, st) = (server.clone(), state.clone());
        let handle = std::thread::spawn(move || {
            while let Ok(mut req) = s.recv() {
                let mut body = Vec::new();
                let _ = req.as_reader().read_to_end(&mut body);
                let auth = req
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.to_string());
                let (status, bytes) = handle(&st, req.method().as_str(), req.url(), &body, auth.as_deref());
                let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(Response::from_data(bytes).with_status_code(status).with_header(header));
            }
        });
        Self { server, state, handle: Some(handle), base_url: format!("http://127.0.0.1:{port}") }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    /// Serve `body` for GETs of `path_and_query` (exact match first, then the
    /// path without its query).
    pub fn route(&self, path_and_query: &str, status: u16, body: impl Into<Vec<u8>>) -> &Self {
        self.state.lock().unwrap().routes.insert(
            path_and_query.to_string(),
            Canned { status, body: body.into(), failures_left: 0, fail_status: 500 },
        );
        self
    }

    pub fn route_json(&self, path_and_query: &str, value: &Value) -> &Self {
        self.route(path_and_query, 200, serde_json::to_vec(value).unwrap())
    }

    /// Make the next `times` requests to `path_and_query` fail with `status`.
    pub fn fail_first(&self, path_and_query: &str, times: u32, status: u16) -> &Self {
        let mut st = self.state.lock().unwrap();
        let c = st.routes.get_mut(path_and_query).expect("route must exist");
        c.failures_left = times;
        c.fail_status = status;
        self
    }

    /// Enable `POST /papers|/resources|/statements`.
    pub fn with_graph_store(&self) -> &Self {
        self.state.lock().unwrap().graph = Some(GraphStore { next_id: 1, ..GraphStore::default() });
        self
    }

    /// Require `Authorization: Bearer <token>` on writes; others get 401.
    pub fn require_token(&self, token: &str) -> &Self {
        self.state.lock().unwrap().reject_token = Some(token.to_string());
        self
    }

    /// Enable `POST /embed`.
    pub fn with_embeddings(&self) -> &Self {
        self.state.lock().unwrap().embed = true;
        self
    }

    pub fn graph_store(&self) -> GraphStore {
        self.state.lock().unwrap().graph.clone().unwrap_or_default()
    }

    /// Requests seen for a path (query stripped).
    pub fn hits(&self, path: &str) -> u32 {
        self.state.lock().unwrap().hits.get(path).copied().unwrap_or(0)
    }

    pub fn total_hits(&self) -> u32 {
        self.state.lock().unwrap().hits.values().sum()
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle(state: &Mutex<State>, method: &str, url: &str, body: &[u8], auth: Option<&str>) -> (u16, Vec<u8>) {
    let mut st = state.lock().unwrap();
    let path = url.split('?').next().unwrap_or(url).to_string();
    *st.hits.entry(path.clone()).or_default() += 1;

    if method == "POST" {
        if path == "/embed" && st.embed {
            return embed(body);
        }
        if matches!(path.as_str(), "/papers" | "/resources" | "/statements") && st.graph.is_some() {
            if let Some(token) = &st.reject_token {
                if auth != Some(format!("Bearer {token}").as_str()) {
                    return (401, br#"{"error":"unauthorized"}"#.to_vec());
                }
            }
            let graph = st.graph.as_mut().unwrap();
            return upsert(graph, &path, body);
        }
        return (404, br#"{"error":"no such endpoint"}"#.to_vec());
    }

    let key = if st.routes.contains_key(url) { url.to_string() } else { path };
    match st.routes.get_mut(&key) {
        Some(c) if c.failures_left > 0 => {
            c.failures_left -= 1;
            (c.fail_status, br#"{"error":"injected"}"#.to_vec())
        }
        Some(c) => (c.status, c.body.clone()),
        None => (404, br#"{"error":"not found"}"#.to_vec()),
    }
}

fn upsert(graph: &mut GraphStore, collection: &str, body: &[u8]) -> (u16, Vec<u8>) {
    let Ok(v) = serde_json::from_slice::<Value>(body) else {
        return (400, br#"{"error":"invalid JSON"}"#.to_vec());
    };
    let Some(key) = v.get("natural_key").and_then(Value::as_str).map(str::to_string) else {
        return (422, br#"{"error":"natural_key is required"}"#.to_vec());
    };
    if collection == "/statements" && (v.get("subject").is_none() || v.get("predicate").is_none()) {
        return (422, br#"{"error":"statement needs subject and predicate"}"#.to_vec());
    }
    let (id, created) = match graph.resources.get(&key) {
        Some((_, id, _)) => (id.clone(), false),
        None => {
            let id = format!("R{}", graph.next_id);
            graph.next_id += 1;
            graph.created += 1;
            graph.resources.insert(key, (collection.to_string(), id.clone(), v));
            (id, true)
        }
    };
    (if created { 201 } else { 200 }, serde_json::to_vec(&json!({ "id": id, "created": created })).unwrap())
}

/// Hashed character-trigram counts: similar strings get similar vectors.
fn embed(body: &[u8]) -> (u16, Vec<u8>) {
    const DIM: usize = 64;
    let Ok(v) = serde_json::from_slice::<Value>(body) else {
        return (400, br#"{"error":"invalid JSON"}"#.to_vec());
    };
    let Some(texts) = v.get("texts").and_then(Value::as_array) else {
        return (422, br#"{"error":"texts is required"}"#.to_vec());
    };
    let vectors: Vec<Vec<f64>> = texts
        .iter()
        .map(|t| {
            let padded: Vec<char> = format!("  {}  ", t.as_str().unwrap_or("").to_lowercase()).chars().collect();
            let mut out = vec![0.0; DIM];
            for w in padded.windows(3) {
                let h = w.iter().fold(2166136261u32, |h, c| (h ^ *c as u32).wrapping_mul(16777619));
                out[h as usize % DIM] += 1.0;
            }
            out
        })
        .collect();
    (200, serde_json::to_vec(&json!({ "vectors": vectors })).unwrap())
}

/// A Zenodo-style search page with the given hits.
pub fn zenodo_page(hits: Vec<Value>, next: Option<&str>) -> Value {
    json!({ "hits": { "hits": hits, "total": 0 }, "links": { "next": next } })
}

/// A Zenodo-style software hit whose archive is served at `archive_url`.
pub fn zenodo_hit(doi: &str, title: &str, archive_url: &str, size: u64, related: &[&str]) -> Value {
    json!({
        "doi": doi,
        "metadata": {
            "title": title,
            "resource_type": { "type": "software" },
            "related_identifiers": related
                .iter()
                .map(|d| json!({ "identifier": d, "relation": "isSupplementTo", "scheme": "doi" }))
                .collect::<Vec<_>>(),
        },
        "files": [{ "key": "code.zip", "size": size, "links": { "self": archive_url } }],
    })
}

/// An Unpaywall-style answer.
pub fn unpaywall(doi: &str, is_oa: bool, pdf: Option<&str>) -> Value {
    json!({
        "doi": doi,
        "is_oa": is_oa,
        "best_oa_location": pdf.map(|p| json!({ "url_for_pdf": p })),
    })
}
