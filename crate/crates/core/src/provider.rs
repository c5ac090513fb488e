//! Request/response transport to the external planner model, with
//! record/replay cassettes.
//!
//! Every request is a `(kind, body)` pair. Its cassette key is the SHA-256 of
//! the canonical JSON encoding (object keys sorted, no whitespace) of
//! `{"body": .., "kind": ..}`. A cassette file is a JSON list of
//! `{request_kind, request_hash, request_body, response_body}` records.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const ENV_MODE: &str = "ENVGEN_PROVIDER";
pub const ENV_CASSETTE: &str = "ENVGEN_CASSETTE";
pub const ENV_ENDPOINT: &str = "ENVGEN_LIVE_ENDPOINT";

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("no cassette record for {kind:?} request {hash}")]
    MissingRecord { kind: RequestKind, hash: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unusable {kind:?} response: {message}")]
    Format { kind: RequestKind, message: String },
    #[error("cassette {path}: {message}")]
    Cassette { path: PathBuf, message: String },
    #[error("provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Decompose,
    IdentifyFactors,
    GeneratePlan,
    Refine,
    DesignFloorPlan,
    SelectObjects,
    ProposeRelations,
    ReviseRelations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub kind: RequestKind,
    pub body: Value,
}

impl ProviderRequest {
    pub fn new(kind: RequestKind, body: Value) -> Self {
        Self { kind, body }
    }

    pub fn canonical(&self) -> String {
        let mut out = String::new();
        write_canonical(&serde_json::json!({"kind": self.kind, "body": self.body}), &mut out);
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string encodes"));
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&serde_json::to_string(scalar).expect("scalar encodes")),
    }
}

/// Anything that answers planner requests: a live endpoint, a cassette, or a
/// scripted stand-in.
pub trait Provider {
    fn complete(&mut self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for &mut P {
    fn complete(&mut self, request: &ProviderRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&mut self, request: &ProviderRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub request_kind: RequestKind,
    pub request_hash: String,
    pub request_body: Value,
    pub response_body: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    pub records: Vec<CassetteRecord>,
}

impl Cassette {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self { records: serde_json::from_str(text)? })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("cassette serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Cassette { path: path.into(), message: e.to_string() })?;
        Self::from_json(&text).map_err(|e| ProviderError::Cassette { path: path.into(), message: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| ProviderError::Cassette { path: path.into(), message: e.to_string() })
    }

    pub fn push(&mut self, request: &ProviderRequest, response: impl Into<String>) {
        self.records.push(CassetteRecord {
            request_kind: request.kind,
            request_hash: request.hash(),
            request_body: request.body.clone(),
            response_body: response.into(),
        });
    }

    /// Appends records of `other` whose hash is not already present.
    pub fn merge(&mut self, other: Cassette) {
        for record in other.records {
            if !self.records.iter().any(|r| r.request_hash == record.request_hash) {
                self.records.push(record);
            }
        }
    }
}

/// Serves responses from a cassette. Records sharing a hash are served in
/// file order; the last one repeats once the others are used up.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    cassette: Arc<Cassette>,
    by_hash: HashMap<String, Vec<usize>>,
    served: HashMap<String, usize>,
}

impl ReplayProvider {
    pub fn new(cassette: Arc<Cassette>) -> Self {
        let mut by_hash: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, record) in cassette.records.iter().enumerate() {
            by_hash.entry(record.request_hash.clone()).or_default().push(i);
        }
        Self { cassette, by_hash, served: HashMap::new() }
    }

    pub fn from_path(path: &Path) -> Result<Self, ProviderError> {
        Ok(Self::new(Arc::new(Cassette::load(path)?)))
    }

    /// A fresh handle over the same records with its own read cursors.
    pub fn fork(&self) -> Self {
        Self::new(Arc::clone(&self.cassette))
    }
}

impl Provider for ReplayProvider {
    fn complete(&mut self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let hash = request.hash();
        let Some(indices) = self.by_hash.get(&hash) else {
            return Err(ProviderError::MissingRecord { kind: request.kind, hash });
        };
        let served = self.served.entry(hash).or_insert(0);
        let index = indices[(*served).min(indices.len() - 1)];
        *served += 1;
        Ok(self.cassette.records[index].response_body.clone())
    }
}

/// Posts `{"kind", "hash", "body"}` as JSON to an HTTP endpoint. The response
/// is either a JSON object with a string `response` field or raw text.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), agent: ureq::Agent::new_with_defaults() }
    }
}

impl Provider for HttpProvider {
    fn complete(&mut self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let payload = serde_json::json!({"kind": request.kind, "hash": request.hash(), "body": request.body});
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(payload.to_string())
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => match map.get("response") {
                Some(Value::String(s)) => Ok(s.clone()),
                _ => Ok(text),
            },
            _ => Ok(text),
        }
    }
}

/// Wraps a provider and keeps every exchange as a cassette record.
#[derive(Debug)]
pub struct Recorder<P> {
    inner: P,
    pub cassette: Cassette,
}

impl<P: Provider> Recorder<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, cassette: Cassette::default() }
    }

    pub fn requests(&self) -> impl Iterator<Item = &CassetteRecord> {
        self.cassette.records.iter()
    }

    pub fn into_parts(self) -> (P, Cassette) {
        (self.inner, self.cassette)
    }
}

impl<P: Provider> Provider for Recorder<P> {
    fn complete(&mut self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let response = self.inner.complete(request)?;
        self.cassette.push(request, response.clone());
        Ok(response)
    }
}

/// Live vs replay selection, from CLI flags or the environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderMode {
    Replay { cassette: PathBuf },
    /// Live calls; when `record` is set, exchanges are appended to that cassette.
    Live { endpoint: String, record: Option<PathBuf> },
}

impl ProviderMode {
    pub fn resolve(cassette: Option<PathBuf>, endpoint: Option<String>) -> Result<Self, ProviderError> {
        let mode = std::env::var(ENV_MODE).ok();
        let cassette = cassette.or_else(|| std::env::var(ENV_CASSETTE).ok().map(PathBuf::from));
        let endpoint = endpoint.or_else(|| std::env::var(ENV_ENDPOINT).ok());
        match (mode.as_deref(), endpoint, cassette) {
            (Some("replay"), _, Some(cassette)) | (None, None, Some(cassette)) => {
                if !cassette.is_file() {
                    return Err(ProviderError::Config(format!("cassette {} does not exist", cassette.display())));
                }
                Ok(Self::Replay { cassette })
            }
            (Some("live") | None, Some(endpoint), record) => Ok(Self::Live { endpoint, record }),
            (Some(other), _, _) if other != "live" && other != "replay" => {
                Err(ProviderError::Config(format!("{ENV_MODE} must be `live` or `replay`, got `{other}`")))
            }
            _ => Err(ProviderError::Config("need a cassette (replay) or a live endpoint".into())),
        }
    }
}
