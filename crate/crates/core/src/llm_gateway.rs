//! The only path from this process to a language model.
//!
//! Every prompt is appended to the audit log before it is dispatched, whatever
//! the backend. Replay and scripted backends never touch the network.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt_builder::PromptBundle;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("model request failed: {0}")]
    Network(String),
    #[error("cassette miss for model {model} prompt {hash}")]
    CassetteMiss { model: String, hash: String },
    #[error("scripted backend has no responses left")]
    ScriptExhausted,
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("audit log failure: {0}")]
    Audit(String),
    #[error("cassette error: {0}")]
    Cassette(String),
    #[error("model returned an empty completion")]
    EmptyCompletion,
}

impl GatewayError {
    /// Whether the caller may try the same request again.
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Network(_) | GatewayError::EmptyCompletion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model_name: String,
    pub endpoint: String,
    /// Environment variable holding the API key. Keys are never stored in config.
    pub credential_env: String,
    pub timeout_secs: u64,
    /// `None` leaves decoding to the provider default (reasoning models reject
    /// explicit temperatures).
    pub temperature: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model_name: "o3-2025-04-16".to_string(),
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            credential_env: "OPENAI_API_KEY".to_string(),
            timeout_secs: 120,
            temperature: None,
        }
    }
}

impl ModelConfig {
    pub fn named(model_name: &str) -> Self {
        Self {
            model_name: model_name.to_string(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model_name.trim().is_empty() {
            return Err("model_name is empty".into());
        }
        if self.timeout_secs == 0 {
            return Err("timeout must be positive".into());
        }
        Ok(())
    }
}

/// SHA-256 of the UTF-8 prompt, lower-case hex.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_hash: String,
    pub prompt: String,
    pub completion: String,
    pub model_name: String,
    pub latency_ms: u64,
    pub timestamp: String,
}

impl CompletionRecord {
    pub fn latency(&self) -> Duration {
        Duration::from_millis(self.latency_ms)
    }
}

/// One recorded completion, keyed by (model_name, prompt_hash).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub model_name: String,
    pub prompt_hash: String,
    pub prompt: String,
    pub completion: String,
    pub latency_ms: u64,
}

impl CassetteEntry {
    pub fn new(model_name: &str, prompt: &str, completion: &str, latency_ms: u64) -> Self {
        Self {
            model_name: model_name.to_string(),
            prompt_hash: prompt_hash(prompt),
            prompt: prompt.to_string(),
            completion: completion.to_string(),
            latency_ms,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: HashMap<(String, String), CassetteEntry>,
}

impl Cassette {
    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Result<Self, GatewayError> {
        let mut c = Cassette::default();
        for e in entries {
            if e.prompt_hash != prompt_hash(&e.prompt) {
                return Err(GatewayError::Cassette(format!(
                    "entry {} does not match its prompt",
                    e.prompt_hash
                )));
            }
            let key = (e.model_name.clone(), e.prompt_hash.clone());
            if let Some(prev) = c.entries.get(&key) {
                if prev.completion != e.completion {
                    return Err(GatewayError::Cassette(format!(
                        "conflicting completions for {}",
                        e.prompt_hash
                    )));
                }
            }
            c.entries.insert(key, e);
        }
        Ok(c)
    }

    /// Reads a JSON-lines cassette file.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let file = File::open(path).map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::Cassette(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line)
                    .map_err(|e| GatewayError::Cassette(format!("{}:{}: {e}", path.display(), i + 1)))?,
            );
        }
        Self::from_entries(entries)
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let mut entries: Vec<&CassetteEntry> = self.entries.values().collect();
        entries.sort_by(|a, b| (&a.model_name, &a.prompt_hash).cmp(&(&b.model_name, &b.prompt_hash)));
        let mut out = String::new();
        for e in entries {
            out.push_str(&serde_json::to_string(e).map_err(|e| GatewayError::Cassette(e.to_string()))?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| GatewayError::Cassette(e.to_string()))
    }

    pub fn get(&self, model_name: &str, hash: &str) -> Option<&CassetteEntry> {
        self.entries.get(&(model_name.to_string(), hash.to_string()))
    }

    pub fn insert(&mut self, entry: CassetteEntry) {
        self.entries
            .insert((entry.model_name.clone(), entry.prompt_hash.clone()), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub timestamp: String,
    pub backend: String,
    pub model_name: String,
    pub prompt_hash: String,
    pub prompt: String,
}

/// Append-only JSON-lines log of outbound prompts with a single writer.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    inner: Mutex<(File, u64)>,
}

impl AuditLog {
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let existing = if path.exists() { read_audit_log(path)?.len() as u64 } else { 0 };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Audit(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner: Mutex::new((file, existing)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(&self, backend: &str, model_name: &str, hash: &str, prompt: &str) -> Result<(), GatewayError> {
        let mut guard = self.inner.lock().map_err(|_| GatewayError::Audit("log lock poisoned".into()))?;
        let (file, seq) = &mut *guard;
        let entry = AuditEntry {
            seq: *seq,
            timestamp: chrono::Utc::now().to_rfc3339(),
            backend: backend.to_string(),
            model_name: model_name.to_string(),
            prompt_hash: hash.to_string(),
            prompt: prompt.to_string(),
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| GatewayError::Audit(e.to_string()))?;
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| GatewayError::Audit(format!("{}: {e}", self.path.display())))?;
        *seq += 1;
        Ok(())
    }
}

pub fn read_audit_log(path: &Path) -> Result<Vec<AuditEntry>, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Audit(e.to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| GatewayError::Audit(e.to_string())))
        .collect()
}

/// Every (sequence number, canary) pair where a canary occurs in a logged prompt.
pub fn scan_audit_log(path: &Path, canaries: &[String]) -> Result<Vec<(u64, String)>, GatewayError> {
    let mut hits = Vec::new();
    for entry in read_audit_log(path)? {
        for c in canaries {
            if entry.prompt.contains(c.as_str()) {
                hits.push((entry.seq, c.clone()));
            }
        }
    }
    Ok(hits)
}

pub enum Backend {
    /// Chat-completion HTTP call.
    Live(reqwest::blocking::Client),
    Replay(Cassette),
    Scripted(Mutex<VecDeque<String>>),
}

impl Backend {
    pub fn live() -> Self {
        Backend::Live(reqwest::blocking::Client::new())
    }

    pub fn scripted<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Backend::Scripted(Mutex::new(responses.into_iter().map(Into::into).collect()))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Live(_) => "live",
            Backend::Replay(_) => "replay",
            Backend::Scripted(_) => "scripted",
        }
    }
}

/// Writes every successful completion to a cassette file, which is rewritten
/// after each call so an interrupted run keeps what it has.
struct Recorder {
    cassette: Mutex<Cassette>,
    path: PathBuf,
}

pub struct Gateway {
    backend: Backend,
    audit: AuditLog,
    recorder: Option<Recorder>,
}

impl Gateway {
    pub fn new(backend: Backend, audit: AuditLog) -> Self {
        Self {
            backend,
            audit,
            recorder: None,
        }
    }

    /// Records completions into `path`, extending the cassette already there.
    pub fn recording_to(mut self, path: PathBuf) -> Result<Self, GatewayError> {
        let cassette = if path.exists() {
            Cassette::load(&path)?
        } else {
            Cassette::default()
        };
        self.recorder = Some(Recorder {
            cassette: Mutex::new(cassette),
            path,
        });
        Ok(self)
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn audit_path(&self) -> &Path {
        self.audit.path()
    }

    pub fn complete(&self, prompt: &PromptBundle, config: &ModelConfig) -> Result<CompletionRecord, GatewayError> {
        self.complete_text(&prompt.text, config)
    }

    pub fn complete_text(&self, prompt: &str, config: &ModelConfig) -> Result<CompletionRecord, GatewayError> {
        let hash = prompt_hash(prompt);
        // logged before dispatch so that failed calls are audited too
        self.audit
            .append(self.backend.name(), &config.model_name, &hash, prompt)?;
        let started = Instant::now();
        let (completion, latency_ms) = match &self.backend {
            Backend::Replay(cassette) => {
                let entry = cassette
                    .get(&config.model_name, &hash)
                    .ok_or_else(|| GatewayError::CassetteMiss {
                        model: config.model_name.clone(),
                        hash: hash.clone(),
                    })?;
                (entry.completion.clone(), entry.latency_ms)
            }
            Backend::Scripted(queue) => {
                let next = queue
                    .lock()
                    .map_err(|_| GatewayError::ScriptExhausted)?
                    .pop_front()
                    .ok_or(GatewayError::ScriptExhausted)?;
                (next, started.elapsed().as_millis() as u64)
            }
            Backend::Live(client) => {
                let text = live_call(client, prompt, config)?;
                (text, started.elapsed().as_millis() as u64)
            }
        };
        if completion.is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        if let Some(rec) = &self.recorder {
            let mut c = rec
                .cassette
                .lock()
                .map_err(|_| GatewayError::Cassette("lock poisoned".into()))?;
            c.insert(CassetteEntry::new(&config.model_name, prompt, &completion, latency_ms));
            c.save(&rec.path)?;
        }
        Ok(CompletionRecord {
            prompt_hash: hash,
            prompt: prompt.to_string(),
            completion,
            model_name: config.model_name.clone(),
            latency_ms,
            timestamp: chrono::Utc::now().to_rfc3339(),
        })
    }
}

fn live_call(client: &reqwest::blocking::Client, prompt: &str, config: &ModelConfig) -> Result<String, GatewayError> {
    let key = std::env::var(&config.credential_env)
        .map_err(|_| GatewayError::MissingCredential(config.credential_env.clone()))?;
    let mut body = serde_json::json!({
        "model": config.model_name,
        "messages": [{ "role": "user", "content": prompt }],
    });
    if let Some(t) = config.temperature {
        body["temperature"] = serde_json::json!(t);
    }
    let resp: serde_json::Value = client
        .post(&config.endpoint)
        .bearer_auth(key)
        .timeout(Duration::from_secs(config.timeout_secs))
        .json(&body)
        .send()
        .and_then(|r| r.error_for_status())
        .and_then(|r| r.json())
        .map_err(|e| GatewayError::Network(e.to_string()))?;
    resp["choices"][0]["message"]["content"]
        .as_str()
        .map(String::from)
        .ok_or_else(|| GatewayError::Network("response has no choices[0].message.content".into()))
}
