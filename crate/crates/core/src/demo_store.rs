//! Few-shot demonstrations: embedding, similarity search and prompt rendering.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("embedding error: {0}")]
    Embedding(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("ingest error at line {line} (record {id}): {message}")]
    Ingest {
        line: usize,
        id: String,
        message: String,
    },
    #[error("cannot read demo file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoSource {
    Literature,
    Benchmark,
    /// Earlier turn of the same interactive session.
    Session,
}

/// One line of a demo file. Embeddings are never stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoRecord {
    pub id: String,
    pub question: String,
    pub relevant_tables: Vec<String>,
    pub sql: String,
    pub source: DemoSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Demonstration {
    pub id: String,
    pub question: String,
    pub relevant_tables: Vec<String>,
    pub sql: String,
    pub source: DemoSource,
    #[serde(skip)]
    pub embedding: Vec<f64>,
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, DemoError>;
}

/// Offline embedder: signed feature hashing of word unigrams and character
/// trigrams into a fixed number of buckets, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIMENSION: usize = 384;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, DemoError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(DemoError::Embedding("cannot embed empty text".into()));
        }
        let lower = text.to_lowercase();
        let mut words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric() && c != '_')
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            words.push(&lower);
        }
        let mut v = vec![0.0; self.dimension];
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dimension as u64) as usize] += sign * weight;
        };
        for w in &words {
            add(&format!("w:{w}"), 1.0);
            let padded: Vec<char> = format!("#{w}#").chars().collect();
            for tri in padded.windows(3) {
                add(&format!("c:{}", tri.iter().collect::<String>()), 0.5);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // every feature cancelled out; fall back to a single bucket
            let h = fnv1a(lower.as_bytes());
            v[(h % self.dimension as u64) as usize] = 1.0;
            return Ok(v);
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// Embedding provider behind an OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbedder {
    pub endpoint: String,
    pub model: String,
    pub dimension: usize,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, model: &str, dimension: usize, credential_env: &str) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            dimension,
            credential_env: credential_env.to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, DemoError> {
        let key = std::env::var(&self.credential_env)
            .map_err(|_| DemoError::Embedding(format!("{} is not set", self.credential_env)))?;
        let body = serde_json::json!({ "model": self.model, "input": text });
        let resp: serde_json::Value = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| DemoError::Embedding(e.to_string()))?;
        let v: Vec<f64> = resp["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| DemoError::Embedding("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().unwrap_or(f64::NAN))
            .collect();
        if v.len() != self.dimension || v.iter().any(|x| !x.is_finite()) {
            return Err(DemoError::Embedding(format!(
                "expected {} finite values, got {}",
                self.dimension,
                v.len()
            )));
        }
        Ok(v)
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, DemoError> {
    if u.len() != v.len() {
        return Err(DemoError::Argument(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(DemoError::Argument("zero vector".into()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct DemoStore {
    dimension: usize,
    demos: Vec<Demonstration>,
}

impl DemoStore {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            demos: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    pub fn get(&self, id: &str) -> Option<&Demonstration> {
        self.demos.iter().find(|d| d.id == id)
    }

    /// Adds a demonstration with a precomputed embedding.
    pub fn insert(&mut self, demo: Demonstration) -> Result<(), DemoError> {
        let bad = |m: &str| DemoError::Argument(format!("demo {}: {m}", demo.id));
        if demo.id.is_empty() {
            return Err(DemoError::Argument("demo id is empty".into()));
        }
        if demo.question.trim().is_empty() {
            return Err(bad("question is empty"));
        }
        if demo.sql.trim().is_empty() {
            return Err(bad("sql is empty"));
        }
        if demo.relevant_tables.is_empty() {
            return Err(bad("relevant_tables is empty"));
        }
        if demo.embedding.len() != self.dimension {
            return Err(bad(&format!(
                "embedding has dimension {}, store expects {}",
                demo.embedding.len(),
                self.dimension
            )));
        }
        if demo.embedding.iter().any(|x| !x.is_finite()) {
            return Err(bad("embedding has non-finite entries"));
        }
        if self.get(&demo.id).is_some() {
            return Err(bad("duplicate id"));
        }
        self.demos.push(demo);
        Ok(())
    }

    pub fn add_record(&mut self, record: DemoRecord, embedder: &dyn Embedder) -> Result<(), DemoError> {
        let embedding = embedder.embed(&record.question)?;
        self.insert(Demonstration {
            id: record.id,
            question: record.question,
            relevant_tables: record.relevant_tables,
            sql: record.sql,
            source: record.source,
            embedding,
        })
    }

    /// The `k` demos most similar to `query`, similarity descending, ties by
    /// id ascending. `k` is clamped to the store size.
    pub fn top_k_by_vector(&self, query: &[f64], k: usize) -> Result<Vec<&Demonstration>, DemoError> {
        let mut scored = self
            .demos
            .iter()
            .map(|d| Ok((cosine_similarity(query, &d.embedding)?, d)))
            .collect::<Result<Vec<_>, DemoError>>()?;
        scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.id.cmp(&b.id)));
        scored.truncate(k);
        Ok(scored.into_iter().map(|(_, d)| d).collect())
    }

    pub fn retrieve_top_k(
        &self,
        question: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<&Demonstration>, DemoError> {
        if self.demos.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = embedder.embed(question)?;
        self.top_k_by_vector(&q, k)
    }
}

/// Loads a JSON-lines demo file into `store`, embedding each question.
/// Blank lines are skipped. Nothing is added if any record is invalid.
pub fn ingest_demos(path: &Path, store: &mut DemoStore, embedder: &dyn Embedder) -> Result<usize, DemoError> {
    let text = fs::read_to_string(path)?;
    let mut staged = store.clone();
    let mut count = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let record: DemoRecord = serde_json::from_str(line).map_err(|e| DemoError::Ingest {
            line: line_no,
            id: record_id(line),
            message: e.to_string(),
        })?;
        let id = record.id.clone();
        staged.add_record(record, embedder).map_err(|e| DemoError::Ingest {
            line: line_no,
            id,
            message: e.to_string(),
        })?;
        count += 1;
    }
    *store = staged;
    Ok(count)
}

/// Best-effort id of a malformed record, for error messages.
fn record_id(line: &str) -> String {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("id").and_then(|id| id.as_str()).map(String::from))
        .unwrap_or_else(|| "<unknown>".to_string())
}

/// Formats demos for the prompt in the given order.
pub fn render_demo_block<D: std::borrow::Borrow<Demonstration>>(demos: &[D]) -> String {
    demos
        .iter()
        .map(|d| {
            let d = d.borrow();
            let mut s = format!(
                "## \nQuestion: {}\nAnswer: Let's think step-by-step.\n1. Identify the relevant tables:\n",
                d.question
            );
            for t in &d.relevant_tables {
                s.push_str("-- ");
                s.push_str(t);
                s.push('\n');
            }
            s.push_str("2. Final SQL query:\n");
            s.push_str(&d.sql);
            s
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}
