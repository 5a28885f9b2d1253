//! Request handlers, independent of the transport. Each handler returns a
//! response with status `ok` or `abstained`, or an [`ApiError`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use duckdb::Connection;
use medsql_core::demo_store::{ingest_demos, HttpEmbedder};
use medsql_core::execution_sandbox::{
    open_read_only, AbstainReason, FailureStage, FinalOutcome,
};
use medsql_core::llm_gateway::{AuditLog, Cassette};
use medsql_core::prompt_builder::build_viz_prompt;
use medsql_core::schema_catalog::{introspect, render_schema_block, TableSchema};
use medsql_core::viz_spec::{emit_chart_document, parse_viz_response, validate_viz_spec, ChartDocument, VizSpec, VIZ_NAMES};
use medsql_core::{
    execute_sql, run_pipeline, Backend, Column, DemoStore, Embedder, ExecLimits, Gateway, HashingEmbedder,
    ModelConfig, PipelineContext, PipelineFlags, SchemaCatalog, Value,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::cohort_chain;
use crate::config::{AppConfig, BackendMode, EmbedderKind};
use crate::session::{Sessions, Status, Turn};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn http_status(&self) -> u16 {
        match self {
            ApiError::BadRequest(_) => 400,
            ApiError::NotFound(_) => 404,
            ApiError::Internal(_) => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            status: Status::Error,
            error: match self {
                ApiError::BadRequest(_) => "bad_request",
                ApiError::NotFound(_) => "not_found",
                ApiError::Internal(_) => "internal",
            },
            message: self.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub status: Status,
    pub error: &'static str,
    pub message: String,
}

/// A registered database. The catalog and its rendered block are computed
/// once; each request works on its own clone of the connection.
pub struct Database {
    pub id: String,
    conn: Mutex<Connection>,
    pub catalog: SchemaCatalog,
    pub schema_text: String,
}

impl Database {
    pub fn open(id: &str, path: &Path) -> anyhow::Result<Self> {
        let conn = open_read_only(path).map_err(|e| anyhow::anyhow!("database {id} ({}): {e}", path.display()))?;
        Self::from_connection(id, conn)
    }

    pub fn from_connection(id: &str, conn: Connection) -> anyhow::Result<Self> {
        let catalog = introspect(&conn, id)?;
        let schema_text = render_schema_block(&catalog);
        Ok(Self {
            id: id.to_string(),
            conn: Mutex::new(conn),
            catalog,
            schema_text,
        })
    }

    pub fn connection(&self) -> Result<Connection, ApiError> {
        self.conn
            .lock()
            .map_err(|_| ApiError::Internal("connection lock poisoned".into()))?
            .try_clone()
            .map_err(|e| ApiError::Internal(e.to_string()))
    }
}

/// Per-request overrides of the configured flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlagOverrides {
    pub k_demos: Option<usize>,
    pub include_schema: Option<bool>,
    pub include_cot: Option<bool>,
    pub max_attempts: Option<usize>,
    pub repair_dialect: Option<bool>,
}

impl FlagOverrides {
    pub fn apply(&self, base: &PipelineFlags) -> Result<PipelineFlags, ApiError> {
        if self.max_attempts == Some(0) {
            return Err(ApiError::BadRequest("max_attempts must be at least 1".into()));
        }
        Ok(PipelineFlags {
            k_demos: self.k_demos.unwrap_or(base.k_demos),
            include_schema: self.include_schema.unwrap_or(base.include_schema),
            include_cot: self.include_cot.unwrap_or(base.include_cot),
            max_attempts: self.max_attempts.unwrap_or(base.max_attempts),
            repair_dialect: self.repair_dialect.unwrap_or(base.repair_dialect),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    pub question: String,
    pub database: String,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub flags: FlagOverrides,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttemptSummary {
    pub sql: Option<String>,
    pub failure_stage: Option<FailureStage>,
    pub error: Option<String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryResponse {
    pub status: Status,
    pub session_id: String,
    pub turn: usize,
    pub sql: Option<String>,
    pub result_id: Option<String>,
    pub columns: Vec<Column>,
    /// At most `display_rows` rows; the full result stays in the session.
    pub rows: Vec<Vec<Value>>,
    pub total_rows: usize,
    /// Rows were cut, for display or by the engine row limit.
    pub truncated: bool,
    pub abstain_reason: Option<AbstainReason>,
    pub detail: Option<String>,
    pub attempts: Vec<AttemptSummary>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VizRequest {
    pub session_id: String,
    pub result_id: String,
    /// Defaults to the question that produced the result.
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
}

pub const VIZ_UNAVAILABLE: &str = "viz_unavailable";

#[derive(Debug, Clone, Serialize)]
pub struct VizResponse {
    pub status: Status,
    pub session_id: String,
    pub result_id: String,
    pub spec: Option<VizSpec>,
    pub chart: Option<ChartDocument>,
    pub reason: Option<&'static str>,
    pub detail: Option<String>,
    pub attempts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemaResponse {
    pub status: Status,
    pub database: String,
    pub text: String,
    pub tables: Vec<TableSchema>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryResponse {
    pub status: Status,
    pub session_id: String,
    pub database: String,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortRequest {
    pub session_id: String,
    pub result_id: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortStep {
    pub depth: usize,
    pub label: String,
    pub sql: String,
    pub row_count: Option<i64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortResponse {
    pub status: Status,
    pub session_id: String,
    pub result_id: String,
    pub steps: Vec<CohortStep>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ServiceInfo {
    pub status: Status,
    pub databases: Vec<String>,
    pub models: Vec<String>,
    pub default_model: String,
    pub flags: PipelineFlags,
    pub backend: &'static str,
}

pub struct AppState {
    databases: BTreeMap<String, Database>,
    models: Vec<ModelConfig>,
    default_model: String,
    demos: DemoStore,
    embedder: Box<dyn Embedder>,
    gateway: Gateway,
    pub flags: PipelineFlags,
    pub limits: ExecLimits,
    pub display_rows: usize,
    sessions: Sessions,
}

pub fn build_gateway(config: &AppConfig) -> anyhow::Result<Gateway> {
    let audit = AuditLog::open(&config.audit_log)?;
    let cassette = || config.backend.cassette.as_deref().expect("validated");
    Ok(match config.backend.mode {
        BackendMode::Live => Gateway::new(Backend::live(), audit),
        BackendMode::Replay => Gateway::new(Backend::Replay(Cassette::load(cassette())?), audit),
        BackendMode::Record => Gateway::new(Backend::live(), audit).recording_to(cassette().to_path_buf())?,
    })
}

pub fn build_embedder(config: &AppConfig) -> Box<dyn Embedder> {
    let e = &config.embedder;
    match e.kind {
        EmbedderKind::Hashing => Box::new(HashingEmbedder::new(e.dimension)),
        EmbedderKind::Http => Box::new(HttpEmbedder::new(&e.endpoint, &e.model, e.dimension, &e.credential_env)),
    }
}

impl AppState {
    pub fn new(gateway: Gateway, demos: DemoStore, embedder: Box<dyn Embedder>) -> Self {
        let model = ModelConfig::default();
        Self {
            databases: BTreeMap::new(),
            default_model: model.model_name.clone(),
            models: vec![model],
            demos,
            embedder,
            gateway,
            flags: PipelineFlags::default(),
            limits: ExecLimits::default(),
            display_rows: 200,
            sessions: Sessions::default(),
        }
    }

    pub fn from_config(config: &AppConfig) -> anyhow::Result<Self> {
        let embedder = build_embedder(config);
        let mut demos = DemoStore::new(embedder.dimension());
        if let Some(path) = &config.demos {
            ingest_demos(path, &mut demos, embedder.as_ref())?;
        }
        let mut state = Self::new(build_gateway(config)?, demos, embedder).with_models(config.models.clone());
        state.default_model = config.default_model_name().to_string();
        state.flags = config.flags.clone();
        state.limits = config.limits.exec();
        state.display_rows = config.limits.display_rows;
        for (id, path) in &config.databases {
            state.add_database(Database::open(id, path)?);
        }
        Ok(state)
    }

    /// Replaces the model list; the first entry becomes the default.
    pub fn with_models(mut self, models: Vec<ModelConfig>) -> Self {
        assert!(!models.is_empty());
        self.default_model = models[0].model_name.clone();
        self.models = models;
        self
    }

    pub fn add_database(&mut self, db: Database) {
        self.databases.insert(db.id.clone(), db);
    }

    pub fn database(&self, id: &str) -> Result<&Database, ApiError> {
        self.databases
            .get(id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown database {id:?}")))
    }

    pub fn model(&self, name: Option<&str>) -> Result<&ModelConfig, ApiError> {
        let name = name.unwrap_or(&self.default_model);
        self.models
            .iter()
            .find(|m| m.model_name == name)
            .ok_or_else(|| ApiError::BadRequest(format!("unknown model {name:?}")))
    }

    pub fn demos(&self) -> &DemoStore {
        &self.demos
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn sessions(&self) -> &Sessions {
        &self.sessions
    }

    pub fn info(&self) -> ServiceInfo {
        ServiceInfo {
            status: Status::Ok,
            databases: self.databases.keys().cloned().collect(),
            models: self.models.iter().map(|m| m.model_name.clone()).collect(),
            default_model: self.default_model.clone(),
            flags: self.flags.clone(),
            backend: self.gateway.backend_name(),
        }
    }

    pub fn handle_query(&self, req: QueryRequest) -> Result<QueryResponse, ApiError> {
        if req.question.trim().is_empty() {
            return Err(ApiError::BadRequest("question is empty".into()));
        }
        let db = self.database(&req.database)?;
        let model = self.model(req.model.as_deref())?;
        let flags = req.flags.apply(&self.flags)?;
        let handle = self.sessions.get_or_create(req.session_id.as_deref(), &db.id);
        let mut session = handle.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        if session.database != db.id {
            return Err(ApiError::BadRequest(format!(
                "session {} is bound to database {:?}",
                session.id, session.database
            )));
        }
        let conn = db.connection()?;
        let ctx = PipelineContext {
            catalog: &db.catalog,
            demos: &self.demos,
            embedder: self.embedder.as_ref(),
            model,
            gateway: &self.gateway,
            conn: &conn,
            limits: self.limits,
            flags,
        };
        let outcome = run_pipeline(&req.question, &ctx, &session.prior_turns());
        tracing::info!(
            session = %session.id,
            attempts = outcome.attempts.len(),
            abstained = outcome.abstained(),
            "query"
        );
        let attempts = outcome
            .attempts
            .iter()
            .map(|a| AttemptSummary {
                sql: a.extracted_sql.clone(),
                failure_stage: a.failure_stage,
                error: a.execution_error.clone(),
                latency_ms: a.latency.as_secs_f64() * 1000.0,
            })
            .collect();
        let latency_ms = outcome.total_latency.as_secs_f64() * 1000.0;
        let (answer, detail) = match outcome.final_outcome {
            FinalOutcome::Result { sql, result } => (Ok((sql, result)), None),
            FinalOutcome::Abstained { reason, detail } => (Err(reason), Some(detail)),
        };
        let (columns, rows, total_rows, truncated) = match &answer {
            Ok((_, r)) => (
                r.columns.clone(),
                r.rows.iter().take(self.display_rows).cloned().collect(),
                r.rows.len(),
                r.truncated || r.rows.len() > self.display_rows,
            ),
            Err(_) => (Vec::new(), Vec::new(), 0, false),
        };
        let session_id = session.id.clone();
        let turn = session.push(&req.question, &model.model_name, answer);
        Ok(QueryResponse {
            status: turn.status,
            session_id,
            turn: turn.index,
            sql: turn.sql.clone(),
            result_id: turn.result_id.clone(),
            columns,
            rows,
            total_rows,
            truncated,
            abstain_reason: turn.abstain_reason,
            detail,
            attempts,
            latency_ms,
        })
    }

    /// Chart for a retained result. Only column names and the question go
    /// into the prompt. A malformed answer gets one retry.
    pub fn handle_visualize(&self, req: VizRequest) -> Result<VizResponse, ApiError> {
        let handle = self
            .sessions
            .get(&req.session_id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown session {:?}", req.session_id)))?;
        let mut session = handle.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        let stored = session
            .result(&req.result_id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown or expired result {:?}", req.result_id)))?;
        let model = self.model(req.model.as_deref())?;
        let question = req
            .question
            .filter(|q| !q.trim().is_empty())
            .unwrap_or_else(|| stored.question.clone());
        let mut response = VizResponse {
            status: Status::Abstained,
            session_id: req.session_id,
            result_id: req.result_id,
            spec: None,
            chart: None,
            reason: Some(VIZ_UNAVAILABLE),
            detail: None,
            attempts: 0,
        };
        let columns = stored.result.column_names();
        let prompt = match build_viz_prompt(&VIZ_NAMES, &columns, &question) {
            Ok(p) => p,
            Err(e) => {
                response.detail = Some(e.to_string());
                return Ok(response);
            }
        };
        let mut text = prompt.text.clone();
        for _ in 0..2 {
            response.attempts += 1;
            let completion = match self.gateway.complete_text(&text, model) {
                Ok(c) => c.completion,
                Err(e) => {
                    response.detail = Some(e.to_string());
                    break;
                }
            };
            let checked = parse_viz_response(&completion)
                .and_then(|spec| validate_viz_spec(&spec, &stored.result).map(|v| (spec, v)));
            match checked {
                Ok((spec, viz)) => {
                    response.chart = Some(emit_chart_document(&viz, &stored.result, &question));
                    response.spec = Some(spec);
                    response.status = Status::Ok;
                    response.reason = None;
                    response.detail = None;
                    break;
                }
                Err(e) => {
                    text = format!(
                        "{}\n\nYour previous answer could not be used: {e}\n\
                         Answer with one line: VizType: <number>; Xaxis: <column>; Yaxis: <column>",
                        prompt.text
                    );
                    response.detail = Some(e.to_string());
                }
            }
        }
        Ok(response)
    }

    pub fn handle_schema(&self, database: &str) -> Result<SchemaResponse, ApiError> {
        let db = self.database(database)?;
        Ok(SchemaResponse {
            status: Status::Ok,
            database: db.id.clone(),
            text: db.schema_text.clone(),
            tables: db.catalog.tables().to_vec(),
        })
    }

    pub fn handle_history(&self, session_id: &str) -> Result<HistoryResponse, ApiError> {
        let handle = self
            .sessions
            .get(session_id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown session {session_id:?}")))?;
        let session = handle.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        Ok(HistoryResponse {
            status: Status::Ok,
            session_id: session.id.clone(),
            database: session.database.clone(),
            turns: session.turns().to_vec(),
        })
    }

    /// Filter chain of a retained result's query, each step with its row count.
    pub fn handle_cohort_flow(&self, req: CohortRequest) -> Result<CohortResponse, ApiError> {
        let handle = self
            .sessions
            .get(&req.session_id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown session {:?}", req.session_id)))?;
        let mut session = handle.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        let sql = session
            .result(&req.result_id)
            .map(|r| r.sql.clone())
            .ok_or_else(|| ApiError::NotFound(format!("unknown or expired result {:?}", req.result_id)))?;
        let db = self.database(&session.database)?;
        let conn = db.connection()?;
        let chain = cohort_chain(&sql).map_err(ApiError::BadRequest)?;
        let steps = chain
            .into_iter()
            .map(|step| {
                let count_sql = format!("SELECT COUNT(*) FROM ({}) AS cohort_step", step.sql);
                let (row_count, error) = match execute_sql(&count_sql, &conn, self.limits) {
                    Ok(r) => match r.rows.first().and_then(|row| row.first()) {
                        Some(Value::Int(n)) => (Some(*n), None),
                        other => (None, Some(format!("unexpected count {other:?}"))),
                    },
                    Err(e) => (None, Some(e.to_string())),
                };
                CohortStep {
                    depth: step.depth,
                    label: step.label,
                    sql: step.sql,
                    row_count,
                    error,
                }
            })
            .collect();
        Ok(CohortResponse {
            status: Status::Ok,
            session_id: req.session_id,
            result_id: req.result_id,
            steps,
        })
    }
}
