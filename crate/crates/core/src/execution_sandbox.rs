//! Local read-only execution and the generate / check / execute / retry loop.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use duckdb::core::LogicalTypeId;
use duckdb::types::{TimeUnit, Value as DuckValue};
use duckdb::{AccessMode, Config, Connection};
use medsql_dialect::token::{tokenize, Token};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demo_store::{render_demo_block, DemoSource, DemoStore, Demonstration, Embedder};
use crate::llm_gateway::{Gateway, GatewayError, ModelConfig};
use crate::prompt_builder::{build_retry_prompt, build_sql_prompt, PromptBundle};
use crate::query_result::{Column, QueryResult, Value};
use crate::schema_catalog::{render_schema_block, SchemaCatalog};
use crate::sql_postprocess::{canonicalize, collect_identifiers, extract_sql, guardrail_check, GuardrailOptions, GuardrailReport};
use crate::serde_duration_ms;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    /// Engine message, verbatim.
    #[error("{0}")]
    Engine(String),
    #[error("query exceeded the {0:?} time limit")]
    Timeout(Duration),
    #[error("rejected by read-only policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecLimits {
    pub timeout: Duration,
    pub max_rows: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            max_rows: 10_000,
        }
    }
}

/// Opens a database file without write access.
pub fn open_read_only(path: &Path) -> Result<Connection, ExecError> {
    let config = Config::default()
        .access_mode(AccessMode::ReadOnly)
        .map_err(|e| ExecError::Engine(e.to_string()))?;
    Connection::open_with_flags(path, config).map_err(|e| ExecError::Engine(e.to_string()))
}

const WRITE_KEYWORDS: &[&str] = &[
    "INSERT", "UPDATE", "DELETE", "CREATE", "DROP", "ALTER", "ATTACH", "DETACH", "COPY", "PRAGMA", "INSTALL",
    "LOAD", "EXPORT", "IMPORT", "CALL", "SET", "RESET", "VACUUM", "CHECKPOINT", "TRUNCATE", "MERGE", "GRANT",
    "BEGIN", "COMMIT", "ROLLBACK", "USE",
];

/// Accepts a single query statement. DuckDB-only syntax the lexer does not
/// know is rejected here too; such queries cannot pass the guardrail anyway.
pub fn check_read_only(sql: &str) -> Result<(), ExecError> {
    let tokens = tokenize(sql).map_err(|e| ExecError::Policy(e.to_string()))?;
    let mut significant: Vec<&Token> = tokens.iter().map(|t| &t.token).filter(|t| **t != Token::Eof).collect();
    while significant.last() == Some(&&Token::SemiColon) {
        significant.pop();
    }
    let first = significant.first().ok_or_else(|| ExecError::Policy("empty statement".into()))?;
    if !(first.is_keyword("SELECT")
        || first.is_keyword("WITH")
        || first.is_keyword("VALUES")
        || **first == Token::LParen)
    {
        return Err(ExecError::Policy(format!("statement starts with {first}")));
    }
    if significant.contains(&&Token::SemiColon) {
        return Err(ExecError::Policy("multiple statements".into()));
    }
    if let Some(kw) = significant
        .iter()
        .find_map(|t| WRITE_KEYWORDS.iter().find(|kw| t.is_keyword(kw)))
    {
        return Err(ExecError::Policy(format!("{kw} is not allowed")));
    }
    Ok(())
}

/// Runs one read-only query, materializing at most `limits.max_rows` rows.
pub fn execute_sql(sql: &str, conn: &Connection, limits: ExecLimits) -> Result<QueryResult, ExecError> {
    check_read_only(sql)?;
    let timed_out = Arc::new(AtomicBool::new(false));
    let (done_tx, done_rx) = mpsc::channel::<()>();
    let watchdog = {
        let handle = conn.interrupt_handle();
        let timed_out = Arc::clone(&timed_out);
        let timeout = limits.timeout;
        thread::spawn(move || {
            if let Err(mpsc::RecvTimeoutError::Timeout) = done_rx.recv_timeout(timeout) {
                timed_out.store(true, Ordering::SeqCst);
                handle.interrupt();
            }
        })
    };
    let result = run_query(sql, conn, limits.max_rows);
    drop(done_tx);
    let _ = watchdog.join();
    result.map_err(|e| {
        if timed_out.load(Ordering::SeqCst) {
            ExecError::Timeout(limits.timeout)
        } else {
            ExecError::Engine(e.to_string())
        }
    })
}

fn run_query(sql: &str, conn: &Connection, max_rows: usize) -> duckdb::Result<QueryResult> {
    let mut stmt = conn.prepare(sql)?;
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    let mut truncated = false;
    while let Some(row) = rows.next()? {
        if out.len() == max_rows {
            truncated = true;
            break;
        }
        let stmt = row.as_ref();
        let n = stmt.column_count();
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            values.push(convert(row.get::<_, DuckValue>(i)?));
        }
        out.push(values);
    }
    let columns = match rows.as_ref() {
        Some(stmt) => stmt
            .column_names()
            .into_iter()
            .enumerate()
            .map(|(i, name)| Column {
                name,
                type_name: type_name(stmt.column_logical_type(i).id()),
            })
            .collect(),
        None => Vec::new(),
    };
    let mut result = QueryResult::new(columns, out);
    result.truncated = truncated;
    Ok(result)
}

fn type_name(id: LogicalTypeId) -> String {
    match id {
        LogicalTypeId::Boolean => "BOOLEAN",
        LogicalTypeId::Tinyint => "TINYINT",
        LogicalTypeId::Smallint => "SMALLINT",
        LogicalTypeId::Integer => "INTEGER",
        LogicalTypeId::Bigint => "BIGINT",
        LogicalTypeId::Hugeint => "HUGEINT",
        LogicalTypeId::Float => "FLOAT",
        LogicalTypeId::Double => "DOUBLE",
        LogicalTypeId::Decimal => "DECIMAL",
        LogicalTypeId::Varchar => "VARCHAR",
        LogicalTypeId::Date => "DATE",
        LogicalTypeId::Time => "TIME",
        LogicalTypeId::Timestamp => "TIMESTAMP",
        LogicalTypeId::TimestampTZ => "TIMESTAMP WITH TIME ZONE",
        LogicalTypeId::Interval => "INTERVAL",
        other => return format!("{other:?}").to_uppercase(),
    }
    .to_string()
}

fn micros_to_datetime(micros: i64) -> Option<NaiveDateTime> {
    DateTime::from_timestamp_micros(micros).map(|t| t.naive_utc())
}

fn convert(v: DuckValue) -> Value {
    match v {
        DuckValue::Null => Value::Null,
        DuckValue::Boolean(b) => Value::Bool(b),
        DuckValue::TinyInt(i) => Value::Int(i.into()),
        DuckValue::SmallInt(i) => Value::Int(i.into()),
        DuckValue::Int(i) => Value::Int(i.into()),
        DuckValue::BigInt(i) => Value::Int(i),
        DuckValue::UTinyInt(i) => Value::Int(i.into()),
        DuckValue::USmallInt(i) => Value::Int(i.into()),
        DuckValue::UInt(i) => Value::Int(i.into()),
        DuckValue::UBigInt(i) => i64::try_from(i).map_or(Value::Real(i as f64), Value::Int),
        DuckValue::HugeInt(i) => i64::try_from(i).map_or(Value::Real(i as f64), Value::Int),
        DuckValue::UHugeInt(i) => i64::try_from(i).map_or(Value::Real(i as f64), Value::Int),
        DuckValue::Float(f) => Value::Real(f.into()),
        DuckValue::Double(f) => Value::Real(f),
        DuckValue::Decimal(d) => d.to_string().parse().map_or(Value::Text(d.to_string()), Value::Real),
        DuckValue::Timestamp(unit, n) => match micros_to_datetime(unit.to_micros(n)) {
            Some(ts) => Value::Timestamp(ts),
            None => Value::Text(format!("{n} {unit:?}")),
        },
        DuckValue::Date32(days) => NaiveDate::from_num_days_from_ce_opt(days + 719_163)
            .map_or(Value::Text(days.to_string()), Value::Date),
        DuckValue::Time64(unit, n) => {
            let micros = TimeUnit::Microsecond.to_micros(unit.to_micros(n));
            Value::Text(
                micros_to_datetime(micros)
                    .map(|t| t.format("%H:%M:%S%.f").to_string())
                    .unwrap_or_default(),
            )
        }
        DuckValue::Text(s) | DuckValue::Enum(s) => Value::Text(s),
        DuckValue::Interval { months, days, nanos } => Value::Text(format!("{months} months {days} days {nanos} ns")),
        DuckValue::Blob(b) | DuckValue::Geometry(b) => Value::Text(hex::encode(b)),
        other => Value::Text(format!("{other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineFlags {
    pub k_demos: usize,
    pub include_schema: bool,
    pub include_cot: bool,
    pub max_attempts: usize,
    /// After an engine error, retry once with the source-dialect transpiler
    /// applied, before spending another model attempt.
    pub repair_dialect: bool,
}

impl Default for PipelineFlags {
    fn default() -> Self {
        Self {
            k_demos: 2,
            include_schema: true,
            include_cot: true,
            max_attempts: 2,
            repair_dialect: false,
        }
    }
}

/// Everything a pipeline run reads. All of it is shared and immutable.
pub struct PipelineContext<'a> {
    pub catalog: &'a SchemaCatalog,
    pub demos: &'a DemoStore,
    pub embedder: &'a dyn Embedder,
    pub model: &'a ModelConfig,
    pub gateway: &'a Gateway,
    pub conn: &'a Connection,
    pub limits: ExecLimits,
    pub flags: PipelineFlags,
}

/// An earlier (question, final SQL) pair of the same session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorTurn {
    pub question: String,
    pub sql: String,
}

pub const MAX_CONTEXT_TURNS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Extraction,
    Guardrail,
    Execution,
    Gateway,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attempt {
    pub prompt_hash: String,
    pub extracted_sql: Option<String>,
    pub guardrail: Option<GuardrailReport>,
    /// Error text of whichever stage failed; this is what the retry prompt sees.
    pub execution_error: Option<String>,
    pub failure_stage: Option<FailureStage>,
    #[serde(rename = "latency_ms", with = "serde_duration_ms")]
    pub latency: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstainReason {
    RetriesExhausted,
    Gateway,
    CassetteMiss,
    Policy,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FinalOutcome {
    Result { sql: String, result: QueryResult },
    Abstained { reason: AbstainReason, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutcome {
    pub question: String,
    pub attempts: Vec<Attempt>,
    #[serde(rename = "final")]
    pub final_outcome: FinalOutcome,
    #[serde(rename = "total_latency_ms", with = "serde_duration_ms")]
    pub total_latency: Duration,
}

impl PipelineOutcome {
    pub fn result(&self) -> Option<&QueryResult> {
        match &self.final_outcome {
            FinalOutcome::Result { result, .. } => Some(result),
            FinalOutcome::Abstained { .. } => None,
        }
    }

    pub fn final_sql(&self) -> Option<&str> {
        match &self.final_outcome {
            FinalOutcome::Result { sql, .. } => Some(sql),
            FinalOutcome::Abstained { .. } => None,
        }
    }

    pub fn abstained(&self) -> bool {
        matches!(self.final_outcome, FinalOutcome::Abstained { .. })
    }
}

/// Redacts quoted fragments of an engine message that are neither in the
/// failed query nor catalog identifiers, and numbers that are not in the
/// query. Conversion errors, for one, quote the offending cell, and this
/// message is sent back to the model on retry.
pub fn sanitize_error(message: &str, sql: &str, catalog: &SchemaCatalog) -> String {
    redact_numbers(&redact_quoted(message, sql, catalog), sql)
}

fn redact_quoted(message: &str, sql: &str, catalog: &SchemaCatalog) -> String {
    let known = |s: &str| {
        contains_word(sql, s)
            || s.split('.').all(|part| {
                catalog.table(part).is_some() || catalog.tables().iter().any(|t| t.column(part).is_some())
            })
    };
    let mut out = String::with_capacity(message.len());
    let mut rest = message;
    while let Some(open) = rest.find(['\'', '"']) {
        let quote = rest[open..].chars().next().expect("found above");
        out.push_str(&rest[..=open]);
        let after = &rest[open + 1..];
        match after.find(quote) {
            Some(close) => {
                let inner = &after[..close];
                if inner.is_empty() || known(inner) {
                    out.push_str(inner);
                } else {
                    out.push_str("<redacted>");
                }
                out.push(quote);
                rest = &after[close + 1..];
            }
            None => {
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// `needle` occurs in `haystack` and is not part of a longer word or number.
fn contains_word(haystack: &str, needle: &str) -> bool {
    let word = |c: char| c.is_alphanumeric() || c == '_' || c == '.';
    haystack.match_indices(needle).any(|(i, _)| {
        !haystack[..i].ends_with(word) && !haystack[i + needle.len()..].starts_with(word)
    })
}

fn redact_numbers(message: &str, sql: &str) -> String {
    let mut out = String::with_capacity(message.len());
    let mut rest = message;
    while let Some(start) = rest.find(|c: char| c.is_ascii_digit()) {
        let (before, from) = rest.split_at(start);
        out.push_str(before);
        let len = from
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .unwrap_or(from.len());
        let number = from[..len].trim_end_matches('.');
        let standalone = !out.ends_with(|c: char| c.is_alphanumeric() || c == '_');
        // "LINE n:" is the position marker DuckDB prints before the query echo
        if !standalone || out.ends_with("LINE ") || contains_word(sql, number) {
            out.push_str(number);
        } else {
            out.push_str("<redacted>");
        }
        rest = &from[number.len()..];
    }
    out.push_str(rest);
    out
}

/// Prompt demos: the last few session turns first, then retrieved demos.
fn demo_block(question: &str, ctx: &PipelineContext, history: &[PriorTurn]) -> Result<String, String> {
    let recent = &history[history.len().saturating_sub(MAX_CONTEXT_TURNS)..];
    let mut demos: Vec<Demonstration> = recent
        .iter()
        .enumerate()
        .map(|(i, t)| Demonstration {
            id: format!("turn-{}", i + 1),
            question: t.question.clone(),
            relevant_tables: collect_identifiers(&t.sql)
                .map(|ids| ids.tables.into_iter().collect())
                .unwrap_or_default(),
            sql: t.sql.clone(),
            source: DemoSource::Session,
            embedding: Vec::new(),
        })
        .collect();
    let retrieved = ctx
        .demos
        .retrieve_top_k(question, ctx.flags.k_demos, ctx.embedder)
        .map_err(|e| e.to_string())?;
    demos.extend(retrieved.into_iter().cloned());
    Ok(render_demo_block(&demos))
}

pub fn run_pipeline(question: &str, ctx: &PipelineContext, history: &[PriorTurn]) -> PipelineOutcome {
    let started = Instant::now();
    let abstain = |attempts, reason, detail: String| PipelineOutcome {
        question: question.to_string(),
        attempts,
        final_outcome: FinalOutcome::Abstained { reason, detail },
        total_latency: started.elapsed(),
    };
    if ctx.flags.max_attempts == 0 {
        return abstain(Vec::new(), AbstainReason::Prompt, "max_attempts must be at least 1".into());
    }
    let base = match demo_block(question, ctx, history).and_then(|demos| {
        let schema = if ctx.flags.include_schema {
            render_schema_block(ctx.catalog)
        } else {
            String::new()
        };
        build_sql_prompt(&schema, &demos, question, ctx.flags.include_schema, ctx.flags.include_cot)
            .map_err(|e| e.to_string())
    }) {
        Ok(p) => p,
        Err(e) => return abstain(Vec::new(), AbstainReason::Prompt, e),
    };

    let mut attempts: Vec<Attempt> = Vec::new();
    let mut prompt: PromptBundle = base.clone();
    for n in 0..ctx.flags.max_attempts {
        if n > 0 {
            let last = attempts.last().expect("a failed attempt precedes every retry");
            let failed_sql = last.extracted_sql.as_deref().unwrap_or("");
            let error = last.execution_error.as_deref().unwrap_or("unknown error");
            prompt = match build_retry_prompt(&base, failed_sql, error) {
                Ok(p) => p,
                Err(e) => return abstain(attempts, AbstainReason::Prompt, e.to_string()),
            };
        }
        let attempt_start = Instant::now();
        let mut attempt = Attempt {
            prompt_hash: crate::llm_gateway::prompt_hash(&prompt.text),
            extracted_sql: None,
            guardrail: None,
            execution_error: None,
            failure_stage: None,
            latency: Duration::ZERO,
        };
        let step = one_attempt(&prompt, ctx, &mut attempt);
        attempt.latency = attempt_start.elapsed();
        attempts.push(attempt);
        match step {
            Step::Done(sql, result) => {
                return PipelineOutcome {
                    question: question.to_string(),
                    attempts,
                    final_outcome: FinalOutcome::Result { sql, result },
                    total_latency: started.elapsed(),
                }
            }
            Step::Retry => {}
            Step::Stop(reason, detail) => return abstain(attempts, reason, detail),
        }
    }
    let detail = attempts
        .last()
        .and_then(|a| a.execution_error.clone())
        .unwrap_or_default();
    abstain(attempts, AbstainReason::RetriesExhausted, detail)
}

enum Step {
    Done(String, QueryResult),
    Retry,
    Stop(AbstainReason, String),
}

fn one_attempt(prompt: &PromptBundle, ctx: &PipelineContext, attempt: &mut Attempt) -> Step {
    let fail = |attempt: &mut Attempt, stage, msg: String| {
        attempt.failure_stage = Some(stage);
        attempt.execution_error = Some(msg);
    };
    let completion = match ctx.gateway.complete(prompt, ctx.model) {
        Ok(c) => c,
        Err(e) => {
            fail(attempt, FailureStage::Gateway, e.to_string());
            return match e {
                GatewayError::CassetteMiss { .. } => Step::Stop(AbstainReason::CassetteMiss, e.to_string()),
                GatewayError::EmptyCompletion => Step::Retry,
                _ => Step::Stop(AbstainReason::Gateway, e.to_string()),
            };
        }
    };
    let raw = match extract_sql(&completion.completion) {
        Ok(sql) => sql,
        Err(e) => {
            fail(attempt, FailureStage::Extraction, e.to_string());
            return Step::Retry;
        }
    };
    attempt.extracted_sql = Some(raw.clone());
    // a write is not a mistake to correct, so it is not retried
    if let Err(ExecError::Policy(msg)) = check_read_only(&raw) {
        fail(attempt, FailureStage::Execution, msg.clone());
        return Step::Stop(AbstainReason::Policy, msg);
    }
    let report = guardrail_check(&raw, ctx.catalog, GuardrailOptions::default());
    let message = report.failure_message();
    attempt.guardrail = Some(report);
    if let Some(msg) = message {
        fail(attempt, FailureStage::Guardrail, msg);
        return Step::Retry;
    }
    // parses, since the guardrail passed
    let sql = canonicalize(&raw).unwrap_or(raw);
    match execute_sql(&sql, ctx.conn, ctx.limits) {
        Ok(result) => Step::Done(sql, result),
        Err(ExecError::Policy(msg)) => {
            fail(attempt, FailureStage::Execution, msg.clone());
            Step::Stop(AbstainReason::Policy, msg)
        }
        Err(e) => {
            if ctx.flags.repair_dialect {
                if let Ok(repaired) = medsql_dialect::transpile(&sql) {
                    if repaired != sql {
                        if let Ok(result) = execute_sql(&repaired, ctx.conn, ctx.limits) {
                            return Step::Done(repaired, result);
                        }
                    }
                }
            }
            fail(attempt, FailureStage::Execution, sanitize_error(&e.to_string(), &sql, ctx.catalog));
            Step::Retry
        }
    }
}
