//! Benchmark preprocessing, result comparison and RS(0) scoring.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use duckdb::Connection;
use medsql_dialect::{Transpiler, TranspileError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::execution_sandbox::{execute_sql, run_pipeline, AbstainReason, ExecLimits, FinalOutcome, PipelineContext};
use crate::query_result::{timestamp_text, QueryResult, Value};
use crate::serde_duration_ms;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("outcome for {0} appears more than once")]
    DuplicateOutcome(String),
    #[error("no outcome for item {0}")]
    MissingOutcome(String),
    #[error("outcome for unknown item {0}")]
    UnknownItem(String),
    #[error("empty dataset")]
    Empty,
    #[error("invalid fractions: {0}")]
    Fractions(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn yes() -> bool {
    true
}

/// One line of a dataset file: the demo record layout plus `answerable`.
/// `sql` is in the source dialect and may be absent for unanswerable items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawItem {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub sql: Option<String>,
    #[serde(default)]
    pub relevant_tables: Vec<String>,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default = "yes")]
    pub answerable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub question: String,
    /// Target dialect. Present for every answerable item.
    pub gold_sql: Option<String>,
    pub answerable: bool,
}

impl From<EvalItem> for RawItem {
    fn from(item: EvalItem) -> Self {
        RawItem {
            id: item.id,
            question: item.question,
            sql: item.gold_sql,
            relevant_tables: Vec::new(),
            source: None,
            answerable: item.answerable,
        }
    }
}

pub fn load_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Format {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DropReason {
    #[serde(rename = "unsupported construct")]
    UnsupportedConstruct,
    #[serde(rename = "execution error")]
    ExecutionError,
    #[serde(rename = "empty result")]
    EmptyResult,
    #[serde(rename = "missing gold sql")]
    MissingGold,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::UnsupportedConstruct => "unsupported construct",
            DropReason::ExecutionError => "execution error",
            DropReason::EmptyResult => "empty result",
            DropReason::MissingGold => "missing gold sql",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedItem {
    pub id: String,
    pub reason: DropReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Preprocessed {
    pub kept: Vec<EvalItem>,
    pub dropped: Vec<DroppedItem>,
}

/// Transpiles every gold query and keeps the ones that run and return rows.
/// Unanswerable items have nothing to check and are kept as they are.
pub fn preprocess_dataset(items: &[RawItem], conn: &Connection, limits: ExecLimits) -> Preprocessed {
    let transpiler = Transpiler::new();
    let mut out = Preprocessed::default();
    for item in items {
        let drop = |reason, detail: String| DroppedItem {
            id: item.id.clone(),
            reason,
            detail,
        };
        if !item.answerable {
            out.kept.push(EvalItem {
                id: item.id.clone(),
                question: item.question.clone(),
                gold_sql: item.sql.clone(),
                answerable: false,
            });
            continue;
        }
        let Some(source) = item.sql.as_deref() else {
            out.dropped.push(drop(DropReason::MissingGold, String::new()));
            continue;
        };
        let gold = match transpiler.transpile(source) {
            Ok(sql) => sql,
            Err(e @ (TranspileError::Unsupported { .. } | TranspileError::Parse(_))) => {
                out.dropped.push(drop(DropReason::UnsupportedConstruct, e.to_string()));
                continue;
            }
        };
        match execute_sql(&gold, conn, limits) {
            Err(e) => out.dropped.push(drop(DropReason::ExecutionError, e.to_string())),
            Ok(r) if r.is_empty() => out.dropped.push(drop(DropReason::EmptyResult, String::new())),
            Ok(_) => out.kept.push(EvalItem {
                id: item.id.clone(),
                question: item.question.clone(),
                gold_sql: Some(gold),
                answerable: true,
            }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split<T> {
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Largest-remainder apportionment of `n` items over `fractions`. Quotas are
/// computed exactly on fractions rounded to millionths; equal remainders go
/// to the larger share.
pub fn apportion(n: usize, fractions: &[f64]) -> Result<Vec<usize>, HarnessError> {
    const SCALE: u128 = 1_000_000;
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(HarnessError::Fractions(format!("{fractions:?}")));
    }
    let parts: Vec<u128> = fractions.iter().map(|f| (f * SCALE as f64).round() as u128).collect();
    if parts.iter().sum::<u128>() != SCALE {
        return Err(HarnessError::Fractions(format!("{fractions:?} do not sum to 1")));
    }
    let quotas: Vec<(u128, u128)> = parts
        .iter()
        .map(|p| ((n as u128 * p) / SCALE, (n as u128 * p) % SCALE))
        .collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|(q, _)| *q as usize).collect();
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        quotas[b]
            .1
            .cmp(&quotas[a].1)
            .then(parts[b].cmp(&parts[a]))
            .then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    Ok(sizes)
}

/// Seeded shuffle, then the first share is validation and the rest test.
pub fn split_dataset<T: Clone>(items: &[T], validation: f64, test: f64, seed: u64) -> Result<Split<T>, HarnessError> {
    let sizes = apportion(items.len(), &[validation, test])?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok(Split {
        validation: pick(&order[..sizes[0]]),
        test: pick(&order[sizes[0]..]),
    })
}

/// Comparison atom. Integers, reals and booleans share the numeric class;
/// dates and timestamps become their canonical text.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
}

impl Atom {
    fn class(&self) -> u8 {
        match self {
            Atom::Null => 0,
            Atom::Int(_) | Atom::Real(_) => 1,
            Atom::Text(_) => 2,
        }
    }

    fn num(&self) -> Option<f64> {
        match self {
            Atom::Int(i) => Some(*i as f64),
            Atom::Real(r) => Some(*r),
            _ => None,
        }
    }

    fn total_cmp(&self, other: &Atom) -> Ordering {
        match (self, other) {
            (Atom::Int(a), Atom::Int(b)) => a.cmp(b),
            (Atom::Text(a), Atom::Text(b)) => a.cmp(b),
            (a, b) if a.class() == 1 && b.class() == 1 => a.num().unwrap().total_cmp(&b.num().unwrap()),
            (a, b) => a.class().cmp(&b.class()),
        }
    }
}

pub const REL_TOLERANCE: f64 = 1e-6;
pub const ABS_TOLERANCE: f64 = 1e-9;

pub fn reals_close(a: f64, b: f64) -> bool {
    if a == b || (a.is_nan() && b.is_nan()) {
        return true;
    }
    let diff = (a - b).abs();
    diff <= ABS_TOLERANCE || diff <= REL_TOLERANCE * a.abs().max(b.abs())
}

fn atoms_equal(a: &Atom, b: &Atom) -> bool {
    match (a, b) {
        (Atom::Null, Atom::Null) => true,
        (Atom::Int(x), Atom::Int(y)) => x == y,
        (Atom::Text(x), Atom::Text(y)) => x == y,
        (x, y) if x.class() == 1 && y.class() == 1 => reals_close(x.num().unwrap(), y.num().unwrap()),
        _ => false,
    }
}

fn atom(v: &Value) -> Atom {
    match v {
        Value::Null => Atom::Null,
        Value::Bool(b) => Atom::Int(*b as i64),
        Value::Int(i) => Atom::Int(*i),
        Value::Real(r) if r.fract() == 0.0 && r.abs() < 9.0e15 => Atom::Int(*r as i64),
        Value::Real(r) => Atom::Real(*r),
        Value::Text(s) => Atom::Text(s.trim_end().to_string()),
        Value::Date(d) => Atom::Text(d.format("%Y-%m-%d").to_string()),
        Value::Timestamp(ts) => Atom::Text(timestamp_text(ts)),
    }
}

/// Rows as sorted tuples of atoms. Column names play no part.
pub fn normalize_result(r: &QueryResult) -> Vec<Vec<Atom>> {
    let mut rows: Vec<Vec<Atom>> = r.rows.iter().map(|row| row.iter().map(atom).collect()).collect();
    rows.sort_by(|a, b| cmp_rows(a, b));
    rows
}

fn cmp_rows(a: &[Atom], b: &[Atom]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn rows_equal(a: &[Atom], b: &[Atom]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| atoms_equal(x, y))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EqualityOptions {
    pub order_sensitive: bool,
}

pub fn results_equal(a: &QueryResult, b: &QueryResult) -> bool {
    results_equal_with(a, b, EqualityOptions::default())
}

pub fn results_equal_with(a: &QueryResult, b: &QueryResult, options: EqualityOptions) -> bool {
    if a.columns.len() != b.columns.len() || a.rows.len() != b.rows.len() {
        return false;
    }
    if options.order_sensitive {
        return a
            .rows
            .iter()
            .zip(&b.rows)
            .all(|(x, y)| rows_equal(&x.iter().map(atom).collect::<Vec<_>>(), &y.iter().map(atom).collect::<Vec<_>>()));
    }
    let na = normalize_result(a);
    let nb = normalize_result(b);
    if na.iter().zip(&nb).all(|(x, y)| rows_equal(x, y)) {
        return true;
    }
    // near-equal reals can sort differently; fall back to matching
    let mut used = vec![false; nb.len()];
    na.iter().all(|x| {
        match (0..nb.len()).find(|&j| !used[j] && rows_equal(x, &nb[j])) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutcome {
    pub item_id: String,
    #[serde(skip)]
    pub generated_result: Option<QueryResult>,
    #[serde(skip)]
    pub gold_result: Option<QueryResult>,
    pub generated_sql: Option<String>,
    pub abstained: bool,
    pub abstain_reason: Option<AbstainReason>,
    pub matched: bool,
    pub attempts: usize,
    pub gold_error: Option<String>,
    #[serde(rename = "latency_ms", with = "serde_duration_ms")]
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rs0Report {
    pub rs0: f64,
    pub n_items: usize,
    pub n_answerable: usize,
    pub n_matched: usize,
    pub n_abstained: usize,
    #[serde(rename = "mean_latency_ms", with = "serde_duration_ms")]
    pub mean_latency: Duration,
    #[serde(rename = "min_latency_ms", with = "serde_duration_ms")]
    pub min_latency: Duration,
    #[serde(rename = "max_latency_ms", with = "serde_duration_ms")]
    pub max_latency: Duration,
}

/// RS(0) = (1/|X|) · #{x : (answerable ∧ matched) ∨ (¬answerable ∧ abstained)}.
/// `answerable` must hold every item id exactly once, matching `outcomes`.
pub fn rs0_score(outcomes: &[EvalOutcome], answerable: &BTreeMap<String, bool>) -> Result<Rs0Report, HarnessError> {
    if outcomes.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut seen = BTreeSet::new();
    let mut credited = 0usize;
    for o in outcomes {
        if !seen.insert(o.item_id.as_str()) {
            return Err(HarnessError::DuplicateOutcome(o.item_id.clone()));
        }
        let ans = *answerable
            .get(&o.item_id)
            .ok_or_else(|| HarnessError::UnknownItem(o.item_id.clone()))?;
        if (ans && o.matched) || (!ans && o.abstained) {
            credited += 1;
        }
    }
    if let Some(missing) = answerable.keys().find(|id| !seen.contains(id.as_str())) {
        return Err(HarnessError::MissingOutcome(missing.clone()));
    }
    let latencies: Vec<Duration> = outcomes.iter().map(|o| o.latency).collect();
    let total: Duration = latencies.iter().sum();
    Ok(Rs0Report {
        rs0: credited as f64 / outcomes.len() as f64,
        n_items: outcomes.len(),
        n_answerable: answerable.values().filter(|a| **a).count(),
        n_matched: outcomes.iter().filter(|o| o.matched).count(),
        n_abstained: outcomes.iter().filter(|o| o.abstained).count(),
        mean_latency: total / outcomes.len() as u32,
        min_latency: latencies.iter().copied().min().unwrap_or_default(),
        max_latency: latencies.iter().copied().max().unwrap_or_default(),
    })
}

/// The run settings shown next to the score, one row per sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSettings {
    pub model: String,
    pub backend: String,
    pub include_schema: bool,
    pub k_demos: usize,
    pub max_attempts: usize,
    pub include_cot: bool,
    pub order_sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRun {
    pub settings: RunSettings,
    pub report: Rs0Report,
    /// Items that abstained because replay had no recording for a prompt.
    pub cassette_misses: Vec<String>,
    pub outcomes: Vec<EvalOutcome>,
}

pub fn run_eval(items: &[EvalItem], ctx: &PipelineContext, options: EqualityOptions) -> Result<EvalRun, HarnessError> {
    let mut outcomes = Vec::with_capacity(items.len());
    let mut answerable = BTreeMap::new();
    let mut misses = Vec::new();
    for item in items {
        if answerable.insert(item.id.clone(), item.answerable).is_some() {
            return Err(HarnessError::DuplicateOutcome(item.id.clone()));
        }
        let started = Instant::now();
        let outcome = run_pipeline(&item.question, ctx, &[]);
        let latency = started.elapsed();
        let (gold_result, gold_error) = match (&item.gold_sql, item.answerable) {
            (Some(sql), true) => match execute_sql(sql, ctx.conn, ctx.limits) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            },
            _ => (None, None),
        };
        let abstain_reason = match &outcome.final_outcome {
            FinalOutcome::Abstained { reason, .. } => Some(*reason),
            FinalOutcome::Result { .. } => None,
        };
        if abstain_reason == Some(AbstainReason::CassetteMiss) {
            misses.push(item.id.clone());
        }
        let generated = outcome.result().cloned();
        let matched = match (&generated, &gold_result) {
            (Some(g), Some(r)) => item.answerable && results_equal_with(g, r, options),
            _ => false,
        };
        outcomes.push(EvalOutcome {
            item_id: item.id.clone(),
            generated_sql: outcome.final_sql().map(String::from),
            generated_result: generated,
            gold_result,
            abstained: outcome.abstained(),
            abstain_reason,
            matched,
            attempts: outcome.attempts.len(),
            gold_error,
            latency,
        });
    }
    let report = rs0_score(&outcomes, &answerable)?;
    Ok(EvalRun {
        settings: RunSettings {
            model: ctx.model.model_name.clone(),
            backend: ctx.gateway.backend_name().to_string(),
            include_schema: ctx.flags.include_schema,
            k_demos: ctx.flags.k_demos,
            max_attempts: ctx.flags.max_attempts,
            include_cot: ctx.flags.include_cot,
            order_sensitive: options.order_sensitive,
        },
        report,
        cassette_misses: misses,
        outcomes,
    })
}

/// Console summary in the ablation-table layout.
pub fn render_table(runs: &[EvalRun]) -> String {
    let mut out = String::new();
    let header = ["Base LLM", "Schema", "# Demos", "Max attempts", "RS(0)", "Abstained", "Mean latency"];
    let rows: Vec<[String; 7]> = runs
        .iter()
        .map(|r| {
            [
                r.settings.model.clone(),
                if r.settings.include_schema { "Y" } else { "N" }.to_string(),
                r.settings.k_demos.to_string(),
                r.settings.max_attempts.to_string(),
                format!("{:.2}%", r.report.rs0 * 100.0),
                format!("{}/{}", r.report.n_abstained, r.report.n_items),
                format!("{:.2} s", r.report.mean_latency.as_secs_f64()),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[&str]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let _ = writeln!(out, "{}", line(&header));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
    for r in &rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{}", line(&cells));
    }
    for r in runs.iter().filter(|r| !r.cassette_misses.is_empty()) {
        let _ = writeln!(
            out,
            "warning: {} item(s) had no recording for {}: {}",
            r.cassette_misses.len(),
            r.settings.model,
            r.cassette_misses.join(", ")
        );
    }
    out
}

pub fn write_report(path: &Path, runs: &[EvalRun]) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(runs).expect("report serializes");
    fs::write(path, json + "\n")?;
    Ok(())
}
