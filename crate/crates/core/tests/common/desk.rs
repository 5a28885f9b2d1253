//! Ten-question desk dataset over the toy database, with scripted model
//! answers that are recorded into replay cassettes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use medsql_core::demo_store::{ingest_demos, DemoStore, HashingEmbedder};
use medsql_core::eval_harness::{load_jsonl, preprocess_dataset, DropReason, EvalItem, RawItem};
use medsql_core::llm_gateway::{AuditLog, Backend, Cassette, Gateway, ModelConfig};
use medsql_core::schema_catalog::{introspect, SchemaCatalog};
use medsql_core::{Embedder as _, ExecLimits, PipelineContext, PipelineFlags};
use tempfile::TempDir;

use super::toy::{duckdb_with, toy_tables, Table, TOY_SEED};

pub const MODEL: &str = "o3-2025-04-16";

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub struct Desk {
    pub conn: duckdb::Connection,
    pub catalog: SchemaCatalog,
    pub demos: DemoStore,
    pub embedder: HashingEmbedder,
    pub model: ModelConfig,
    pub dir: TempDir,
}

impl Desk {
    pub fn new() -> Self {
        Self::with_tables(toy_tables(TOY_SEED))
    }

    pub fn with_tables(tables: Vec<Table>) -> Self {
        let conn = duckdb_with(&tables);
        let catalog = introspect(&conn, "desk").unwrap();
        let embedder = HashingEmbedder::new(HashingEmbedder::DEFAULT_DIMENSION);
        let mut demos = DemoStore::new(embedder.dimension());
        ingest_demos(&fixture("desk/demos.jsonl"), &mut demos, &embedder).unwrap();
        Desk {
            conn,
            catalog,
            demos,
            embedder,
            model: ModelConfig::named(MODEL),
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn audit_path(&self) -> PathBuf {
        self.dir.path().join("audit.jsonl")
    }

    pub fn gateway(&self, backend: Backend) -> Gateway {
        Gateway::new(backend, AuditLog::open(&self.audit_path()).unwrap())
    }

    pub fn replay(&self, cassette: &str) -> Gateway {
        self.gateway(Backend::Replay(Cassette::load(&fixture(cassette)).unwrap()))
    }

    pub fn ctx<'a>(&'a self, gateway: &'a Gateway, flags: PipelineFlags) -> PipelineContext<'a> {
        PipelineContext {
            catalog: &self.catalog,
            demos: &self.demos,
            embedder: &self.embedder,
            model: &self.model,
            gateway,
            conn: &self.conn,
            limits: ExecLimits::default(),
            flags,
        }
    }

    pub fn items(&self) -> Vec<EvalItem> {
        let raw: Vec<RawItem> = load_jsonl(&fixture("desk/dataset.jsonl")).unwrap();
        let pre = preprocess_dataset(&raw, &self.conn, ExecLimits::default());
        assert!(pre.dropped.is_empty(), "{:?}", pre.dropped);
        pre.kept
    }
}

/// Scripted completions per item for the named variant ("base" or "variant").
pub fn completions(variant: &str) -> BTreeMap<String, Vec<String>> {
    let text = std::fs::read_to_string(fixture("desk/completions.json")).unwrap();
    let mut all: BTreeMap<String, BTreeMap<String, Vec<String>>> = serde_json::from_str(&text).unwrap();
    all.remove(variant).unwrap()
}

/// The completions in the order the pipeline will request them.
pub fn script(variant: &str, items: &[EvalItem]) -> Vec<String> {
    let mut by_item = completions(variant);
    items
        .iter()
        .flat_map(|i| by_item.remove(&i.id).unwrap_or_default())
        .collect()
}

pub fn raw_item(id: &str, sql: &str) -> RawItem {
    RawItem {
        id: id.into(),
        question: format!("question {id}"),
        sql: Some(sql.into()),
        relevant_tables: vec![],
        source: None,
        answerable: true,
    }
}

/// 10 good desk items plus 10 that must be dropped, with the expected reason.
pub fn crafted_dataset() -> (Vec<RawItem>, Vec<(&'static str, DropReason)>) {
    let mut items: Vec<RawItem> = load_jsonl(&fixture("desk/dataset.jsonl")).unwrap();
    let bad = [
        ("empty-1", "SELECT admissions.hadm_id FROM admissions WHERE admissions.age > 500", DropReason::EmptyResult),
        ("empty-2", "SELECT patients.subject_id FROM patients WHERE patients.gender = 'X'", DropReason::EmptyResult),
        ("empty-3", "SELECT cost.cost FROM cost WHERE strftime('%Y', cost.chargetime) = '1999'", DropReason::EmptyResult),
        ("empty-4", "SELECT prescriptions.drug FROM prescriptions WHERE prescriptions.drug = 'unobtainium'", DropReason::EmptyResult),
        ("empty-5", "SELECT admissions.hadm_id FROM admissions WHERE datetime(admissions.admittime) > datetime(admissions.dischtime, '+1 year')", DropReason::EmptyResult),
        ("error-1", "SELECT admissions.no_such_column FROM admissions", DropReason::ExecutionError),
        ("error-2", "SELECT COUNT(*) FROM no_such_table", DropReason::ExecutionError),
        ("error-3", "SELECT CAST(admissions.insurance AS INTEGER) FROM admissions", DropReason::ExecutionError),
        ("untranslatable-1", "SELECT julianday(admissions.dischtime) - julianday(admissions.admittime) FROM admissions", DropReason::UnsupportedConstruct),
        ("untranslatable-2", "SELECT COUNT(*) FROM admissions WHERE datetime(admissions.admittime, 'weekday 0') > '2100-01-01'", DropReason::UnsupportedConstruct),
    ];
    for (id, sql, _) in &bad {
        items.push(raw_item(id, sql));
    }
    (items, bad.iter().map(|(id, _, r)| (*id, *r)).collect())
}
