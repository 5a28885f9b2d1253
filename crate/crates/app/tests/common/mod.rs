#![allow(dead_code)]

//! Small clinical database generated in Rust, so expected counts come from
//! the same vectors rather than from the engine.

use std::path::PathBuf;

use medsql_app::{AppState, Database};
use medsql_core::demo_store::{DemoRecord, DemoSource};
use medsql_core::llm_gateway::AuditLog;
use medsql_core::{Backend, DemoStore, Gateway, HashingEmbedder};
use tempfile::TempDir;

pub const DB: &str = "mimic";
pub const DRUGS: [&str; 5] = ["Aspirin", "Heparin", "Insulin", "Metoprolol", "Vancomycin"];
const CANARY_OFFSET: i64 = 987_000_000;

pub struct Patient {
    pub subject_id: i64,
    pub gender: String,
    pub anchor_age: i64,
}

pub struct Admission {
    pub hadm_id: i64,
    pub subject_id: i64,
    pub admittime: String,
    pub age: i64,
    pub insurance: String,
}

pub struct Data {
    pub patients: Vec<Patient>,
    pub admissions: Vec<Admission>,
    pub diagnoses: Vec<(i64, String)>,
    pub prescriptions: Vec<(i64, String, String)>,
    pub canary: bool,
}

impl Data {
    /// With `canary`, every text cell starts with `ZQ`, integers are shifted
    /// by 987000000 and timestamps moved to year 2400.
    pub fn new(canary: bool) -> Self {
        let text = |s: &str| if canary { format!("ZQ{s}") } else { s.to_string() };
        let int = |i: i64| if canary { i + CANARY_OFFSET } else { i };
        let year = if canary { 2400 } else { 2100 };
        let patients = (1..=40)
            .map(|s| Patient {
                subject_id: int(s),
                gender: text(if s % 2 == 0 { "F" } else { "M" }),
                anchor_age: int(20 + (s * 7) % 70),
            })
            .collect();
        let admissions = (1..=60)
            .map(|h| Admission {
                hadm_id: int(100 + h),
                subject_id: int(1 + (h * 13) % 40),
                admittime: format!("{year}-{:02}-{:02} {:02}:30:00", 1 + h % 12, 1 + h % 28, h % 24),
                age: int(18 + (h * 11) % 75),
                insurance: text(["Medicare", "Medicaid", "Other"][(h % 3) as usize]),
            })
            .collect();
        let mut diagnoses = Vec::new();
        for h in 1..=60 {
            if h % 4 == 0 {
                diagnoses.push((int(100 + h), text("I10")));
            }
            if h % 5 == 0 {
                diagnoses.push((int(100 + h), text("E119")));
            }
        }
        let prescriptions = (1..=60)
            .map(|h| {
                (
                    int(100 + h),
                    text(DRUGS[(h % 5) as usize]),
                    text(&((h * 37) % 500).to_string()),
                )
            })
            .collect();
        Data {
            patients,
            admissions,
            diagnoses,
            prescriptions,
            canary,
        }
    }

    /// Strings that must never reach a prompt when `canary` is set.
    pub fn sentinels(&self) -> Vec<String> {
        let mut s = vec!["ZQ".to_string(), "2400-".to_string()];
        s.extend(self.patients.iter().flat_map(|p| [p.subject_id, p.anchor_age]).map(|i| i.to_string()));
        s.extend(self.admissions.iter().flat_map(|a| [a.hadm_id, a.age]).map(|i| i.to_string()));
        s.sort();
        s.dedup();
        s
    }

    pub fn write(&self, path: &std::path::Path) {
        let conn = duckdb::Connection::open(path).unwrap();
        conn.execute_batch(
            "BEGIN;
             CREATE TABLE patients (subject_id INTEGER PRIMARY KEY, gender VARCHAR NOT NULL, anchor_age INTEGER);
             CREATE TABLE admissions (hadm_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, admittime TIMESTAMP, age INTEGER, insurance VARCHAR);
             CREATE TABLE diagnoses_icd (hadm_id INTEGER NOT NULL, icd_code VARCHAR NOT NULL);
             CREATE TABLE prescriptions (hadm_id INTEGER NOT NULL, drug VARCHAR, dose_val VARCHAR);",
        )
        .unwrap();
        for p in &self.patients {
            conn.execute(
                "INSERT INTO patients VALUES (?, ?, ?)",
                duckdb::params![p.subject_id, p.gender, p.anchor_age],
            )
            .unwrap();
        }
        for a in &self.admissions {
            conn.execute(
                "INSERT INTO admissions VALUES (?, ?, CAST(? AS TIMESTAMP), ?, ?)",
                duckdb::params![a.hadm_id, a.subject_id, a.admittime, a.age, a.insurance],
            )
            .unwrap();
        }
        for (h, code) in &self.diagnoses {
            conn.execute("INSERT INTO diagnoses_icd VALUES (?, ?)", duckdb::params![h, code]).unwrap();
        }
        for (h, drug, dose) in &self.prescriptions {
            conn.execute("INSERT INTO prescriptions VALUES (?, ?, ?)", duckdb::params![h, drug, dose])
                .unwrap();
        }
        conn.execute_batch("COMMIT").unwrap();
    }
}

pub struct Fixture {
    pub dir: TempDir,
    pub data: Data,
}

impl Fixture {
    pub fn new() -> Self {
        Self::build(false)
    }

    pub fn canary() -> Self {
        Self::build(true)
    }

    fn build(canary: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = Data::new(canary);
        data.write(&dir.path().join("mimic.duckdb"));
        Fixture { dir, data }
    }

    pub fn db_path(&self) -> PathBuf {
        self.dir.path().join("mimic.duckdb")
    }

    pub fn audit_path(&self) -> PathBuf {
        self.dir.path().join("audit.jsonl")
    }

    pub fn state(&self, backend: Backend) -> AppState {
        let embedder = HashingEmbedder::new(64);
        let mut demos = DemoStore::new(64);
        for r in demo_records() {
            demos.add_record(r, &embedder).unwrap();
        }
        let gateway = Gateway::new(backend, AuditLog::open(&self.audit_path()).unwrap());
        let mut state = AppState::new(gateway, demos, Box::new(embedder));
        state.add_database(Database::open(DB, &self.db_path()).unwrap());
        state
    }

    pub fn audit_text(&self) -> String {
        std::fs::read_to_string(self.audit_path()).unwrap_or_default()
    }
}

pub fn demo_records() -> Vec<DemoRecord> {
    let demo = |id: &str, q: &str, tables: &[&str], sql: &str| DemoRecord {
        id: id.into(),
        question: q.into(),
        relevant_tables: tables.iter().map(|t| t.to_string()).collect(),
        sql: sql.into(),
        source: DemoSource::Benchmark,
    };
    vec![
        demo(
            "d1",
            "How many patients are female?",
            &["patients"],
            "SELECT COUNT(*) FROM patients WHERE patients.gender = 'F'",
        ),
        demo(
            "d2",
            "How many admissions were covered by Medicare?",
            &["admissions"],
            "SELECT COUNT(*) FROM admissions WHERE admissions.insurance = 'Medicare'",
        ),
    ]
}

/// A completion in the reasoning-then-fenced-query layout the prompts ask for.
pub fn answer(sql: &str) -> String {
    format!("1. Identify the relevant tables:\n-- tables\n2. Final SQL query:\n```sql\n{sql}\n```")
}
