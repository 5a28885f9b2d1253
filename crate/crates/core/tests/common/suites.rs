//! Check suites shared by the focused tests and the acceptance gate.

use medsql_core::demo_store::DemoRecord;
use medsql_core::eval_harness::{load_jsonl, run_eval, EqualityOptions};
use medsql_core::llm_gateway::{read_audit_log, scan_audit_log, Backend};
use medsql_core::prompt_builder::build_viz_prompt;
use medsql_core::sql_postprocess::extract_sql;
use medsql_core::viz_spec::VIZ_NAMES;
use medsql_core::{run_pipeline, PipelineFlags};
use medsql_dialect::transpile;

use super::canary::canary_tables;
use super::corpus::differential_corpus;
use super::desk::{completions, fixture, script, Desk};
use super::toy::{toy_tables, TOY_SEED};

const FAKE_COLUMNS: [&str; 10] = [
    "patient_ssn",
    "patient_name",
    "mrn",
    "home_address",
    "phone_number",
    "total_cost",
    "los",
    "stay_id",
    "diagnosis_text",
    "drug_name",
];

const FAKE_TABLES: [&str; 10] = [
    "icustays",
    "chartevents",
    "labevents",
    "noteevents",
    "transfers",
    "microbiologyevents",
    "inputevents",
    "outputevents",
    "services",
    "caregivers",
];

/// 100 queries, each with exactly one identifier that is not in the schema.
pub fn fabricated_suite() -> Vec<(String, &'static str)> {
    let mut out = Vec::new();
    for c in FAKE_COLUMNS {
        out.extend([
            format!("SELECT admissions.{c} FROM admissions"),
            format!("SELECT COUNT(*) FROM admissions AS a WHERE a.{c} IS NOT NULL"),
            format!("SELECT p.gender, MAX({c}) FROM patients AS p GROUP BY p.gender"),
            format!(
                "SELECT a.hadm_id FROM admissions AS a JOIN cost AS c ON a.hadm_id = c.hadm_id ORDER BY c.{c} DESC"
            ),
            format!("WITH t AS (SELECT prescriptions.{c} AS x FROM prescriptions) SELECT t.x FROM t"),
        ]
        .map(|q| (q, c)));
    }
    for t in FAKE_TABLES {
        out.extend([
            format!("SELECT COUNT(*) FROM {t}"),
            format!("SELECT x.subject_id FROM {t} AS x"),
            format!("SELECT a.hadm_id FROM admissions AS a JOIN {t} AS i ON a.hadm_id = i.hadm_id"),
            format!("SELECT patients.gender FROM patients WHERE patients.subject_id IN (SELECT {t}.subject_id FROM {t})"),
            format!("SELECT AVG(admissions.age) FROM admissions, {t} WHERE admissions.hadm_id = {t}.hadm_id"),
        ]
        .map(|q| (q, t)));
    }
    out
}

/// Gold and known-good queries in the target dialect: the desk gold, the
/// transpiled differential corpus and demos, and the scripted model answers.
pub fn gold_queries(desk: &Desk) -> Vec<String> {
    let demos: Vec<DemoRecord> = load_jsonl(&fixture("desk/demos.jsonl")).unwrap();
    let mut gold: Vec<String> = desk.items().into_iter().filter_map(|i| i.gold_sql).collect();
    gold.extend(differential_corpus().iter().map(|q| transpile(q).unwrap()));
    gold.extend(demos.iter().map(|d| transpile(&d.sql).unwrap()));
    for answers in completions("base").values() {
        gold.extend(answers.iter().map(|a| extract_sql(a).unwrap()));
    }
    gold
}

pub fn wrap(sql: &str) -> String {
    format!("2. Final SQL query:\n```sql\n{sql}\n```")
}

/// Queries whose engine errors quote cell values, each followed by a fix.
pub const LEAKY: &[(&str, &str)] = &[
    (
        "SELECT CAST(admissions.insurance AS INTEGER) AS x FROM admissions",
        "SELECT COUNT(*) FROM admissions",
    ),
    (
        "SELECT CAST(cost.cost AS DECIMAL(4, 0)) AS c FROM cost",
        "SELECT MAX(cost.cost) FROM cost",
    ),
    (
        "SELECT CAST(patients.gender AS DATE) AS g FROM patients",
        "SELECT COUNT(*) FROM patients",
    ),
    (
        "SELECT admissions.hadm_id FROM admissions WHERE admissions.admittime = CAST(admissions.insurance AS TIMESTAMP)",
        "SELECT admissions.hadm_id FROM admissions",
    ),
    (
        "SELECT CAST(admissions.hadm_id AS TINYINT) AS h FROM admissions",
        "SELECT admissions.hadm_id FROM admissions",
    ),
];

pub struct CanaryRun {
    pub prompts: usize,
    /// Leaky probes that failed in the engine and were then fixed.
    pub engine_errors: usize,
    /// (audit sequence number, sentinel) for every sentinel found.
    pub hits: Vec<(u64, String)>,
}

/// Both desk evaluations, the leaky probes and one viz prompt, all against the
/// canary database.
pub fn canary_run() -> CanaryRun {
    let items = Desk::new().items();
    let (tables, sentinels) = canary_tables(toy_tables(TOY_SEED));
    let desk = Desk::with_tables(tables);

    let mut completions = script("base", &items);
    completions.extend(script("variant", &items));
    for (bad, good) in LEAKY {
        completions.push(wrap(bad));
        completions.push(wrap(good));
    }
    completions.push("VizType: 2; Xaxis: insurance; Yaxis: n".into());
    let gateway = desk.gateway(Backend::scripted(completions));
    let ctx = desk.ctx(&gateway, PipelineFlags::default());

    for _ in ["base", "variant"] {
        run_eval(&items, &ctx, EqualityOptions::default()).unwrap();
    }
    let mut engine_errors = 0;
    for (i, _) in LEAKY.iter().enumerate() {
        let out = run_pipeline(&format!("probe {i}"), &ctx, &[]);
        let failed_then_fixed = out.attempts.len() == 2 && out.result().is_some();
        engine_errors += (failed_then_fixed && out.attempts[0].execution_error.is_some()) as usize;
    }

    // the visualization step sees column names, never rows
    let q = "SELECT admissions.insurance, COUNT(*) AS n FROM admissions GROUP BY admissions.insurance";
    let result = medsql_core::execute_sql(q, &desk.conn, Default::default()).unwrap();
    let viz = build_viz_prompt(&VIZ_NAMES, &result.column_names(), "Admissions per insurance").unwrap();
    gateway.complete(&viz, &desk.model).unwrap();

    let log = read_audit_log(&desk.audit_path()).unwrap();
    let mut hits = scan_audit_log(&desk.audit_path(), &sentinels).unwrap();
    // anything that looks like a text sentinel, listed or not
    hits.extend(log.iter().filter(|e| e.prompt.contains("ZQ0")).map(|e| (e.seq, "ZQ0".to_string())));
    CanaryRun {
        prompts: log.len(),
        engine_errors,
        hits,
    }
}
