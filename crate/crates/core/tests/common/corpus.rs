//! Source-dialect queries over the toy schema for the differential check.

use medsql_core::eval_harness::results_equal;
use medsql_dialect::Transpiler;

use super::toy::sqlite_query;

/// Modifier chains exercised on a timestamp column. Days in the data stop at
/// 28, so month offsets never hit end-of-month normalisation.
pub const MODIFIER_CHAINS: &[&[&str]] = &[
    &[],
    &["start of year"],
    &["start of month"],
    &["start of day"],
    &["+1 day"],
    &["-1 day"],
    &["+2 hours"],
    &["-30 minutes"],
    &["+1 month"],
    &["-1 year"],
    &["+10 seconds"],
    &["-0 year"],
    &["start of year", "+1 month"],
    &["start of month", "-1 day"],
    &["start of year", "-0 year"],
    &["start of day", "+12 hours"],
    &["+1 year", "start of year"],
    &["-1 month", "start of month"],
];

fn mods(chain: &[&str]) -> String {
    chain.iter().map(|m| format!(", '{m}'")).collect()
}

pub fn differential_corpus() -> Vec<String> {
    let mut out = Vec::new();
    for chain in MODIFIER_CHAINS {
        let m = mods(chain);
        out.push(format!(
            "SELECT admissions.hadm_id, datetime(admissions.admittime{m}) AS t FROM admissions"
        ));
        out.push(format!(
            "SELECT COUNT(*) FROM admissions WHERE datetime(admissions.dischtime{m}) >= '2100-01-01 00:00:00'"
        ));
        out.push(format!(
            "SELECT strftime('%Y-%m', cost.chargetime{m}) AS ym, COUNT(*) AS n FROM cost GROUP BY ym"
        ));
    }
    out.extend(
        [
            // current time, bare and under modifiers
            "SELECT COUNT(*) FROM admissions WHERE admissions.admittime < current_time",
            "SELECT COUNT(*) FROM admissions WHERE datetime(admissions.admittime) > datetime(current_time, '-5 year')",
            "SELECT COUNT(*) FROM admissions WHERE datetime(admissions.admittime, 'start of year') = datetime(current_time, 'start of year', '-0 year')",
            "SELECT COUNT(*) FROM prescriptions WHERE datetime(prescriptions.starttime, 'start of month') = datetime(current_time, 'start of month', '-1 month')",
            "SELECT COUNT(*) FROM patients WHERE strftime('%Y', patients.dob) <= strftime('%Y', current_time)",
            "SELECT COUNT(DISTINCT admissions.subject_id) FROM admissions WHERE datetime(admissions.admittime) <= datetime(current_time, '-1 year')",
            // benchmark-style questions
            "SELECT MIN(T1.C1) FROM (SELECT SUM(cost.cost) AS C1 FROM cost WHERE cost.hadm_id IN (SELECT procedures_icd.hadm_id FROM procedures_icd WHERE procedures_icd.icd_code = (SELECT d_icd_procedures.icd_code FROM d_icd_procedures WHERE d_icd_procedures.long_title = 'other enterostomy')) AND strftime('%Y', cost.chargetime) >= '2100' GROUP BY cost.hadm_id) AS T1",
            "SELECT MAX(T1.C1) FROM (SELECT SUM(cost.cost) AS C1 FROM cost WHERE cost.hadm_id IN (SELECT diagnoses_icd.hadm_id FROM diagnoses_icd WHERE diagnoses_icd.icd_code = (SELECT d_icd_diagnoses.icd_code FROM d_icd_diagnoses WHERE d_icd_diagnoses.long_title = 'postprocedural pneumothorax')) AND strftime('%Y', cost.chargetime) = '2100' GROUP BY cost.hadm_id) AS T1",
            "SELECT COUNT(*) FROM (SELECT admissions.subject_id FROM admissions WHERE strftime('%Y', admissions.admittime) >= '2100' GROUP BY admissions.subject_id) AS t",
            "SELECT T3.drug FROM (SELECT T2.drug, DENSE_RANK() OVER (ORDER BY T2.c DESC) AS r FROM (SELECT prescriptions.drug, COUNT(*) AS c FROM prescriptions WHERE prescriptions.hadm_id IN (SELECT admissions.hadm_id FROM admissions WHERE admissions.age BETWEEN 40 AND 49) AND datetime(prescriptions.starttime) >= datetime('2100-01-01') GROUP BY prescriptions.drug) AS T2) AS T3 WHERE T3.r <= 5",
            "SELECT AVG(admissions.age) FROM admissions WHERE admissions.insurance = 'Medicare' AND datetime(admissions.admittime, 'start of year') = datetime('2100-06-15 10:00:00', 'start of year')",
            "SELECT patients.gender, COUNT(*) AS n FROM patients WHERE patients.dod IS NOT NULL GROUP BY patients.gender",
            "SELECT diagnoses_icd.icd_code, COUNT(*) AS n FROM diagnoses_icd WHERE strftime('%Y-%m', diagnoses_icd.charttime, '+1 month') >= '2100-02' GROUP BY diagnoses_icd.icd_code ORDER BY n DESC",
            "SELECT COUNT(*) FROM admissions WHERE datetime(admissions.dischtime) BETWEEN datetime(admissions.admittime, '+1 day') AND datetime(admissions.admittime, '+5 day')",
            "SELECT strftime('%m', admissions.admittime) AS m, COUNT(*) AS n FROM admissions GROUP BY m",
            "SELECT admissions.hadm_id FROM admissions JOIN patients ON admissions.subject_id = patients.subject_id WHERE strftime('%Y', patients.dob) < '1960' AND datetime(admissions.admittime) > datetime('2099-12-31 23:59:59')",
        ]
        .map(String::from),
    );
    out
}

/// Source constructs without a rewrite; each must be rejected, never passed
/// through.
pub const UNSUPPORTED: &[&str] = &[
    "SELECT julianday(admissions.dischtime) - julianday(admissions.admittime) FROM admissions",
    "SELECT datetime(admissions.admittime, 'weekday 0') FROM admissions",
    "SELECT datetime(admissions.admittime, 'localtime') FROM admissions",
    "SELECT datetime(admissions.admittime, 'unixepoch') FROM admissions",
    "SELECT date(admissions.admittime) FROM admissions",
    "SELECT time(admissions.admittime) FROM admissions",
    "SELECT datetime('now', '-1 year')",
    "SELECT strftime('%Y', 'now')",
    "SELECT datetime(admissions.admittime, admissions.insurance) FROM admissions",
    "SELECT total(cost.cost) FROM cost",
];

#[derive(Debug)]
pub enum CaseOutcome {
    Equal,
    Different,
    TargetError(String),
    SourceError(String),
    Untranslated(String),
}

/// Runs `sql` on SQLite and its translation on DuckDB and compares.
pub fn run_case(
    transpiler: &Transpiler,
    sqlite: &rusqlite::Connection,
    duck: &duckdb::Connection,
    sql: &str,
) -> CaseOutcome {
    let expected = match sqlite_query(sqlite, sql) {
        Ok(r) => r,
        Err(e) => return CaseOutcome::SourceError(e),
    };
    let target = match transpiler.transpile(sql) {
        Ok(t) => t,
        Err(e) => return CaseOutcome::Untranslated(e.to_string()),
    };
    match medsql_core::execute_sql(&target, duck, Default::default()) {
        Ok(actual) if results_equal(&expected, &actual) => CaseOutcome::Equal,
        Ok(_) => CaseOutcome::Different,
        Err(e) => CaseOutcome::TargetError(e.to_string()),
    }
}
