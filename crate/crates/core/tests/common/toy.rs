//! A small EHR-shaped database, generated deterministically and loadable
//! into both SQLite (source dialect) and DuckDB (target dialect).

use chrono::{Duration, NaiveDate, NaiveDateTime};
use medsql_core::query_result::{timestamp_text, Column, QueryResult, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Table {
    pub name: &'static str,
    pub columns: Vec<(&'static str, &'static str)>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn ddl(&self) -> String {
        let cols: Vec<String> = self.columns.iter().map(|(n, t)| format!("{n} {t}")).collect();
        format!("CREATE TABLE {} ({})", self.name, cols.join(", "))
    }

    pub fn inserts(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|row| {
                let vals: Vec<String> = row.iter().map(literal).collect();
                format!("INSERT INTO {} VALUES ({})", self.name, vals.join(", "))
            })
            .collect()
    }
}

pub fn literal(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Real(r) => format!("{r:?}"),
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Date(d) => format!("'{}'", d.format("%Y-%m-%d")),
        Value::Timestamp(ts) => format!("'{}'", timestamp_text(ts)),
    }
}

pub const PROCEDURES: [(&str, &str); 8] = [
    ("4611", "other enterostomy"),
    ("3893", "venous catheterization, not elsewhere classified"),
    ("9604", "insertion of endotracheal tube"),
    ("9671", "continuous invasive mechanical ventilation for less than 96 consecutive hours"),
    ("3995", "hemodialysis"),
    ("5491", "percutaneous abdominal drainage"),
    ("0040", "procedure on single vessel"),
    ("8856", "coronary arteriography using two catheters"),
];

pub const DIAGNOSES: [(&str, &str); 8] = [
    ("51282", "postprocedural pneumothorax"),
    ("4019", "unspecified essential hypertension"),
    ("4280", "congestive heart failure, unspecified"),
    ("42731", "atrial fibrillation"),
    ("5849", "acute kidney failure, unspecified"),
    ("25000", "diabetes mellitus without mention of complication"),
    ("2724", "other and unspecified hyperlipidemia"),
    ("5990", "urinary tract infection, site not specified"),
];

pub const DRUGS: [&str; 10] = [
    "acetaminophen",
    "heparin",
    "insulin",
    "furosemide",
    "metoprolol tartrate",
    "potassium chloride",
    "magnesium sulfate",
    "ondansetron",
    "pantoprazole",
    "docusate sodium",
];

const YEARS: [i32; 10] = [2019, 2020, 2021, 2022, 2023, 2099, 2100, 2100, 2101, 2102];

fn ts(rng: &mut ChaCha8Rng, years: &[i32]) -> NaiveDateTime {
    let y = years[rng.random_range(0..years.len())];
    // days stop at 28 so month arithmetic agrees across engines
    NaiveDate::from_ymd_opt(y, rng.random_range(1..=12), rng.random_range(1..=28))
        .unwrap()
        .and_hms_opt(rng.random_range(0..24), rng.random_range(0..60), rng.random_range(0..60))
        .unwrap()
}

fn text(s: &str) -> Value {
    Value::Text(s.to_string())
}

pub fn toy_tables(seed: u64) -> Vec<Table> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;

    let patients: Vec<Vec<Value>> = (1..=40)
        .map(|sid| {
            let dob = ts(r, &[1940, 1950, 1960, 1970, 1980, 1990, 2000]);
            let dod = if r.random_bool(0.2) {
                Value::Timestamp(ts(r, &[2100, 2101]))
            } else {
                Value::Null
            };
            vec![
                Value::Int(sid),
                Value::Int(sid),
                text(if r.random_bool(0.5) { "M" } else { "F" }),
                Value::Timestamp(dob),
                dod,
            ]
        })
        .collect();

    let mut admissions = Vec::new();
    let mut adm_times = Vec::new();
    for i in 0..80i64 {
        let subject = r.random_range(1..=40i64);
        let admit = ts(r, &YEARS);
        let disch = admit + Duration::hours(r.random_range(20..240));
        adm_times.push((100 + i, subject, admit));
        admissions.push(vec![
            Value::Int(i + 1),
            Value::Int(subject),
            Value::Int(100 + i),
            Value::Timestamp(admit),
            Value::Timestamp(disch),
            text(["EMERGENCY", "ELECTIVE", "URGENT"][r.random_range(0..3)]),
            text(["Medicare", "Private", "Medicaid"][r.random_range(0..3)]),
            Value::Int(r.random_range(20..90)),
        ]);
    }

    let mut cost = Vec::new();
    let mut cost_row = |r: &mut ChaCha8Rng, kind: &str, event_id: i64, adm: &(i64, i64, NaiveDateTime), at: NaiveDateTime| {
        let n = cost.len() as i64 + 1;
        cost.push(vec![
            Value::Int(n),
            Value::Int(adm.1),
            Value::Int(adm.0),
            text(kind),
            Value::Int(event_id),
            Value::Timestamp(at),
            Value::Real(r.random_range(100..500_000) as f64 / 100.0),
        ]);
    };

    let mut events = |r: &mut ChaCha8Rng, codes: &[(&str, &str)], kind: &str, n: i64| {
        let mut rows = Vec::new();
        for i in 1..=n {
            let adm = adm_times[r.random_range(0..adm_times.len())];
            let at = adm.2 + Duration::minutes(r.random_range(10..3000));
            rows.push(vec![
                Value::Int(i),
                Value::Int(adm.1),
                Value::Int(adm.0),
                text(codes[r.random_range(0..codes.len())].0),
                Value::Timestamp(at),
            ]);
            cost_row(r, kind, i, &adm, at);
        }
        rows
    };
    let procedures_icd = events(r, &PROCEDURES, "procedures_icd", 70);
    let diagnoses_icd = events(r, &DIAGNOSES, "diagnoses_icd", 70);

    let mut prescriptions = Vec::new();
    for i in 1..=120i64 {
        let adm = adm_times[r.random_range(0..adm_times.len())];
        let start = adm.2 + Duration::minutes(r.random_range(10..2000));
        prescriptions.push(vec![
            Value::Int(i),
            Value::Int(adm.1),
            Value::Int(adm.0),
            Value::Timestamp(start),
            Value::Timestamp(start + Duration::hours(r.random_range(1..96))),
            text(DRUGS[r.random_range(0..DRUGS.len())]),
            text(&r.random_range(1..20).to_string()),
            text(["PO", "IV", "SC"][r.random_range(0..3)]),
        ]);
        cost_row(r, "prescriptions", i, &adm, start);
    }

    let dict = |codes: &[(&str, &str)]| -> Vec<Vec<Value>> {
        codes
            .iter()
            .enumerate()
            .map(|(i, (c, t))| vec![Value::Int(i as i64 + 1), text(c), text(t)])
            .collect()
    };
    let event_cols = vec![
        ("row_id", "BIGINT"),
        ("subject_id", "BIGINT"),
        ("hadm_id", "BIGINT"),
        ("icd_code", "VARCHAR"),
        ("charttime", "TIMESTAMP"),
    ];
    let dict_cols = vec![("row_id", "BIGINT"), ("icd_code", "VARCHAR"), ("long_title", "VARCHAR")];
    vec![
        Table {
            name: "admissions",
            columns: vec![
                ("row_id", "BIGINT"),
                ("subject_id", "BIGINT"),
                ("hadm_id", "BIGINT"),
                ("admittime", "TIMESTAMP"),
                ("dischtime", "TIMESTAMP"),
                ("admission_type", "VARCHAR"),
                ("insurance", "VARCHAR"),
                ("age", "BIGINT"),
            ],
            rows: admissions,
        },
        Table {
            name: "cost",
            columns: vec![
                ("row_id", "BIGINT"),
                ("subject_id", "BIGINT"),
                ("hadm_id", "BIGINT"),
                ("event_type", "VARCHAR"),
                ("event_id", "BIGINT"),
                ("chargetime", "TIMESTAMP"),
                ("cost", "DOUBLE"),
            ],
            rows: cost,
        },
        Table {
            name: "d_icd_diagnoses",
            columns: dict_cols.clone(),
            rows: dict(&DIAGNOSES),
        },
        Table {
            name: "d_icd_procedures",
            columns: dict_cols,
            rows: dict(&PROCEDURES),
        },
        Table {
            name: "diagnoses_icd",
            columns: event_cols.clone(),
            rows: diagnoses_icd,
        },
        Table {
            name: "patients",
            columns: vec![
                ("row_id", "BIGINT"),
                ("subject_id", "BIGINT"),
                ("gender", "VARCHAR"),
                ("dob", "TIMESTAMP"),
                ("dod", "TIMESTAMP"),
            ],
            rows: patients,
        },
        Table {
            name: "prescriptions",
            columns: vec![
                ("row_id", "BIGINT"),
                ("subject_id", "BIGINT"),
                ("hadm_id", "BIGINT"),
                ("starttime", "TIMESTAMP"),
                ("stoptime", "TIMESTAMP"),
                ("drug", "VARCHAR"),
                ("dose_val_rx", "VARCHAR"),
                ("route", "VARCHAR"),
            ],
            rows: prescriptions,
        },
        Table {
            name: "procedures_icd",
            columns: event_cols,
            rows: procedures_icd,
        },
    ]
}

pub const TOY_SEED: u64 = 2100;

pub fn duckdb_with(tables: &[Table]) -> duckdb::Connection {
    let conn = duckdb::Connection::open_in_memory().unwrap();
    load_duckdb(&conn, tables);
    conn
}

pub fn load_duckdb(conn: &duckdb::Connection, tables: &[Table]) {
    // the differential oracle runs in UTC
    conn.execute_batch("SET TimeZone = 'UTC'").unwrap();
    for t in tables {
        let mut batch = t.ddl() + ";\n";
        for ins in t.inserts() {
            batch.push_str(&ins);
            batch.push_str(";\n");
        }
        conn.execute_batch(&batch).unwrap();
    }
}

/// SQLite with the toy data. `CURRENT_TIME` is overridden to return the full
/// UTC timestamp, which is what the benchmark's source queries assume.
pub fn sqlite_with(tables: &[Table]) -> rusqlite::Connection {
    use rusqlite::functions::FunctionFlags;
    let conn = rusqlite::Connection::open_in_memory().unwrap();
    conn.create_scalar_function("current_time", 0, FunctionFlags::SQLITE_UTF8, |_| {
        Ok(chrono::Utc::now().format("%Y-%m-%d %H:%M:%S").to_string())
    })
    .unwrap();
    for t in tables {
        let mut batch = t.ddl() + ";\n";
        for ins in t.inserts() {
            batch.push_str(&ins);
            batch.push_str(";\n");
        }
        conn.execute_batch(&batch).unwrap();
    }
    conn
}

pub fn sqlite_query(conn: &rusqlite::Connection, sql: &str) -> Result<QueryResult, String> {
    use rusqlite::types::ValueRef;
    let mut stmt = conn.prepare(sql).map_err(|e| e.to_string())?;
    let columns: Vec<Column> = stmt
        .column_names()
        .iter()
        .map(|n| Column {
            name: n.to_string(),
            type_name: String::new(),
        })
        .collect();
    let n = columns.len();
    let mut rows = stmt.query([]).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    while let Some(row) = rows.next().map_err(|e| e.to_string())? {
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            vals.push(match row.get_ref(i).map_err(|e| e.to_string())? {
                ValueRef::Null => Value::Null,
                ValueRef::Integer(i) => Value::Int(i),
                ValueRef::Real(r) => Value::Real(r),
                ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
                ValueRef::Blob(b) => Value::Text(hex::encode(b)),
            });
        }
        out.push(vals);
    }
    Ok(QueryResult::new(columns, out))
}
