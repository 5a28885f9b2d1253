//! The toy database with every cell value replaced by a sentinel. The mapping
//! is per distinct value, so joins and group-bys still behave.

use std::collections::BTreeMap;

use chrono::Months;
use medsql_core::query_result::{timestamp_text, Value};

use super::toy::Table;

const INT_BASE: i64 = 987_000_000;
const REAL_BASE: f64 = 654_321_000.0;
const YEARS_AHEAD: u32 = 300;

/// Returns the canary tables and the sentinel strings to search for.
pub fn canary_tables(tables: Vec<Table>) -> (Vec<Table>, Vec<String>) {
    let mut text_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut sentinels = Vec::new();
    let mut out = Vec::new();
    for t in tables {
        let rows = t
            .rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| {
                        let (v, token) = disguise(v, &mut text_ids);
                        sentinels.extend(token);
                        v
                    })
                    .collect()
            })
            .collect();
        out.push(Table { rows, ..t });
    }
    sentinels.sort();
    sentinels.dedup();
    (out, sentinels)
}

fn disguise(v: Value, text_ids: &mut BTreeMap<String, usize>) -> (Value, Option<String>) {
    match v {
        Value::Null => (Value::Null, None),
        Value::Bool(b) => disguise(Value::Int(b as i64), text_ids),
        Value::Int(i) => {
            let x = INT_BASE + i;
            (Value::Int(x), Some(x.to_string()))
        }
        Value::Real(r) => {
            let x = REAL_BASE + r;
            (Value::Real(x), Some((x.trunc() as i64).to_string()))
        }
        Value::Text(s) => {
            let n = text_ids.len();
            let id = *text_ids.entry(s.clone()).or_insert(n);
            let token = format!("ZQ{id:05}");
            (Value::Text(format!("{token}_{s}")), Some(token))
        }
        Value::Timestamp(ts) => {
            let x = ts + Months::new(12 * YEARS_AHEAD);
            (Value::Timestamp(x), Some(timestamp_text(&x)[..10].to_string()))
        }
        Value::Date(d) => {
            let x = d + Months::new(12 * YEARS_AHEAD);
            (Value::Date(x), Some(x.format("%Y-%m-%d").to_string()))
        }
    }
}
