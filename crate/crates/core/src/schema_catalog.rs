//! Metadata-only image of a database and its prompt rendering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("introspection failed: {0}")]
    Introspection(String),
    #[error("invalid catalog: {0}")]
    Invalid(String),
}

impl From<duckdb::Error> for CatalogError {
    fn from(e: duckdb::Error) -> Self {
        CatalogError::Introspection(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub ordinal: u32,
    pub name: String,
    pub declared_type: String,
    pub not_null: bool,
    pub default_value: Option<String>,
    pub is_primary_key: bool,
}

impl ColumnSpec {
    /// A nullable, non-key column without a default.
    pub fn plain(ordinal: u32, name: &str, declared_type: &str) -> Self {
        Self {
            ordinal,
            name: name.to_string(),
            declared_type: declared_type.to_string(),
            not_null: false,
            default_value: None,
            is_primary_key: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub database_id: String,
    tables: Vec<TableSchema>,
}

impl SchemaCatalog {
    /// Validates the invariants and stores tables sorted by name.
    pub fn new(database_id: impl Into<String>, mut tables: Vec<TableSchema>) -> Result<Self, CatalogError> {
        for t in &mut tables {
            if t.name.is_empty() {
                return Err(CatalogError::Invalid("empty table name".into()));
            }
            t.columns.sort_by_key(|c| c.ordinal);
            for (i, c) in t.columns.iter().enumerate() {
                if c.name.is_empty() {
                    return Err(CatalogError::Invalid(format!("empty column name in {}", t.name)));
                }
                if let Some(prev) = t.columns[..i].iter().find(|p| {
                    p.ordinal == c.ordinal || p.name.eq_ignore_ascii_case(&c.name)
                }) {
                    return Err(CatalogError::Invalid(format!(
                        "duplicate column {} / {} in {}",
                        prev.name, c.name, t.name
                    )));
                }
            }
        }
        tables.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in tables.windows(2) {
            if pair[0].name.eq_ignore_ascii_case(&pair[1].name) {
                return Err(CatalogError::Invalid(format!("duplicate table {}", pair[1].name)));
            }
        }
        // case variants that are not adjacent after a byte-wise sort
        let mut lower: Vec<String> = tables.iter().map(|t| t.name.to_lowercase()).collect();
        lower.sort();
        lower.dedup();
        if lower.len() != tables.len() {
            return Err(CatalogError::Invalid("table names differ only in case".into()));
        }
        Ok(Self {
            database_id: database_id.into(),
            tables,
        })
    }

    pub fn tables(&self) -> &[TableSchema] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// True iff the table exists and, when given, the column exists in it.
    /// Matching is case-insensitive, like DuckDB's identifier resolution.
    pub fn lookup_identifier(&self, table: &str, column: Option<&str>) -> bool {
        match (self.table(table), column) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(t), Some(c)) => t.column(c).is_some(),
        }
    }
}

/// Reads table and column metadata from the `main` schema. No rows are read.
pub fn introspect(conn: &duckdb::Connection, database_id: &str) -> Result<SchemaCatalog, CatalogError> {
    let mut stmt = conn.prepare(
        "SELECT table_name FROM information_schema.tables \
         WHERE table_schema = 'main' AND table_type = 'BASE TABLE' ORDER BY table_name",
    )?;
    let names = stmt
        .query_map([], |r| r.get::<_, String>(0))?
        .collect::<Result<Vec<_>, _>>()?;
    let mut info = conn.prepare(
        "SELECT cid, name, type, \"notnull\", dflt_value, pk FROM pragma_table_info(?) ORDER BY cid",
    )?;
    let mut tables = Vec::with_capacity(names.len());
    for name in names {
        let columns = info
            .query_map([&name], |r| {
                Ok(ColumnSpec {
                    ordinal: r.get::<_, i64>(0)? as u32,
                    name: r.get(1)?,
                    declared_type: r.get(2)?,
                    not_null: r.get(3)?,
                    default_value: r.get(4)?,
                    is_primary_key: r.get(5)?,
                })
            })?
            .collect::<Result<Vec<_>, _>>()?;
        tables.push(TableSchema { name, columns });
    }
    SchemaCatalog::new(database_id, tables)
}

#[derive(Clone, Copy)]
enum Align {
    /// numbers and booleans
    Scalar,
    /// strings; rendered with one extra leading space
    Text,
}

/// Renders every table as "Table: <name>", "Schema:" and an aligned grid with
/// a leading row index, tables separated by a blank line.
pub fn render_schema_block(catalog: &SchemaCatalog) -> String {
    catalog
        .tables()
        .iter()
        .map(render_table)
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_table(table: &TableSchema) -> String {
    let bool_text = |b: bool| if b { "True" } else { "False" }.to_string();
    let columns: [(&str, Align, Vec<String>); 6] = [
        ("cid", Align::Scalar, table.columns.iter().map(|c| c.ordinal.to_string()).collect()),
        ("name", Align::Text, table.columns.iter().map(|c| c.name.clone()).collect()),
        ("type", Align::Text, table.columns.iter().map(|c| c.declared_type.clone()).collect()),
        ("notnull", Align::Scalar, table.columns.iter().map(|c| bool_text(c.not_null)).collect()),
        (
            "dflt_value",
            Align::Text,
            table
                .columns
                .iter()
                .map(|c| c.default_value.clone().unwrap_or_else(|| "None".into()))
                .collect(),
        ),
        ("pk", Align::Scalar, table.columns.iter().map(|c| bool_text(c.is_primary_key)).collect()),
    ];
    let index: Vec<String> = (0..table.columns.len()).map(|i| i.to_string()).collect();
    let index_width = index.iter().map(|s| s.chars().count()).max().unwrap_or(0);

    let widths: Vec<usize> = columns
        .iter()
        .map(|(header, align, values)| {
            let longest = values.iter().map(|v| v.chars().count()).max().unwrap_or(0);
            let header = header.len();
            match align {
                Align::Scalar => 2 + header.max(longest),
                Align::Text => 1 + header.max(longest + 1),
            }
        })
        .collect();

    let mut header = " ".repeat(index_width);
    for ((name, _, _), w) in columns.iter().zip(&widths) {
        header.push_str(&format!("{name:>w$}"));
    }
    let mut lines = vec![
        format!("Table: {}", table.name),
        "Schema:".to_string(),
        header.trim_start().to_string(),
    ];
    for (row, label) in index.iter().enumerate() {
        let mut line = format!("{label:<index_width$}");
        for ((_, _, values), w) in columns.iter().zip(&widths) {
            line.push_str(&format!("{:>w$}", values[row]));
        }
        lines.push(line);
    }
    lines.join("\n")
}
