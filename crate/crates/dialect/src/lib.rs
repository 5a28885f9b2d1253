//! SQL front end for the analytics engine: a parser for the read-only SELECT
//! subset used by clinical benchmark queries, a canonical renderer, and the
//! rewriter that moves SQLite-style date/time constructs onto DuckDB.
//!
//! ```
//! use medsql_dialect::transpile;
//!
//! let sql = transpile("SELECT datetime(t, 'start of year', '+1 month') FROM x").unwrap();
//! assert_eq!(sql, "SELECT DATE_TRUNC('year', t) + INTERVAL '1 month' FROM x");
//! ```

pub mod ast;
mod error;
mod parser;
mod render;
pub mod token;
mod transpile;
pub mod visit;

pub use ast::SqlAst;
pub use error::{ParseError, TranspileError};
pub use parser::parse_sql;
pub use render::{render_expr, render_sql};
pub use token::Location;
pub use transpile::{transpile, RewriteRule, RuleFamily, Transpiler, RULES};

/// Which side of the translation a text belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dialect {
    /// SQLite, the benchmark's original engine.
    Source,
    /// DuckDB, the engine queries execute on.
    Target,
}

impl std::str::FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "source" | "sqlite" => Ok(Dialect::Source),
            "target" | "duckdb" => Ok(Dialect::Target),
            other => Err(format!("unknown dialect '{other}'")),
        }
    }
}
