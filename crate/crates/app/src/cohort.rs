//! Cohort flow: the chain of filters in a query built from nested
//! `col IN (SELECT ...)` conditions, outermost last.

use medsql_dialect::ast::{BinaryOp, Expr, Query, SetExpr, TableFactor};
use medsql_dialect::{parse_sql, render_expr, render_sql, Dialect, SqlAst};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterStep {
    pub depth: usize,
    /// `FROM <tables> WHERE <own conditions>`, the nested condition shown as `IN (...)`.
    pub label: String,
    pub sql: String,
}

fn conjuncts<'a>(expr: &'a Expr, out: &mut Vec<&'a Expr>) {
    match expr {
        Expr::Binary {
            left,
            op: BinaryOp::And,
            right,
        } => {
            conjuncts(left, out);
            conjuncts(right, out);
        }
        e => out.push(e),
    }
}

fn table_names(q: &Query) -> Vec<String> {
    let SetExpr::Select(s) = &q.body else { return vec![] };
    let mut names = Vec::new();
    for twj in &s.from {
        let factors = std::iter::once(&twj.relation).chain(twj.joins.iter().map(|j| &j.relation));
        for f in factors {
            match f {
                TableFactor::Table { name, .. } => {
                    names.push(name.iter().map(|i| i.value.as_str()).collect::<Vec<_>>().join("."))
                }
                _ => names.push("(subquery)".into()),
            }
        }
    }
    names
}

/// Steps from the innermost subquery to the full query. A query without a
/// nested `IN` yields a single step.
pub fn cohort_chain(sql: &str) -> Result<Vec<FilterStep>, String> {
    let ast = parse_sql(sql, Dialect::Target).map_err(|e| e.to_string())?;
    let mut steps = Vec::new();
    let mut current = ast.query;
    loop {
        let mut own = Vec::new();
        let mut next: Option<Query> = None;
        if let SetExpr::Select(s) = &current.body {
            if let Some(selection) = &s.selection {
                let mut parts = Vec::new();
                conjuncts(selection, &mut parts);
                for p in parts {
                    match p {
                        Expr::InSubquery { expr, subquery, negated } if next.is_none() => {
                            let not = if *negated { "NOT " } else { "" };
                            own.push(format!("{} {not}IN (...)", render_expr(expr, Dialect::Target)));
                            next = Some((**subquery).clone());
                        }
                        other => own.push(render_expr(other, Dialect::Target)),
                    }
                }
            }
        }
        let mut label = format!("FROM {}", table_names(&current).join(", "));
        if !own.is_empty() {
            label.push_str(" WHERE ");
            label.push_str(&own.join(" AND "));
        }
        steps.push(FilterStep {
            depth: steps.len(),
            label,
            sql: render_sql(&SqlAst { query: current.clone() }, Dialect::Target),
        });
        match next {
            Some(q) => current = q,
            None => break,
        }
    }
    steps.reverse();
    let n = steps.len();
    for (i, s) in steps.iter_mut().enumerate() {
        s.depth = n - 1 - i;
    }
    Ok(steps)
}
