//! Pulls SQL out of model output and checks it against the schema catalog.

use std::collections::{BTreeSet, HashSet};

use medsql_dialect::ast::*;
use medsql_dialect::{parse_sql, render_sql, Dialect, ParseError};
use serde::Serialize;
use thiserror::Error;

use crate::schema_catalog::SchemaCatalog;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("no ```sql fenced block in model output")]
    NoFencedBlock,
    #[error("fenced sql block is empty")]
    EmptyBlock,
}

/// Content of the last complete "```sql" ... "```" block, trimmed. Models that
/// reason step by step may emit intermediate blocks before the final one.
pub fn extract_sql(completion: &str) -> Result<String, ExtractError> {
    const OPEN: &str = "```sql";
    let mut last = None;
    let mut search = 0;
    while let Some(pos) = completion[search..].find(OPEN) {
        let start = search + pos + OPEN.len();
        search = start;
        // the opener must end its line
        let Some(nl) = completion[start..].find('\n') else { break };
        if !completion[start..start + nl].trim().is_empty() {
            continue;
        }
        let body_start = start + nl + 1;
        let Some(close) = completion[body_start..].find("```") else { break };
        last = Some(&completion[body_start..body_start + close]);
        search = body_start + close + 3;
    }
    let sql = last.ok_or(ExtractError::NoFencedBlock)?.trim();
    if sql.is_empty() {
        return Err(ExtractError::EmptyBlock);
    }
    Ok(sql.to_string())
}

/// Re-renders `sql` in canonical target form. Delimited identifiers written
/// with backticks come out double-quoted, which DuckDB requires.
pub fn canonicalize(sql: &str) -> Result<String, ParseError> {
    Ok(render_sql(&parse_sql(sql, Dialect::Target)?, Dialect::Target))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ColumnRef {
    /// Base table the reference resolved to, or the unresolved qualifier.
    /// `None` for a bare column that no alias explains.
    pub table: Option<String>,
    pub column: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Identifiers {
    pub tables: BTreeSet<String>,
    pub columns: BTreeSet<ColumnRef>,
    /// Qualifiers that name neither an alias nor a table in scope.
    pub unknown_qualifiers: BTreeSet<String>,
    pub star_select: bool,
}

pub fn collect_identifiers(sql: &str) -> Result<Identifiers, ParseError> {
    let ast = parse_sql(sql, Dialect::Target)?;
    Ok(collect_from_ast(&ast))
}

pub fn collect_from_ast(ast: &SqlAst) -> Identifiers {
    let mut c = Collector::default();
    c.query(&ast.query, &[]);
    c.out
}

#[derive(Debug, Clone)]
enum Relation {
    Base(String),
    /// Derived table or CTE; `None` when its columns cannot be listed.
    Local(Option<Vec<String>>),
}

#[derive(Debug, Clone, Default)]
struct Scope {
    relations: Vec<(String, Relation)>,
    output_aliases: HashSet<String>,
}

#[derive(Debug, Clone)]
struct CteDef {
    name: String,
    columns: Option<Vec<String>>,
}

#[derive(Default)]
struct Collector {
    out: Identifiers,
}

fn lower(s: &str) -> String {
    s.to_lowercase()
}

/// Output column names of a query, when they can be determined statically.
fn output_names(q: &Query) -> Option<Vec<String>> {
    fn of_set(s: &SetExpr) -> Option<Vec<String>> {
        match s {
            SetExpr::Select(sel) => sel
                .projection
                .iter()
                .map(|item| match item {
                    SelectItem::Expr { alias: Some(a), .. } => Some(lower(&a.value)),
                    SelectItem::Expr { expr: Expr::Identifier(id), .. } => Some(lower(&id.value)),
                    SelectItem::Expr {
                        expr: Expr::CompoundIdentifier(ids),
                        ..
                    } => ids.last().map(|i| lower(&i.value)),
                    SelectItem::Expr { .. } => Some(String::new()),
                    _ => None,
                })
                .collect(),
            SetExpr::Query(q) => output_names(q),
            SetExpr::SetOperation { left, .. } => of_set(left),
            SetExpr::Values(_) => None,
        }
    }
    of_set(&q.body)
}

impl Collector {
    fn query(&mut self, q: &Query, outer: &[Scope]) {
        self.query_with_ctes(q, outer, &[]);
    }

    fn query_with_ctes(&mut self, q: &Query, outer: &[Scope], inherited: &[CteDef]) {
        let mut ctes: Vec<CteDef> = inherited.to_vec();
        if let Some(with) = &q.with {
            for cte in &with.ctes {
                let def = CteDef {
                    name: lower(&cte.alias.value),
                    columns: if cte.columns.is_empty() {
                        output_names(&cte.query)
                    } else {
                        Some(cte.columns.iter().map(|c| lower(&c.value)).collect())
                    },
                };
                if with.recursive {
                    ctes.push(def.clone());
                    self.query_with_ctes(&cte.query, outer, &ctes);
                } else {
                    self.query_with_ctes(&cte.query, outer, &ctes);
                    ctes.push(def);
                }
            }
        }
        let scope = self.set_expr(&q.body, outer, &ctes);
        // ORDER BY / LIMIT see the first SELECT's scope and its output names
        let mut chain = outer.to_vec();
        chain.push(scope);
        for o in &q.order_by {
            self.expr(&o.expr, &chain, &ctes);
        }
        for e in q.limit.iter().chain(q.offset.iter()) {
            self.expr(e, &chain, &ctes);
        }
    }

    fn set_expr(&mut self, s: &SetExpr, outer: &[Scope], ctes: &[CteDef]) -> Scope {
        match s {
            SetExpr::Select(sel) => self.select(sel, outer, ctes),
            SetExpr::Query(q) => {
                self.query_with_ctes(q, outer, ctes);
                Scope::default()
            }
            SetExpr::SetOperation { left, right, .. } => {
                let scope = self.set_expr(left, outer, ctes);
                self.set_expr(right, outer, ctes);
                scope
            }
            SetExpr::Values(rows) => {
                for e in rows.iter().flatten() {
                    self.expr(e, outer, ctes);
                }
                Scope::default()
            }
        }
    }

    fn select(&mut self, sel: &Select, outer: &[Scope], ctes: &[CteDef]) -> Scope {
        let mut scope = Scope::default();
        let mut using_columns = Vec::new();
        for twj in &sel.from {
            self.table_with_joins(twj, outer, ctes, &mut scope, &mut using_columns);
        }
        for item in &sel.projection {
            match item {
                SelectItem::Expr { alias: Some(a), .. } => {
                    scope.output_aliases.insert(lower(&a.value));
                }
                SelectItem::Wildcard(_) | SelectItem::QualifiedWildcard(_) => self.out.star_select = true,
                _ => {}
            }
        }
        let mut chain = outer.to_vec();
        chain.push(scope);
        for col in using_columns {
            self.bare_column(&col, &chain);
        }
        for item in &sel.projection {
            match item {
                SelectItem::Expr { expr, .. } => self.expr(expr, &chain, ctes),
                SelectItem::QualifiedWildcard(parts) => {
                    if let Some(q) = parts.last() {
                        if self.resolve_qualifier(&q.value, &chain).is_none() {
                            self.out.unknown_qualifiers.insert(q.value.clone());
                        }
                    }
                }
                SelectItem::Wildcard(_) => {}
            }
        }
        for e in sel
            .selection
            .iter()
            .chain(sel.group_by.iter())
            .chain(sel.having.iter())
            .chain(sel.qualify.iter())
        {
            self.expr(e, &chain, ctes);
        }
        chain.pop().unwrap_or_default()
    }

    fn table_with_joins(
        &mut self,
        twj: &TableWithJoins,
        outer: &[Scope],
        ctes: &[CteDef],
        scope: &mut Scope,
        using: &mut Vec<String>,
    ) {
        self.table_factor(&twj.relation, outer, ctes, scope, using);
        for j in &twj.joins {
            self.table_factor(&j.relation, outer, ctes, scope, using);
            match &j.constraint {
                JoinConstraint::On(e) => {
                    let mut chain = outer.to_vec();
                    chain.push(scope.clone());
                    self.expr(e, &chain, ctes);
                }
                JoinConstraint::Using(cols) => using.extend(cols.iter().map(|c| c.value.clone())),
                JoinConstraint::Natural | JoinConstraint::None => {}
            }
        }
    }

    fn table_factor(
        &mut self,
        t: &TableFactor,
        outer: &[Scope],
        ctes: &[CteDef],
        scope: &mut Scope,
        using: &mut Vec<String>,
    ) {
        match t {
            TableFactor::Table { name, alias } => {
                let parts: Vec<&str> = name.iter().map(|i| i.value.as_str()).collect();
                let last = parts.last().copied().unwrap_or_default();
                let local = (parts.len() == 1)
                    .then(|| ctes.iter().rev().find(|c| c.name == lower(last)))
                    .flatten();
                let relation = match local {
                    Some(cte) => Relation::Local(cte.columns.clone()),
                    None => {
                        let table = match parts.as_slice() {
                            [schema, t] if schema.eq_ignore_ascii_case("main") => t.to_string(),
                            _ => parts.join("."),
                        };
                        self.out.tables.insert(table.clone());
                        Relation::Base(table)
                    }
                };
                let relation = match (&relation, alias) {
                    (Relation::Local(_), Some(a)) if !a.columns.is_empty() => {
                        Relation::Local(Some(a.columns.iter().map(|c| lower(&c.value)).collect()))
                    }
                    _ => relation,
                };
                let exposed = alias.as_ref().map(|a| a.name.value.as_str()).unwrap_or(last);
                scope.relations.push((lower(exposed), relation));
            }
            TableFactor::Derived { subquery, alias } => {
                // lateral references are not supported, so only the outer chain is visible
                self.query_with_ctes(subquery, outer, ctes);
                let columns = match alias {
                    Some(a) if !a.columns.is_empty() => Some(a.columns.iter().map(|c| lower(&c.value)).collect()),
                    _ => output_names(subquery),
                };
                let name = alias.as_ref().map(|a| lower(&a.name.value)).unwrap_or_default();
                scope.relations.push((name, Relation::Local(columns)));
            }
            TableFactor::NestedJoin { inner, alias } => {
                let mut inner_scope = Scope::default();
                self.table_with_joins(inner, outer, ctes, &mut inner_scope, using);
                match alias {
                    // an aliased join hides the inner names
                    Some(a) => scope
                        .relations
                        .push((lower(&a.name.value), Relation::Local(None))),
                    None => scope.relations.extend(inner_scope.relations),
                }
            }
        }
    }

    fn resolve_qualifier<'a>(&self, q: &str, chain: &'a [Scope]) -> Option<&'a Relation> {
        let q = lower(q);
        chain
            .iter()
            .rev()
            .find_map(|s| s.relations.iter().rev().find(|(n, _)| *n == q).map(|(_, r)| r))
    }

    fn qualified_column(&mut self, qualifier: &str, column: &str, chain: &[Scope]) {
        match self.resolve_qualifier(qualifier, chain) {
            Some(Relation::Base(t)) => {
                self.out.columns.insert(ColumnRef {
                    table: Some(t.clone()),
                    column: column.to_string(),
                });
            }
            Some(Relation::Local(_)) => {}
            None => {
                self.out.unknown_qualifiers.insert(qualifier.to_string());
                self.out.columns.insert(ColumnRef {
                    table: Some(qualifier.to_string()),
                    column: column.to_string(),
                });
            }
        }
    }

    fn bare_column(&mut self, column: &str, chain: &[Scope]) {
        let name = lower(column);
        for scope in chain.iter().rev() {
            let mut opaque = false;
            for (_, rel) in &scope.relations {
                match rel {
                    Relation::Local(Some(cols)) if cols.contains(&name) => return,
                    Relation::Local(None) => opaque = true,
                    _ => {}
                }
            }
            if opaque {
                // a relation with unknown columns may supply it
                return;
            }
        }
        if chain.last().is_some_and(|s| s.output_aliases.contains(&name)) {
            return;
        }
        self.out.columns.insert(ColumnRef {
            table: None,
            column: column.to_string(),
        });
    }

    fn expr(&mut self, e: &Expr, chain: &[Scope], ctes: &[CteDef]) {
        match e {
            Expr::Identifier(id) => self.bare_column(&id.value, chain),
            Expr::CompoundIdentifier(ids) => match ids.as_slice() {
                [.., q, c] => self.qualified_column(&q.value, &c.value, chain),
                [c] => self.bare_column(&c.value, chain),
                [] => {}
            },
            Expr::Literal { .. } | Expr::TypedString { .. } | Expr::Current { .. } => {}
            Expr::Interval { value, .. } => self.expr(value, chain, ctes),
            Expr::Unary { expr, .. }
            | Expr::IsNull { expr, .. }
            | Expr::Cast { expr, .. }
            | Expr::Extract { expr, .. } => self.expr(expr, chain, ctes),
            Expr::Binary { left, right, .. } => {
                self.expr(left, chain, ctes);
                self.expr(right, chain, ctes);
            }
            Expr::InList { expr, list, .. } => {
                self.expr(expr, chain, ctes);
                for x in list {
                    self.expr(x, chain, ctes);
                }
            }
            Expr::InSubquery { expr, subquery, .. } => {
                self.expr(expr, chain, ctes);
                self.query_with_ctes(subquery, chain, ctes);
            }
            Expr::Between { expr, low, high, .. } => {
                for x in [expr, low, high] {
                    self.expr(x, chain, ctes);
                }
            }
            Expr::Like {
                expr, pattern, escape, ..
            } => {
                self.expr(expr, chain, ctes);
                self.expr(pattern, chain, ctes);
                if let Some(esc) = escape {
                    self.expr(esc, chain, ctes);
                }
            }
            Expr::Function(f) => {
                for a in f.arg_list() {
                    self.expr(a, chain, ctes);
                }
                if let Some(filter) = &f.filter {
                    self.expr(filter, chain, ctes);
                }
                if let Some(w) = &f.over {
                    for p in &w.partition_by {
                        self.expr(p, chain, ctes);
                    }
                    for o in &w.order_by {
                        self.expr(&o.expr, chain, ctes);
                    }
                }
            }
            Expr::Case {
                operand,
                branches,
                else_result,
            } => {
                if let Some(op) = operand {
                    self.expr(op, chain, ctes);
                }
                for (w, t) in branches {
                    self.expr(w, chain, ctes);
                    self.expr(t, chain, ctes);
                }
                if let Some(x) = else_result {
                    self.expr(x, chain, ctes);
                }
            }
            Expr::Exists { subquery, .. } | Expr::Subquery(subquery) => {
                self.query_with_ctes(subquery, chain, ctes)
            }
            Expr::Tuple(items) => {
                for x in items {
                    self.expr(x, chain, ctes);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub identifier: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GuardrailReport {
    pub passed: bool,
    pub referenced_tables: BTreeSet<String>,
    pub referenced_columns: BTreeSet<ColumnRef>,
    pub violations: Vec<Violation>,
}

impl GuardrailReport {
    /// Error text fed back to the model when the check fails.
    pub fn failure_message(&self) -> Option<String> {
        let v = self.violations.first()?;
        Some(match v.reason.as_str() {
            "select star" => "query selects all columns with *; list the needed columns".to_string(),
            r if r.starts_with("parse error") => format!("query could not be parsed: {}", &r["parse error: ".len()..]),
            _ => format!("query references unknown identifier {}", v.identifier),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardrailOptions {
    /// Reject `SELECT *` (the generation prompt forbids it).
    pub reject_star: bool,
}

impl Default for GuardrailOptions {
    fn default() -> Self {
        Self { reject_star: true }
    }
}

/// Checks that `sql` references only tables and columns present in `catalog`.
/// Bare columns are accepted when any referenced table has them.
pub fn guardrail_check(sql: &str, catalog: &SchemaCatalog, options: GuardrailOptions) -> GuardrailReport {
    let ids = match collect_identifiers(sql) {
        Ok(ids) => ids,
        Err(e) => {
            return GuardrailReport {
                passed: false,
                violations: vec![Violation {
                    identifier: String::new(),
                    reason: format!("parse error: {e}"),
                }],
                ..Default::default()
            }
        }
    };
    let mut violations = Vec::new();
    if options.reject_star && ids.star_select {
        violations.push(Violation {
            identifier: "*".into(),
            reason: "select star".into(),
        });
    }
    for t in &ids.tables {
        if !catalog.lookup_identifier(t, None) {
            violations.push(Violation {
                identifier: t.clone(),
                reason: "unknown table".into(),
            });
        }
    }
    for q in &ids.unknown_qualifiers {
        if !ids.tables.contains(q) {
            violations.push(Violation {
                identifier: q.clone(),
                reason: "unknown table".into(),
            });
        }
    }
    let known_tables: Vec<&str> = ids
        .tables
        .iter()
        .filter(|t| catalog.lookup_identifier(t, None))
        .map(String::as_str)
        .collect();
    for c in &ids.columns {
        match &c.table {
            Some(t) if catalog.lookup_identifier(t, None) => {
                if !catalog.lookup_identifier(t, Some(&c.column)) {
                    violations.push(Violation {
                        identifier: c.column.clone(),
                        reason: format!("unknown column in table {t}"),
                    });
                }
            }
            // unknown qualifier, already reported
            Some(_) => {}
            None => {
                if !known_tables
                    .iter()
                    .any(|t| catalog.lookup_identifier(t, Some(&c.column)))
                {
                    violations.push(Violation {
                        identifier: c.column.clone(),
                        reason: "unknown column".into(),
                    });
                }
            }
        }
    }
    GuardrailReport {
        passed: violations.is_empty(),
        referenced_tables: ids.tables,
        referenced_columns: ids.columns,
        violations,
    }
}
