//! SQLite-to-DuckDB rewriting.
//!
//! The rewriter walks the tree bottom-up and rewrites current-time keywords,
//! `datetime(...)` calls and `strftime(...)` calls into target-dialect forms.
//! Multi-modifier `datetime` calls fold their modifiers left to right over an
//! accumulator expression. Anything without a target mapping is reported as
//! [`TranspileError::Unsupported`] instead of being passed through.

use std::collections::BTreeSet;
use std::fmt;

use crate::ast::*;
use crate::error::TranspileError;
use crate::token::Location;
use crate::visit::visit_exprs_mut;
use crate::{parse_sql, render_sql, Dialect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleFamily {
    CurrentTime,
    DatetimeCast,
    DatetimeStartOf,
    DatetimeOffset,
    DatetimeNoop,
}

impl RuleFamily {
    pub const ALL: [RuleFamily; 5] = [
        RuleFamily::CurrentTime,
        RuleFamily::DatetimeCast,
        RuleFamily::DatetimeStartOf,
        RuleFamily::DatetimeOffset,
        RuleFamily::DatetimeNoop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleFamily::CurrentTime => "current_time",
            RuleFamily::DatetimeCast => "datetime_cast",
            RuleFamily::DatetimeStartOf => "datetime_start_of",
            RuleFamily::DatetimeOffset => "datetime_offset",
            RuleFamily::DatetimeNoop => "datetime_noop",
        }
    }
}

impl fmt::Display for RuleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Describes one rewrite: the source pattern it matches and the target form it
/// produces. The action for each family lives in [`Transpiler`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewriteRule {
    pub name: &'static str,
    pub family: RuleFamily,
    pub matcher: &'static str,
    pub action: &'static str,
}

pub const RULES: [RewriteRule; 5] = [
    RewriteRule {
        name: "current-time-to-timestamp",
        family: RuleFamily::CurrentTime,
        matcher: "CURRENT_TIME",
        action: "CURRENT_TIMESTAMP",
    },
    RewriteRule {
        name: "datetime-to-cast",
        family: RuleFamily::DatetimeCast,
        matcher: "datetime(expr)",
        action: "CAST(expr AS TIMESTAMP)",
    },
    RewriteRule {
        name: "datetime-start-of",
        family: RuleFamily::DatetimeStartOf,
        matcher: "datetime(expr, 'start of X')",
        action: "DATE_TRUNC('X', expr)",
    },
    RewriteRule {
        name: "datetime-offset",
        family: RuleFamily::DatetimeOffset,
        matcher: "datetime(expr, '+/-N unit')",
        action: "expr +/- INTERVAL 'N unit'",
    },
    RewriteRule {
        name: "datetime-zero-offset",
        family: RuleFamily::DatetimeNoop,
        matcher: "datetime(expr, '-0 year')",
        action: "modifier dropped",
    },
];

const DATETIME_UNITS: &[&str] = &["year", "month", "day", "hour", "minute", "second"];

/// Functions accepted unchanged: portable across both engines or already in
/// target form.
const PASSTHROUGH_FUNCTIONS: &[&str] = &[
    // aggregates
    "count", "sum", "avg", "min", "max", "group_concat", "string_agg", "median", "mode",
    "stddev", "stddev_samp", "stddev_pop", "variance", "var_samp", "var_pop", "quantile_cont",
    "quantile_disc", "count_if", "bool_and", "bool_or", "any_value", "arg_max", "arg_min",
    "first", "last",
    // window
    "row_number", "rank", "dense_rank", "percent_rank", "cume_dist", "ntile", "lag", "lead",
    "first_value", "last_value", "nth_value",
    // scalar
    "abs", "round", "ceil", "ceiling", "floor", "sqrt", "power", "pow", "exp", "ln", "log",
    "log10", "log2", "sign", "mod", "length", "lower", "upper", "trim", "ltrim", "rtrim",
    "substr", "substring", "replace", "instr", "coalesce", "ifnull", "nullif", "concat",
    "greatest", "least", "printf", "left", "right", "lpad", "rpad", "reverse", "contains",
    "starts_with", "ends_with", "regexp_matches", "regexp_replace", "split_part", "strpos",
    "if", "iif", "hash",
    // target-dialect date/time
    "date_trunc", "date_part", "datepart", "datediff", "date_diff", "datesub", "date_sub",
    "date_add", "strftime", "strptime", "epoch", "year", "month", "day", "hour", "minute",
    "second", "dayofyear", "dayofweek", "make_date", "make_timestamp", "to_timestamp", "age",
    "now", "today", "last_day",
];

/// Source-dialect time conversions with no rewrite rule.
const UNSUPPORTED_FUNCTIONS: &[&str] = &["julianday", "date", "time", "unixepoch", "total"];

#[derive(Debug, Clone, PartialEq)]
enum Modifier {
    StartOf(String),
    Offset {
        negative: bool,
        amount: String,
        unit: String,
    },
    Zero,
}

impl Modifier {
    fn family(&self) -> RuleFamily {
        match self {
            Modifier::StartOf(_) => RuleFamily::DatetimeStartOf,
            Modifier::Offset { .. } => RuleFamily::DatetimeOffset,
            Modifier::Zero => RuleFamily::DatetimeNoop,
        }
    }

    fn parse(text: &str) -> Option<Modifier> {
        let t = text.trim().to_ascii_lowercase();
        if let Some(unit) = t.strip_prefix("start of ") {
            let unit = unit.trim();
            return ["month", "year", "day"]
                .contains(&unit)
                .then(|| Modifier::StartOf(unit.to_string()));
        }
        let (negative, rest) = match t.as_bytes().first()? {
            b'+' => (false, t[1..].trim_start()),
            b'-' => (true, t[1..].trim_start()),
            _ => (false, t.as_str()),
        };
        let mut parts = rest.split_whitespace();
        let amount = parts.next()?;
        let unit = parts.next()?;
        if parts.next().is_some() {
            return None;
        }
        let numeric = !amount.is_empty()
            && amount.chars().all(|c| c.is_ascii_digit() || c == '.')
            && amount.chars().filter(|&c| c == '.').count() <= 1
            && amount.chars().any(|c| c.is_ascii_digit());
        let singular = unit.strip_suffix('s').unwrap_or(unit);
        if !numeric || !DATETIME_UNITS.contains(&singular) {
            return None;
        }
        if amount.chars().all(|c| c == '0' || c == '.') {
            return Some(Modifier::Zero);
        }
        Some(Modifier::Offset {
            negative,
            amount: amount.to_string(),
            unit: unit.to_string(),
        })
    }
}

/// SQLite-to-DuckDB rewriter. Individual rule families can be switched off to
/// check that each one is load-bearing; a disabled family leaves its matches in
/// source form.
#[derive(Debug, Clone, Default)]
pub struct Transpiler {
    disabled: BTreeSet<RuleFamily>,
}

impl Transpiler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn without(mut self, family: RuleFamily) -> Self {
        self.disabled.insert(family);
        self
    }

    fn enabled(&self, family: RuleFamily) -> bool {
        !self.disabled.contains(&family)
    }

    /// Parses `sql` in the source dialect, rewrites it to a fixpoint and renders
    /// it canonically in the target dialect.
    pub fn transpile(&self, sql: &str) -> Result<String, TranspileError> {
        let ast = parse_sql(sql, Dialect::Source)?;
        let ast = self.transpile_ast(ast)?;
        let out = render_sql(&ast, Dialect::Target);
        // the rendered output must be valid target syntax
        parse_sql(&out, Dialect::Target)?;
        Ok(out)
    }

    pub fn transpile_ast(&self, mut ast: SqlAst) -> Result<SqlAst, TranspileError> {
        // Each pass rewrites bottom-up; produced nodes never match a rule, so
        // the second pass normally confirms the fixpoint.
        for _ in 0..8 {
            let mut changed = false;
            visit_exprs_mut(&mut ast.query, &mut |e| {
                changed |= self.rewrite(e)?;
                Ok::<(), TranspileError>(())
            })?;
            if !changed {
                break;
            }
        }
        Ok(ast)
    }

    fn rewrite(&self, e: &mut Expr) -> Result<bool, TranspileError> {
        match e {
            Expr::Current {
                kind: CurrentKind::Time,
                span,
                ..
            } if self.enabled(RuleFamily::CurrentTime) => {
                *e = Expr::Current {
                    kind: CurrentKind::Timestamp,
                    parens: false,
                    span: *span,
                };
                Ok(true)
            }
            Expr::Function(f) if f.name.quote.is_none() => {
                let name = f.name.value.to_ascii_lowercase();
                match name.as_str() {
                    "datetime" => match self.rewrite_datetime(f)? {
                        Some(new) => {
                            *e = new;
                            Ok(true)
                        }
                        None => Ok(false),
                    },
                    "strftime" => match self.rewrite_strftime(f)? {
                        Some(new) => {
                            *e = new;
                            Ok(true)
                        }
                        None => Ok(false),
                    },
                    _ if PASSTHROUGH_FUNCTIONS.contains(&name.as_str()) => Ok(false),
                    _ => Err(TranspileError::Unsupported {
                        construct: if UNSUPPORTED_FUNCTIONS.contains(&name.as_str()) {
                            format!("source-dialect function {name}()")
                        } else {
                            format!("function {name}()")
                        },
                        location: f.span.start,
                    }),
                }
            }
            _ => Ok(false),
        }
    }

    fn modifiers(args: &[Expr]) -> Result<Vec<Modifier>, TranspileError> {
        args.iter()
            .map(|arg| match arg {
                Expr::Literal {
                    value: Literal::String(text),
                    span,
                } => Modifier::parse(text).ok_or_else(|| TranspileError::Unsupported {
                    construct: format!("datetime modifier '{text}'"),
                    location: span.start,
                }),
                other => Err(TranspileError::Unsupported {
                    construct: "non-literal datetime modifier".to_string(),
                    location: other.location(),
                }),
            })
            .collect()
    }

    fn check_time_value(value: &Expr, at: Location) -> Result<(), TranspileError> {
        if let Expr::Literal {
            value: Literal::String(s),
            ..
        } = value
        {
            if s.trim().eq_ignore_ascii_case("now") {
                return Err(TranspileError::Unsupported {
                    construct: "time value 'now'".to_string(),
                    location: at,
                });
            }
        }
        Ok(())
    }

    /// Folds `modifiers` over `base`. Returns `None` when any participating
    /// family is disabled, and the unchanged base when every modifier is a no-op
    /// (the caller decides how to convert it).
    fn fold_modifiers(&self, base: Expr, modifiers: Vec<Modifier>) -> Option<Expr> {
        if modifiers.iter().any(|m| !self.enabled(m.family())) {
            return None;
        }
        let mut acc = base;
        for m in modifiers {
            acc = match m {
                Modifier::Zero => acc,
                Modifier::StartOf(unit) => {
                    let arg = timestamp_operand(acc);
                    Expr::Function(Function::call(
                        "DATE_TRUNC",
                        vec![Expr::string(unit), arg],
                        Span::default(),
                    ))
                }
                Modifier::Offset {
                    negative,
                    amount,
                    unit,
                } => Expr::Binary {
                    left: timestamp_operand(acc).boxed(),
                    op: if negative {
                        BinaryOp::Minus
                    } else {
                        BinaryOp::Plus
                    },
                    right: Expr::Interval {
                        value: Expr::string(format!("{amount} {unit}")).boxed(),
                        unit: None,
                    }
                    .boxed(),
                },
            };
        }
        Some(acc)
    }

    fn rewrite_datetime(&self, f: &Function) -> Result<Option<Expr>, TranspileError> {
        let args = f.arg_list();
        let Some((base, rest)) = args.split_first() else {
            return Err(TranspileError::Unsupported {
                construct: "datetime() without arguments".to_string(),
                location: f.span.start,
            });
        };
        Self::check_time_value(base, f.span.start)?;
        let modifiers = Self::modifiers(rest)?;
        let effective = modifiers.iter().any(|m| *m != Modifier::Zero);
        let Some(acc) = self.fold_modifiers(base.clone(), modifiers) else {
            return Ok(None);
        };
        if effective {
            return Ok(Some(acc));
        }
        if !self.enabled(RuleFamily::DatetimeCast) {
            return Ok(None);
        }
        Ok(Some(cast_to_timestamp(acc)))
    }

    /// `strftime(fmt, time, modifiers...)` becomes `STRFTIME(ts, fmt)` with the
    /// time argument converted to a timestamp. Calls already in target order
    /// (format second) are left alone.
    fn rewrite_strftime(&self, f: &Function) -> Result<Option<Expr>, TranspileError> {
        let args = f.arg_list();
        let is_format = |e: &Expr| {
            matches!(e, Expr::Literal { value: Literal::String(s), .. } if s.contains('%'))
        };
        match args {
            [first, second] if !is_format(first) && is_format(second) => return Ok(None),
            [fmt, time, rest @ ..] if is_format(fmt) => {
                Self::check_time_value(time, f.span.start)?;
                let modifiers = Self::modifiers(rest)?;
                let Some(acc) = self.fold_modifiers(time.clone(), modifiers) else {
                    return Ok(None);
                };
                let ts = if is_timestamp_valued(&acc) {
                    acc
                } else {
                    cast_to_timestamp(acc)
                };
                Ok(Some(Expr::Function(Function::call(
                    "STRFTIME",
                    vec![ts, fmt.clone()],
                    f.span,
                ))))
            }
            _ => Err(TranspileError::Unsupported {
                construct: "strftime() call shape".to_string(),
                location: f.span.start,
            }),
        }
    }
}

fn cast_to_timestamp(e: Expr) -> Expr {
    Expr::Cast {
        kind: CastKind::Cast,
        expr: e.boxed(),
        data_type: "TIMESTAMP".to_string(),
    }
}

/// Text literals must be cast before date arithmetic in the target engine.
fn timestamp_operand(e: Expr) -> Expr {
    match e {
        Expr::Literal {
            value: Literal::String(_),
            ..
        } => cast_to_timestamp(e),
        other => other,
    }
}

fn is_timestamp_valued(e: &Expr) -> bool {
    match e {
        Expr::Cast { data_type, .. } => data_type == "TIMESTAMP",
        Expr::Current {
            kind: CurrentKind::Timestamp,
            ..
        } => true,
        Expr::TypedString { data_type, .. } => data_type == "TIMESTAMP",
        Expr::Function(f) => f.name.value.eq_ignore_ascii_case("date_trunc"),
        Expr::Binary {
            left,
            op: BinaryOp::Plus | BinaryOp::Minus,
            right,
        } => matches!(**right, Expr::Interval { .. }) && is_timestamp_valued(left),
        _ => false,
    }
}

/// Rewrites source-dialect `sql` with every rule family enabled.
pub fn transpile(sql: &str) -> Result<String, TranspileError> {
    Transpiler::new().transpile(sql)
}
