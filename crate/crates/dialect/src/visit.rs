//! Tree traversal helpers.

use crate::ast::*;

/// Calls `f` on every expression in `query`, children before parents,
/// descending into subqueries, CTEs and derived tables.
pub fn visit_exprs_mut<E>(
    query: &mut Query,
    f: &mut impl FnMut(&mut Expr) -> Result<(), E>,
) -> Result<(), E> {
    if let Some(with) = &mut query.with {
        for cte in &mut with.ctes {
            visit_exprs_mut(&mut cte.query, f)?;
        }
    }
    visit_set_expr_mut(&mut query.body, f)?;
    for o in &mut query.order_by {
        visit_expr_mut(&mut o.expr, f)?;
    }
    if let Some(e) = &mut query.limit {
        visit_expr_mut(e, f)?;
    }
    if let Some(e) = &mut query.offset {
        visit_expr_mut(e, f)?;
    }
    Ok(())
}

fn visit_set_expr_mut<E>(
    body: &mut SetExpr,
    f: &mut impl FnMut(&mut Expr) -> Result<(), E>,
) -> Result<(), E> {
    match body {
        SetExpr::Select(s) => {
            for item in &mut s.projection {
                if let SelectItem::Expr { expr, .. } = item {
                    visit_expr_mut(expr, f)?;
                }
            }
            for t in &mut s.from {
                visit_table_mut(t, f)?;
            }
            for e in s
                .selection
                .iter_mut()
                .chain(s.group_by.iter_mut())
                .chain(s.having.iter_mut())
                .chain(s.qualify.iter_mut())
            {
                visit_expr_mut(e, f)?;
            }
        }
        SetExpr::Query(q) => visit_exprs_mut(q, f)?,
        SetExpr::SetOperation { left, right, .. } => {
            visit_set_expr_mut(left, f)?;
            visit_set_expr_mut(right, f)?;
        }
        SetExpr::Values(rows) => {
            for e in rows.iter_mut().flatten() {
                visit_expr_mut(e, f)?;
            }
        }
    }
    Ok(())
}

fn visit_table_mut<E>(
    t: &mut TableWithJoins,
    f: &mut impl FnMut(&mut Expr) -> Result<(), E>,
) -> Result<(), E> {
    visit_factor_mut(&mut t.relation, f)?;
    for j in &mut t.joins {
        visit_factor_mut(&mut j.relation, f)?;
        if let JoinConstraint::On(e) = &mut j.constraint {
            visit_expr_mut(e, f)?;
        }
    }
    Ok(())
}

fn visit_factor_mut<E>(
    t: &mut TableFactor,
    f: &mut impl FnMut(&mut Expr) -> Result<(), E>,
) -> Result<(), E> {
    match t {
        TableFactor::Table { .. } => Ok(()),
        TableFactor::Derived { subquery, .. } => visit_exprs_mut(subquery, f),
        TableFactor::NestedJoin { inner, .. } => visit_table_mut(inner, f),
    }
}

/// Post-order traversal of a single expression tree.
pub fn visit_expr_mut<E>(
    e: &mut Expr,
    f: &mut impl FnMut(&mut Expr) -> Result<(), E>,
) -> Result<(), E> {
    match e {
        Expr::Identifier(_)
        | Expr::CompoundIdentifier(_)
        | Expr::Literal { .. }
        | Expr::TypedString { .. }
        | Expr::Current { .. } => {}
        Expr::Interval { value, .. } => visit_expr_mut(value, f)?,
        Expr::Unary { expr, .. }
        | Expr::IsNull { expr, .. }
        | Expr::Cast { expr, .. }
        | Expr::Extract { expr, .. } => visit_expr_mut(expr, f)?,
        Expr::Binary { left, right, .. } => {
            visit_expr_mut(left, f)?;
            visit_expr_mut(right, f)?;
        }
        Expr::InList { expr, list, .. } => {
            visit_expr_mut(expr, f)?;
            for item in list {
                visit_expr_mut(item, f)?;
            }
        }
        Expr::InSubquery { expr, subquery, .. } => {
            visit_expr_mut(expr, f)?;
            visit_exprs_mut(subquery, f)?;
        }
        Expr::Between {
            expr, low, high, ..
        } => {
            visit_expr_mut(expr, f)?;
            visit_expr_mut(low, f)?;
            visit_expr_mut(high, f)?;
        }
        Expr::Like {
            expr,
            pattern,
            escape,
            ..
        } => {
            visit_expr_mut(expr, f)?;
            visit_expr_mut(pattern, f)?;
            if let Some(esc) = escape {
                visit_expr_mut(esc, f)?;
            }
        }
        Expr::Function(func) => {
            if let FunctionArgs::List { args, .. } = &mut func.args {
                for a in args {
                    visit_expr_mut(a, f)?;
                }
            }
            if let Some(filter) = &mut func.filter {
                visit_expr_mut(filter, f)?;
            }
            if let Some(w) = &mut func.over {
                for p in &mut w.partition_by {
                    visit_expr_mut(p, f)?;
                }
                for o in &mut w.order_by {
                    visit_expr_mut(&mut o.expr, f)?;
                }
            }
        }
        Expr::Case {
            operand,
            branches,
            else_result,
        } => {
            if let Some(op) = operand {
                visit_expr_mut(op, f)?;
            }
            for (c, r) in branches {
                visit_expr_mut(c, f)?;
                visit_expr_mut(r, f)?;
            }
            if let Some(e) = else_result {
                visit_expr_mut(e, f)?;
            }
        }
        Expr::Exists { subquery, .. } | Expr::Subquery(subquery) => {
            visit_exprs_mut(subquery, f)?
        }
        Expr::Tuple(items) => {
            for item in items {
                visit_expr_mut(item, f)?;
            }
        }
    }
    f(e)
}
