//! Canonical SQL rendering: upper-case keywords, single spaces, `, ` between
//! list items, and parentheses only where operator precedence requires them.

use std::fmt::Write;

use crate::ast::*;
use crate::parser::prec;
use crate::Dialect;

pub fn render_sql(ast: &SqlAst, dialect: Dialect) -> String {
    let mut r = Renderer {
        out: String::new(),
        dialect,
    };
    r.query(&ast.query);
    r.out
}

/// Renders a single expression; used for error messages and tests.
pub fn render_expr(expr: &Expr, dialect: Dialect) -> String {
    let mut r = Renderer {
        out: String::new(),
        dialect,
    };
    r.expr(expr);
    r.out
}

fn expr_precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::Binary { op, .. } => binary_precedence(*op),
        Expr::Unary { op: UnaryOp::Not, .. } => prec::NOT,
        Expr::Unary { .. } => prec::UNARY,
        Expr::IsNull { .. }
        | Expr::InList { .. }
        | Expr::InSubquery { .. }
        | Expr::Between { .. }
        | Expr::Like { .. } => prec::CMP,
        Expr::Cast {
            kind: CastKind::DoubleColon,
            ..
        } => prec::POSTFIX,
        _ => u8::MAX,
    }
}

fn binary_precedence(op: BinaryOp) -> u8 {
    use BinaryOp::*;
    match op {
        Or => prec::OR,
        And => prec::AND,
        Eq | DoubleEq | NotEq | Lt | LtEq | Gt | GtEq | Is | IsNot | IsDistinctFrom
        | IsNotDistinctFrom => prec::CMP,
        Plus | Minus => prec::ADD,
        Multiply | Divide | Modulo => prec::MUL,
        Concat => prec::CONCAT,
    }
}

fn binary_symbol(op: BinaryOp) -> &'static str {
    use BinaryOp::*;
    match op {
        Or => "OR",
        And => "AND",
        Eq => "=",
        DoubleEq => "==",
        NotEq => "<>",
        Lt => "<",
        LtEq => "<=",
        Gt => ">",
        GtEq => ">=",
        Is => "IS",
        IsNot => "IS NOT",
        IsDistinctFrom => "IS DISTINCT FROM",
        IsNotDistinctFrom => "IS NOT DISTINCT FROM",
        Plus => "+",
        Minus => "-",
        Multiply => "*",
        Divide => "/",
        Modulo => "%",
        Concat => "||",
    }
}

struct Renderer {
    out: String,
    dialect: Dialect,
}

impl Renderer {
    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn comma_list<T>(&mut self, items: &[T], mut f: impl FnMut(&mut Self, &T)) {
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            f(self, item);
        }
    }

    fn ident(&mut self, id: &Ident) {
        match (id.quote, self.dialect) {
            (None, _) => self.push(&id.value),
            (Some(_), Dialect::Target) => self.quoted(&id.value, '"'),
            (Some(q), Dialect::Source) => self.quoted(&id.value, q),
        }
    }

    fn quoted(&mut self, value: &str, q: char) {
        self.out.push(q);
        for c in value.chars() {
            if c == q {
                self.out.push(q);
            }
            self.out.push(c);
        }
        self.out.push(q);
    }

    fn dotted(&mut self, parts: &[Ident]) {
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                self.push(".");
            }
            self.ident(p);
        }
    }

    fn query(&mut self, q: &Query) {
        if let Some(with) = &q.with {
            self.push("WITH ");
            if with.recursive {
                self.push("RECURSIVE ");
            }
            self.comma_list(&with.ctes, |r, cte| {
                r.ident(&cte.alias);
                if !cte.columns.is_empty() {
                    r.push("(");
                    r.comma_list(&cte.columns, |r, c| r.ident(c));
                    r.push(")");
                }
                r.push(" AS (");
                r.query(&cte.query);
                r.push(")");
            });
            self.push(" ");
        }
        self.set_expr(&q.body);
        if !q.order_by.is_empty() {
            self.push(" ORDER BY ");
            self.comma_list(&q.order_by, |r, o| r.order_by(o));
        }
        if let Some(limit) = &q.limit {
            self.push(" LIMIT ");
            self.expr(limit);
        }
        if let Some(offset) = &q.offset {
            self.push(" OFFSET ");
            self.expr(offset);
        }
    }

    fn set_expr(&mut self, s: &SetExpr) {
        match s {
            SetExpr::Select(sel) => self.select(sel),
            SetExpr::Query(q) => {
                self.push("(");
                self.query(q);
                self.push(")");
            }
            SetExpr::SetOperation {
                op,
                all,
                left,
                right,
            } => {
                self.set_expr(left);
                self.push(match op {
                    SetOperator::Union => " UNION ",
                    SetOperator::Intersect => " INTERSECT ",
                    SetOperator::Except => " EXCEPT ",
                });
                if *all {
                    self.push("ALL ");
                }
                self.set_expr(right);
            }
            SetExpr::Values(rows) => {
                self.push("VALUES ");
                self.comma_list(rows, |r, row| {
                    r.push("(");
                    r.comma_list(row, |r, e| r.expr(e));
                    r.push(")");
                });
            }
        }
    }

    fn select(&mut self, s: &Select) {
        self.push("SELECT ");
        if s.distinct {
            self.push("DISTINCT ");
        }
        self.comma_list(&s.projection, |r, item| match item {
            SelectItem::Wildcard(_) => r.push("*"),
            SelectItem::QualifiedWildcard(parts) => {
                r.dotted(parts);
                r.push(".*");
            }
            SelectItem::Expr { expr, alias } => {
                r.expr(expr);
                if let Some(a) = alias {
                    r.push(" AS ");
                    r.ident(a);
                }
            }
        });
        if !s.from.is_empty() {
            self.push(" FROM ");
            self.comma_list(&s.from, |r, t| r.table_with_joins(t));
        }
        if let Some(w) = &s.selection {
            self.push(" WHERE ");
            self.expr(w);
        }
        if !s.group_by.is_empty() {
            self.push(" GROUP BY ");
            self.comma_list(&s.group_by, |r, e| r.expr(e));
        }
        if let Some(h) = &s.having {
            self.push(" HAVING ");
            self.expr(h);
        }
        if let Some(q) = &s.qualify {
            self.push(" QUALIFY ");
            self.expr(q);
        }
    }

    fn table_alias(&mut self, alias: &Option<TableAlias>) {
        if let Some(a) = alias {
            self.push(" AS ");
            self.ident(&a.name);
            if !a.columns.is_empty() {
                self.push("(");
                self.comma_list(&a.columns, |r, c| r.ident(c));
                self.push(")");
            }
        }
    }

    fn table_factor(&mut self, t: &TableFactor) {
        match t {
            TableFactor::Table { name, alias } => {
                self.dotted(name);
                self.table_alias(alias);
            }
            TableFactor::Derived { subquery, alias } => {
                self.push("(");
                self.query(subquery);
                self.push(")");
                self.table_alias(alias);
            }
            TableFactor::NestedJoin { inner, alias } => {
                self.push("(");
                self.table_with_joins(inner);
                self.push(")");
                self.table_alias(alias);
            }
        }
    }

    fn table_with_joins(&mut self, t: &TableWithJoins) {
        self.table_factor(&t.relation);
        for j in &t.joins {
            if j.constraint == JoinConstraint::Natural {
                self.push(" NATURAL");
            }
            self.push(match j.kind {
                JoinKind::Inner => " JOIN ",
                JoinKind::Left => " LEFT JOIN ",
                JoinKind::Right => " RIGHT JOIN ",
                JoinKind::Full => " FULL JOIN ",
                JoinKind::Cross => " CROSS JOIN ",
            });
            self.table_factor(&j.relation);
            match &j.constraint {
                JoinConstraint::On(e) => {
                    self.push(" ON ");
                    self.expr(e);
                }
                JoinConstraint::Using(cols) => {
                    self.push(" USING (");
                    self.comma_list(cols, |r, c| r.ident(c));
                    self.push(")");
                }
                JoinConstraint::Natural | JoinConstraint::None => {}
            }
        }
    }

    fn order_by(&mut self, o: &OrderByExpr) {
        self.expr(&o.expr);
        match o.asc {
            Some(true) => self.push(" ASC"),
            Some(false) => self.push(" DESC"),
            None => {}
        }
        match o.nulls_first {
            Some(true) => self.push(" NULLS FIRST"),
            Some(false) => self.push(" NULLS LAST"),
            None => {}
        }
    }

    /// Renders `e`, parenthesised when its precedence is below `min`.
    fn operand(&mut self, e: &Expr, min: u8) {
        if expr_precedence(e) < min {
            self.push("(");
            self.expr(e);
            self.push(")");
        } else {
            self.expr(e);
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Identifier(id) => self.ident(id),
            Expr::CompoundIdentifier(parts) => self.dotted(parts),
            Expr::Literal { value, .. } => self.literal(value),
            Expr::TypedString { data_type, value } => {
                self.push(data_type);
                self.push(" ");
                self.quoted(value, '\'');
            }
            Expr::Interval { value, unit } => {
                self.push("INTERVAL ");
                self.operand(value, u8::MAX);
                if let Some(u) = unit {
                    self.push(" ");
                    self.push(u);
                }
            }
            Expr::Current { kind, parens, .. } => {
                self.push(match kind {
                    CurrentKind::Time => "CURRENT_TIME",
                    CurrentKind::Date => "CURRENT_DATE",
                    CurrentKind::Timestamp => "CURRENT_TIMESTAMP",
                });
                if *parens {
                    self.push("()");
                }
            }
            Expr::Unary { op, expr } => match op {
                UnaryOp::Not => {
                    self.push("NOT ");
                    self.operand(expr, prec::CMP);
                }
                UnaryOp::Minus | UnaryOp::Plus | UnaryOp::BitNot => {
                    self.push(match op {
                        UnaryOp::Minus => "-",
                        UnaryOp::Plus => "+",
                        _ => "~",
                    });
                    let inner = render_expr(expr, self.dialect);
                    if expr_precedence(expr) < prec::POSTFIX
                        || inner.starts_with('-')
                        || inner.starts_with('+')
                    {
                        self.push("(");
                        self.push(&inner);
                        self.push(")");
                    } else {
                        self.push(&inner);
                    }
                }
            },
            Expr::Binary { left, op, right } => {
                let p = binary_precedence(*op);
                let arithmetic = matches!(p, prec::ADD | prec::MUL);
                let needs_parens = |child: &Expr, right_side: bool| {
                    let cp = expr_precedence(child);
                    cp < p
                        || (right_side && cp == p)
                        || (p == prec::CMP && cp == prec::CMP)
                        // `||` binds differently across engines; always group it
                        || (arithmetic && matches!(child, Expr::Binary { op: BinaryOp::Concat, .. }))
                };
                for (child, right_side) in [(left, false), (right, true)] {
                    if right_side {
                        self.push(" ");
                        self.push(binary_symbol(*op));
                        self.push(" ");
                    }
                    if needs_parens(child, right_side) {
                        self.push("(");
                        self.expr(child);
                        self.push(")");
                    } else {
                        self.expr(child);
                    }
                }
            }
            Expr::IsNull { expr, negated } => {
                self.operand(expr, prec::CMP + 1);
                self.push(if *negated { " IS NOT NULL" } else { " IS NULL" });
            }
            Expr::InList {
                expr,
                list,
                negated,
            } => {
                self.operand(expr, prec::CMP + 1);
                self.push(if *negated { " NOT IN (" } else { " IN (" });
                self.comma_list(list, |r, e| r.expr(e));
                self.push(")");
            }
            Expr::InSubquery {
                expr,
                subquery,
                negated,
            } => {
                self.operand(expr, prec::CMP + 1);
                self.push(if *negated { " NOT IN (" } else { " IN (" });
                self.query(subquery);
                self.push(")");
            }
            Expr::Between {
                expr,
                negated,
                low,
                high,
            } => {
                self.operand(expr, prec::CMP + 1);
                self.push(if *negated { " NOT BETWEEN " } else { " BETWEEN " });
                self.operand(low, prec::CMP + 1);
                self.push(" AND ");
                self.operand(high, prec::CMP + 1);
            }
            Expr::Like {
                expr,
                negated,
                op,
                pattern,
                escape,
            } => {
                self.operand(expr, prec::CMP + 1);
                if *negated {
                    self.push(" NOT");
                }
                self.push(match op {
                    LikeOp::Like => " LIKE ",
                    LikeOp::ILike => " ILIKE ",
                    LikeOp::Glob => " GLOB ",
                });
                self.operand(pattern, prec::CMP + 1);
                if let Some(esc) = escape {
                    self.push(" ESCAPE ");
                    self.operand(esc, prec::CMP + 1);
                }
            }
            Expr::Function(f) => self.function(f),
            Expr::Cast {
                kind,
                expr,
                data_type,
            } => match kind {
                CastKind::DoubleColon => {
                    self.operand(expr, prec::POSTFIX);
                    self.push("::");
                    self.push(data_type);
                }
                CastKind::Cast | CastKind::TryCast => {
                    self.push(if *kind == CastKind::Cast {
                        "CAST("
                    } else {
                        "TRY_CAST("
                    });
                    self.expr(expr);
                    self.push(" AS ");
                    self.push(data_type);
                    self.push(")");
                }
            },
            Expr::Extract { field, expr } => {
                let _ = write!(self.out, "EXTRACT({field} FROM ");
                self.expr(expr);
                self.push(")");
            }
            Expr::Case {
                operand,
                branches,
                else_result,
            } => {
                self.push("CASE");
                if let Some(op) = operand {
                    self.push(" ");
                    self.expr(op);
                }
                for (cond, result) in branches {
                    self.push(" WHEN ");
                    self.expr(cond);
                    self.push(" THEN ");
                    self.expr(result);
                }
                if let Some(e) = else_result {
                    self.push(" ELSE ");
                    self.expr(e);
                }
                self.push(" END");
            }
            Expr::Exists { subquery, negated } => {
                self.push(if *negated { "NOT EXISTS (" } else { "EXISTS (" });
                self.query(subquery);
                self.push(")");
            }
            Expr::Subquery(q) => {
                self.push("(");
                self.query(q);
                self.push(")");
            }
            Expr::Tuple(items) => {
                self.push("(");
                self.comma_list(items, |r, e| r.expr(e));
                self.push(")");
            }
        }
    }

    fn literal(&mut self, value: &Literal) {
        match value {
            Literal::Number(n) => self.push(n),
            Literal::String(s) => self.quoted(s, '\''),
            Literal::Boolean(true) => self.push("TRUE"),
            Literal::Boolean(false) => self.push("FALSE"),
            Literal::Null => self.push("NULL"),
        }
    }

    fn function(&mut self, f: &Function) {
        if f.name.quote.is_some() {
            self.ident(&f.name);
        } else {
            self.push(&f.name.value.to_uppercase());
        }
        self.push("(");
        match &f.args {
            FunctionArgs::Star => self.push("*"),
            FunctionArgs::List { distinct, args } => {
                if *distinct {
                    self.push("DISTINCT ");
                }
                self.comma_list(args, |r, e| r.expr(e));
            }
        }
        self.push(")");
        if let Some(filter) = &f.filter {
            self.push(" FILTER (WHERE ");
            self.expr(filter);
            self.push(")");
        }
        if let Some(w) = &f.over {
            self.push(" OVER (");
            let mut sep = "";
            if !w.partition_by.is_empty() {
                self.push("PARTITION BY ");
                self.comma_list(&w.partition_by, |r, e| r.expr(e));
                sep = " ";
            }
            if !w.order_by.is_empty() {
                self.push(sep);
                self.push("ORDER BY ");
                self.comma_list(&w.order_by, |r, o| r.order_by(o));
            }
            self.push(")");
        }
    }
}
