//! Recursive-descent parser for single read-only SELECT statements.

use crate::ast::*;
use crate::error::ParseError;
use crate::token::{tokenize, Location, SpannedToken, Token};
use crate::Dialect;

/// Words that can never be bare identifiers.
const RESERVED: &[&str] = &[
    "ALL", "AND", "AS", "BETWEEN", "BY", "CASE", "CAST", "CROSS", "CURRENT_DATE",
    "CURRENT_TIME", "CURRENT_TIMESTAMP", "DISTINCT", "ELSE", "END", "ESCAPE", "EXCEPT",
    "EXISTS", "FALSE", "FROM", "FULL", "GLOB", "GROUP", "HAVING", "ILIKE", "IN", "INNER",
    "INTERSECT", "IS", "ISNULL", "JOIN", "LEFT", "LIKE", "LIMIT", "NATURAL", "NOT", "NOTNULL",
    "NULL", "OFFSET", "ON", "OR", "ORDER", "OUTER", "QUALIFY", "RECURSIVE", "RIGHT", "SELECT",
    "THEN", "TRUE", "UNION", "USING", "VALUES", "WHEN", "WHERE", "WINDOW", "WITH",
];

/// Additional words that end an expression instead of becoming an implicit alias.
const NOT_ALIAS: &[&str] = &["ASC", "DESC", "NULLS", "FILTER", "OVER", "PARTITION"];

pub(crate) mod prec {
    pub const OR: u8 = 1;
    pub const AND: u8 = 2;
    pub const NOT: u8 = 3;
    pub const CMP: u8 = 4;
    pub const ADD: u8 = 6;
    pub const MUL: u8 = 7;
    pub const CONCAT: u8 = 8;
    pub const UNARY: u8 = 9;
    pub const POSTFIX: u8 = 10;
}

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Parses exactly one query. Trailing semicolons are allowed; a second
/// statement is rejected.
pub fn parse_sql(sql: &str, dialect: Dialect) -> Result<SqlAst, ParseError> {
    let tokens = tokenize(sql)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        dialect,
    };
    let query = parser.parse_query()?;
    while parser.consume(&Token::SemiColon) {}
    if parser.peek() != &Token::Eof {
        let loc = parser.loc();
        if parser.tokens[..parser.pos]
            .iter()
            .any(|t| t.token == Token::SemiColon)
        {
            return Err(ParseError::at("multiple statements are not supported", loc));
        }
        return Err(ParseError::at(
            format!("unexpected {} after end of query", parser.peek()),
            loc,
        ));
    }
    Ok(SqlAst { query })
}

struct Parser {
    tokens: Vec<SpannedToken>,
    pos: usize,
    dialect: Dialect,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].token
    }

    fn peek_nth(&self, n: usize) -> &Token {
        let idx = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[idx].token
    }

    fn loc(&self) -> Location {
        self.tokens[self.pos].start
    }

    fn prev_end(&self) -> Location {
        if self.pos == 0 {
            self.tokens[0].start
        } else {
            self.tokens[self.pos - 1].end
        }
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].token.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn consume(&mut self, tok: &Token) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Token) -> Result<(), ParseError> {
        if self.consume(tok) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{tok}'")))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_keyword(kw)
    }

    fn consume_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn consume_keywords(&mut self, kws: &[&str]) -> bool {
        if kws
            .iter()
            .enumerate()
            .all(|(i, kw)| self.peek_nth(i).is_keyword(kw))
        {
            self.pos += kws.len();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.consume_keyword(kw) {
            Ok(())
        } else {
            Err(self.unexpected(kw))
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::at(
            format!("expected {expected}, found {}", self.peek()),
            self.loc(),
        )
    }

    fn parse_ident(&mut self) -> Result<Ident, ParseError> {
        let start = self.loc();
        match self.peek().clone() {
            Token::Word { value, quote } => {
                if quote.is_none() && is_reserved(&value) {
                    return Err(ParseError::at(
                        format!("unexpected keyword {}", value.to_uppercase()),
                        start,
                    ));
                }
                self.advance();
                Ok(Ident {
                    value,
                    quote,
                    span: Span::new(start, self.prev_end()),
                })
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn parse_comma_separated<T>(
        &mut self,
        mut f: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<Vec<T>, ParseError> {
        let mut out = vec![f(self)?];
        while self.consume(&Token::Comma) {
            out.push(f(self)?);
        }
        Ok(out)
    }

    fn parse_query(&mut self) -> Result<Query, ParseError> {
        let with = if self.consume_keyword("WITH") {
            let recursive = self.consume_keyword("RECURSIVE");
            let ctes = self.parse_comma_separated(Self::parse_cte)?;
            Some(With { recursive, ctes })
        } else {
            None
        };
        let body = self.parse_set_expr()?;
        let mut order_by = Vec::new();
        if self.consume_keywords(&["ORDER", "BY"]) {
            order_by = self.parse_comma_separated(Self::parse_order_by_expr)?;
        }
        let mut limit = None;
        let mut offset = None;
        if self.consume_keyword("LIMIT") {
            let first = self.parse_expr()?;
            if self.consume(&Token::Comma) {
                // SQLite `LIMIT offset, count`
                offset = Some(first);
                limit = Some(self.parse_expr()?);
            } else {
                limit = Some(first);
            }
        }
        if offset.is_none() && self.consume_keyword("OFFSET") {
            offset = Some(self.parse_expr()?);
        }
        Ok(Query {
            with,
            body,
            order_by,
            limit,
            offset,
        })
    }

    fn parse_cte(&mut self) -> Result<Cte, ParseError> {
        let alias = self.parse_ident()?;
        let mut columns = Vec::new();
        if self.consume(&Token::LParen) {
            columns = self.parse_comma_separated(Self::parse_ident)?;
            self.expect(&Token::RParen)?;
        }
        self.expect_keyword("AS")?;
        self.expect(&Token::LParen)?;
        let query = self.parse_query()?;
        self.expect(&Token::RParen)?;
        Ok(Cte {
            alias,
            columns,
            query: Box::new(query),
        })
    }

    fn parse_set_expr(&mut self) -> Result<SetExpr, ParseError> {
        let mut left = self.parse_set_operand()?;
        loop {
            let op = if self.consume_keyword("UNION") {
                SetOperator::Union
            } else if self.consume_keyword("INTERSECT") {
                SetOperator::Intersect
            } else if self.consume_keyword("EXCEPT") {
                SetOperator::Except
            } else {
                break;
            };
            let all = self.consume_keyword("ALL");
            let right = self.parse_set_operand()?;
            left = SetExpr::SetOperation {
                op,
                all,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn parse_set_operand(&mut self) -> Result<SetExpr, ParseError> {
        if self.at_keyword("SELECT") {
            Ok(SetExpr::Select(Box::new(self.parse_select()?)))
        } else if self.consume_keyword("VALUES") {
            let rows = self.parse_comma_separated(|p| {
                p.expect(&Token::LParen)?;
                let row = p.parse_comma_separated(Self::parse_expr)?;
                p.expect(&Token::RParen)?;
                Ok(row)
            })?;
            Ok(SetExpr::Values(rows))
        } else if self.consume(&Token::LParen) {
            let q = self.parse_query()?;
            self.expect(&Token::RParen)?;
            Ok(SetExpr::Query(Box::new(q)))
        } else {
            Err(self.unexpected("SELECT"))
        }
    }

    fn parse_select(&mut self) -> Result<Select, ParseError> {
        self.expect_keyword("SELECT")?;
        let distinct = if self.consume_keyword("DISTINCT") {
            true
        } else {
            self.consume_keyword("ALL");
            false
        };
        let projection = self.parse_comma_separated(Self::parse_select_item)?;
        let from = if self.consume_keyword("FROM") {
            self.parse_comma_separated(Self::parse_table_with_joins)?
        } else {
            Vec::new()
        };
        let selection = if self.consume_keyword("WHERE") {
            Some(self.parse_expr()?)
        } else {
            None
        };
        let group_by = if self.consume_keywords(&["GROUP", "BY"]) {
            self.parse_comma_separated(Self::parse_expr)?
        } else {
            Vec::new()
        };
        let having = if self.consume_keyword("HAVING") {
            Some(self.parse_expr()?)
        } else {
            None
        };
        let qualify = if self.at_keyword("QUALIFY") {
            if self.dialect == Dialect::Source {
                return Err(ParseError::at(
                    "QUALIFY is not valid in the source dialect",
                    self.loc(),
                ));
            }
            self.advance();
            Some(self.parse_expr()?)
        } else {
            None
        };
        if self.at_keyword("WINDOW") {
            return Err(ParseError::at("named WINDOW clauses are not supported", self.loc()));
        }
        Ok(Select {
            distinct,
            projection,
            from,
            selection,
            group_by,
            having,
            qualify,
        })
    }

    fn parse_select_item(&mut self) -> Result<SelectItem, ParseError> {
        let start = self.loc();
        if self.consume(&Token::Star) {
            return Ok(SelectItem::Wildcard(Span::new(start, self.prev_end())));
        }
        // qualified wildcard: a.* / a.b.*
        let mut n = 0;
        while matches!(self.peek_nth(n), Token::Word { .. }) && self.peek_nth(n + 1) == &Token::Period
        {
            n += 2;
        }
        if n > 0 && self.peek_nth(n) == &Token::Star {
            let mut parts = Vec::new();
            for _ in 0..n / 2 {
                parts.push(self.parse_ident()?);
                self.expect(&Token::Period)?;
            }
            self.expect(&Token::Star)?;
            return Ok(SelectItem::QualifiedWildcard(parts));
        }
        let expr = self.parse_expr()?;
        let alias = self.parse_optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn parse_optional_alias(&mut self) -> Result<Option<Ident>, ParseError> {
        let explicit = self.consume_keyword("AS");
        let start = self.loc();
        match self.peek().clone() {
            Token::String(value) if explicit || self.dialect == Dialect::Source => {
                self.advance();
                Ok(Some(Ident {
                    value,
                    quote: Some('"'),
                    span: Span::new(start, self.prev_end()),
                }))
            }
            Token::Word { value, quote } => {
                let blocked = quote.is_none()
                    && (is_reserved(&value)
                        || NOT_ALIAS.iter().any(|k| k.eq_ignore_ascii_case(&value)));
                if blocked && !explicit {
                    return Ok(None);
                }
                Ok(Some(self.parse_ident()?))
            }
            _ if explicit => Err(self.unexpected("alias")),
            _ => Ok(None),
        }
    }

    fn parse_table_alias(&mut self) -> Result<Option<TableAlias>, ParseError> {
        let Some(name) = self.parse_optional_alias()? else {
            return Ok(None);
        };
        let mut columns = Vec::new();
        if self.consume(&Token::LParen) {
            columns = self.parse_comma_separated(Self::parse_ident)?;
            self.expect(&Token::RParen)?;
        }
        Ok(Some(TableAlias { name, columns }))
    }

    fn parse_table_with_joins(&mut self) -> Result<TableWithJoins, ParseError> {
        let relation = self.parse_table_factor()?;
        let mut joins = Vec::new();
        loop {
            let natural = self.consume_keyword("NATURAL");
            let kind = if self.consume_keyword("JOIN") || self.consume_keywords(&["INNER", "JOIN"]) {
                JoinKind::Inner
            } else if self.consume_keywords(&["LEFT", "JOIN"])
                || self.consume_keywords(&["LEFT", "OUTER", "JOIN"])
            {
                JoinKind::Left
            } else if self.consume_keywords(&["RIGHT", "JOIN"])
                || self.consume_keywords(&["RIGHT", "OUTER", "JOIN"])
            {
                JoinKind::Right
            } else if self.consume_keywords(&["FULL", "JOIN"])
                || self.consume_keywords(&["FULL", "OUTER", "JOIN"])
            {
                JoinKind::Full
            } else if self.consume_keywords(&["CROSS", "JOIN"]) {
                JoinKind::Cross
            } else if natural {
                return Err(self.unexpected("JOIN"));
            } else {
                break;
            };
            let relation = self.parse_table_factor()?;
            let constraint = if natural {
                JoinConstraint::Natural
            } else if self.consume_keyword("ON") {
                JoinConstraint::On(self.parse_expr()?)
            } else if self.consume_keyword("USING") {
                self.expect(&Token::LParen)?;
                let cols = self.parse_comma_separated(Self::parse_ident)?;
                self.expect(&Token::RParen)?;
                JoinConstraint::Using(cols)
            } else {
                JoinConstraint::None
            };
            joins.push(Join {
                kind,
                relation,
                constraint,
            });
        }
        Ok(TableWithJoins { relation, joins })
    }

    fn parse_table_factor(&mut self) -> Result<TableFactor, ParseError> {
        if self.consume(&Token::LParen) {
            if self.at_keyword("SELECT") || self.at_keyword("WITH") || self.at_keyword("VALUES") {
                let subquery = self.parse_query()?;
                self.expect(&Token::RParen)?;
                let alias = self.parse_table_alias()?;
                return Ok(TableFactor::Derived {
                    subquery: Box::new(subquery),
                    alias,
                });
            }
            let inner = self.parse_table_with_joins()?;
            self.expect(&Token::RParen)?;
            let alias = self.parse_table_alias()?;
            return Ok(TableFactor::NestedJoin {
                inner: Box::new(inner),
                alias,
            });
        }
        let mut name = vec![self.parse_ident()?];
        while self.consume(&Token::Period) {
            name.push(self.parse_ident()?);
        }
        if self.peek() == &Token::LParen {
            return Err(ParseError::at("table functions are not supported", self.loc()));
        }
        let alias = self.parse_table_alias()?;
        Ok(TableFactor::Table { name, alias })
    }

    fn parse_order_by_expr(&mut self) -> Result<OrderByExpr, ParseError> {
        let expr = self.parse_expr()?;
        let asc = if self.consume_keyword("ASC") {
            Some(true)
        } else if self.consume_keyword("DESC") {
            Some(false)
        } else {
            None
        };
        let nulls_first = if self.consume_keywords(&["NULLS", "FIRST"]) {
            Some(true)
        } else if self.consume_keywords(&["NULLS", "LAST"]) {
            Some(false)
        } else {
            None
        };
        Ok(OrderByExpr {
            expr,
            asc,
            nulls_first,
        })
    }

    pub(crate) fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        self.parse_subexpr(0)
    }

    fn parse_subexpr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut expr = self.parse_prefix()?;
        loop {
            let p = self.next_precedence();
            if p <= min_prec {
                break;
            }
            expr = self.parse_infix(expr, p)?;
        }
        Ok(expr)
    }

    fn next_precedence(&self) -> u8 {
        match self.peek() {
            Token::Word { value, quote: None } => match value.to_ascii_uppercase().as_str() {
                "OR" => prec::OR,
                "AND" => prec::AND,
                "NOT" => {
                    let next = self.peek_nth(1);
                    if ["IN", "LIKE", "ILIKE", "GLOB", "BETWEEN"]
                        .iter()
                        .any(|k| next.is_keyword(k))
                    {
                        prec::CMP
                    } else {
                        0
                    }
                }
                "IS" | "IN" | "LIKE" | "ILIKE" | "GLOB" | "BETWEEN" | "ISNULL" | "NOTNULL" => {
                    prec::CMP
                }
                _ => 0,
            },
            Token::Eq
            | Token::DoubleEq
            | Token::Neq
            | Token::Lt
            | Token::LtEq
            | Token::Gt
            | Token::GtEq => prec::CMP,
            Token::Plus | Token::Minus => prec::ADD,
            Token::Star | Token::Slash | Token::Percent => prec::MUL,
            Token::Concat => prec::CONCAT,
            Token::DoubleColon => prec::POSTFIX,
            _ => 0,
        }
    }

    fn parse_infix(&mut self, left: Expr, p: u8) -> Result<Expr, ParseError> {
        let loc = self.loc();
        let tok = self.advance();
        let binary = |op, right| Expr::Binary {
            left: Box::new(left.clone()),
            op,
            right: Box::new(right),
        };
        let simple_op = match &tok {
            Token::Eq => Some(BinaryOp::Eq),
            Token::DoubleEq => Some(BinaryOp::DoubleEq),
            Token::Neq => Some(BinaryOp::NotEq),
            Token::Lt => Some(BinaryOp::Lt),
            Token::LtEq => Some(BinaryOp::LtEq),
            Token::Gt => Some(BinaryOp::Gt),
            Token::GtEq => Some(BinaryOp::GtEq),
            Token::Plus => Some(BinaryOp::Plus),
            Token::Minus => Some(BinaryOp::Minus),
            Token::Star => Some(BinaryOp::Multiply),
            Token::Slash => Some(BinaryOp::Divide),
            Token::Percent => Some(BinaryOp::Modulo),
            Token::Concat => Some(BinaryOp::Concat),
            t if t.is_keyword("OR") => Some(BinaryOp::Or),
            t if t.is_keyword("AND") => Some(BinaryOp::And),
            _ => None,
        };
        if let Some(op) = simple_op {
            let right = self.parse_subexpr(p)?;
            return Ok(binary(op, right));
        }
        if tok == Token::DoubleColon {
            if self.dialect == Dialect::Source {
                return Err(ParseError::at("'::' casts are not valid in the source dialect", loc));
            }
            let data_type = self.parse_data_type()?;
            return Ok(Expr::Cast {
                kind: CastKind::DoubleColon,
                expr: Box::new(left),
                data_type,
            });
        }
        if tok.is_keyword("ISNULL") || tok.is_keyword("NOTNULL") {
            return Ok(Expr::IsNull {
                expr: Box::new(left),
                negated: tok.is_keyword("NOTNULL"),
            });
        }
        if tok.is_keyword("IS") {
            let negated = self.consume_keyword("NOT");
            if self.consume_keyword("NULL") {
                return Ok(Expr::IsNull {
                    expr: Box::new(left),
                    negated,
                });
            }
            if self.consume_keywords(&["DISTINCT", "FROM"]) {
                let right = self.parse_subexpr(prec::CMP)?;
                let op = if negated {
                    BinaryOp::IsNotDistinctFrom
                } else {
                    BinaryOp::IsDistinctFrom
                };
                return Ok(binary(op, right));
            }
            let right = self.parse_subexpr(prec::CMP)?;
            return Ok(binary(if negated { BinaryOp::IsNot } else { BinaryOp::Is }, right));
        }
        let negated = tok.is_keyword("NOT");
        let kw = if negated { self.advance() } else { tok };
        if kw.is_keyword("IN") {
            self.expect(&Token::LParen)?;
            if self.at_keyword("SELECT") || self.at_keyword("WITH") {
                let subquery = self.parse_query()?;
                self.expect(&Token::RParen)?;
                return Ok(Expr::InSubquery {
                    expr: Box::new(left),
                    subquery: Box::new(subquery),
                    negated,
                });
            }
            let list = if self.peek() == &Token::RParen {
                Vec::new()
            } else {
                self.parse_comma_separated(Self::parse_expr)?
            };
            self.expect(&Token::RParen)?;
            return Ok(Expr::InList {
                expr: Box::new(left),
                list,
                negated,
            });
        }
        if kw.is_keyword("BETWEEN") {
            let low = self.parse_subexpr(prec::CMP)?;
            self.expect_keyword("AND")?;
            let high = self.parse_subexpr(prec::CMP)?;
            return Ok(Expr::Between {
                expr: Box::new(left),
                negated,
                low: Box::new(low),
                high: Box::new(high),
            });
        }
        let like = if kw.is_keyword("LIKE") {
            Some(LikeOp::Like)
        } else if kw.is_keyword("ILIKE") {
            if self.dialect == Dialect::Source {
                return Err(ParseError::at("ILIKE is not valid in the source dialect", loc));
            }
            Some(LikeOp::ILike)
        } else if kw.is_keyword("GLOB") {
            Some(LikeOp::Glob)
        } else {
            None
        };
        if let Some(op) = like {
            let pattern = self.parse_subexpr(prec::CMP)?;
            let escape = if self.consume_keyword("ESCAPE") {
                Some(Box::new(self.parse_subexpr(prec::CMP)?))
            } else {
                None
            };
            return Ok(Expr::Like {
                expr: Box::new(left),
                negated,
                op,
                pattern: Box::new(pattern),
                escape,
            });
        }
        Err(ParseError::at(format!("unexpected {kw}"), loc))
    }

    fn parse_data_type(&mut self) -> Result<String, ParseError> {
        let mut words = Vec::new();
        while let Token::Word { value, quote: None } = self.peek().clone() {
            if is_reserved(&value) && !words.is_empty() {
                break;
            }
            words.push(value.to_uppercase());
            self.advance();
            // multi-word types: DOUBLE PRECISION, TIMESTAMP WITH TIME ZONE
            let last = words.last().map(String::as_str);
            let continues = matches!(last, Some("DOUBLE") if self.at_keyword("PRECISION"))
                || matches!(last, Some("TIMESTAMP") | Some("TIME") if self.at_keyword("WITH"))
                || matches!(last, Some("WITH") if self.at_keyword("TIME"))
                || matches!(last, Some("TIME") if self.at_keyword("ZONE"));
            if !continues {
                break;
            }
        }
        if words.is_empty() {
            return Err(self.unexpected("type name"));
        }
        let mut ty = words.join(" ");
        if self.consume(&Token::LParen) {
            let mut params = Vec::new();
            loop {
                match self.advance() {
                    Token::Number(n) => params.push(n),
                    _ => return Err(self.unexpected("type parameter")),
                }
                if !self.consume(&Token::Comma) {
                    break;
                }
            }
            self.expect(&Token::RParen)?;
            ty = format!("{ty}({})", params.join(", "));
        }
        if self.peek() == &Token::LBracket && self.peek_nth(1) == &Token::RBracket {
            self.advance();
            self.advance();
            ty.push_str("[]");
        }
        Ok(ty)
    }

    fn parse_prefix(&mut self) -> Result<Expr, ParseError> {
        let start = self.loc();
        let tok = self.peek().clone();
        match tok {
            Token::Number(n) => {
                self.advance();
                Ok(Expr::Literal {
                    value: Literal::Number(n),
                    span: Span::new(start, self.prev_end()),
                })
            }
            Token::String(s) => {
                self.advance();
                Ok(Expr::Literal {
                    value: Literal::String(s),
                    span: Span::new(start, self.prev_end()),
                })
            }
            Token::Minus | Token::Plus | Token::Tilde => {
                self.advance();
                let op = match tok {
                    Token::Minus => UnaryOp::Minus,
                    Token::Plus => UnaryOp::Plus,
                    _ => UnaryOp::BitNot,
                };
                let expr = self.parse_subexpr(prec::UNARY)?;
                Ok(Expr::Unary {
                    op,
                    expr: Box::new(expr),
                })
            }
            Token::LParen => {
                self.advance();
                if self.at_keyword("SELECT") || self.at_keyword("WITH") {
                    let q = self.parse_query()?;
                    self.expect(&Token::RParen)?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let first = self.parse_expr()?;
                if self.consume(&Token::Comma) {
                    let mut items = vec![first];
                    items.extend(self.parse_comma_separated(Self::parse_expr)?);
                    self.expect(&Token::RParen)?;
                    return Ok(Expr::Tuple(items));
                }
                self.expect(&Token::RParen)?;
                Ok(first)
            }
            Token::Word { ref value, quote } => {
                if quote.is_some() {
                    return self.parse_identifier_expr();
                }
                let upper = value.to_ascii_uppercase();
                match upper.as_str() {
                    "NULL" => {
                        self.advance();
                        Ok(Expr::Literal {
                            value: Literal::Null,
                            span: Span::new(start, self.prev_end()),
                        })
                    }
                    "TRUE" | "FALSE" => {
                        self.advance();
                        Ok(Expr::Literal {
                            value: Literal::Boolean(upper == "TRUE"),
                            span: Span::new(start, self.prev_end()),
                        })
                    }
                    "NOT" => {
                        self.advance();
                        if self.consume_keyword("EXISTS") {
                            return self.parse_exists(true);
                        }
                        let expr = self.parse_subexpr(prec::NOT)?;
                        Ok(Expr::Unary {
                            op: UnaryOp::Not,
                            expr: Box::new(expr),
                        })
                    }
                    "EXISTS" => {
                        self.advance();
                        self.parse_exists(false)
                    }
                    "CASE" => {
                        self.advance();
                        self.parse_case()
                    }
                    "CAST" | "TRY_CAST" if self.peek_nth(1) == &Token::LParen => {
                        self.advance();
                        self.advance();
                        let expr = self.parse_expr()?;
                        self.expect_keyword("AS")?;
                        let data_type = self.parse_data_type()?;
                        self.expect(&Token::RParen)?;
                        Ok(Expr::Cast {
                            kind: if upper == "CAST" {
                                CastKind::Cast
                            } else {
                                CastKind::TryCast
                            },
                            expr: Box::new(expr),
                            data_type,
                        })
                    }
                    "EXTRACT" if self.peek_nth(1) == &Token::LParen => {
                        self.advance();
                        self.advance();
                        let field = match self.advance() {
                            Token::Word { value, .. } => value.to_uppercase(),
                            Token::String(s) => s.to_uppercase(),
                            _ => return Err(ParseError::at("expected date part", start)),
                        };
                        self.expect_keyword("FROM")?;
                        let expr = self.parse_expr()?;
                        self.expect(&Token::RParen)?;
                        Ok(Expr::Extract {
                            field,
                            expr: Box::new(expr),
                        })
                    }
                    "INTERVAL" if !matches!(self.peek_nth(1), Token::Comma | Token::RParen | Token::Period | Token::Eof) => {
                        self.advance();
                        let value = match self.peek() {
                            Token::String(_) | Token::Number(_) => self.parse_prefix()?,
                            Token::LParen => self.parse_prefix()?,
                            _ => return Err(self.unexpected("interval value")),
                        };
                        let unit = match self.peek() {
                            Token::Word { value, quote: None }
                                if !is_reserved(value)
                                    && !NOT_ALIAS.iter().any(|k| k.eq_ignore_ascii_case(value)) =>
                            {
                                let u = value.to_uppercase();
                                self.advance();
                                Some(u)
                            }
                            _ => None,
                        };
                        Ok(Expr::Interval {
                            value: Box::new(value),
                            unit,
                        })
                    }
                    "DATE" | "TIMESTAMP" | "TIME" if matches!(self.peek_nth(1), Token::String(_)) => {
                        self.advance();
                        let Token::String(value) = self.advance() else {
                            unreachable!()
                        };
                        Ok(Expr::TypedString {
                            data_type: upper,
                            value,
                        })
                    }
                    "CURRENT_TIME" | "CURRENT_DATE" | "CURRENT_TIMESTAMP" => {
                        self.advance();
                        let parens = self.peek() == &Token::LParen && self.peek_nth(1) == &Token::RParen;
                        if parens {
                            self.advance();
                            self.advance();
                        }
                        let kind = match upper.as_str() {
                            "CURRENT_TIME" => CurrentKind::Time,
                            "CURRENT_DATE" => CurrentKind::Date,
                            _ => CurrentKind::Timestamp,
                        };
                        Ok(Expr::Current {
                            kind,
                            parens,
                            span: Span::new(start, self.prev_end()),
                        })
                    }
                    "LEFT" | "RIGHT" if self.peek_nth(1) == &Token::LParen => {
                        let name = Ident {
                            value: value.clone(),
                            quote: None,
                            span: Span::new(start, self.tokens[self.pos].end),
                        };
                        self.advance();
                        self.parse_function(name)
                    }
                    _ if is_reserved(&upper) => Err(ParseError::at(
                        format!("unexpected keyword {upper}"),
                        start,
                    )),
                    _ => self.parse_identifier_expr(),
                }
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn parse_identifier_expr(&mut self) -> Result<Expr, ParseError> {
        let first = self.parse_ident()?;
        if self.peek() == &Token::LParen {
            return self.parse_function(first);
        }
        if self.peek() != &Token::Period {
            return Ok(Expr::Identifier(first));
        }
        let mut parts = vec![first];
        while self.consume(&Token::Period) {
            if self.peek() == &Token::Star {
                return Err(ParseError::at(
                    "qualified wildcard is only allowed in a select list",
                    self.loc(),
                ));
            }
            parts.push(self.parse_ident()?);
        }
        Ok(Expr::CompoundIdentifier(parts))
    }

    fn parse_function(&mut self, mut name: Ident) -> Result<Expr, ParseError> {
        let start = name.span.start;
        // unquoted function names are case-insensitive in both engines
        if name.quote.is_none() {
            name.value = name.value.to_ascii_uppercase();
        }
        self.expect(&Token::LParen)?;
        let args = if self.consume(&Token::Star) {
            FunctionArgs::Star
        } else if self.peek() == &Token::RParen {
            FunctionArgs::List {
                distinct: false,
                args: Vec::new(),
            }
        } else {
            let distinct = self.consume_keyword("DISTINCT");
            if !distinct {
                self.consume_keyword("ALL");
            }
            let args = self.parse_comma_separated(Self::parse_expr)?;
            if self.at_keyword("ORDER") {
                return Err(ParseError::at(
                    "ORDER BY inside function arguments is not supported",
                    self.loc(),
                ));
            }
            FunctionArgs::List { distinct, args }
        };
        self.expect(&Token::RParen)?;
        let filter = if self.at_keyword("FILTER") && self.peek_nth(1) == &Token::LParen {
            self.advance();
            self.advance();
            self.expect_keyword("WHERE")?;
            let f = self.parse_expr()?;
            self.expect(&Token::RParen)?;
            Some(Box::new(f))
        } else {
            None
        };
        let over = if self.at_keyword("OVER") && self.peek_nth(1) == &Token::LParen {
            self.advance();
            self.advance();
            let partition_by = if self.consume_keywords(&["PARTITION", "BY"]) {
                self.parse_comma_separated(Self::parse_expr)?
            } else {
                Vec::new()
            };
            let order_by = if self.consume_keywords(&["ORDER", "BY"]) {
                self.parse_comma_separated(Self::parse_order_by_expr)?
            } else {
                Vec::new()
            };
            if self.peek() != &Token::RParen {
                return Err(ParseError::at("window frames are not supported", self.loc()));
            }
            self.advance();
            Some(WindowSpec {
                partition_by,
                order_by,
            })
        } else {
            None
        };
        Ok(Expr::Function(Function {
            name,
            args,
            filter,
            over,
            span: Span::new(start, self.prev_end()),
        }))
    }

    fn parse_exists(&mut self, negated: bool) -> Result<Expr, ParseError> {
        self.expect(&Token::LParen)?;
        let subquery = self.parse_query()?;
        self.expect(&Token::RParen)?;
        Ok(Expr::Exists {
            subquery: Box::new(subquery),
            negated,
        })
    }

    fn parse_case(&mut self) -> Result<Expr, ParseError> {
        let operand = if self.at_keyword("WHEN") {
            None
        } else {
            Some(Box::new(self.parse_expr()?))
        };
        let mut branches = Vec::new();
        while self.consume_keyword("WHEN") {
            let cond = self.parse_expr()?;
            self.expect_keyword("THEN")?;
            let result = self.parse_expr()?;
            branches.push((cond, result));
        }
        if branches.is_empty() {
            return Err(self.unexpected("WHEN"));
        }
        let else_result = if self.consume_keyword("ELSE") {
            Some(Box::new(self.parse_expr()?))
        } else {
            None
        };
        self.expect_keyword("END")?;
        Ok(Expr::Case {
            operand,
            branches,
            else_result,
        })
    }
}
