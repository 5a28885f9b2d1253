//! Syntax tree for the SELECT subset.
//!
//! Parenthesised expressions are not represented as nodes: grouping is implied
//! by tree shape and the renderer re-inserts parentheses from operator
//! precedence. Spans never participate in equality, so `parse(render(ast))`
//! compares equal to `ast` whenever rendering is faithful.

use std::hash::{Hash, Hasher};

use crate::token::Location;

/// Source range of a node. Ignored by `==` and `Hash`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub start: Location,
    pub end: Location,
}

impl Span {
    pub fn new(start: Location, end: Location) -> Self {
        Self { start, end }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl Hash for Span {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ident {
    pub value: String,
    pub quote: Option<char>,
    pub span: Span,
}

impl Ident {
    pub fn new(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            quote: None,
            span: Span::default(),
        }
    }

    /// Lower-cased name; both engines resolve identifiers case-insensitively.
    pub fn normalized(&self) -> String {
        self.value.to_lowercase()
    }
}

/// A parsed statement. Only queries are accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlAst {
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub with: Option<With>,
    pub body: SetExpr,
    pub order_by: Vec<OrderByExpr>,
    pub limit: Option<Expr>,
    pub offset: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct With {
    pub recursive: bool,
    pub ctes: Vec<Cte>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cte {
    pub alias: Ident,
    pub columns: Vec<Ident>,
    pub query: Box<Query>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOperator {
    Union,
    Intersect,
    Except,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetExpr {
    Select(Box<Select>),
    /// Parenthesised query used as a set operand.
    Query(Box<Query>),
    SetOperation {
        op: SetOperator,
        all: bool,
        left: Box<SetExpr>,
        right: Box<SetExpr>,
    },
    Values(Vec<Vec<Expr>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub distinct: bool,
    pub projection: Vec<SelectItem>,
    pub from: Vec<TableWithJoins>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    pub qualify: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard(Span),
    QualifiedWildcard(Vec<Ident>),
    Expr { expr: Expr, alias: Option<Ident> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableWithJoins {
    pub relation: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableAlias {
    pub name: Ident,
    pub columns: Vec<Ident>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableFactor {
    Table {
        name: Vec<Ident>,
        alias: Option<TableAlias>,
    },
    Derived {
        subquery: Box<Query>,
        alias: Option<TableAlias>,
    },
    NestedJoin {
        inner: Box<TableWithJoins>,
        alias: Option<TableAlias>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
    Full,
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JoinConstraint {
    On(Expr),
    Using(Vec<Ident>),
    Natural,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub kind: JoinKind,
    pub relation: TableFactor,
    pub constraint: JoinConstraint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderByExpr {
    pub expr: Expr,
    pub asc: Option<bool>,
    pub nulls_first: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    /// Numeric literal kept in its source spelling.
    Number(String),
    String(String),
    Boolean(bool),
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurrentKind {
    Time,
    Date,
    Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Minus,
    Plus,
    Not,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    /// SQLite `==`.
    DoubleEq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Is,
    IsNot,
    IsDistinctFrom,
    IsNotDistinctFrom,
    Plus,
    Minus,
    Multiply,
    Divide,
    Modulo,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikeOp {
    Like,
    ILike,
    Glob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CastKind {
    Cast,
    TryCast,
    /// `expr::type`
    DoubleColon,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionArgs {
    /// `f(*)`
    Star,
    List { distinct: bool, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    pub partition_by: Vec<Expr>,
    pub order_by: Vec<OrderByExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: Ident,
    pub args: FunctionArgs,
    pub filter: Option<Box<Expr>>,
    pub over: Option<WindowSpec>,
    pub span: Span,
}

impl Function {
    pub fn call(name: &str, args: Vec<Expr>, span: Span) -> Self {
        Self {
            name: Ident {
                value: name.to_string(),
                quote: None,
                span,
            },
            args: FunctionArgs::List {
                distinct: false,
                args,
            },
            filter: None,
            over: None,
            span,
        }
    }

    /// Positional arguments, empty for `f(*)`.
    pub fn arg_list(&self) -> &[Expr] {
        match &self.args {
            FunctionArgs::Star => &[],
            FunctionArgs::List { args, .. } => args,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Identifier(Ident),
    CompoundIdentifier(Vec<Ident>),
    Literal {
        value: Literal,
        span: Span,
    },
    /// `DATE '2100-01-01'`, `TIMESTAMP '...'`.
    TypedString {
        data_type: String,
        value: String,
    },
    /// `INTERVAL '1 day'` (unit `None`) or `INTERVAL 1 DAY`.
    Interval {
        value: Box<Expr>,
        unit: Option<String>,
    },
    Current {
        kind: CurrentKind,
        /// Written with trailing `()`.
        parens: bool,
        span: Span,
    },
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    Binary {
        left: Box<Expr>,
        op: BinaryOp,
        right: Box<Expr>,
    },
    /// `IS NULL`, `ISNULL`, `IS NOT NULL`, `NOTNULL`.
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    InSubquery {
        expr: Box<Expr>,
        subquery: Box<Query>,
        negated: bool,
    },
    Between {
        expr: Box<Expr>,
        negated: bool,
        low: Box<Expr>,
        high: Box<Expr>,
    },
    Like {
        expr: Box<Expr>,
        negated: bool,
        op: LikeOp,
        pattern: Box<Expr>,
        escape: Option<Box<Expr>>,
    },
    Function(Function),
    Cast {
        kind: CastKind,
        expr: Box<Expr>,
        data_type: String,
    },
    Extract {
        field: String,
        expr: Box<Expr>,
    },
    Case {
        operand: Option<Box<Expr>>,
        branches: Vec<(Expr, Expr)>,
        else_result: Option<Box<Expr>>,
    },
    Exists {
        subquery: Box<Query>,
        negated: bool,
    },
    Subquery(Box<Query>),
    Tuple(Vec<Expr>),
}

impl Expr {
    pub fn string(value: impl Into<String>) -> Self {
        Expr::Literal {
            value: Literal::String(value.into()),
            span: Span::default(),
        }
    }

    pub fn boxed(self) -> Box<Self> {
        Box::new(self)
    }

    /// Best-effort start position for error reporting.
    pub fn location(&self) -> Location {
        match self {
            Expr::Identifier(id) => id.span.start,
            Expr::CompoundIdentifier(ids) => ids.first().map(|i| i.span.start).unwrap_or_default(),
            Expr::Literal { span, .. } | Expr::Current { span, .. } => span.start,
            Expr::Function(f) => f.span.start,
            Expr::Unary { expr, .. }
            | Expr::IsNull { expr, .. }
            | Expr::InList { expr, .. }
            | Expr::InSubquery { expr, .. }
            | Expr::Between { expr, .. }
            | Expr::Like { expr, .. }
            | Expr::Cast { expr, .. }
            | Expr::Extract { expr, .. } => expr.location(),
            Expr::Binary { left, .. } => left.location(),
            Expr::Interval { value, .. } => value.location(),
            _ => Location::default(),
        }
    }
}
