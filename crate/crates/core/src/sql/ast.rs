use std::fmt;

use crate::value::format_float;

#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    pub fn alias_or_name(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnName {
    pub qualifier: Option<String>,
    pub column: String,
}

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    /// The operator obtained by swapping the operands.
    pub fn flip(self) -> Self {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("NULL"),
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => f.write_str(&format_float(*v)),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Bool(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Column(ColumnName),
    Literal(Literal),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Column(c) => c.fmt(f),
            Operand::Literal(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawPredicate {
    Compare {
        left: Operand,
        op: CmpOp,
        right: Operand,
    },
    Like {
        column: ColumnName,
        pattern: String,
        case_insensitive: bool,
    },
    IsNull(ColumnName),
}

impl fmt::Display for RawPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawPredicate::Compare { left, op, right } => {
                write!(f, "{left} {} {right}", op.symbol())
            }
            RawPredicate::Like {
                column,
                pattern,
                case_insensitive,
            } => write!(
                f,
                "{column} {} {}",
                if *case_insensitive { "ILIKE" } else { "LIKE" },
                Literal::Str(pattern.clone())
            ),
            RawPredicate::IsNull(column) => write!(f, "{column} IS NULL"),
        }
    }
}

/// Unnormalized boolean expression, children in source order.
#[derive(Debug, Clone, PartialEq)]
pub enum RawExpr {
    And(Vec<RawExpr>),
    Or(Vec<RawExpr>),
    Not(Box<RawExpr>),
    Predicate(RawPredicate),
}

impl RawExpr {
    fn fmt_child(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawExpr::And(_) | RawExpr::Or(_) => write!(f, "({self})"),
            _ => fmt::Display::fmt(self, f),
        }
    }
}

impl fmt::Display for RawExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawExpr::And(cs) | RawExpr::Or(cs) => {
                let sep = if matches!(self, RawExpr::And(_)) {
                    " AND "
                } else {
                    " OR "
                };
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    c.fmt_child(f)?;
                }
                Ok(())
            }
            RawExpr::Not(c) => {
                f.write_str("NOT ")?;
                c.fmt_child(f)
            }
            RawExpr::Predicate(p) => p.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinConstraint {
    pub left: ColumnName,
    pub right: ColumnName,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Star,
    Columns(Vec<ColumnName>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub projection: Projection,
    pub tables: Vec<TableRef>,
    pub join_constraints: Vec<JoinConstraint>,
    pub where_expr: Option<RawExpr>,
}

impl fmt::Display for QuerySpec {
    /// Canonical form: comma-separated FROM list with join constraints
    /// leading the WHERE clause. Parsing the output yields the same spec.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.projection {
            Projection::Star => f.write_str("*")?,
            Projection::Columns(cols) => {
                for (i, c) in cols.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
            }
        }
        f.write_str(" FROM ")?;
        for (i, t) in self.tables.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&t.name)?;
            if let Some(a) = &t.alias {
                write!(f, " AS {a}")?;
            }
        }
        let mut wrote_where = false;
        for jc in &self.join_constraints {
            f.write_str(if wrote_where { " AND " } else { " WHERE " })?;
            wrote_where = true;
            write!(f, "{} = {}", jc.left, jc.right)?;
        }
        if let Some(w) = &self.where_expr {
            if wrote_where {
                f.write_str(" AND ")?;
                match w {
                    RawExpr::And(_) | RawExpr::Or(_) => write!(f, "({w})")?,
                    _ => write!(f, "{w}")?,
                }
            } else {
                write!(f, " WHERE {w}")?;
            }
        }
        Ok(())
    }
}
