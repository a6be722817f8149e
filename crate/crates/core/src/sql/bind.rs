use std::fmt;

use rustc_hash::FxHashMap;

use super::ast::*;
use super::like::LikePattern;
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::value::{DataType, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundTable {
    pub name: String,
    pub alias: String,
    /// Index into the catalog.
    pub table_id: usize,
}

/// A column of one of the query's tables (`table` indexes `BoundQuery::tables`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColRef {
    pub table: usize,
    pub column: usize,
}

/// Equi-join between two query tables, possibly on several key columns.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinEdge {
    pub left: usize,
    pub right: usize,
    /// (left column, right column) pairs.
    pub keys: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AtomTest {
    Cmp { op: CmpOp, value: Value },
    Like(LikePattern),
    IsNull,
}

/// A base predicate over a single column.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub col: ColRef,
    pub dtype: DataType,
    pub test: AtomTest,
    /// `alias.column op literal`; doubles as the canonical identity.
    pub label: String,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundExpr {
    And(Vec<BoundExpr>),
    Or(Vec<BoundExpr>),
    Not(Box<BoundExpr>),
    Atom(Atom),
}

impl BoundExpr {
    pub fn atom_count(&self) -> usize {
        match self {
            BoundExpr::And(cs) | BoundExpr::Or(cs) => cs.iter().map(Self::atom_count).sum(),
            BoundExpr::Not(c) => c.atom_count(),
            BoundExpr::Atom(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundQuery {
    pub tables: Vec<BoundTable>,
    pub joins: Vec<JoinEdge>,
    pub predicate: Option<BoundExpr>,
    pub projection: Vec<ColRef>,
    /// Display names of the projected columns.
    pub projection_names: Vec<String>,
    /// Nullability of every column referenced by the predicate.
    pub predicate_nullable: bool,
}

struct Binder<'a> {
    catalog: &'a Catalog,
    tables: Vec<BoundTable>,
    nullable: bool,
}

impl Binder<'_> {
    fn resolve(&self, c: &ColumnName) -> Result<ColRef> {
        let mut found = None;
        for (ti, t) in self.tables.iter().enumerate() {
            if let Some(q) = &c.qualifier {
                if !q.eq_ignore_ascii_case(&t.alias) {
                    continue;
                }
            }
            let schema = &self.catalog.table(t.table_id).schema;
            if let Some(ci) = schema.column_index(&c.column) {
                if found.is_some() {
                    return Err(Error::InvalidQuery(format!("column `{c}` is ambiguous")));
                }
                found = Some(ColRef {
                    table: ti,
                    column: ci,
                });
            }
        }
        if let Some(q) = &c.qualifier {
            if !self.tables.iter().any(|t| q.eq_ignore_ascii_case(&t.alias)) {
                return Err(Error::UnknownTable(q.clone()));
            }
        }
        found.ok_or_else(|| Error::UnknownColumn(c.to_string()))
    }

    fn dtype(&self, c: ColRef) -> DataType {
        let t = &self.tables[c.table];
        self.catalog.table(t.table_id).schema.columns[c.column].dtype
    }

    fn col_label(&self, c: ColRef) -> String {
        let t = &self.tables[c.table];
        let col = &self.catalog.table(t.table_id).schema.columns[c.column];
        format!("{}.{}", t.alias, col.name)
    }

    fn note_nullable(&mut self, c: ColRef) {
        let t = &self.tables[c.table];
        let meta = self.catalog.table(t.table_id);
        if meta.schema.columns[c.column].nullable || meta.stats[c.column].null_fraction > 0.0 {
            self.nullable = true;
        }
    }

    fn expr(&mut self, e: &RawExpr) -> Result<BoundExpr> {
        Ok(match e {
            RawExpr::And(cs) => {
                BoundExpr::And(cs.iter().map(|c| self.expr(c)).collect::<Result<_>>()?)
            }
            RawExpr::Or(cs) => {
                BoundExpr::Or(cs.iter().map(|c| self.expr(c)).collect::<Result<_>>()?)
            }
            RawExpr::Not(c) => BoundExpr::Not(Box::new(self.expr(c)?)),
            RawExpr::Predicate(p) => BoundExpr::Atom(self.atom(p)?),
        })
    }

    fn atom(&mut self, p: &RawPredicate) -> Result<Atom> {
        match p {
            RawPredicate::Compare { left, op, right } => {
                let (col, op, lit) = match (left, right) {
                    (Operand::Column(c), Operand::Literal(l)) => (c, *op, l),
                    (Operand::Literal(l), Operand::Column(c)) => (c, op.flip(), l),
                    (Operand::Column(_), Operand::Column(_)) => {
                        return Err(Error::Unsupported {
                            pos: 0,
                            what: format!("column-to-column comparison `{p}` in WHERE"),
                        })
                    }
                    (Operand::Literal(_), Operand::Literal(_)) => {
                        return Err(Error::Unsupported {
                            pos: 0,
                            what: format!("literal-only comparison `{p}`"),
                        })
                    }
                };
                let cr = self.resolve(col)?;
                let dtype = self.dtype(cr);
                let value = literal_value(lit, dtype, p)?;
                self.note_nullable(cr);
                let label = format!("{} {} {}", self.col_label(cr), op.symbol(), value.to_sql());
                Ok(Atom {
                    col: cr,
                    dtype,
                    test: AtomTest::Cmp { op, value },
                    label,
                })
            }
            RawPredicate::Like {
                column,
                pattern,
                case_insensitive,
            } => {
                let cr = self.resolve(column)?;
                let dtype = self.dtype(cr);
                if dtype != DataType::String {
                    return Err(Error::TypeMismatch(format!(
                        "`{p}`: pattern match on {dtype} column"
                    )));
                }
                self.note_nullable(cr);
                let label = format!(
                    "{} {} {}",
                    self.col_label(cr),
                    if *case_insensitive { "ILIKE" } else { "LIKE" },
                    Value::Str(pattern.clone()).to_sql()
                );
                Ok(Atom {
                    col: cr,
                    dtype,
                    test: AtomTest::Like(LikePattern::new(pattern, *case_insensitive)),
                    label,
                })
            }
            RawPredicate::IsNull(column) => {
                let cr = self.resolve(column)?;
                Ok(Atom {
                    col: cr,
                    dtype: self.dtype(cr),
                    test: AtomTest::IsNull,
                    label: format!("{} IS NULL", self.col_label(cr)),
                })
            }
        }
    }
}

fn literal_value(lit: &Literal, dtype: DataType, p: &RawPredicate) -> Result<Value> {
    let mismatch = || Error::TypeMismatch(format!("`{p}`: literal does not match {dtype} column"));
    Ok(match (lit, dtype) {
        (Literal::Null, _) => Value::Null,
        (Literal::Int(v), DataType::Int64) => Value::Int(*v),
        (Literal::Int(v), DataType::Float64) => Value::Float(*v as f64),
        (Literal::Float(v), DataType::Int64 | DataType::Float64) => Value::Float(*v),
        (Literal::Str(s), DataType::String) => Value::Str(s.clone()),
        (Literal::Bool(b), DataType::Bool) => Value::Bool(*b),
        _ => return Err(mismatch()),
    })
}

/// Resolves names against the catalog and checks the join graph is a tree.
pub fn bind(spec: &QuerySpec, catalog: &Catalog) -> Result<BoundQuery> {
    let mut tables: Vec<BoundTable> = Vec::new();
    for t in &spec.tables {
        let table_id = catalog
            .table_index(&t.name)
            .ok_or_else(|| Error::UnknownTable(t.name.clone()))?;
        let alias = t.alias_or_name().to_string();
        if tables.iter().any(|b| b.alias.eq_ignore_ascii_case(&alias)) {
            return Err(Error::InvalidQuery(format!(
                "duplicate table alias `{alias}`"
            )));
        }
        tables.push(BoundTable {
            name: catalog.table(table_id).schema.name.clone(),
            alias,
            table_id,
        });
    }
    let mut b = Binder {
        catalog,
        tables,
        nullable: false,
    };

    let mut edges: FxHashMap<(usize, usize), Vec<(usize, usize)>> = FxHashMap::default();
    let mut edge_order = Vec::new();
    for jc in &spec.join_constraints {
        let mut l = b.resolve(&jc.left)?;
        let mut r = b.resolve(&jc.right)?;
        if l.table == r.table {
            return Err(Error::Unsupported {
                pos: 0,
                what: format!("self-comparison `{} = {}`", jc.left, jc.right),
            });
        }
        let (lt, rt) = (b.dtype(l), b.dtype(r));
        if lt != rt && !(lt.is_numeric() && rt.is_numeric()) {
            return Err(Error::TypeMismatch(format!(
                "join `{} = {}` compares {lt} with {rt}",
                jc.left, jc.right
            )));
        }
        if l.table > r.table {
            std::mem::swap(&mut l, &mut r);
        }
        let key = (l.table, r.table);
        if !edges.contains_key(&key) {
            edge_order.push(key);
        }
        edges.entry(key).or_default().push((l.column, r.column));
    }
    let n = b.tables.len();
    let mut joins = Vec::new();
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    for key in edge_order {
        let (a, c) = (find(&mut uf, key.0), find(&mut uf, key.1));
        if a == c {
            return Err(Error::Unsupported {
                pos: 0,
                what: "cyclic join graph".into(),
            });
        }
        uf[a] = c;
        joins.push(JoinEdge {
            left: key.0,
            right: key.1,
            keys: edges.remove(&key).unwrap(),
        });
    }
    if joins.len() + 1 != n {
        return Err(Error::InvalidQuery(
            "join graph is disconnected (cross products are unsupported)".into(),
        ));
    }

    let predicate = spec.where_expr.as_ref().map(|e| b.expr(e)).transpose()?;

    let projection = match &spec.projection {
        Projection::Star => (0..n)
            .flat_map(|ti| {
                let cols = b.catalog.table(b.tables[ti].table_id).schema.columns.len();
                (0..cols).map(move |ci| ColRef {
                    table: ti,
                    column: ci,
                })
            })
            .collect(),
        Projection::Columns(cols) => cols
            .iter()
            .map(|c| b.resolve(c))
            .collect::<Result<Vec<_>>>()?,
    };
    let projection_names = projection.iter().map(|&c| b.col_label(c)).collect();

    Ok(BoundQuery {
        predicate_nullable: b.nullable,
        tables: b.tables,
        joins,
        predicate,
        projection,
        projection_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnSchema, ColumnStats, TableMeta, TableSchema};
    use crate::sql::parse;

    fn table(name: &str, cols: &[(&str, DataType)], rows: u64) -> TableMeta {
        TableMeta {
            schema: TableSchema {
                name: name.into(),
                columns: cols
                    .iter()
                    .map(|(n, t)| ColumnSchema {
                        name: n.to_string(),
                        dtype: *t,
                        nullable: false,
                    })
                    .collect(),
            },
            row_count: rows,
            stats: vec![ColumnStats::default(); cols.len()],
        }
    }

    fn imdb() -> Catalog {
        Catalog::new(vec![
            table(
                "title",
                &[
                    ("title", DataType::String),
                    ("year", DataType::Int64),
                    ("id", DataType::Int64),
                ],
                7,
            ),
            table(
                "movie_info_idx",
                &[("score", DataType::String), ("movie_id", DataType::Int64)],
                6,
            ),
        ])
    }

    const QUERY1: &str = "SELECT * FROM title AS t JOIN movie_info_idx AS mi_idx \
        ON t.id = mi_idx.movie_id \
        WHERE (t.year > 2000 AND mi_idx.score > '7.0') \
        OR (t.year > 1980 AND mi_idx.score > '8.0')";

    #[test]
    fn query1_binds_four_atoms() {
        let q = bind(&parse(QUERY1).unwrap(), &imdb()).unwrap();
        let p = q.predicate.unwrap();
        assert_eq!(p.atom_count(), 4);
        assert_eq!(q.joins.len(), 1);
        assert_eq!(q.joins[0].keys, vec![(2, 1)]);
        let BoundExpr::Or(arms) = &p else { panic!() };
        let BoundExpr::And(first) = &arms[0] else {
            panic!()
        };
        let BoundExpr::Atom(a) = &first[0] else {
            panic!()
        };
        assert_eq!(a.label, "t.year > 2000");
        assert_eq!(q.projection.len(), 5);
    }

    #[test]
    fn unknown_column() {
        let spec = parse("SELECT * FROM title t WHERE t.rating > 3").unwrap();
        assert!(matches!(bind(&spec, &imdb()), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn type_mismatch() {
        let spec = parse("SELECT * FROM title t WHERE t.year > 'x'").unwrap();
        assert!(matches!(bind(&spec, &imdb()), Err(Error::TypeMismatch(_))));
        let spec = parse("SELECT * FROM title t WHERE t.year ILIKE '%x'").unwrap();
        assert!(matches!(bind(&spec, &imdb()), Err(Error::TypeMismatch(_))));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let spec = parse("SELECT * FROM title t, movie_info_idx m WHERE t.year > 1").unwrap();
        assert!(matches!(bind(&spec, &imdb()), Err(Error::InvalidQuery(_))));
    }

    #[test]
    fn literal_on_left_is_flipped() {
        let spec = parse("SELECT t.id FROM title t WHERE 2000 < t.year").unwrap();
        let q = bind(&spec, &imdb()).unwrap();
        let Some(BoundExpr::Atom(a)) = q.predicate else {
            panic!()
        };
        assert_eq!(a.label, "t.year > 2000");
        assert_eq!(q.projection_names, vec!["t.id"]);
    }
}
