//! Shared helpers: random databases and queries, a value-level brute-force
//! evaluator, and a cross-planner checker.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use tagexec::fixtures::write_table;
use tagexec::plan::PlanOp;
use tagexec::sql::{Atom, AtomTest, BoundExpr, CmpOp, ColRef};
use tagexec::{
    run_query, Bitmap, DataType, Database, EngineOptions, Planner, Prepared, StoreOptions, Truth,
    Value,
};

pub const WORDS: [&str; 8] = [
    "alpha", "beta", "gamma", "delta", "omega", "sigma", "theta", "kappa",
];

/// Dummy atom for predicate-tree construction without a database.
pub fn atom(label: &str, table: usize) -> BoundExpr {
    BoundExpr::Atom(Atom {
        col: ColRef { table, column: 0 },
        dtype: DataType::Bool,
        test: AtomTest::IsNull,
        label: label.to_string(),
    })
}

pub fn and(v: Vec<BoundExpr>) -> BoundExpr {
    BoundExpr::And(v)
}

pub fn or(v: Vec<BoundExpr>) -> BoundExpr {
    BoundExpr::Or(v)
}

/// Random expression over atoms `P0..P{n-1}` with NOTs and repeats.
pub fn random_expr<R: Rng>(rng: &mut R, n_atoms: usize, depth: usize) -> BoundExpr {
    if depth == 0 || rng.gen_bool(0.3) {
        let e = atom(&format!("P{}", rng.gen_range(0..n_atoms)), 0);
        return if rng.gen_bool(0.15) {
            BoundExpr::Not(Box::new(e))
        } else {
            e
        };
    }
    let k = rng.gen_range(2..=3);
    let kids = (0..k)
        .map(|_| random_expr(rng, n_atoms, depth - 1))
        .collect();
    let e = if rng.gen_bool(0.5) {
        and(kids)
    } else {
        or(kids)
    };
    if rng.gen_bool(0.15) {
        BoundExpr::Not(Box::new(e))
    } else {
        e
    }
}

/// A star schema `R0(id, a, b, s)` with `R1`, `R2(fid, a, b, s)`.
pub struct RandomDb {
    pub tables: usize,
    pub nulls: bool,
    pub sizes: Vec<usize>,
}

pub fn random_db<R: Rng>(
    rng: &mut R,
    dir: &Path,
    nulls: bool,
    max_rows: usize,
) -> (Database, RandomDb) {
    let n0 = rng.gen_range(20..=max_rows.min(400));
    let sizes = vec![
        n0,
        rng.gen_range(20..=max_rows),
        rng.gen_range(20..=max_rows),
    ];
    let null = |rng: &mut R, v: Value| -> Value {
        if nulls && rng.gen_bool(0.15) {
            Value::Null
        } else {
            v
        }
    };
    for (t, &n) in sizes.iter().enumerate() {
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let key = if t == 0 {
                Value::Int(i as i64 + 1)
            } else {
                let k = Value::Int(rng.gen_range(1..=n0 as i64 + 5));
                null(rng, k)
            };
            let a = Value::Int(rng.gen_range(0..10));
            let a = null(rng, a);
            let b = Value::Float((rng.gen::<f64>() * 1000.0).round() / 1000.0);
            let b = null(rng, b);
            let s = Value::Str(WORDS.choose(rng).unwrap().to_string());
            let s = null(rng, s);
            rows.push(vec![key, a, b, s]);
        }
        let key = if t == 0 { "id" } else { "fid" };
        write_table(
            dir,
            &format!("R{t}"),
            &[
                (key, DataType::Int64, nulls && t > 0),
                ("a", DataType::Int64, nulls),
                ("b", DataType::Float64, nulls),
                ("s", DataType::String, nulls),
            ],
            &rows,
        )
        .unwrap();
    }
    let db = Database::open(dir, StoreOptions::default()).unwrap();
    (
        db,
        RandomDb {
            tables: 3,
            nulls,
            sizes,
        },
    )
}

fn random_atom<R: Rng>(rng: &mut R, aliases: &[&str]) -> String {
    let t = aliases.choose(rng).unwrap();
    let w = WORDS.choose(rng).unwrap();
    let k = rng.gen_range(0..10);
    let x = rng.gen_range(1..10) as f64 / 10.0 * 1000.0;
    match rng.gen_range(0..14) {
        0 => format!("{t}.a < {k}"),
        1 => format!("{t}.a >= {k}"),
        2 => format!("{t}.a = {k}"),
        3 => format!("{t}.a <> {k}"),
        4 => format!("{t}.b < {x}"),
        5 => format!("{t}.b > {x}"),
        6 => format!("{t}.s = '{w}'"),
        7 => format!("{t}.s LIKE '{}%'", &w[..2]),
        8 => format!("{t}.s ILIKE '%{}%'", w[1..3].to_uppercase()),
        9 => format!("{t}.a IS NULL"),
        10 => format!("{t}.b IS NOT NULL"),
        11 => format!("{t}.a BETWEEN {} AND {}", k.min(5), k.max(5)),
        12 => format!("{t}.s IN ('{w}', '{}')", WORDS.choose(rng).unwrap()),
        _ => format!("{t}.s NOT LIKE '%{}%'", &w[2..3]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Cnf,
    Dnf,
    Nested,
}

fn clause<R: Rng>(rng: &mut R, aliases: &[&str], inner: &str, pool: &mut Vec<String>) -> String {
    // reuse an earlier atom now and then to create shared subexpressions
    let k = rng.gen_range(1..=3);
    let atoms: Vec<String> = (0..k)
        .map(|_| {
            if !pool.is_empty() && rng.gen_bool(0.2) {
                let a = pool.choose(rng).unwrap().clone();
                pool.push(a.clone());
                a
            } else {
                let a = random_atom(rng, aliases);
                pool.push(a.clone());
                a
            }
        })
        .collect();
    let body = atoms.join(&format!(" {inner} "));
    if rng.gen_bool(0.15) {
        format!("NOT ({body})")
    } else {
        format!("({body})")
    }
}

fn nested<R: Rng>(rng: &mut R, aliases: &[&str], depth: usize, pool: &mut Vec<String>) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        let a = if !pool.is_empty() && rng.gen_bool(0.2) {
            let a = pool.choose(rng).unwrap().clone();
            pool.push(a.clone());
            a
        } else {
            let a = random_atom(rng, aliases);
            pool.push(a.clone());
            a
        };
        return if rng.gen_bool(0.15) {
            format!("NOT {a}")
        } else {
            a
        };
    }
    let op = if rng.gen_bool(0.5) { " AND " } else { " OR " };
    let kids: Vec<String> = (0..rng.gen_range(2..=3))
        .map(|_| nested(rng, aliases, depth - 1, pool))
        .collect();
    let e = format!("({})", kids.join(op));
    if rng.gen_bool(0.15) {
        format!("NOT {e}")
    } else {
        e
    }
}

/// Most atom occurrences in a random query; tag spaces grow exponentially
/// with the atom count, so larger trees dominate runtime.
pub const MAX_ATOMS: usize = 12;

/// A random 2- or 3-table query with `clauses` top-level clauses and at
/// most `MAX_ATOMS` atom occurrences.
pub fn random_query<R: Rng>(rng: &mut R, clauses: usize, shape: Shape) -> String {
    loop {
        let (sql, atoms) = random_query_once(rng, clauses, shape);
        if atoms <= MAX_ATOMS {
            return sql;
        }
    }
}

fn random_query_once<R: Rng>(rng: &mut R, clauses: usize, shape: Shape) -> (String, usize) {
    let three = rng.gen_bool(0.6);
    let (from, aliases): (String, Vec<&str>) = if three {
        let second = if rng.gen_bool(0.7) {
            "JOIN R2 AS z ON x.id = z.fid"
        } else {
            "JOIN R2 AS z ON y.a = z.fid"
        };
        (
            format!("R0 AS x JOIN R1 AS y ON x.id = y.fid {second}"),
            vec!["x", "y", "z"],
        )
    } else {
        (
            "R0 AS x JOIN R1 AS y ON x.id = y.fid".to_string(),
            vec!["x", "y"],
        )
    };
    let mut pool = Vec::new();
    let pred = match shape {
        Shape::Cnf => (0..clauses)
            .map(|_| clause(rng, &aliases, "OR", &mut pool))
            .collect::<Vec<_>>()
            .join(" AND "),
        Shape::Dnf => (0..clauses)
            .map(|_| clause(rng, &aliases, "AND", &mut pool))
            .collect::<Vec<_>>()
            .join(" OR "),
        Shape::Nested => {
            let op = if rng.gen_bool(0.5) { " AND " } else { " OR " };
            (0..clauses)
                .map(|_| nested(rng, &aliases, 1, &mut pool))
                .collect::<Vec<_>>()
                .join(op)
        }
    };
    (format!("SELECT * FROM {from} WHERE {pred}"), pool.len())
}

fn eval_atom(a: &Atom, v: &Value) -> Truth {
    match &a.test {
        AtomTest::IsNull => Truth::from_bool(v.is_null()),
        _ if v.is_null() => Truth::U,
        AtomTest::Cmp { op, value } => match v.sql_cmp(value) {
            None => Truth::U,
            Some(o) => Truth::from_bool(match op {
                CmpOp::Eq => o == Ordering::Equal,
                CmpOp::Ne => o != Ordering::Equal,
                CmpOp::Lt => o == Ordering::Less,
                CmpOp::Le => o != Ordering::Greater,
                CmpOp::Gt => o == Ordering::Greater,
                CmpOp::Ge => o != Ordering::Less,
            }),
        },
        AtomTest::Like(p) => match v {
            Value::Str(s) => Truth::from_bool(p.matches(s)),
            _ => Truth::U,
        },
    }
}

fn eval_expr(e: &BoundExpr, row: &dyn Fn(ColRef) -> Value) -> Truth {
    match e {
        BoundExpr::Atom(a) => eval_atom(a, &row(a.col)),
        BoundExpr::Not(c) => eval_expr(c, row).not(),
        BoundExpr::And(cs) => cs
            .iter()
            .fold(Truth::T, |acc, c| acc.and(eval_expr(c, row))),
        BoundExpr::Or(cs) => cs.iter().fold(Truth::F, |acc, c| acc.or(eval_expr(c, row))),
    }
}

/// Join-then-filter over fully materialized values, independent of the
/// executor. Tuples hold row indices in query-table order.
pub fn brute_force(db: &Database, prep: &Prepared) -> Vec<Vec<u32>> {
    let q = &prep.query;
    let rows: Vec<Vec<Vec<Value>>> = q
        .tables
        .iter()
        .map(|t| {
            let n = db.row_count(t.table_id);
            let ncols = db.catalog().table(t.table_id).schema.columns.len();
            let cols: Vec<_> = (0..ncols)
                .map(|c| db.read_column(t.table_id, c, &Bitmap::ones(n)).unwrap())
                .collect();
            (0..n)
                .map(|i| cols.iter().map(|c| c.value(i)).collect())
                .collect()
        })
        .collect();
    let mut tuples: Vec<Vec<u32>> = (0..rows[0].len()).map(|i| vec![i as u32]).collect();
    for t in 1..q.tables.len() {
        let edge = q
            .joins
            .iter()
            .find(|e| (e.left == t && e.right < t) || (e.right == t && e.left < t))
            .expect("connected in FROM order");
        let (other, keys): (usize, Vec<(usize, usize)>) = if edge.right == t {
            (edge.left, edge.keys.clone())
        } else {
            (edge.right, edge.keys.iter().map(|&(l, r)| (r, l)).collect())
        };
        let mut index: HashMap<String, Vec<u32>> = HashMap::new();
        for (i, r) in rows[t].iter().enumerate() {
            let k: Vec<&Value> = keys.iter().map(|&(_, c)| &r[c]).collect();
            if k.iter().any(|v| v.is_null()) {
                continue;
            }
            let key = k.iter().map(|v| v.to_sql()).collect::<Vec<_>>().join("|");
            index.entry(key).or_default().push(i as u32);
        }
        let mut next = Vec::new();
        for tup in &tuples {
            let r = &rows[other][tup[other] as usize];
            let k: Vec<&Value> = keys.iter().map(|&(c, _)| &r[c]).collect();
            if k.iter().any(|v| v.is_null()) {
                continue;
            }
            let key = k.iter().map(|v| v.to_sql()).collect::<Vec<_>>().join("|");
            if let Some(ms) = index.get(&key) {
                for &m in ms {
                    let mut t2 = tup.clone();
                    t2.push(m);
                    next.push(t2);
                }
            }
        }
        tuples = next;
    }
    let mut out: Vec<Vec<u32>> = match &q.predicate {
        None => tuples,
        Some(p) => tuples
            .into_iter()
            .filter(|tup| {
                eval_expr(p, &|c: ColRef| {
                    rows[c.table][tup[c.table] as usize][c.column].clone()
                }) == Truth::T
            })
            .collect(),
    };
    out.sort_unstable();
    out
}

/// Outcome of running one query under every planner.
#[derive(Debug, Default, Clone)]
pub struct Check {
    pub rows: usize,
    /// Planners whose rows differed from the oracle.
    pub mismatches: Vec<String>,
    /// Materialized slices with a false (or unknown) root.
    pub precept_violations: u64,
    /// Projections that admitted a tag without root = T.
    pub bad_projections: usize,
    /// Tagged plans that scanned some table more than once.
    pub rescans: usize,
}

pub fn check_query(db: &Database, sql: &str) -> Check {
    let opts = EngineOptions {
        check_invariants: Some(true),
        ..Default::default()
    };
    let oracle =
        run_query(db, sql, Planner::NaiveOracle, opts).unwrap_or_else(|e| panic!("{sql}: {e}"));
    let expected = brute_force(db, &oracle.prepared);
    let mut c = Check {
        rows: expected.len(),
        ..Default::default()
    };
    for p in Planner::ALL {
        let run = run_query(db, sql, p, opts).unwrap_or_else(|e| panic!("{p:?} {sql}: {e}"));
        if run.rows.canonical_tuples() != expected {
            c.mismatches.push(p.name().to_string());
        }
        c.precept_violations += run.stats.precept_violations;
        if p.is_tagged() {
            if let Some(tree) = &run.prepared.tree {
                run.plan.root.visit(&mut |n| {
                    if let PlanOp::Project { tags } = &n.op {
                        c.bad_projections += tags
                            .iter()
                            .filter(|t| t.get(tree.root()) != Some(Truth::T))
                            .count();
                    }
                });
            }
            if run.stats.scans.values().any(|&s| s != 1) {
                c.rescans += 1;
            }
        }
    }
    c
}
