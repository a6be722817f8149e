//! Parse, bind, plan and execute a query.

use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{ExecOptions, ExecStats, Executor, ResultSet};
use crate::plan::{Plan, PlanContext, PlanNode, PlanOp, PlanOptions, Planner};
use crate::predicate::PredTree;
use crate::relation::TaggedRelation;
use crate::sql::{bind, parse, BoundQuery};
use crate::store::Database;
use crate::tag::Logic;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicMode {
    /// Three-valued when any predicate column is nullable.
    #[default]
    Auto,
    #[serde(rename = "2vl")]
    TwoValued,
    #[serde(rename = "3vl")]
    ThreeValued,
}

impl FromStr for LogicMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(LogicMode::Auto),
            "2vl" => Ok(LogicMode::TwoValued),
            "3vl" => Ok(LogicMode::ThreeValued),
            _ => Err(Error::Config(format!(
                "unknown logic mode `{s}` (expected auto, 2vl or 3vl)"
            ))),
        }
    }
}

/// A bound query with its normalized predicate tree.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub query: BoundQuery,
    pub tree: Option<PredTree>,
    pub logic: Logic,
}

pub fn prepare(db: &Database, sql: &str, mode: LogicMode) -> Result<Prepared> {
    let query = bind(&parse(sql)?, db.catalog())?;
    let tree = query.predicate.as_ref().map(PredTree::build);
    let logic = match mode {
        LogicMode::TwoValued => Logic::TwoValued,
        LogicMode::ThreeValued => Logic::ThreeValued,
        LogicMode::Auto if query.predicate_nullable => Logic::ThreeValued,
        LogicMode::Auto => Logic::TwoValued,
    };
    Ok(Prepared { query, tree, logic })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EngineOptions {
    pub plan: PlanOptions,
    pub logic: LogicMode,
    /// Overrides the default invariant checking of the executor.
    pub check_invariants: Option<bool>,
}

/// Plans `prep` with `planner`; the logic of `prep` overrides `opts.logic`.
pub fn plan_query(
    db: &Database,
    prep: &Prepared,
    planner: Planner,
    opts: PlanOptions,
) -> Result<(Plan, String)> {
    let opts = PlanOptions {
        logic: prep.logic,
        ..opts
    };
    let ctx = PlanContext::new(db, &prep.query, prep.tree.as_ref(), opts)?;
    let plan = ctx.plan(planner)?;
    let text = ctx.explain(&plan, true);
    Ok((plan, text))
}

enum Out {
    Rel(TaggedRelation),
    Rows(ResultSet),
}

fn exec_node(ex: &mut Executor<'_>, node: &PlanNode) -> Result<Out> {
    Ok(match &node.op {
        PlanOp::Scan { table } => Out::Rel(ex.scan(*table)?),
        PlanOp::Filter { node: n, map } => {
            let input = rel(exec_node(ex, &node.children[0])?)?;
            Out::Rel(ex.filter(input, *n, map)?)
        }
        PlanOp::Join { edge, map, build } => {
            let l = rel(exec_node(ex, &node.children[0])?)?;
            let r = rel(exec_node(ex, &node.children[1])?)?;
            let edge = &ex.query.joins[*edge];
            Out::Rel(ex.join(&l, &r, edge, map, *build)?)
        }
        PlanOp::Project { tags } => {
            let input = rel(exec_node(ex, &node.children[0])?)?;
            Out::Rows(ex.project(&input, tags))
        }
        PlanOp::Union => {
            let mut parts = Vec::new();
            for c in &node.children {
                match exec_node(ex, c)? {
                    Out::Rows(r) => parts.push(r),
                    Out::Rel(_) => return Err(Error::Plan("union input is not projected".into())),
                }
            }
            Out::Rows(ex.union(parts)?)
        }
    })
}

fn rel(o: Out) -> Result<TaggedRelation> {
    match o {
        Out::Rel(r) => Ok(r),
        Out::Rows(_) => Err(Error::Plan("operator input is already projected".into())),
    }
}

pub fn execute(
    db: &Database,
    prep: &Prepared,
    plan: &Plan,
    check: Option<bool>,
) -> Result<(ResultSet, ExecStats)> {
    let mut opts = ExecOptions {
        logic: prep.logic,
        ..Default::default()
    };
    if let Some(c) = check {
        opts.check_invariants = c;
    }
    let mut ex = Executor::new(db, &prep.query, prep.tree.as_ref(), opts);
    let rows = match exec_node(&mut ex, &plan.root)? {
        Out::Rows(r) => r,
        Out::Rel(r) => {
            let all: Vec<_> = r.tags().cloned().collect();
            ex.project(&r, &all)
        }
    };
    Ok((rows, ex.stats))
}

/// One planned and executed query.
#[derive(Debug, Clone)]
pub struct QueryRun {
    pub prepared: Prepared,
    pub plan: Plan,
    pub explain: String,
    pub rows: ResultSet,
    pub stats: ExecStats,
    /// Parse, bind and plan time.
    pub plan_time: Duration,
    pub exec_time: Duration,
}

impl QueryRun {
    pub fn values(&self, db: &Database) -> Result<Vec<Vec<Value>>> {
        self.rows
            .values(db, &self.prepared.query, &self.prepared.query.projection)
    }
}

pub fn run_query(
    db: &Database,
    sql: &str,
    planner: Planner,
    opts: EngineOptions,
) -> Result<QueryRun> {
    let t0 = Instant::now();
    let prepared = prepare(db, sql, opts.logic)?;
    let (plan, explain) = plan_query(db, &prepared, planner, opts.plan)?;
    let plan_time = t0.elapsed();
    let t1 = Instant::now();
    let (rows, stats) = execute(db, &prepared, &plan, opts.check_invariants)
        .map_err(|e| Error::Plan(format!("{e}\nwhile executing:\n{explain}")))?;
    let exec_time = t1.elapsed();
    Ok(QueryRun {
        prepared,
        plan,
        explain,
        rows,
        stats,
        plan_time,
        exec_time,
    })
}
