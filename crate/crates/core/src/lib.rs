//! Tagged execution for queries with complex boolean predicates.

pub mod bitmap;
pub mod catalog;
pub mod config;
pub mod cost;
pub mod engine;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod fixtures;
pub mod plan;
pub mod plot;
pub mod predicate;
pub mod relation;
pub mod sql;
pub mod store;
pub mod synth;
pub mod tag;
pub mod tagmap;
pub mod value;

pub use bitmap::Bitmap;
pub use catalog::{Catalog, ColumnSchema, ColumnStats, TableMeta, TableSchema};
pub use config::Config;
pub use cost::CostFactors;
pub use engine::{
    execute, plan_query, prepare, run_query, EngineOptions, LogicMode, Prepared, QueryRun,
};
pub use error::{Error, Result};
pub use exec::{ExecStats, ResultSet};
pub use experiment::{Experiment, ExperimentConfig, ExperimentRow};
pub use plan::{Plan, PlanOptions, Planner};
pub use predicate::{NodeId, NodeKind, PredTree};
pub use relation::{IndexRelation, TaggedRelation};
pub use store::{Database, StoreOptions};
pub use synth::{Form, SynthConfig, SynthQuery};
pub use tag::{generalize, Logic, Tag, Truth};
pub use tagmap::{FilterTagMap, JoinTagMap, MapMode};
pub use value::{DataType, Value};
