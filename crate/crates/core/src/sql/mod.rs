//! SQL front end: a select-project-join subset with boolean WHERE clauses.

mod ast;
mod bind;
mod lexer;
mod like;
mod parser;

pub use ast::*;
pub use bind::{bind, Atom, AtomTest, BoundExpr, BoundQuery, BoundTable, ColRef, JoinEdge};
pub use like::LikePattern;
pub use parser::parse;
