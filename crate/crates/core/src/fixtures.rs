//! Small sample databases for tests, docs and the CLI demo.

use std::path::Path;

use crate::catalog::{ColumnSchema, TableSchema};
use crate::error::Result;
use crate::store::{Database, StoreOptions, TableWriter};
use crate::value::{DataType, Value};

/// The movie query used throughout the tests.
pub const MOVIE_QUERY: &str = "SELECT * FROM title AS t JOIN movie_info_idx AS mi_idx \
     ON t.id = mi_idx.movie_id \
     WHERE (t.year > 2000 AND mi_idx.score > '7.0') \
     OR (t.year > 1980 AND mi_idx.score > '8.0')";

/// Writes one table from literal rows.
pub fn write_table(
    db: &Path,
    name: &str,
    columns: &[(&str, DataType, bool)],
    rows: &[Vec<Value>],
) -> Result<()> {
    let schema = TableSchema {
        name: name.to_string(),
        columns: columns
            .iter()
            .map(|&(n, dtype, nullable)| ColumnSchema {
                name: n.to_string(),
                dtype,
                nullable,
            })
            .collect(),
    };
    let mut w = TableWriter::create(db, &schema)?;
    for r in rows {
        w.push_row(r)?;
    }
    w.finish()?;
    Ok(())
}

/// `title(id, title, year)` with seven movies and `movie_info_idx(score,
/// movie_id)` with six string scores.
pub fn movie_db(dir: &Path) -> Result<Database> {
    let titles = [
        (1, "The Dark Knight", 2008),
        (2, "Evolution", 2001),
        (3, "The Shawshank Redemption", 1994),
        (4, "Pulp Fiction", 1994),
        (5, "The Godfather", 1972),
        (6, "Beetlejuice", 1988),
        (7, "Avatar", 2009),
    ];
    let rows: Vec<Vec<Value>> = titles
        .iter()
        .map(|&(id, t, y)| vec![Value::Int(id), Value::Str(t.into()), Value::Int(y)])
        .collect();
    write_table(
        dir,
        "title",
        &[
            ("id", DataType::Int64, false),
            ("title", DataType::String, false),
            ("year", DataType::Int64, false),
        ],
        &rows,
    )?;
    let scores = [
        ("9.0", 1),
        ("9.3", 3),
        ("8.9", 4),
        ("9.2", 5),
        ("7.5", 6),
        ("7.9", 7),
    ];
    let rows: Vec<Vec<Value>> = scores
        .iter()
        .map(|&(s, m)| vec![Value::Str(s.into()), Value::Int(m)])
        .collect();
    write_table(
        dir,
        "movie_info_idx",
        &[
            ("score", DataType::String, false),
            ("movie_id", DataType::Int64, false),
        ],
        &rows,
    )?;
    Database::open(dir, StoreOptions::default())
}
