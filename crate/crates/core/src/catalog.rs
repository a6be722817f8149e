//! Table schemas and statistics, shared by the column store and the binder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::DataType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub dtype: DataType,
    #[serde(default)]
    pub nullable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub distinct: u64,
    pub null_fraction: f64,
    pub min: Option<serde_json::Value>,
    pub max: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSchema>,
}

impl TableSchema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Everything the binder and cost model need to know about one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    #[serde(flatten)]
    pub schema: TableSchema,
    pub row_count: u64,
    pub stats: Vec<ColumnStats>,
}

impl TableMeta {
    pub fn validate(&self) -> Result<()> {
        if self.stats.len() != self.schema.columns.len() {
            return Err(Error::Schema(format!(
                "table `{}` has {} columns but {} stats entries",
                self.schema.name,
                self.schema.columns.len(),
                self.stats.len()
            )));
        }
        for (col, st) in self.schema.columns.iter().zip(&self.stats) {
            if st.distinct > self.row_count {
                return Err(Error::Schema(format!(
                    "`{}.{}` distinct count {} exceeds row count {}",
                    self.schema.name, col.name, st.distinct, self.row_count
                )));
            }
            if !(0.0..=1.0).contains(&st.null_fraction) {
                return Err(Error::Schema(format!(
                    "`{}.{}` null fraction {} outside [0, 1]",
                    self.schema.name, col.name, st.null_fraction
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: Vec<TableMeta>,
}

impl Catalog {
    pub fn new(tables: Vec<TableMeta>) -> Self {
        Self { tables }
    }

    pub fn tables(&self) -> &[TableMeta] {
        &self.tables
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables
            .iter()
            .position(|t| t.schema.name.eq_ignore_ascii_case(name))
    }

    pub fn table(&self, idx: usize) -> &TableMeta {
        &self.tables[idx]
    }
}
