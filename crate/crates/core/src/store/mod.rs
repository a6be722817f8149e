//! Disk-backed column store: `<db>/<table>/<column>.dat` (+ `.off`, `.null`)
//! and `<db>/<table>/meta.json`.

mod cache;
mod column;

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

pub use cache::{CacheStats, PageCache, DEFAULT_CACHE_PAGES, DEFAULT_PAGE_SIZE};
pub use column::{ColumnData, ColumnFiles, ColumnValues};

use crate::bitmap::Bitmap;
use crate::catalog::{Catalog, TableMeta, TableSchema};
use crate::error::{Error, Result};
use crate::value::{DataType, Value};
use column::ColumnWriter;

pub const DEFAULT_SEQ_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreOptions {
    pub cache_pages: usize,
    pub page_size: usize,
    /// Selected fraction above which a whole column is read sequentially.
    pub seq_threshold: f64,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            cache_pages: DEFAULT_CACHE_PAGES,
            page_size: DEFAULT_PAGE_SIZE,
            seq_threshold: DEFAULT_SEQ_THRESHOLD,
        }
    }
}

/// Schema file accepted by CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub tables: Vec<TableSchema>,
}

impl SchemaFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes a new table row by row.
pub struct TableWriter {
    dir: PathBuf,
    schema: TableSchema,
    writers: Vec<ColumnWriter>,
    rows: u64,
}

impl TableWriter {
    pub fn create(db: &Path, schema: &TableSchema) -> Result<Self> {
        if schema.columns.is_empty() {
            return Err(Error::Schema(format!(
                "table `{}` has no columns",
                schema.name
            )));
        }
        let dir = db.join(&schema.name);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let writers = schema
            .columns
            .iter()
            .map(|c| ColumnWriter::new(&dir, c))
            .collect::<Result<_>>()?;
        Ok(Self {
            dir,
            schema: schema.clone(),
            writers,
            rows: 0,
        })
    }

    pub fn push_row(&mut self, row: &[Value]) -> Result<()> {
        if row.len() != self.writers.len() {
            return Err(Error::Schema(format!(
                "row has {} values, table `{}` has {} columns",
                row.len(),
                self.schema.name,
                self.writers.len()
            )));
        }
        for (w, v) in self.writers.iter_mut().zip(row) {
            w.push(v)?;
        }
        self.rows += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<TableMeta> {
        let stats = self
            .writers
            .into_iter()
            .map(ColumnWriter::finish)
            .collect::<Result<Vec<_>>>()?;
        let meta = TableMeta {
            schema: self.schema,
            row_count: self.rows,
            stats,
        };
        meta.validate()?;
        let p = self.dir.join("meta.json");
        std::fs::write(&p, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&p, e))?;
        Ok(meta)
    }
}

fn parse_field(field: &str, dtype: DataType, nullable: bool) -> std::result::Result<Value, String> {
    if field.is_empty() && (nullable || dtype != DataType::String) {
        return if nullable {
            Ok(Value::Null)
        } else {
            Err("empty field in non-nullable column".into())
        };
    }
    match dtype {
        DataType::Int64 => field
            .trim()
            .parse()
            .map(Value::Int)
            .map_err(|_| format!("`{field}` is not an int64")),
        DataType::Float64 => field
            .trim()
            .parse()
            .map(Value::Float)
            .map_err(|_| format!("`{field}` is not a float64")),
        DataType::Bool => match field.trim().to_ascii_lowercase().as_str() {
            "true" | "t" | "1" => Ok(Value::Bool(true)),
            "false" | "f" | "0" => Ok(Value::Bool(false)),
            _ => Err(format!("`{field}` is not a bool")),
        },
        DataType::String => Ok(Value::Str(field.to_string())),
    }
}

/// Loads a CSV file into `<db>/<schema.name>`. A first row that repeats the
/// column names is treated as a header.
pub fn ingest_csv(db: &Path, csv_path: &Path, schema: &TableSchema) -> Result<TableMeta> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(csv_path)
        .map_err(|e| Error::Csv {
            path: csv_path.to_path_buf(),
            row: 0,
            msg: e.to_string(),
        })?;
    let mut w = TableWriter::create(db, schema)?;
    let mut row_buf = Vec::with_capacity(schema.columns.len());
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let csv_err = |msg: String| Error::Csv {
            path: csv_path.to_path_buf(),
            row: line,
            msg,
        };
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        if i == 0
            && rec.len() == schema.columns.len()
            && rec
                .iter()
                .zip(&schema.columns)
                .all(|(f, c)| f.trim().eq_ignore_ascii_case(&c.name))
        {
            continue;
        }
        if rec.len() != schema.columns.len() {
            return Err(csv_err(format!(
                "{} fields, expected {}",
                rec.len(),
                schema.columns.len()
            )));
        }
        row_buf.clear();
        for (f, c) in rec.iter().zip(&schema.columns) {
            let v = parse_field(f, c.dtype, c.nullable)
                .map_err(|m| csv_err(format!("column `{}`: {m}", c.name)))?;
            row_buf.push(v);
        }
        w.push_row(&row_buf).map_err(|e| csv_err(e.to_string()))?;
    }
    w.finish()
}

/// Estimated truth-value fractions of one atom on its table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selectivity {
    pub t: f64,
    pub f: f64,
    pub u: f64,
}

/// An opened database directory.
pub struct Database {
    dir: PathBuf,
    catalog: Catalog,
    columns: Vec<Vec<ColumnFiles>>,
    cache: PageCache,
    opts: StoreOptions,
    selectivity: Mutex<FxHashMap<(usize, String), Selectivity>>,
}

impl Database {
    pub fn open(dir: impl AsRef<Path>, opts: StoreOptions) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut table_dirs = Vec::new();
        for ent in entries {
            let ent = ent.map_err(|e| Error::io(&dir, e))?;
            if ent.path().join("meta.json").is_file() {
                table_dirs.push(ent.path());
            }
        }
        table_dirs.sort();
        let mut metas = Vec::new();
        let mut columns = Vec::new();
        for td in table_dirs {
            let mp = td.join("meta.json");
            let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
            let meta: TableMeta = serde_json::from_str(&text)?;
            meta.validate()?;
            let rows = meta.row_count as usize;
            let cols = meta
                .schema
                .columns
                .iter()
                .map(|c| ColumnFiles::open(&td, c, rows))
                .collect::<Result<Vec<_>>>()?;
            metas.push(meta);
            columns.push(cols);
        }
        Ok(Self {
            dir,
            catalog: Catalog::new(metas),
            columns,
            cache: PageCache::new(opts.cache_pages, opts.page_size),
            opts,
            selectivity: Mutex::new(FxHashMap::default()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn options(&self) -> StoreOptions {
        self.opts
    }

    pub fn row_count(&self, table: usize) -> usize {
        self.catalog.table(table).row_count as usize
    }

    pub fn column_files(&self, table: usize, column: usize) -> &ColumnFiles {
        &self.columns[table][column]
    }

    /// Values of the selected rows, in row order.
    pub fn read_column(
        &self,
        table: usize,
        column: usize,
        selector: &Bitmap,
    ) -> Result<ColumnValues> {
        self.columns[table][column].read(&self.cache, selector, self.opts.seq_threshold)
    }

    /// Reads with an explicit threshold; 0 forces the sequential path and
    /// anything ≥ 1 the page-targeted one.
    pub fn read_column_with(
        &self,
        table: usize,
        column: usize,
        selector: &Bitmap,
        seq_threshold: f64,
    ) -> Result<ColumnValues> {
        self.columns[table][column].read(&self.cache, selector, seq_threshold)
    }

    pub fn cache(&self) -> &PageCache {
        &self.cache
    }

    pub fn drop_cache(&self) {
        self.cache.clear();
    }

    pub(crate) fn cached_selectivity(
        &self,
        key: (usize, String),
        compute: impl FnOnce() -> Result<Selectivity>,
    ) -> Result<Selectivity> {
        if let Some(s) = self.selectivity.lock().unwrap().get(&key) {
            return Ok(*s);
        }
        let s = compute()?;
        self.selectivity.lock().unwrap().insert(key, s);
        Ok(s)
    }
}

/// Ingests every `<table>.csv` of `csv_dir` listed in the schema file.
pub fn ingest_dir(db: &Path, csv_dir: &Path, schema: &SchemaFile) -> Result<Vec<TableMeta>> {
    std::fs::create_dir_all(db).map_err(|e| Error::io(db, e))?;
    schema
        .tables
        .iter()
        .map(|t| ingest_csv(db, &csv_dir.join(format!("{}.csv", t.name)), t))
        .collect()
}
