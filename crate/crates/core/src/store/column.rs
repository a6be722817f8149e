//! On-disk column layout (little-endian):
//! int64/float64 are 8 bytes per row, bool 1 byte, strings an `.off` file of
//! row_count+1 u64 offsets into a `.dat` byte file. Nullable columns carry a
//! `.null` bitmap (bit set = NULL, LSB first). NULL slots hold zero bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rustc_hash::FxHashSet;

use super::cache::{DataFile, PageCache, PageReader};
use crate::bitmap::Bitmap;
use crate::catalog::{ColumnSchema, ColumnStats};
use crate::error::{Error, Result};
use crate::value::{DataType, Value};

/// Values of one column for a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<String>),
    Bool(Vec<bool>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int(v) => v.len(),
            ColumnData::Float(v) => v.len(),
            ColumnData::Str(v) => v.len(),
            ColumnData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnValues {
    pub data: ColumnData,
    /// Bit i set when value i is NULL; `None` for non-nullable columns.
    pub nulls: Option<Bitmap>,
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_null(&self, i: usize) -> bool {
        self.nulls.as_ref().is_some_and(|n| n.get(i))
    }

    pub fn value(&self, i: usize) -> Value {
        if self.is_null(i) {
            return Value::Null;
        }
        match &self.data {
            ColumnData::Int(v) => Value::Int(v[i]),
            ColumnData::Float(v) => Value::Float(v[i]),
            ColumnData::Str(v) => Value::Str(v[i].clone()),
            ColumnData::Bool(v) => Value::Bool(v[i]),
        }
    }
}

pub(crate) fn data_path(dir: &Path, col: &str) -> PathBuf {
    dir.join(format!("{col}.dat"))
}

pub(crate) fn off_path(dir: &Path, col: &str) -> PathBuf {
    dir.join(format!("{col}.off"))
}

pub(crate) fn null_path(dir: &Path, col: &str) -> PathBuf {
    dir.join(format!("{col}.null"))
}

/// Open files of a stored column.
#[derive(Debug)]
pub struct ColumnFiles {
    pub dtype: DataType,
    pub rows: usize,
    data: DataFile,
    offsets: Option<DataFile>,
    nulls: Option<Bitmap>,
}

impl ColumnFiles {
    pub fn open(dir: &Path, schema: &ColumnSchema, rows: usize) -> Result<Self> {
        let data = DataFile::open(data_path(dir, &schema.name))?;
        let offsets = if schema.dtype == DataType::String {
            let off = DataFile::open(off_path(dir, &schema.name))?;
            if off.len() != 8 * (rows as u64 + 1) {
                return Err(Error::Schema(format!(
                    "{}: offsets file has {} bytes, expected {}",
                    schema.name,
                    off.len(),
                    8 * (rows + 1)
                )));
            }
            Some(off)
        } else {
            let width = if schema.dtype == DataType::Bool { 1 } else { 8 };
            if data.len() != (width * rows) as u64 {
                return Err(Error::Schema(format!(
                    "{}: data file has {} bytes, expected {}",
                    schema.name,
                    data.len(),
                    width * rows
                )));
            }
            None
        };
        let np = null_path(dir, &schema.name);
        let nulls = if np.exists() {
            let bytes = std::fs::read(&np).map_err(|e| Error::io(&np, e))?;
            if bytes.len() != rows.div_ceil(8) {
                return Err(Error::Schema(format!(
                    "{}: null bitmap size mismatch",
                    schema.name
                )));
            }
            Some(Bitmap::from_lsb_bytes(rows, &bytes))
        } else {
            None
        };
        Ok(Self {
            dtype: schema.dtype,
            rows,
            data,
            offsets,
            nulls,
        })
    }

    pub fn null_bitmap(&self) -> Option<&Bitmap> {
        self.nulls.as_ref()
    }

    /// Values for the rows set in `selector`, in row order.
    pub fn read(
        &self,
        cache: &PageCache,
        selector: &Bitmap,
        seq_threshold: f64,
    ) -> Result<ColumnValues> {
        if selector.len() != self.rows {
            return Err(Error::Internal(format!(
                "selector has {} bits for {} rows",
                selector.len(),
                self.rows
            )));
        }
        let selected = selector.count_ones();
        let sequential = self.rows > 0 && selected as f64 / self.rows as f64 > seq_threshold;
        let data = if sequential {
            self.read_sequential(cache, selector, selected)?
        } else {
            self.read_targeted(cache, selector, selected)?
        };
        let nulls = self.nulls.as_ref().map(|nb| {
            let mut out = Bitmap::zeros(selected);
            for (i, row) in selector.iter_ones().enumerate() {
                if nb.get(row) {
                    out.set(i);
                }
            }
            out
        });
        Ok(ColumnValues { data, nulls })
    }

    fn read_sequential(&self, cache: &PageCache, sel: &Bitmap, n: usize) -> Result<ColumnData> {
        let mut bytes = Vec::with_capacity(self.data.len() as usize);
        PageReader::new(cache, &self.data).read(0, self.data.len() as usize, &mut bytes)?;
        Ok(match self.dtype {
            DataType::Int64 => {
                ColumnData::Int(sel.iter_ones().map(|r| le_i64(&bytes[r * 8..])).collect())
            }
            DataType::Float64 => ColumnData::Float(
                sel.iter_ones()
                    .map(|r| f64::from_bits(le_i64(&bytes[r * 8..]) as u64))
                    .collect(),
            ),
            DataType::Bool => ColumnData::Bool(sel.iter_ones().map(|r| bytes[r] != 0).collect()),
            DataType::String => {
                let off_file = self.offsets.as_ref().unwrap();
                let mut offs = Vec::with_capacity(off_file.len() as usize);
                PageReader::new(cache, off_file).read(0, off_file.len() as usize, &mut offs)?;
                let mut out = Vec::with_capacity(n);
                for r in sel.iter_ones() {
                    let a = le_i64(&offs[r * 8..]) as usize;
                    let b = le_i64(&offs[r * 8 + 8..]) as usize;
                    out.push(utf8(&bytes[a..b])?);
                }
                ColumnData::Str(out)
            }
        })
    }

    fn read_targeted(&self, cache: &PageCache, sel: &Bitmap, n: usize) -> Result<ColumnData> {
        let mut reader = PageReader::new(cache, &self.data);
        let mut buf = Vec::with_capacity(8);
        Ok(match self.dtype {
            DataType::Int64 | DataType::Float64 => {
                let mut raw = Vec::with_capacity(n);
                for r in sel.iter_ones() {
                    buf.clear();
                    reader.read(r as u64 * 8, 8, &mut buf)?;
                    raw.push(le_i64(&buf));
                }
                if self.dtype == DataType::Int64 {
                    ColumnData::Int(raw)
                } else {
                    ColumnData::Float(raw.into_iter().map(|v| f64::from_bits(v as u64)).collect())
                }
            }
            DataType::Bool => {
                let mut out = Vec::with_capacity(n);
                for r in sel.iter_ones() {
                    buf.clear();
                    reader.read(r as u64, 1, &mut buf)?;
                    out.push(buf[0] != 0);
                }
                ColumnData::Bool(out)
            }
            DataType::String => {
                let mut offs = PageReader::new(cache, self.offsets.as_ref().unwrap());
                let mut out = Vec::with_capacity(n);
                for r in sel.iter_ones() {
                    buf.clear();
                    offs.read(r as u64 * 8, 16, &mut buf)?;
                    let a = le_i64(&buf);
                    let b = le_i64(&buf[8..]);
                    buf.clear();
                    reader.read(a as u64, (b - a) as usize, &mut buf)?;
                    out.push(utf8(&buf)?);
                }
                ColumnData::Str(out)
            }
        })
    }
}

fn le_i64(b: &[u8]) -> i64 {
    i64::from_le_bytes(b[..8].try_into().unwrap())
}

fn utf8(b: &[u8]) -> Result<String> {
    String::from_utf8(b.to_vec())
        .map_err(|_| Error::Schema("string column is not valid UTF-8".into()))
}

#[derive(Hash, PartialEq, Eq)]
enum DistinctKey {
    Bits(u64),
    Str(String),
}

/// Streams one column to disk and gathers its statistics.
pub(crate) struct ColumnWriter {
    schema: ColumnSchema,
    data: BufWriter<File>,
    offsets: Option<BufWriter<File>>,
    data_len: u64,
    nulls: Vec<bool>,
    distinct: FxHashSet<DistinctKey>,
    min: Option<Value>,
    max: Option<Value>,
    dir: PathBuf,
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

impl ColumnWriter {
    pub fn new(dir: &Path, schema: &ColumnSchema) -> Result<Self> {
        let mut offsets = None;
        if schema.dtype == DataType::String {
            let mut w = create(off_path(dir, &schema.name))?;
            w.write_all(&0u64.to_le_bytes())
                .map_err(|e| Error::io(off_path(dir, &schema.name), e))?;
            offsets = Some(w);
        }
        Ok(Self {
            schema: schema.clone(),
            data: create(data_path(dir, &schema.name))?,
            offsets,
            data_len: 0,
            nulls: Vec::new(),
            distinct: FxHashSet::default(),
            min: None,
            max: None,
            dir: dir.to_path_buf(),
        })
    }

    fn err(&self, e: std::io::Error) -> Error {
        Error::io(data_path(&self.dir, &self.schema.name), e)
    }

    /// Appends one value; the caller has already type-checked it.
    pub fn push(&mut self, v: &Value) -> Result<()> {
        let is_null = v.is_null();
        if is_null && !self.schema.nullable {
            return Err(Error::Schema(format!(
                "NULL in non-nullable column `{}`",
                self.schema.name
            )));
        }
        self.nulls.push(is_null);
        let bytes: Vec<u8> = match (self.schema.dtype, v) {
            (DataType::Int64, Value::Int(x)) => x.to_le_bytes().to_vec(),
            (DataType::Float64, Value::Float(x)) => x.to_bits().to_le_bytes().to_vec(),
            (DataType::Float64, Value::Int(x)) => (*x as f64).to_bits().to_le_bytes().to_vec(),
            (DataType::Bool, Value::Bool(b)) => vec![*b as u8],
            (DataType::String, Value::Str(s)) => s.as_bytes().to_vec(),
            (DataType::Int64 | DataType::Float64, Value::Null) => vec![0; 8],
            (DataType::Bool, Value::Null) => vec![0],
            (DataType::String, Value::Null) => Vec::new(),
            (t, v) => {
                return Err(Error::TypeMismatch(format!(
                    "value {v} does not fit {t} column `{}`",
                    self.schema.name
                )))
            }
        };
        self.data.write_all(&bytes).map_err(|e| self.err(e))?;
        self.data_len += bytes.len() as u64;
        if let Some(off) = &mut self.offsets {
            off.write_all(&self.data_len.to_le_bytes())
                .map_err(|e| Error::io(off_path(&self.dir, &self.schema.name), e))?;
        }
        if !is_null {
            let v = match (self.schema.dtype, v) {
                (DataType::Float64, Value::Int(x)) => Value::Float(*x as f64),
                _ => v.clone(),
            };
            let key = match &v {
                Value::Int(x) => DistinctKey::Bits(*x as u64),
                Value::Float(x) => DistinctKey::Bits(if *x == 0.0 { 0 } else { x.to_bits() }),
                Value::Bool(b) => DistinctKey::Bits(*b as u64),
                Value::Str(s) => DistinctKey::Str(s.clone()),
                Value::Null => unreachable!(),
            };
            self.distinct.insert(key);
            if self
                .min
                .as_ref()
                .is_none_or(|m| v.sql_cmp(m) == Some(std::cmp::Ordering::Less))
            {
                self.min = Some(v.clone());
            }
            if self
                .max
                .as_ref()
                .is_none_or(|m| v.sql_cmp(m) == Some(std::cmp::Ordering::Greater))
            {
                self.max = Some(v);
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<ColumnStats> {
        self.data.flush().map_err(|e| self.err(e))?;
        if let Some(mut off) = self.offsets.take() {
            off.flush()
                .map_err(|e| Error::io(off_path(&self.dir, &self.schema.name), e))?;
        }
        let rows = self.nulls.len();
        let null_count = self.nulls.iter().filter(|&&n| n).count();
        if self.schema.nullable {
            let bm = Bitmap::from_indices(
                rows,
                self.nulls.iter().enumerate().filter(|p| *p.1).map(|p| p.0),
            );
            let p = null_path(&self.dir, &self.schema.name);
            std::fs::write(&p, bm.to_lsb_bytes()).map_err(|e| Error::io(&p, e))?;
        }
        Ok(ColumnStats {
            distinct: self.distinct.len() as u64,
            null_fraction: if rows == 0 {
                0.0
            } else {
                null_count as f64 / rows as f64
            },
            min: self.min.as_ref().map(value_json),
            max: self.max.as_ref().map(value_json),
        })
    }
}

fn value_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Int(x) => (*x).into(),
        Value::Float(x) => serde_json::Number::from_f64(*x)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        Value::Str(s) => s.clone().into(),
        Value::Bool(b) => (*b).into(),
    }
}
