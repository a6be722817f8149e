//! Synthetic three-table workload: a key table and two Zipf-skewed fact tables.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ColumnSchema, TableSchema};
use crate::error::{Error, Result};
use crate::store::{Database, StoreOptions, TableWriter};
use crate::value::{DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub table_size: usize,
    pub zipf_shape: f64,
    /// Uniform attributes `A1..Ak` per table.
    pub num_attrs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            table_size: 10_000,
            zipf_shape: 1.5,
            num_attrs: 7,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.zipf_shape.is_nan() || self.zipf_shape <= 1.0 {
            return Err(Error::Config(format!(
                "zipf_shape must exceed 1, got {}",
                self.zipf_shape
            )));
        }
        if self.table_size == 0 {
            return Err(Error::Config("table_size must be at least 1".into()));
        }
        if self.num_attrs == 0 {
            return Err(Error::Config("num_attrs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inverse-CDF sampler over `1..=n` with `P(k) ∝ k^-s`.
#[derive(Debug, Clone)]
pub struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    pub fn new(n: usize, s: f64) -> Self {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 1..=n {
            acc += (k as f64).powf(-s);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Self { cdf }
    }

    pub fn probability(&self, k: usize) -> f64 {
        let hi = self.cdf[k - 1];
        let lo = if k >= 2 { self.cdf[k - 2] } else { 0.0 };
        hi - lo
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
            + 1
    }
}

fn attr_columns(k: usize) -> impl Iterator<Item = ColumnSchema> {
    (1..=k).map(|i| ColumnSchema {
        name: format!("A{i}"),
        dtype: DataType::Float64,
        nullable: false,
    })
}

fn schema(name: &str, key: &str, k: usize) -> TableSchema {
    let key = ColumnSchema {
        name: key.to_string(),
        dtype: DataType::Int64,
        nullable: false,
    };
    TableSchema {
        name: name.to_string(),
        columns: std::iter::once(key).chain(attr_columns(k)).collect(),
    }
}

/// Writes `T0(id, A1..Ak)`, `T1(fid, A1..Ak)` and `T2(fid, A1..Ak)` into `dir`.
pub fn gen_synth(cfg: &SynthConfig, dir: &Path, opts: StoreOptions) -> Result<Database> {
    cfg.validate()?;
    let n = cfg.table_size;
    let k = cfg.num_attrs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zipf = Zipf::new(n, cfg.zipf_shape);
    let mut row = Vec::with_capacity(k + 1);

    let mut w = TableWriter::create(dir, &schema("T0", "id", k))?;
    for id in 1..=n {
        row.clear();
        row.push(Value::Int(id as i64));
        row.extend((0..k).map(|_| Value::Float(rng.gen())));
        w.push_row(&row)?;
    }
    w.finish()?;

    for name in ["T1", "T2"] {
        let mut w = TableWriter::create(dir, &schema(name, "fid", k))?;
        for _ in 0..n {
            row.clear();
            row.push(Value::Int(zipf.sample(&mut rng) as i64));
            row.extend((0..k).map(|_| Value::Float(rng.gen())));
            w.push_row(&row)?;
        }
        w.finish()?;
    }
    Database::open(dir, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Cnf,
    Dnf,
}

impl FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnf" => Ok(Form::Cnf),
            "dnf" => Ok(Form::Dnf),
            _ => Err(Error::Config(format!(
                "unknown form `{s}` (expected cnf or dnf)"
            ))),
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Form::Cnf => "cnf",
            Form::Dnf => "dnf",
        })
    }
}

/// Parameters of one synthetic query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthQuery {
    pub form: Form,
    /// Constant `x` of every `Ti.Aj < x` atom.
    pub selectivity: f64,
    /// Clause `j` uses attribute `Aj` of `T1` and `T2`.
    pub clauses: usize,
    /// Adds `T0.A1 < c`: as a top conjunct in CNF, inside every clause in DNF.
    pub outer: Option<f64>,
}

impl SynthQuery {
    pub fn new(form: Form) -> Self {
        Self {
            form,
            selectivity: 0.2,
            clauses: 2,
            outer: None,
        }
    }

    pub fn to_sql(&self) -> String {
        let x = self.selectivity;
        let (inner, outer_op) = match self.form {
            Form::Dnf => ("AND", " OR "),
            Form::Cnf => ("OR", " AND "),
        };
        let outer_atom = self.outer.map(|c| format!("T0.A1 < {c}"));
        let clauses: Vec<String> = (1..=self.clauses)
            .map(|j| {
                let mut atoms = vec![format!("T1.A{j} < {x}"), format!("T2.A{j} < {x}")];
                if self.form == Form::Dnf {
                    if let Some(o) = &outer_atom {
                        atoms.insert(0, o.clone());
                    }
                }
                format!("({})", atoms.join(&format!(" {inner} ")))
            })
            .collect();
        let mut pred = clauses.join(outer_op);
        if self.form == Form::Cnf {
            if let Some(o) = outer_atom {
                pred = format!("{o} AND {pred}");
            }
        }
        format!("SELECT * FROM T0 JOIN T1 ON T0.id = T1.fid JOIN T2 ON T0.id = T2.fid WHERE {pred}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small(n: usize) -> SynthConfig {
        SynthConfig {
            table_size: n,
            num_attrs: 2,
            ..Default::default()
        }
    }

    fn read_ints(db: &Database, table: &str, col: usize) -> Vec<i64> {
        let t = db.catalog().table_index(table).unwrap();
        let n = db.row_count(t);
        let vals = db
            .read_column(t, col, &crate::bitmap::Bitmap::ones(n))
            .unwrap();
        (0..n)
            .map(|i| match vals.value(i) {
                Value::Int(v) => v,
                other => panic!("unexpected {other:?}"),
            })
            .collect()
    }

    #[test]
    fn default_key_table_is_dense() {
        let dir = tempfile::tempdir().unwrap();
        let db = gen_synth(&SynthConfig::default(), dir.path(), StoreOptions::default()).unwrap();
        let ids = read_ints(&db, "T0", 0);
        assert_eq!(ids.len(), 10_000);
        assert_eq!(ids.iter().collect::<HashSet<_>>().len(), 10_000);
        assert_eq!(
            (*ids.iter().min().unwrap(), *ids.iter().max().unwrap()),
            (1, 10_000)
        );
        for t in ["T1", "T2"] {
            let fids = read_ints(&db, t, 0);
            assert_eq!(fids.len(), 10_000);
            assert!(fids.iter().all(|&f| (1..=10_000).contains(&f)));
            // P(1) = 1/zeta(1.5) is about 0.38 for this support.
            let ones = fids.iter().filter(|&&f| f == 1).count() as f64 / 1e4;
            assert!((ones - 0.38).abs() < 0.03, "{ones}");
        }
    }

    #[test]
    fn single_row_tables() {
        let dir = tempfile::tempdir().unwrap();
        let db = gen_synth(&small(1), dir.path(), StoreOptions::default()).unwrap();
        for t in ["T0", "T1", "T2"] {
            assert_eq!(read_ints(&db, t, 0), vec![1]);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        gen_synth(&small(500), a.path(), StoreOptions::default()).unwrap();
        gen_synth(&small(500), b.path(), StoreOptions::default()).unwrap();
        let mut files = 0;
        for e in walkdir(a.path()) {
            let rel = e.strip_prefix(a.path()).unwrap();
            assert_eq!(
                std::fs::read(&e).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap(),
                "{rel:?}"
            );
            files += 1;
        }
        assert!(files >= 9);
    }

    fn walkdir(p: &Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                out.extend(walkdir(&path));
            } else {
                out.push(path);
            }
        }
        out
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SynthConfig {
            zipf_shape: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(small(0).validate().is_err());
    }

    #[test]
    fn zipf_probabilities_sum_to_one() {
        let z = Zipf::new(100, 1.5);
        let total: f64 = (1..=100).map(|k| z.probability(k)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(z.probability(1) > z.probability(2));
    }

    #[test]
    fn query_shapes() {
        let dnf = SynthQuery::new(Form::Dnf).to_sql();
        assert!(
            dnf.ends_with("WHERE (T1.A1 < 0.2 AND T2.A1 < 0.2) OR (T1.A2 < 0.2 AND T2.A2 < 0.2)"),
            "{dnf}"
        );
        let cnf = SynthQuery {
            outer: Some(0.1),
            ..SynthQuery::new(Form::Cnf)
        }
        .to_sql();
        assert!(
            cnf.ends_with("WHERE T0.A1 < 0.1 AND (T1.A1 < 0.2 OR T2.A1 < 0.2) AND (T1.A2 < 0.2 OR T2.A2 < 0.2)"),
            "{cnf}"
        );
        let dnf_outer = SynthQuery {
            outer: Some(0.5),
            clauses: 3,
            ..SynthQuery::new(Form::Dnf)
        }
        .to_sql();
        assert_eq!(dnf_outer.matches("T0.A1 < 0.5").count(), 3);
        assert!(dnf_outer.contains("T2.A3 < 0.2"));
    }
}
