//! Shared fixtures for the benchmarks.

use tagexec::synth::{gen_synth, SynthConfig};
use tagexec::Database;

/// Star join over the synthetic tables.
pub const FROM: &str =
    "SELECT * FROM T0 JOIN T1 ON T0.id = T1.fid JOIN T2 ON T0.id = T2.fid WHERE ";

/// A synthetic database of `size` rows per table in a temporary directory.
pub fn synth_db(size: usize) -> (tempfile::TempDir, Database) {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = SynthConfig {
        table_size: size,
        ..Default::default()
    };
    let db = gen_synth(&cfg, dir.path(), Default::default()).expect("synthetic data");
    (dir, db)
}

/// `k` clauses over A1..Ak, each an AND (DNF) or OR (CNF) of T1 and T2 atoms.
pub fn clauses(k: usize, dnf: bool, sel: f64) -> String {
    let (inner, outer) = if dnf {
        ("AND", " OR ")
    } else {
        ("OR", " AND ")
    };
    (1..=k)
        .map(|i| format!("(T1.A{i} < {sel} {inner} T2.A{i} < {sel})"))
        .collect::<Vec<_>>()
        .join(outer)
}
