//! Execution operators: scan, tagged filter, tagged hash join, projection
//! and the deduplicating union used by per-clause plans.

use std::collections::BTreeMap;
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::predicate::{NodeId, NodeKind, PredTree};
use crate::relation::{reconstruct_values, IndexColumn, IndexRelation, TaggedRelation};
use crate::sql::{Atom, AtomTest, BoundQuery, ColRef, JoinEdge};
use crate::store::{ColumnData, Database};
use crate::tag::{Logic, Tag, Truth};
use crate::tagmap::{FilterTagMap, JoinTagMap};
use crate::value::{DataType, Value};

/// Per-query execution counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecStats {
    /// Tuples each atom node was evaluated on.
    pub atom_evals: BTreeMap<NodeId, u64>,
    pub total_atom_evals: u64,
    /// Probe-side key lookups.
    pub hash_probes: u64,
    /// Entries inserted into join hash tables.
    pub tuples_built: u64,
    /// Scans per query table.
    pub scans: BTreeMap<usize, u64>,
    /// Materialized slices whose tag has a false (or, in 3VL, unknown) root.
    pub precept_violations: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    /// Verify slice disjointness after every operator.
    pub check_invariants: bool,
    pub logic: Logic,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            check_invariants: cfg!(debug_assertions),
            logic: Logic::TwoValued,
        }
    }
}

/// Which join input the hash table is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildSide {
    Left,
    Right,
}

/// Truth partition of a selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub t: Bitmap,
    pub f: Bitmap,
    pub u: Bitmap,
}

impl Outcome {
    fn empty(len: usize) -> Self {
        Self {
            t: Bitmap::zeros(len),
            f: Bitmap::zeros(len),
            u: Bitmap::zeros(len),
        }
    }

    pub fn get(&self, v: Truth) -> &Bitmap {
        match v {
            Truth::T => &self.t,
            Truth::F => &self.f,
            Truth::U => &self.u,
        }
    }
}

fn norm_float(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

fn classify_rows(sel: &Bitmap, mut test: impl FnMut(usize) -> Option<bool>) -> Outcome {
    let mut out = Outcome::empty(sel.len());
    for (k, r) in sel.iter_ones().enumerate() {
        match test(k) {
            Some(true) => out.t.set(r),
            Some(false) => out.f.set(r),
            None => out.u.set(r),
        }
    }
    out
}

/// Evaluates one atom on the selected rows of a base table. The three
/// bitmaps partition `selector`; NULL operands yield unknown.
pub fn evaluate_atom(
    db: &Database,
    atom: &Atom,
    table_id: usize,
    selector: &Bitmap,
) -> Result<Outcome> {
    let rows = db.row_count(table_id);
    if selector.len() != rows {
        return Err(Error::Internal(format!(
            "selector has {} bits for {rows} rows",
            selector.len()
        )));
    }
    if selector.none() {
        return Ok(Outcome::empty(rows));
    }
    if let AtomTest::Cmp {
        value: Value::Null, ..
    } = &atom.test
    {
        return Ok(Outcome {
            t: Bitmap::zeros(rows),
            f: Bitmap::zeros(rows),
            u: selector.clone(),
        });
    }
    let vals = db.read_column(table_id, atom.col.column, selector)?;
    let null = |k: usize| vals.is_null(k);
    Ok(match (&atom.test, &vals.data) {
        (AtomTest::IsNull, _) => classify_rows(selector, |k| Some(null(k))),
        (AtomTest::Like(p), ColumnData::Str(v)) => classify_rows(selector, |k| {
            if null(k) {
                None
            } else {
                Some(p.matches(&v[k]))
            }
        }),
        (AtomTest::Cmp { op, value }, data) => {
            let op = *op;
            match (data, value) {
                (ColumnData::Int(v), Value::Int(c)) => {
                    let c = *c;
                    classify_rows(selector, |k| {
                        if null(k) {
                            None
                        } else {
                            Some(op.holds(v[k].cmp(&c)))
                        }
                    })
                }
                (ColumnData::Int(v), Value::Float(c)) => {
                    let c = *c;
                    classify_rows(selector, |k| {
                        if null(k) {
                            None
                        } else {
                            (v[k] as f64).partial_cmp(&c).map(|o| op.holds(o))
                        }
                    })
                }
                (ColumnData::Float(v), Value::Float(c)) => {
                    let c = *c;
                    classify_rows(selector, |k| {
                        if null(k) {
                            None
                        } else {
                            v[k].partial_cmp(&c).map(|o| op.holds(o))
                        }
                    })
                }
                (ColumnData::Float(v), Value::Int(c)) => {
                    let c = *c as f64;
                    classify_rows(selector, |k| {
                        if null(k) {
                            None
                        } else {
                            v[k].partial_cmp(&c).map(|o| op.holds(o))
                        }
                    })
                }
                (ColumnData::Str(v), Value::Str(c)) => classify_rows(selector, |k| {
                    if null(k) {
                        None
                    } else {
                        Some(op.holds(v[k].as_bytes().cmp(c.as_bytes())))
                    }
                }),
                (ColumnData::Bool(v), Value::Bool(c)) => {
                    let c = *c;
                    classify_rows(selector, |k| {
                        if null(k) {
                            None
                        } else {
                            Some(op.holds(v[k].cmp(&c)))
                        }
                    })
                }
                _ => {
                    return Err(Error::TypeMismatch(format!(
                        "`{}` cannot be evaluated on its column",
                        atom.label
                    )))
                }
            }
        }
        (AtomTest::Like(_), _) => {
            return Err(Error::TypeMismatch(format!(
                "`{}` applies LIKE to a non-string column",
                atom.label
            )))
        }
    })
}

/// Lifts a row-level outcome to the selected tuples of a relation column.
fn lift(col: &IndexColumn, sel: &Bitmap, rows: &Outcome) -> Outcome {
    let mut out = Outcome::empty(sel.len());
    let put = |out: &mut Outcome, i: usize, r: usize| {
        if rows.t.get(r) {
            out.t.set(i)
        } else if rows.f.get(r) {
            out.f.set(i)
        } else {
            out.u.set(i)
        }
    };
    match col {
        IndexColumn::U16(v) => sel
            .iter_ones()
            .for_each(|i| put(&mut out, i, v[i] as usize)),
        IndexColumn::U32(v) => sel
            .iter_ones()
            .for_each(|i| put(&mut out, i, v[i] as usize)),
    }
    out
}

/// A filtered or projected set of index tuples.
#[derive(Debug, Clone)]
pub struct ResultSet {
    pub rel: Arc<IndexRelation>,
    pub selection: Bitmap,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl ResultSet {
    pub fn empty(tables: Vec<usize>, table_rows: &[usize]) -> Self {
        let columns = tables
            .iter()
            .map(|&t| IndexColumn::for_table(table_rows[t], 0))
            .collect();
        let rel = IndexRelation::new(tables, columns).expect("empty columns are aligned");
        Self {
            rel: Arc::new(rel),
            selection: Bitmap::zeros(0),
        }
    }

    pub fn count(&self) -> usize {
        self.selection.count_ones()
    }

    /// Query table ids of the tuple coordinates, ascending.
    pub fn tables(&self) -> Vec<usize> {
        let mut t = self.rel.tables.clone();
        t.sort_unstable();
        t
    }

    /// Selected tuples with coordinates ordered by query table id, sorted.
    pub fn canonical_tuples(&self) -> Vec<Vec<u32>> {
        let order = self.rel.canonical_order();
        let mut v: Vec<Vec<u32>> = self
            .selection
            .iter_ones()
            .map(|i| self.rel.canonical_tuple(i, &order))
            .collect();
        v.sort_unstable();
        v
    }

    /// Order-independent hash of the selected tuples.
    pub fn fingerprint(&self) -> u64 {
        let order = self.rel.canonical_order();
        let mut acc = 0u64;
        for i in self.selection.iter_ones() {
            let mut h = 0u64;
            for &c in &order {
                h = splitmix(h ^ self.rel.columns[c].get(i) as u64);
            }
            acc = acc.wrapping_add(h);
        }
        acc
    }

    pub fn values(
        &self,
        db: &Database,
        query: &BoundQuery,
        columns: &[ColRef],
    ) -> Result<Vec<Vec<Value>>> {
        reconstruct_values(db, query, &self.rel, &self.selection, columns)
    }
}

enum KeyKind {
    Int,
    Float,
    Bool,
    Str,
}

struct KeyCol {
    pos: usize,
    table_id: usize,
    column: usize,
    kind: KeyKind,
}

#[derive(Default)]
struct KeyDict {
    strings: FxHashMap<String, u64>,
    composite: FxHashMap<Vec<u64>, u64>,
}

/// Join key codes of the selected tuples, in tuple order; `None` for NULL
/// keys and for keys the build side never saw.
fn key_codes(
    db: &Database,
    rel: &IndexRelation,
    tuples: &Bitmap,
    keys: &[KeyCol],
    dict: &mut KeyDict,
    insert: bool,
) -> Result<Vec<Option<u64>>> {
    let n = tuples.count_ones();
    let mut parts: Vec<Vec<Option<u64>>> = Vec::with_capacity(keys.len());
    for k in keys {
        let col = &rel.columns[k.pos];
        let table_rows = db.row_count(k.table_id);
        let rows = col.rows_of(tuples, table_rows);
        let vals = db.read_column(k.table_id, k.column, &rows)?;
        let mut code_of_row = vec![None; table_rows];
        for (j, r) in rows.iter_ones().enumerate() {
            if vals.is_null(j) {
                continue;
            }
            code_of_row[r] = match (&vals.data, &k.kind) {
                (ColumnData::Int(v), KeyKind::Int) => Some(v[j] as u64),
                (ColumnData::Int(v), KeyKind::Float) => Some(norm_float(v[j] as f64).to_bits()),
                (ColumnData::Float(v), _) => (!v[j].is_nan()).then(|| norm_float(v[j]).to_bits()),
                (ColumnData::Bool(v), _) => Some(v[j] as u64),
                (ColumnData::Str(v), _) => {
                    if insert {
                        let next = dict.strings.len() as u64;
                        Some(*dict.strings.entry(v[j].clone()).or_insert(next))
                    } else {
                        dict.strings.get(&v[j]).copied()
                    }
                }
                _ => return Err(Error::Internal("join key kind mismatch".into())),
            };
        }
        let mut codes = Vec::with_capacity(n);
        codes.extend(tuples.iter_ones().map(|i| code_of_row[col.get(i)]));
        parts.push(codes);
    }
    if parts.len() == 1 {
        return Ok(parts.pop().unwrap());
    }
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(parts.len());
    for t in 0..n {
        buf.clear();
        let mut ok = true;
        for p in &parts {
            match p[t] {
                Some(c) => buf.push(c),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        out.push(if !ok {
            None
        } else if insert {
            let next = dict.composite.len() as u64;
            Some(*dict.composite.entry(buf.clone()).or_insert(next))
        } else {
            dict.composite.get(&buf).copied()
        });
    }
    Ok(out)
}

const GATHER_CHUNK: usize = 1 << 16;

fn alloc_like(src: &IndexColumn, len: usize) -> IndexColumn {
    match src {
        IndexColumn::U16(_) => IndexColumn::U16(vec![0; len]),
        IndexColumn::U32(_) => IndexColumn::U32(vec![0; len]),
    }
}

fn scatter(src: &IndexColumn, idx: &[u32], pos: &[u32], dst: &mut IndexColumn) {
    match (src, dst) {
        (IndexColumn::U16(s), IndexColumn::U16(d)) => {
            for (&i, &p) in idx.iter().zip(pos) {
                d[p as usize] = s[i as usize];
            }
        }
        (IndexColumn::U32(s), IndexColumn::U32(d)) => {
            for (&i, &p) in idx.iter().zip(pos) {
                d[p as usize] = s[i as usize];
            }
        }
        _ => unreachable!("output columns mirror their source width"),
    }
}

/// Runs operators for one query and accumulates its counters.
pub struct Executor<'a> {
    pub db: &'a Database,
    pub query: &'a BoundQuery,
    pub tree: Option<&'a PredTree>,
    pub opts: ExecOptions,
    pub stats: ExecStats,
}

impl<'a> Executor<'a> {
    pub fn new(
        db: &'a Database,
        query: &'a BoundQuery,
        tree: Option<&'a PredTree>,
        opts: ExecOptions,
    ) -> Self {
        Self {
            db,
            query,
            tree,
            opts,
            stats: ExecStats::default(),
        }
    }

    fn tree(&self) -> Result<&'a PredTree> {
        self.tree
            .ok_or_else(|| Error::Plan("query has no predicate to evaluate".into()))
    }

    fn table_rows(&self) -> Vec<usize> {
        self.query
            .tables
            .iter()
            .map(|t| self.db.row_count(t.table_id))
            .collect()
    }

    pub fn scan(&mut self, table: usize) -> Result<TaggedRelation> {
        let bt = self
            .query
            .tables
            .get(table)
            .ok_or_else(|| Error::Plan(format!("scan of unknown query table {table}")))?;
        *self.stats.scans.entry(table).or_default() += 1;
        Ok(TaggedRelation::from_base_table(
            table,
            self.db.row_count(bt.table_id),
        ))
    }

    /// Evaluates a predicate node on the selected tuples. AND and OR stop
    /// evaluating a tuple once its value is decided.
    pub fn evaluate_node(
        &mut self,
        rel: &IndexRelation,
        node: NodeId,
        sel: &Bitmap,
    ) -> Result<Outcome> {
        let tree = self.tree()?;
        match tree.kind(node) {
            NodeKind::Atom(a) => {
                let atom = &tree.atoms()[a];
                let pos = rel.position(atom.col.table).ok_or_else(|| {
                    Error::Plan(format!(
                        "`{}` filters a relation without its table",
                        atom.label
                    ))
                })?;
                let n = sel.count_ones() as u64;
                *self.stats.atom_evals.entry(node).or_default() += n;
                self.stats.total_atom_evals += n;
                let table_id = self.query.tables[atom.col.table].table_id;
                let table_rows = self.db.row_count(table_id);
                if rel.arity() == 1 {
                    return evaluate_atom(self.db, atom, table_id, sel);
                }
                let col = &rel.columns[pos];
                let rows = col.rows_of(sel, table_rows);
                let row_out = evaluate_atom(self.db, atom, table_id, &rows)?;
                Ok(lift(col, sel, &row_out))
            }
            NodeKind::Not => {
                let c = tree.children(node)[0];
                let o = self.evaluate_node(rel, c, sel)?;
                Ok(Outcome {
                    t: o.f,
                    f: o.t,
                    u: o.u,
                })
            }
            kind @ (NodeKind::And | NodeKind::Or) => {
                let is_and = kind == NodeKind::And;
                // `sure` holds the decided tuples, `open` those still
                // neutral (T for AND, F for OR), `unk` those unknown so far
                let mut sure = Bitmap::zeros(sel.len());
                let mut open = sel.clone();
                let mut unk = Bitmap::zeros(sel.len());
                for &c in tree.children(node) {
                    let cand = open.or(&unk);
                    if cand.none() {
                        break;
                    }
                    let o = self.evaluate_node(rel, c, &cand)?;
                    let (decide, neutral) = if is_and { (&o.f, &o.t) } else { (&o.t, &o.f) };
                    sure.union_with(decide);
                    open.intersect_with(neutral);
                    unk = cand.and_not(decide).and_not(&open);
                }
                Ok(if is_and {
                    Outcome {
                        t: open,
                        f: sure,
                        u: unk,
                    }
                } else {
                    Outcome {
                        t: sure,
                        f: open,
                        u: unk,
                    }
                })
            }
        }
    }

    pub fn filter(
        &mut self,
        input: TaggedRelation,
        pred: NodeId,
        map: &FilterTagMap,
    ) -> Result<TaggedRelation> {
        let matched = input.union_of(map.entries.iter().map(|(t, _)| t));
        if matched.none() {
            return Ok(input);
        }
        let rel = input.rel.clone();
        let mut o = self.evaluate_node(&rel, pred, &matched)?;
        if self.opts.logic == Logic::TwoValued {
            o.f.union_with(&o.u);
            o.u = Bitmap::zeros(o.u.len());
        }
        let mut out = Vec::new();
        for (tag, bm) in input.into_slices() {
            match map.get(&tag) {
                None => out.push((tag, bm)),
                Some(entry) => {
                    for v in [Truth::T, Truth::F, Truth::U] {
                        if let Some(t) = entry.get(v) {
                            out.push((t.clone(), bm.and(o.get(v))));
                        }
                    }
                }
            }
        }
        let tr = TaggedRelation::with_slices(rel, out, self.opts.check_invariants)?;
        self.note_precepts(&tr);
        Ok(tr)
    }

    fn note_precepts(&mut self, tr: &TaggedRelation) {
        let Some(tree) = self.tree else { return };
        let root = tree.root();
        let bad = tr
            .tags()
            .filter(|t| match t.get(root) {
                Some(Truth::F) => true,
                Some(Truth::U) => self.opts.logic == Logic::ThreeValued,
                _ => false,
            })
            .count();
        self.stats.precept_violations += bad as u64;
    }

    fn key_cols(
        &self,
        rel: &IndexRelation,
        table: usize,
        cols: impl Iterator<Item = usize>,
        float: &[bool],
    ) -> Result<Vec<KeyCol>> {
        let pos = rel
            .position(table)
            .ok_or_else(|| Error::Plan(format!("join key table {table} not in its input")))?;
        let table_id = self.query.tables[table].table_id;
        let schema = &self.db.catalog().table(table_id).schema;
        Ok(cols
            .zip(float)
            .map(|(c, &fl)| KeyCol {
                pos,
                table_id,
                column: c,
                kind: match schema.columns[c].dtype {
                    _ if fl => KeyKind::Float,
                    DataType::Int64 => KeyKind::Int,
                    DataType::Float64 => KeyKind::Float,
                    DataType::Bool => KeyKind::Bool,
                    DataType::String => KeyKind::Str,
                },
            })
            .collect())
    }

    /// Hash join of two tagged relations along `edge`. Output columns are
    /// the left input's followed by the right input's.
    pub fn join(
        &mut self,
        left: &TaggedRelation,
        right: &TaggedRelation,
        edge: &JoinEdge,
        map: &JoinTagMap,
        build: BuildSide,
    ) -> Result<TaggedRelation> {
        let (lt, rt, lcols, rcols): (usize, usize, Vec<usize>, Vec<usize>) =
            if left.rel.position(edge.left).is_some() {
                (
                    edge.left,
                    edge.right,
                    edge.keys.iter().map(|k| k.0).collect(),
                    edge.keys.iter().map(|k| k.1).collect(),
                )
            } else {
                (
                    edge.right,
                    edge.left,
                    edge.keys.iter().map(|k| k.1).collect(),
                    edge.keys.iter().map(|k| k.0).collect(),
                )
            };
        let dtype = |t: usize, c: usize| {
            let tid = self.query.tables[t].table_id;
            self.db.catalog().table(tid).schema.columns[c].dtype
        };
        let float: Vec<bool> = lcols
            .iter()
            .zip(&rcols)
            .map(|(&a, &b)| dtype(lt, a) != dtype(rt, b))
            .collect();
        let lkeys = self.key_cols(&left.rel, lt, lcols.into_iter(), &float)?;
        let rkeys = self.key_cols(&right.rel, rt, rcols.into_iter(), &float)?;

        let mut out_tags: Vec<Tag> = Vec::new();
        let mut out_index: FxHashMap<Tag, usize> = FxHashMap::default();
        let mut pairs: Vec<(&Tag, &Tag, usize)> = Vec::new();
        for (l, r, o) in &map.entries {
            if left.slice(l).is_none() || right.slice(r).is_none() {
                continue;
            }
            let idx = *out_index.entry(o.clone()).or_insert_with(|| {
                out_tags.push(o.clone());
                out_tags.len() - 1
            });
            pairs.push((l, r, idx));
        }

        let (bside, pside, bkeys, pkeys) = match build {
            BuildSide::Left => (left, right, &lkeys, &rkeys),
            BuildSide::Right => (right, left, &rkeys, &lkeys),
        };
        // slice numbering on each side, restricted to participating slices
        let mut bslices: Vec<&Tag> = Vec::new();
        let mut pslices: Vec<&Tag> = Vec::new();
        for &(l, r, _) in &pairs {
            let (b, p) = if build == BuildSide::Left {
                (l, r)
            } else {
                (r, l)
            };
            if !bslices.contains(&b) {
                bslices.push(b);
            }
            if !pslices.contains(&p) {
                pslices.push(p);
            }
        }
        let mut allowed = vec![vec![None; bslices.len()]; pslices.len()];
        for &(l, r, o) in &pairs {
            let (b, p) = if build == BuildSide::Left {
                (l, r)
            } else {
                (r, l)
            };
            let bi = bslices.iter().position(|t| *t == b).unwrap();
            let pi = pslices.iter().position(|t| *t == p).unwrap();
            allowed[pi][bi] = Some(o);
        }

        // build: entries sorted by (code, slice) and grouped per code
        let mut dict = KeyDict::default();
        let mut entries: Vec<(u64, u32, u32)> = Vec::new();
        for (si, tag) in bslices.iter().enumerate() {
            let bm = bside.slice(tag).unwrap();
            let codes = key_codes(self.db, &bside.rel, bm, bkeys, &mut dict, true)?;
            for (i, c) in bm.iter_ones().zip(codes) {
                if let Some(c) = c {
                    entries.push((c, si as u32, i as u32));
                }
            }
        }
        self.stats.tuples_built += entries.len() as u64;
        entries.sort_unstable();
        let mut groups: FxHashMap<u64, (u32, u32)> = FxHashMap::default();
        groups.reserve(entries.len());
        let mut s = 0;
        while s < entries.len() {
            let mut e = s + 1;
            while e < entries.len() && entries[e].0 == entries[s].0 {
                e += 1;
            }
            groups.insert(entries[s].0, (s as u32, e as u32));
            s = e;
        }

        // probe once, remembering each probe tuple's group
        let mut probes: Vec<(u32, u32, u32, u32)> = Vec::new();
        let mut counts = vec![0usize; out_tags.len()];
        for (pi, tag) in pslices.iter().enumerate() {
            let bm = pside.slice(tag).unwrap();
            let codes = key_codes(self.db, &pside.rel, bm, pkeys, &mut dict, false)?;
            self.stats.hash_probes += codes.len() as u64;
            for (i, c) in bm.iter_ones().zip(codes) {
                let Some(&(gs, ge)) = c.as_ref().and_then(|c| groups.get(c)) else {
                    continue;
                };
                for e in &entries[gs as usize..ge as usize] {
                    if let Some(o) = allowed[pi][e.1 as usize] {
                        counts[o] += 1;
                    }
                }
                probes.push((i as u32, pi as u32, gs, ge));
            }
        }

        let total: usize = counts.iter().sum();
        if total > u32::MAX as usize {
            return Err(Error::Internal(format!(
                "join output of {total} tuples exceeds u32 addressing"
            )));
        }
        let mut starts = Vec::with_capacity(counts.len());
        let mut acc = 0;
        for &c in &counts {
            starts.push(acc);
            acc += c;
        }
        let mut cursor = starts.clone();

        let mut tables = left.rel.tables.clone();
        tables.extend(&right.rel.tables);
        let mut columns: Vec<IndexColumn> = left
            .rel
            .columns
            .iter()
            .chain(&right.rel.columns)
            .map(|c| alloc_like(c, total))
            .collect();
        let nl = left.rel.arity();
        let mut lidx = Vec::with_capacity(GATHER_CHUNK);
        let mut ridx = Vec::with_capacity(GATHER_CHUNK);
        let mut pos = Vec::with_capacity(GATHER_CHUNK);
        let flush = |lidx: &mut Vec<u32>,
                     ridx: &mut Vec<u32>,
                     pos: &mut Vec<u32>,
                     columns: &mut Vec<IndexColumn>| {
            for (c, dst) in columns.iter_mut().enumerate() {
                if c < nl {
                    scatter(&left.rel.columns[c], lidx, pos, dst);
                } else {
                    scatter(&right.rel.columns[c - nl], ridx, pos, dst);
                }
            }
            lidx.clear();
            ridx.clear();
            pos.clear();
        };
        for &(pt, pi, gs, ge) in &probes {
            for e in &entries[gs as usize..ge as usize] {
                if let Some(o) = allowed[pi as usize][e.1 as usize] {
                    let (l, r) = if build == BuildSide::Left {
                        (e.2, pt)
                    } else {
                        (pt, e.2)
                    };
                    lidx.push(l);
                    ridx.push(r);
                    pos.push(cursor[o] as u32);
                    cursor[o] += 1;
                    if pos.len() == GATHER_CHUNK {
                        flush(&mut lidx, &mut ridx, &mut pos, &mut columns);
                    }
                }
            }
        }
        flush(&mut lidx, &mut ridx, &mut pos, &mut columns);
        drop(probes);

        let rel = Arc::new(IndexRelation::new(tables, columns)?);
        let slices = out_tags.into_iter().enumerate().map(|(o, t)| {
            (
                t,
                Bitmap::from_range(total, starts[o], starts[o] + counts[o]),
            )
        });
        let tr = TaggedRelation::with_slices(rel, slices, self.opts.check_invariants)?;
        self.note_precepts(&tr);
        Ok(tr)
    }

    /// Keeps the slices whose tags are allowed.
    pub fn project(&mut self, input: &TaggedRelation, allowed: &[Tag]) -> ResultSet {
        ResultSet {
            rel: input.rel.clone(),
            selection: input.union_of(allowed),
        }
    }

    /// Set union of result sets over the same tables.
    pub fn union(&mut self, inputs: Vec<ResultSet>) -> Result<ResultSet> {
        union_exec(&self.table_rows(), inputs)
    }
}

/// Dedup union on canonical index tuples. `table_rows` gives the row count
/// of each query table.
pub fn union_exec(table_rows: &[usize], inputs: Vec<ResultSet>) -> Result<ResultSet> {
    let Some(first) = inputs.first() else {
        return Err(Error::Plan("union of no inputs".into()));
    };
    let tables = first.tables();
    if let Some(bad) = inputs.iter().find(|r| r.tables() != tables) {
        return Err(Error::Plan(format!(
            "union inputs bind tables {:?} and {:?}",
            tables,
            bad.tables()
        )));
    }
    if inputs.len() == 1 {
        return Ok(inputs.into_iter().next().unwrap());
    }
    let bits: Vec<u32> = tables
        .iter()
        .map(|&t| (table_rows[t].max(2) as u64 - 1).ilog2() + 1)
        .collect();
    let width: u32 = bits.iter().sum();
    let tuples: Vec<Vec<u32>> = if width <= 64 {
        let mut packed: Vec<u64> = Vec::new();
        for rs in &inputs {
            let order = rs.rel.canonical_order();
            packed.reserve(rs.count());
            for i in rs.selection.iter_ones() {
                let mut p = 0u64;
                for (c, &b) in order.iter().zip(&bits) {
                    p = (p << b) | rs.rel.columns[*c].get(i) as u64;
                }
                packed.push(p);
            }
        }
        packed.sort_unstable();
        packed.dedup();
        let mut cols: Vec<IndexColumn> = tables
            .iter()
            .map(|&t| IndexColumn::for_table(table_rows[t], packed.len()))
            .collect();
        for p in packed {
            let mut shift = 0;
            for (c, &b) in bits.iter().enumerate().rev() {
                cols[c].push(((p >> shift) & ((1u64 << b) - 1)) as usize);
                shift += b;
            }
        }
        return finish_union(tables, cols);
    } else {
        let mut set: FxHashSet<Vec<u32>> = FxHashSet::default();
        for rs in &inputs {
            let order = rs.rel.canonical_order();
            for i in rs.selection.iter_ones() {
                set.insert(rs.rel.canonical_tuple(i, &order));
            }
        }
        let mut v: Vec<_> = set.into_iter().collect();
        v.sort_unstable();
        v
    };
    let mut cols: Vec<IndexColumn> = tables
        .iter()
        .map(|&t| IndexColumn::for_table(table_rows[t], tuples.len()))
        .collect();
    for t in &tuples {
        for (c, &x) in t.iter().enumerate() {
            cols[c].push(x as usize);
        }
    }
    finish_union(tables, cols)
}

fn finish_union(tables: Vec<usize>, cols: Vec<IndexColumn>) -> Result<ResultSet> {
    let rel = IndexRelation::new(tables, cols)?;
    let n = rel.len();
    Ok(ResultSet {
        rel: Arc::new(rel),
        selection: Bitmap::ones(n),
    })
}
