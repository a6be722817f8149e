//! Index relations (tuples of row indices) and tagged relations
//! (an index relation plus mutually exclusive tag → bitmap slices).

use std::fmt::Write as _;
use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::predicate::PredTree;
use crate::sql::{BoundQuery, ColRef};
use crate::store::Database;
use crate::tag::Tag;
use crate::value::Value;

/// Row indices into one base table; 16-bit when the table is small enough.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexColumn {
    U16(Vec<u16>),
    U32(Vec<u32>),
}

impl IndexColumn {
    /// An empty column able to address `table_rows` rows.
    pub fn for_table(table_rows: usize, capacity: usize) -> Self {
        if table_rows <= u16::MAX as usize + 1 {
            IndexColumn::U16(Vec::with_capacity(capacity))
        } else {
            IndexColumn::U32(Vec::with_capacity(capacity))
        }
    }

    pub fn identity(n: usize) -> Self {
        if n <= u16::MAX as usize + 1 {
            IndexColumn::U16((0..n).map(|i| i as u16).collect())
        } else {
            IndexColumn::U32((0..n as u32).collect())
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IndexColumn::U16(v) => v.len(),
            IndexColumn::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        match self {
            IndexColumn::U16(v) => v[i] as usize,
            IndexColumn::U32(v) => v[i] as usize,
        }
    }

    pub fn push(&mut self, row: usize) {
        match self {
            IndexColumn::U16(v) => v.push(row as u16),
            IndexColumn::U32(v) => v.push(row as u32),
        }
    }

    /// Appends `self[src[k]]` for every k.
    pub fn gather_into(&self, src: &[u32], out: &mut IndexColumn) {
        match (self, out) {
            (IndexColumn::U16(a), IndexColumn::U16(o)) => {
                o.extend(src.iter().map(|&s| a[s as usize]))
            }
            (IndexColumn::U32(a), IndexColumn::U32(o)) => {
                o.extend(src.iter().map(|&s| a[s as usize]))
            }
            (a, o) => {
                for &s in src {
                    o.push(a.get(s as usize));
                }
            }
        }
    }

    /// Rows referenced by the selected tuples.
    pub fn rows_of(&self, tuples: &Bitmap, table_rows: usize) -> Bitmap {
        let mut rows = Bitmap::zeros(table_rows);
        for i in tuples.iter_ones() {
            rows.set(self.get(i));
        }
        rows
    }

    pub fn max_rows(&self) -> usize {
        match self {
            IndexColumn::U16(_) => u16::MAX as usize + 1,
            IndexColumn::U32(_) => u32::MAX as usize,
        }
    }
}

/// Columns of row indices, one per bound table, all the same length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRelation {
    /// Query table ids, one per column.
    pub tables: Vec<usize>,
    pub columns: Vec<IndexColumn>,
    len: usize,
}

impl IndexRelation {
    pub fn new(tables: Vec<usize>, columns: Vec<IndexColumn>) -> Result<Self> {
        let len = columns.first().map_or(0, IndexColumn::len);
        if tables.len() != columns.len() || columns.iter().any(|c| c.len() != len) {
            return Err(Error::Internal("ragged index relation".into()));
        }
        Ok(Self {
            tables,
            columns,
            len,
        })
    }

    pub fn base(table: usize, rows: usize) -> Self {
        Self {
            tables: vec![table],
            columns: vec![IndexColumn::identity(rows)],
            len: rows,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn arity(&self) -> usize {
        self.tables.len()
    }

    pub fn position(&self, table: usize) -> Option<usize> {
        self.tables.iter().position(|&t| t == table)
    }

    /// Index tuple `i` ordered by query table id.
    pub fn canonical_tuple(&self, i: usize, order: &[usize]) -> Vec<u32> {
        order
            .iter()
            .map(|&c| self.columns[c].get(i) as u32)
            .collect()
    }

    /// Column positions sorted by query table id.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.arity()).collect();
        order.sort_by_key(|&c| self.tables[c]);
        order
    }
}

#[derive(Debug, Clone)]
pub struct TaggedRelation {
    pub rel: Arc<IndexRelation>,
    slices: FxHashMap<Tag, Bitmap>,
}

impl TaggedRelation {
    /// All rows of a table in one slice with the empty tag.
    pub fn from_base_table(table: usize, rows: usize) -> Self {
        let mut slices = FxHashMap::default();
        if rows > 0 {
            slices.insert(Tag::empty(), Bitmap::ones(rows));
        }
        Self {
            rel: Arc::new(IndexRelation::base(table, rows)),
            slices,
        }
    }

    /// Builds a relation from slices, merging equal tags and dropping empty
    /// bitmaps. Overlapping slices are rejected when `check` is set.
    pub fn with_slices(
        rel: Arc<IndexRelation>,
        slices: impl IntoIterator<Item = (Tag, Bitmap)>,
        check: bool,
    ) -> Result<Self> {
        let mut out: FxHashMap<Tag, Bitmap> = FxHashMap::default();
        for (tag, bm) in slices {
            if bm.len() != rel.len() {
                return Err(Error::Internal(format!(
                    "slice bitmap has {} bits for {} tuples",
                    bm.len(),
                    rel.len()
                )));
            }
            if bm.none() {
                continue;
            }
            match out.get_mut(&tag) {
                Some(existing) => {
                    if check && !existing.is_disjoint(&bm) {
                        return Err(Error::SliceOverlap(format!(
                            "{tag:?} merged with an overlapping slice"
                        )));
                    }
                    existing.union_with(&bm);
                }
                None => {
                    out.insert(tag, bm);
                }
            }
        }
        let tr = Self { rel, slices: out };
        if check {
            tr.check_disjoint()?;
        }
        Ok(tr)
    }

    /// Replaces the slice map, keeping the index relation.
    pub fn update_slices(
        &self,
        slices: impl IntoIterator<Item = (Tag, Bitmap)>,
        check: bool,
    ) -> Result<Self> {
        Self::with_slices(self.rel.clone(), slices, check)
    }

    /// Linear disjointness check with an OR accumulator.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut acc = Bitmap::zeros(self.rel.len());
        for (tag, bm) in &self.slices {
            if !acc.is_disjoint(bm) {
                return Err(Error::SliceOverlap(format!(
                    "slice {tag:?} overlaps another slice"
                )));
            }
            acc.union_with(bm);
        }
        Ok(())
    }

    pub fn slices(&self) -> &FxHashMap<Tag, Bitmap> {
        &self.slices
    }

    pub fn slice(&self, tag: &Tag) -> Option<&Bitmap> {
        self.slices.get(tag)
    }

    pub fn into_slices(self) -> FxHashMap<Tag, Bitmap> {
        self.slices
    }

    pub fn tags(&self) -> impl Iterator<Item = &Tag> {
        self.slices.keys()
    }

    pub fn cardinality(&self) -> usize {
        self.slices.values().map(Bitmap::count_ones).sum()
    }

    pub fn slice_cardinality(&self, tag: &Tag) -> usize {
        self.slices.get(tag).map_or(0, Bitmap::count_ones)
    }

    /// Union of the named slices; absent tags contribute nothing.
    pub fn union_of<'a>(&self, tags: impl IntoIterator<Item = &'a Tag>) -> Bitmap {
        let mut acc = Bitmap::zeros(self.rel.len());
        for t in tags {
            if let Some(bm) = self.slices.get(t) {
                acc.union_with(bm);
            }
        }
        acc
    }

    /// Slices ordered by their first tuple, which is deterministic because
    /// slices are disjoint.
    pub fn ordered_slices(&self) -> Vec<(&Tag, &Bitmap)> {
        let mut v: Vec<_> = self.slices.iter().collect();
        v.sort_by_key(|(_, bm)| bm.iter_ones().next());
        v
    }
}

/// Fetches actual values for the selected tuples, one row per tuple, in
/// tuple order.
pub fn reconstruct_values(
    db: &Database,
    query: &BoundQuery,
    rel: &IndexRelation,
    tuples: &Bitmap,
    columns: &[ColRef],
) -> Result<Vec<Vec<Value>>> {
    let n = tuples.count_ones();
    let mut out: Vec<Vec<Value>> = (0..n).map(|_| Vec::with_capacity(columns.len())).collect();
    let mut cache: FxHashMap<ColRef, (Vec<usize>, crate::store::ColumnValues)> =
        FxHashMap::default();
    for col in columns {
        let pos = rel
            .position(col.table)
            .ok_or_else(|| Error::Internal(format!("table {} not in relation", col.table)))?;
        if !cache.contains_key(col) {
            let table_id = query.tables[col.table].table_id;
            let table_rows = db.row_count(table_id);
            let rows = rel.columns[pos].rows_of(tuples, table_rows);
            // rank of each selected row within the selector
            let mut rank = vec![usize::MAX; table_rows];
            for (k, r) in rows.iter_ones().enumerate() {
                rank[r] = k;
            }
            let vals = db.read_column(table_id, col.column, &rows)?;
            cache.insert(*col, (rank, vals));
        }
        let (rank, vals) = &cache[col];
        for (k, i) in tuples.iter_ones().enumerate() {
            out[k].push(vals.value(rank[rel.columns[pos].get(i)]));
        }
    }
    Ok(out)
}

/// Renders a tagged relation as tag lines followed by indented value sets.
pub fn dump(
    db: &Database,
    query: &BoundQuery,
    tree: &PredTree,
    tr: &TaggedRelation,
    columns: &[ColRef],
) -> Result<String> {
    let mut s = String::new();
    for (tag, bm) in tr.ordered_slices() {
        let order = tr.rel.canonical_order();
        let mut idx: Vec<usize> = bm.iter_ones().collect();
        idx.sort_by_cached_key(|&i| tr.rel.canonical_tuple(i, &order));
        let rows = reconstruct_values(db, query, &tr.rel, bm, columns)?;
        let by_tuple: FxHashMap<usize, &Vec<Value>> = bm.iter_ones().zip(rows.iter()).collect();
        let _ = writeln!(s, "{}:", tag.display(tree));
        let body: Vec<String> = idx
            .iter()
            .map(|i| {
                let vals: Vec<String> = by_tuple[i].iter().map(Value::to_sql).collect();
                format!("({})", vals.join(", "))
            })
            .collect();
        let _ = writeln!(s, "    {{{}}}", body.join(", "));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::NodeId;
    use crate::tag::Truth;

    fn rel(n: usize) -> Arc<IndexRelation> {
        Arc::new(IndexRelation::base(0, n))
    }

    #[test]
    fn base_table_has_one_slice() {
        let tr = TaggedRelation::from_base_table(0, 7);
        assert_eq!(tr.slices().len(), 1);
        assert_eq!(tr.cardinality(), 7);
        assert!(TaggedRelation::from_base_table(0, 0).slices().is_empty());
    }

    #[test]
    fn equal_tags_merge() {
        let a = Tag::single(NodeId(0), Truth::T);
        let tr = TaggedRelation::with_slices(
            rel(4),
            [
                (a.clone(), Bitmap::from_indices(4, [0, 1])),
                (a.clone(), Bitmap::from_indices(4, [2])),
            ],
            true,
        )
        .unwrap();
        assert_eq!(tr.slice(&a).unwrap(), &Bitmap::from_indices(4, [0, 1, 2]));
        assert_eq!(tr.slice_cardinality(&Tag::single(NodeId(1), Truth::F)), 0);
    }

    #[test]
    fn overlap_is_rejected() {
        let r = TaggedRelation::with_slices(
            rel(4),
            [
                (
                    Tag::single(NodeId(0), Truth::T),
                    Bitmap::from_indices(4, [0, 1]),
                ),
                (
                    Tag::single(NodeId(0), Truth::F),
                    Bitmap::from_indices(4, [1]),
                ),
            ],
            true,
        );
        assert!(matches!(r, Err(Error::SliceOverlap(_))));
    }

    #[test]
    fn empty_slices_dropped() {
        let tr =
            TaggedRelation::with_slices(rel(3), [(Tag::empty(), Bitmap::zeros(3))], true).unwrap();
        assert_eq!(tr.cardinality(), 0);
        assert!(tr.slices().is_empty());
    }

    #[test]
    fn wide_tables_use_u32() {
        assert!(matches!(IndexColumn::identity(70_000), IndexColumn::U32(_)));
        assert!(matches!(IndexColumn::identity(65_536), IndexColumn::U16(_)));
        assert_eq!(IndexColumn::identity(65_536).get(65_535), 65_535);
    }
}
