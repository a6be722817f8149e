//! Cost factors, cardinality estimates and the benefit score used to order
//! filters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::exec::{evaluate_atom, BuildSide};
use crate::predicate::{NodeId, NodeKind, PredTree};
use crate::sql::{Atom, AtomTest, BoundQuery, ColRef};
use crate::store::{Database, Selectivity};
use crate::tag::{Logic, Tag, Truth};
use crate::tagmap::{FilterTagMap, JoinTagMap};

/// Rows sampled per atom when measuring selectivity.
pub const SAMPLE_ROWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostFactors {
    /// Filter cost relative to join cost.
    pub alpha: f64,
    /// Per-tuple cost of a comparison atom.
    pub compare: f64,
    /// Per-tuple cost of a LIKE or ILIKE atom.
    pub like: f64,
    /// Per-tuple cost of an IS NULL atom.
    pub is_null: f64,
    pub hash_lookup: f64,
    pub hash_build: f64,
    pub index_build: f64,
}

impl Default for CostFactors {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            compare: 1.0,
            like: 10.0,
            is_null: 1.0,
            hash_lookup: 1.0,
            hash_build: 1.0,
            index_build: 1.0,
        }
    }
}

impl CostFactors {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha", self.alpha),
            ("compare", self.compare),
            ("like", self.like),
            ("is_null", self.is_null),
            ("hash_lookup", self.hash_lookup),
            ("hash_build", self.hash_build),
            ("index_build", self.index_build),
        ];
        // alpha may be zero to model free filters
        for (name, v) in all {
            let ok = if name == "alpha" { v >= 0.0 } else { v > 0.0 };
            if !ok || !v.is_finite() {
                return Err(Error::Config(format!(
                    "cost factor `{name}` must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn atom_cost(&self, atom: &Atom) -> f64 {
        match atom.test {
            AtomTest::Cmp { .. } => self.compare,
            AtomTest::Like(_) => self.like,
            AtomTest::IsNull => self.is_null,
        }
    }

    /// F_P of a node: the sum over its distinct atoms.
    pub fn node_cost(&self, tree: &PredTree, node: NodeId) -> f64 {
        let mut seen = vec![false; tree.node_count()];
        let mut stack = vec![node];
        let mut cost = 0.0;
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n.index()], true) {
                continue;
            }
            match tree.kind(n) {
                NodeKind::Atom(a) => cost += self.atom_cost(&tree.atoms()[a]),
                _ => stack.extend_from_slice(tree.children(n)),
            }
        }
        cost
    }
}

/// Fraction of a table's rows on which the atom is true, false or unknown,
/// measured on an evenly strided sample. Results are cached per database.
pub fn measure_selectivity(db: &Database, query: &BoundQuery, atom: &Atom) -> Result<Selectivity> {
    let table_id = query.tables[atom.col.table].table_id;
    // the label without its alias identifies the atom across queries
    let key = atom
        .label
        .split_once('.')
        .map_or(atom.label.as_str(), |(_, r)| r);
    db.cached_selectivity((table_id, format!("{}#{key}", atom.col.column)), || {
        let rows = db.row_count(table_id);
        if rows == 0 {
            return Ok(Selectivity {
                t: 0.0,
                f: 1.0,
                u: 0.0,
            });
        }
        let stride = rows.div_ceil(SAMPLE_ROWS);
        let sel = Bitmap::from_indices(rows, (0..rows).step_by(stride));
        let n = sel.count_ones() as f64;
        let o = evaluate_atom(db, atom, table_id, &sel)?;
        Ok(Selectivity {
            t: o.t.count_ones() as f64 / n,
            f: o.f.count_ones() as f64 / n,
            u: o.u.count_ones() as f64 / n,
        })
    })
}

/// Selectivity of any node from atom selectivities under independence.
pub fn node_selectivity(tree: &PredTree, node: NodeId, atoms: &[Selectivity]) -> Selectivity {
    let s = match tree.kind(node) {
        NodeKind::Atom(a) => return atoms[a],
        NodeKind::Not => {
            let c = node_selectivity(tree, tree.children(node)[0], atoms);
            Selectivity {
                t: c.f,
                f: c.t,
                u: c.u,
            }
        }
        NodeKind::And => {
            let (mut t, mut nf) = (1.0, 1.0);
            for &c in tree.children(node) {
                let c = node_selectivity(tree, c, atoms);
                t *= c.t;
                nf *= 1.0 - c.f;
            }
            Selectivity {
                t,
                f: 1.0 - nf,
                u: 0.0,
            }
        }
        NodeKind::Or => {
            let (mut nt, mut f) = (1.0, 1.0);
            for &c in tree.children(node) {
                let c = node_selectivity(tree, c, atoms);
                nt *= 1.0 - c.t;
                f *= c.f;
            }
            Selectivity {
                t: 1.0 - nt,
                f,
                u: 0.0,
            }
        }
    };
    Selectivity {
        u: (1.0 - s.t - s.f).max(0.0),
        ..s
    }
}

/// Estimated slice cardinalities of a relation plus distinct counts of its
/// join-key columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Estimate {
    pub slices: Vec<(Tag, f64)>,
    pub distinct: BTreeMap<ColRef, f64>,
}

impl Estimate {
    pub fn base(rows: f64, distinct: BTreeMap<ColRef, f64>) -> Self {
        let mut e = Self {
            slices: vec![(Tag::empty(), rows)],
            distinct,
        };
        e.cap_distinct();
        e
    }

    pub fn total(&self) -> f64 {
        self.slices.iter().map(|s| s.1).sum()
    }

    pub fn get(&self, tag: &Tag) -> Option<f64> {
        self.slices.iter().find(|s| &s.0 == tag).map(|s| s.1)
    }

    pub fn tags(&self) -> Vec<Tag> {
        self.slices.iter().map(|s| s.0.clone()).collect()
    }

    pub fn distinct_of(&self, col: ColRef) -> f64 {
        self.distinct
            .get(&col)
            .copied()
            .unwrap_or_else(|| self.total())
            .max(1.0)
    }

    fn add(&mut self, tag: Tag, card: f64) {
        match self.slices.iter_mut().find(|s| s.0 == tag) {
            Some(s) => s.1 += card,
            None => self.slices.push((tag, card)),
        }
    }

    fn cap_distinct(&mut self) {
        let total = self.total();
        for d in self.distinct.values_mut() {
            *d = d.min(total);
        }
    }
}

/// `α · F_P · Σ |R[I]|` over the in-tags of the map.
pub fn filter_cost(f: &CostFactors, fp: f64, input: &Estimate, map: &FilterTagMap) -> Result<f64> {
    let mut sum = 0.0;
    for (tag, _) in &map.entries {
        sum += input
            .get(tag)
            .ok_or_else(|| Error::Plan(format!("no estimate for filter in-tag {tag:?}")))?;
    }
    Ok(f.alpha * fp * sum)
}

/// Splits each matched slice by the node's selectivity.
pub fn estimate_filter(
    input: &Estimate,
    map: &FilterTagMap,
    sel: Selectivity,
    logic: Logic,
) -> Estimate {
    let (t, f, u) = match logic {
        Logic::TwoValued => (sel.t, sel.f + sel.u, 0.0),
        Logic::ThreeValued => (sel.t, sel.f, sel.u),
    };
    let mut out = Estimate {
        slices: Vec::new(),
        distinct: input.distinct.clone(),
    };
    for (tag, card) in &input.slices {
        match map.get(tag) {
            None => out.add(tag.clone(), *card),
            Some(o) => {
                for (v, frac) in [(Truth::T, t), (Truth::F, f), (Truth::U, u)] {
                    if let Some(ot) = o.get(v) {
                        out.add(ot.clone(), card * frac);
                    }
                }
            }
        }
    }
    out.cap_distinct();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinCostInput {
    pub left: f64,
    pub left_unique: f64,
    pub right: f64,
    pub right_unique: f64,
    pub out: f64,
}

/// Hash join cost with the cheaper build side; ties build on the left.
pub fn join_cost(f: &CostFactors, j: &JoinCostInput) -> (f64, BuildSide) {
    let left = f.hash_lookup * j.left
        + f.hash_build * j.left_unique
        + f.hash_lookup * j.right
        + f.index_build * j.out;
    let right = f.hash_lookup * j.right
        + f.hash_build * j.right_unique
        + f.hash_lookup * j.left
        + f.index_build * j.out;
    if right < left {
        (right, BuildSide::Right)
    } else {
        (left, BuildSide::Left)
    }
}

/// `|L|·|R| / max(d_L, d_R)`.
pub fn join_slice_estimate(l: f64, r: f64, dl: f64, dr: f64) -> f64 {
    let d = dl.max(dr).max(1.0);
    l * r / d
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinEstimate {
    pub output: Estimate,
    pub input: JoinCostInput,
    pub cost: f64,
    pub build: BuildSide,
}

/// Output slices and cost of a join; `keys` pairs a left column with a
/// right column.
pub fn estimate_join(
    f: &CostFactors,
    left: &Estimate,
    right: &Estimate,
    keys: &[(ColRef, ColRef)],
    map: &JoinTagMap,
) -> JoinEstimate {
    let d = |e: &Estimate, c: ColRef| e.distinct_of(c);
    let (mut dl, mut dr) = (1.0f64, 1.0f64);
    let mut dmax = 1.0f64;
    for &(lc, rc) in keys {
        let (a, b) = (d(left, lc), d(right, rc));
        dl = dl.max(a);
        dr = dr.max(b);
        dmax = dmax.max(a.max(b));
    }
    let mut out = Estimate::default();
    let mut lpart: Vec<&Tag> = Vec::new();
    let mut rpart: Vec<&Tag> = Vec::new();
    for (l, r, o) in &map.entries {
        let (Some(lc), Some(rc)) = (left.get(l), right.get(r)) else {
            continue;
        };
        if !lpart.contains(&l) {
            lpart.push(l);
        }
        if !rpart.contains(&r) {
            rpart.push(r);
        }
        out.add(o.clone(), lc * rc / dmax);
    }
    let lsum: f64 = lpart.iter().filter_map(|t| left.get(t)).sum();
    let rsum: f64 = rpart.iter().filter_map(|t| right.get(t)).sum();
    out.distinct = left.distinct.clone();
    out.distinct
        .extend(right.distinct.iter().map(|(k, v)| (*k, *v)));
    for &(lc, rc) in keys {
        let m = d(left, lc).min(d(right, rc));
        out.distinct.insert(lc, m);
        out.distinct.insert(rc, m);
    }
    out.cap_distinct();
    let input = JoinCostInput {
        left: lsum,
        left_unique: lsum.min(dl),
        right: rsum,
        right_unique: rsum.min(dr),
        out: out.total(),
    };
    let (cost, build) = join_cost(f, &input);
    JoinEstimate {
        output: out,
        input,
        cost,
        build,
    }
}

/// Benefit score: how much applying `to_score` first helps the unapplied filters.
pub fn calc_benefit_score(
    tree: &PredTree,
    to_score: NodeId,
    unapplied: &[NodeId],
    sel: f64,
) -> f64 {
    let parents = tree.parents(to_score);
    let mut benefit = 0.0;
    for &u in unapplied {
        let mut is_and = true;
        let mut is_or = true;
        for path in tree.ancestor_paths(u) {
            if parents.iter().all(|p| !path.contains(p) || tree.is_or(*p)) {
                is_and = false;
            }
            if parents.iter().all(|p| !path.contains(p) || tree.is_and(*p)) {
                is_or = false;
            }
        }
        if is_and {
            benefit += 1.0 - sel;
        }
        if is_or {
            benefit += sel;
        }
    }
    benefit
}

/// Repeatedly picks the filter with the highest benefit per unit cost with
/// respect to the remaining ones. Ties go to the cheaper filter, then the
/// lower selectivity, then the lower node id.
pub fn benefiting_order(
    tree: &PredTree,
    filters: &[NodeId],
    sel: impl Fn(NodeId) -> f64,
    cost: impl Fn(NodeId) -> f64,
) -> Vec<NodeId> {
    let mut rest: Vec<NodeId> = filters.to_vec();
    let mut order = Vec::with_capacity(rest.len());
    while !rest.is_empty() {
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for (i, &n) in rest.iter().enumerate() {
            let others: Vec<NodeId> = rest.iter().copied().filter(|&m| m != n).collect();
            let (s, c) = (sel(n), cost(n));
            let score = calc_benefit_score(tree, n, &others, s) / c;
            let better = match best {
                None => true,
                Some((bi, bs, bc, bsel)) => {
                    score > bs
                        || (score == bs
                            && (c < bc || (c == bc && (s < bsel || (s == bsel && n < rest[bi])))))
                }
            };
            if better {
                best = Some((i, score, c, s));
            }
        }
        order.push(rest.remove(best.unwrap().0));
    }
    order
}
