//! Plan trees, their annotation with tag maps and estimates, and the
//! tagged and traditional planners.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{
    benefiting_order, estimate_filter, estimate_join, filter_cost, measure_selectivity,
    node_selectivity, CostFactors, Estimate,
};
use crate::error::{Error, Result};
use crate::exec::BuildSide;
use crate::predicate::{NodeId, PredTree};
use crate::sql::{BoundQuery, ColRef};
use crate::store::{Database, Selectivity};
use crate::tag::{Logic, Tag};
use crate::tagmap::{FilterTagMap, JoinTagMap, MapMode, TagMapBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Planner {
    TPushdown,
    TPullup,
    TIterPush,
    TPushConj,
    TCombined,
    BDisj,
    BPushConj,
    NaiveOracle,
}

impl Planner {
    pub const ALL: [Planner; 8] = [
        Planner::TPushdown,
        Planner::TPullup,
        Planner::TIterPush,
        Planner::TPushConj,
        Planner::TCombined,
        Planner::BDisj,
        Planner::BPushConj,
        Planner::NaiveOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Planner::TPushdown => "tpushdown",
            Planner::TPullup => "tpullup",
            Planner::TIterPush => "titerpush",
            Planner::TPushConj => "tpushconj",
            Planner::TCombined => "tcombined",
            Planner::BDisj => "bdisj",
            Planner::BPushConj => "bpushconj",
            Planner::NaiveOracle => "naive-oracle",
        }
    }

    pub fn is_tagged(self) -> bool {
        !matches!(
            self,
            Planner::BDisj | Planner::BPushConj | Planner::NaiveOracle
        )
    }
}

impl fmt::Display for Planner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Planner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let l = s.to_ascii_lowercase();
        Planner::ALL
            .into_iter()
            .find(|p| p.name() == l || (l == "naive" && *p == Planner::NaiveOracle))
            .ok_or_else(|| {
                let names: Vec<_> = Planner::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!(
                    "unknown planner `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Plan shape without tag maps or estimates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Skel {
    Scan(usize),
    Filter(NodeId, Box<Skel>),
    /// Index into `BoundQuery::joins`, left input, right input.
    Join(usize, Box<Skel>, Box<Skel>),
    Project(Box<Skel>),
    Union(Vec<Skel>),
}

impl Skel {
    fn filter(node: NodeId, child: Skel) -> Skel {
        Skel::Filter(node, Box::new(child))
    }

    /// Filter nodes in the tree, bottom-up.
    pub fn filters(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.walk(&mut |s| {
            if let Skel::Filter(n, _) = s {
                out.push(*n);
            }
        });
        out
    }

    fn walk(&self, f: &mut impl FnMut(&Skel)) {
        match self {
            Skel::Scan(_) => {}
            Skel::Filter(_, c) | Skel::Project(c) => c.walk(f),
            Skel::Join(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Skel::Union(cs) => cs.iter().for_each(|c| c.walk(f)),
        }
        f(self);
    }

    /// Moves filter `node` above its parent. `None` when the parent is a
    /// projection, a union or absent.
    pub fn pull_up(&self, node: NodeId) -> Option<Skel> {
        let is_target = |s: &Skel| matches!(s, Skel::Filter(n, _) if *n == node);
        match self {
            Skel::Scan(_) => None,
            Skel::Filter(p, c) => {
                if let Skel::Filter(n, gc) = c.as_ref() {
                    if *n == node {
                        return Some(Skel::filter(node, Skel::filter(*p, (**gc).clone())));
                    }
                }
                c.pull_up(node).map(|c| Skel::filter(*p, c))
            }
            Skel::Join(e, l, r) => {
                if let Skel::Filter(_, gc) = l.as_ref() {
                    if is_target(l) {
                        return Some(Skel::filter(node, Skel::Join(*e, gc.clone(), r.clone())));
                    }
                }
                if let Skel::Filter(_, gc) = r.as_ref() {
                    if is_target(r) {
                        return Some(Skel::filter(node, Skel::Join(*e, l.clone(), gc.clone())));
                    }
                }
                if let Some(nl) = l.pull_up(node) {
                    return Some(Skel::Join(*e, Box::new(nl), r.clone()));
                }
                r.pull_up(node)
                    .map(|nr| Skel::Join(*e, l.clone(), Box::new(nr)))
            }
            Skel::Project(c) => {
                if is_target(c) {
                    return None;
                }
                c.pull_up(node).map(|c| Skel::Project(Box::new(c)))
            }
            Skel::Union(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    if is_target(c) {
                        return None;
                    }
                    if let Some(nc) = c.pull_up(node) {
                        let mut v = cs.clone();
                        v[i] = nc;
                        return Some(Skel::Union(v));
                    }
                }
                None
            }
        }
    }

    /// Removes filter `node`, splicing its child into place.
    pub fn remove_filter(&self, node: NodeId) -> Skel {
        match self {
            Skel::Scan(t) => Skel::Scan(*t),
            Skel::Filter(n, c) if *n == node => c.remove_filter(node),
            Skel::Filter(n, c) => Skel::filter(*n, c.remove_filter(node)),
            Skel::Join(e, l, r) => Skel::Join(
                *e,
                Box::new(l.remove_filter(node)),
                Box::new(r.remove_filter(node)),
            ),
            Skel::Project(c) => Skel::Project(Box::new(c.remove_filter(node))),
            Skel::Union(cs) => Skel::Union(cs.iter().map(|c| c.remove_filter(node)).collect()),
        }
    }

    /// Places filter `node` on top of the filter chain above `Scan(table)`.
    pub fn push_to_table(&self, node: NodeId, table: usize) -> Skel {
        if self.chain_table() == Some(table) {
            return Skel::filter(node, self.clone());
        }
        match self {
            Skel::Scan(t) => Skel::Scan(*t),
            Skel::Filter(n, c) => Skel::filter(*n, c.push_to_table(node, table)),
            Skel::Join(e, l, r) => Skel::Join(
                *e,
                Box::new(l.push_to_table(node, table)),
                Box::new(r.push_to_table(node, table)),
            ),
            Skel::Project(c) => Skel::Project(Box::new(c.push_to_table(node, table))),
            Skel::Union(cs) => {
                Skel::Union(cs.iter().map(|c| c.push_to_table(node, table)).collect())
            }
        }
    }

    /// The table under a chain of filters ending in a scan.
    fn chain_table(&self) -> Option<usize> {
        match self {
            Skel::Scan(t) => Some(*t),
            Skel::Filter(_, c) => c.chain_table(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOp {
    Scan {
        table: usize,
    },
    Filter {
        node: NodeId,
        map: FilterTagMap,
    },
    Join {
        edge: usize,
        map: JoinTagMap,
        build: BuildSide,
    },
    /// Keeps the slices with these tags.
    Project {
        tags: Vec<Tag>,
    },
    Union,
}

/// An annotated plan node.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub op: PlanOp,
    pub children: Vec<PlanNode>,
    pub est: Estimate,
    /// This operator's estimated cost.
    pub cost: f64,
    /// Estimated cost of the whole subtree.
    pub subtree_cost: f64,
    /// Bitmask of query tables below this node.
    pub tables: u64,
}

impl PlanNode {
    pub fn skel(&self) -> Skel {
        match &self.op {
            PlanOp::Scan { table } => Skel::Scan(*table),
            PlanOp::Filter { node, .. } => Skel::filter(*node, self.children[0].skel()),
            PlanOp::Join { edge, .. } => Skel::Join(
                *edge,
                Box::new(self.children[0].skel()),
                Box::new(self.children[1].skel()),
            ),
            PlanOp::Project { .. } => Skel::Project(Box::new(self.children[0].skel())),
            PlanOp::Union => Skel::Union(self.children.iter().map(PlanNode::skel).collect()),
        }
    }

    pub fn visit<'s>(&'s self, f: &mut impl FnMut(&'s PlanNode)) {
        for c in &self.children {
            c.visit(f);
        }
        f(self);
    }
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub planner: Planner,
    pub tagged: bool,
    pub root: PlanNode,
}

impl Plan {
    /// Estimated cost of the whole plan.
    #[allow(clippy::misnamed_getters)]
    pub fn cost(&self) -> f64 {
        self.root.subtree_cost
    }

    pub fn skel(&self) -> Skel {
        self.root.skel()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    pub factors: CostFactors,
    pub logic: Logic,
    pub mode: MapMode,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            factors: CostFactors::default(),
            logic: Logic::TwoValued,
            mode: MapMode::Precept,
        }
    }
}

/// Planning state for one query.
pub struct PlanContext<'a> {
    pub db: &'a Database,
    pub query: &'a BoundQuery,
    pub tree: Option<&'a PredTree>,
    pub opts: PlanOptions,
    builder: Option<TagMapBuilder<'a>>,
    atom_sel: Vec<Selectivity>,
}

impl<'a> PlanContext<'a> {
    pub fn new(
        db: &'a Database,
        query: &'a BoundQuery,
        tree: Option<&'a PredTree>,
        opts: PlanOptions,
    ) -> Result<Self> {
        opts.factors.validate()?;
        let atom_sel = match tree {
            Some(t) => t
                .atoms()
                .iter()
                .map(|a| measure_selectivity(db, query, a))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            db,
            query,
            tree,
            opts,
            builder: tree.map(|t| TagMapBuilder::new(t, opts.mode, opts.logic)),
            atom_sel,
        })
    }

    pub fn selectivity(&self, node: NodeId) -> Selectivity {
        node_selectivity(
            self.tree.expect("selectivity needs a predicate"),
            node,
            &self.atom_sel,
        )
    }

    fn fp(&self, node: NodeId) -> f64 {
        self.opts.factors.node_cost(self.tree.unwrap(), node)
    }

    fn base_estimate(&self, table: usize) -> Estimate {
        let tid = self.query.tables[table].table_id;
        let meta = self.db.catalog().table(tid);
        let mut distinct = std::collections::BTreeMap::new();
        for j in &self.query.joins {
            for &(lc, rc) in &j.keys {
                for (t, c) in [(j.left, lc), (j.right, rc)] {
                    if t == table {
                        distinct.insert(
                            ColRef {
                                table: t,
                                column: c,
                            },
                            meta.stats[c].distinct as f64,
                        );
                    }
                }
            }
        }
        Estimate::base(meta.row_count as f64, distinct)
    }

    pub fn scan_node(&self, table: usize) -> PlanNode {
        PlanNode {
            op: PlanOp::Scan { table },
            children: Vec::new(),
            est: self.base_estimate(table),
            cost: 0.0,
            subtree_cost: 0.0,
            tables: 1 << table,
        }
    }

    pub fn filter_node(&self, child: PlanNode, node: NodeId, tagged: bool) -> Result<PlanNode> {
        let tree = self
            .tree
            .ok_or_else(|| Error::Plan("filter without a predicate".into()))?;
        let need = tree.tables(node);
        if need & !child.tables != 0 {
            return Err(Error::Plan(format!(
                "filter `{}` placed below the tables it reads",
                tree.label(node)
            )));
        }
        let map = if tagged {
            self.builder
                .as_ref()
                .unwrap()
                .filter_map(&child.est.tags(), node)?
        } else {
            FilterTagMap::keep_true()
        };
        let est = estimate_filter(&child.est, &map, self.selectivity(node), self.opts.logic);
        let cost = filter_cost(&self.opts.factors, self.fp(node), &child.est, &map)?;
        Ok(PlanNode {
            subtree_cost: child.subtree_cost + cost,
            tables: child.tables,
            op: PlanOp::Filter { node, map },
            children: vec![child],
            est,
            cost,
        })
    }

    /// Key column pairs of `edge` oriented as (left input, right input).
    fn oriented_keys(&self, edge: usize, left_tables: u64) -> Vec<(ColRef, ColRef)> {
        let j = &self.query.joins[edge];
        j.keys
            .iter()
            .map(|&(lc, rc)| {
                let a = ColRef {
                    table: j.left,
                    column: lc,
                };
                let b = ColRef {
                    table: j.right,
                    column: rc,
                };
                if left_tables & (1 << j.left) != 0 {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect()
    }

    pub fn join_node(
        &self,
        edge: usize,
        left: PlanNode,
        right: PlanNode,
        tagged: bool,
    ) -> Result<PlanNode> {
        let j = &self.query.joins[edge];
        let (a, b) = (1u64 << j.left, 1u64 << j.right);
        let ok = (left.tables & a != 0 && right.tables & b != 0)
            || (left.tables & b != 0 && right.tables & a != 0);
        if !ok || left.tables & right.tables != 0 {
            return Err(Error::Plan(format!(
                "join {edge} does not connect its inputs"
            )));
        }
        let map = match (&self.builder, tagged) {
            (Some(b), true) => b.join_map(&left.est.tags(), &right.est.tags())?,
            _ => JoinTagMap::single(),
        };
        let keys = self.oriented_keys(edge, left.tables);
        let je = estimate_join(&self.opts.factors, &left.est, &right.est, &keys, &map);
        Ok(PlanNode {
            subtree_cost: left.subtree_cost + right.subtree_cost + je.cost,
            tables: left.tables | right.tables,
            op: PlanOp::Join {
                edge,
                map,
                build: je.build,
            },
            children: vec![left, right],
            est: je.output,
            cost: je.cost,
        })
    }

    pub fn project_node(&self, child: PlanNode, tagged: bool) -> Result<PlanNode> {
        let tags = match (&self.builder, tagged) {
            (Some(b), true) => b.projection_tags(&child.est.tags())?,
            _ => vec![Tag::empty()],
        };
        let est = Estimate {
            slices: child
                .est
                .slices
                .iter()
                .filter(|s| tags.contains(&s.0))
                .cloned()
                .collect(),
            distinct: child.est.distinct.clone(),
        };
        Ok(PlanNode {
            subtree_cost: child.subtree_cost,
            tables: child.tables,
            op: PlanOp::Project { tags },
            children: vec![child],
            est,
            cost: 0.0,
        })
    }

    pub fn union_node(&self, children: Vec<PlanNode>) -> PlanNode {
        let total: f64 = children.iter().map(|c| c.est.total()).sum();
        let cost = self.opts.factors.hash_build * total;
        PlanNode {
            op: PlanOp::Union,
            subtree_cost: children.iter().map(|c| c.subtree_cost).sum::<f64>() + cost,
            tables: children.iter().fold(0, |m, c| m | c.tables),
            est: Estimate {
                slices: vec![(Tag::empty(), total)],
                distinct: Default::default(),
            },
            children,
            cost,
        }
    }

    /// Rebuilds tag maps and estimates for a plan shape.
    pub fn annotate(&self, skel: &Skel, tagged: bool) -> Result<PlanNode> {
        match skel {
            Skel::Scan(t) => Ok(self.scan_node(*t)),
            Skel::Filter(n, c) => self.filter_node(self.annotate(c, tagged)?, *n, tagged),
            Skel::Join(e, l, r) => self.join_node(
                *e,
                self.annotate(l, tagged)?,
                self.annotate(r, tagged)?,
                tagged,
            ),
            Skel::Project(c) => self.project_node(self.annotate(c, tagged)?, tagged),
            Skel::Union(cs) => Ok(self.union_node(
                cs.iter()
                    .map(|c| self.annotate(c, tagged))
                    .collect::<Result<_>>()?,
            )),
        }
    }

    /// Joins the components greedily by smallest estimated output; ties go
    /// to the alphabetically first alias pair.
    pub fn greedy_joins(&self, mut comps: Vec<PlanNode>, tagged: bool) -> Result<PlanNode> {
        while comps.len() > 1 {
            #[allow(clippy::type_complexity)]
            let mut best: Option<(f64, (String, String), PlanNode, usize, usize)> = None;
            for (e, j) in self.query.joins.iter().enumerate() {
                let find = |t: usize| comps.iter().position(|c| c.tables & (1 << t) != 0);
                let (Some(li), Some(ri)) = (find(j.left), find(j.right)) else {
                    return Err(Error::Plan(format!("join {e} references a missing table")));
                };
                if li == ri {
                    continue;
                }
                let node = self.join_node(e, comps[li].clone(), comps[ri].clone(), tagged)?;
                let card = node.est.total();
                let key = (
                    self.query.tables[j.left].alias.clone(),
                    self.query.tables[j.right].alias.clone(),
                );
                let better = match &best {
                    None => true,
                    Some((bc, bk, ..)) => card < *bc || (card == *bc && key < *bk),
                };
                if better {
                    best = Some((card, key, node, li, ri));
                }
            }
            let Some((_, _, node, li, ri)) = best else {
                return Err(Error::Unsupported {
                    pos: 0,
                    what: "cross products between unconnected tables".into(),
                });
            };
            let (hi, lo) = (li.max(ri), li.min(ri));
            comps.remove(hi);
            comps.remove(lo);
            comps.insert(lo, node);
        }
        comps
            .pop()
            .ok_or_else(|| Error::InvalidQuery("query has no tables".into()))
    }

    fn atoms_of_table(&self, table: usize) -> Vec<NodeId> {
        let tree = self.tree.unwrap();
        tree.atom_nodes()
            .iter()
            .copied()
            .filter(|&n| tree.atom(n).unwrap().col.table == table)
            .collect()
    }

    fn order(&self, filters: &[NodeId]) -> Vec<NodeId> {
        benefiting_order(
            self.tree.unwrap(),
            filters,
            |n| self.selectivity(n).t,
            |n| self.fp(n),
        )
    }

    /// Benefiting order over every atom of the predicate.
    pub fn global_order(&self) -> Vec<NodeId> {
        self.tree
            .map_or_else(Vec::new, |t| self.order(t.atom_nodes()))
    }

    fn by_selectivity(&self, mut nodes: Vec<NodeId>) -> Vec<NodeId> {
        nodes.sort_by(|a, b| {
            self.selectivity(*a)
                .t
                .total_cmp(&self.selectivity(*b).t)
                .then(a.cmp(b))
        });
        nodes
    }

    fn single_table(&self, node: NodeId) -> Option<usize> {
        let m = self.tree.unwrap().tables(node);
        (m.count_ones() == 1).then(|| m.trailing_zeros() as usize)
    }

    fn finish(&self, planner: Planner, tagged: bool, body: PlanNode) -> Result<Plan> {
        Ok(Plan {
            planner,
            tagged,
            root: self.project_node(body, tagged)?,
        })
    }

    /// Scans with the given per-table filter chains (bottom first), joined
    /// greedily, then `post` filters applied in order.
    fn pushed_plan(
        &self,
        per_table: &[Vec<NodeId>],
        post: &[NodeId],
        tagged: bool,
    ) -> Result<PlanNode> {
        let mut comps = Vec::new();
        for (t, chain) in per_table.iter().enumerate() {
            let mut n = self.scan_node(t);
            for &f in chain {
                n = self.filter_node(n, f, tagged)?;
            }
            comps.push(n);
        }
        let mut root = self.greedy_joins(comps, tagged)?;
        for &f in post {
            root = self.filter_node(root, f, tagged)?;
        }
        Ok(root)
    }

    fn no_predicate(&self, planner: Planner) -> Result<Plan> {
        let tagged = planner.is_tagged();
        let body = self.pushed_plan(&vec![Vec::new(); self.query.tables.len()], &[], tagged)?;
        self.finish(planner, tagged, body)
    }

    pub fn plan(&self, planner: Planner) -> Result<Plan> {
        if self.tree.is_none() {
            return self.no_predicate(planner);
        }
        match planner {
            Planner::TPushdown => self.tpushdown(),
            Planner::TPullup => self.tpullup(),
            Planner::TIterPush => self.titerpush(),
            Planner::TPushConj => self.tpushconj(),
            Planner::TCombined => self.tcombined(),
            Planner::BDisj => self.bdisj(),
            Planner::BPushConj => self.bpushconj(),
            Planner::NaiveOracle => self.naive_oracle(),
        }
    }

    pub fn tpushdown(&self) -> Result<Plan> {
        let per_table: Vec<Vec<NodeId>> = (0..self.query.tables.len())
            .map(|t| self.order(&self.atoms_of_table(t)))
            .collect();
        let body = self.pushed_plan(&per_table, &[], true)?;
        self.finish(Planner::TPushdown, true, body)
    }

    pub fn tpullup(&self) -> Result<Plan> {
        let mut best = self.tpushdown()?;
        let mut order = self.global_order();
        order.reverse();
        for f in order {
            let mut skel = best.skel();
            while let Some(next) = skel.pull_up(f) {
                skel = next;
                let root = self.annotate(&skel, true)?;
                if root.subtree_cost < best.cost() {
                    best = Plan {
                        planner: Planner::TPullup,
                        tagged: true,
                        root,
                    };
                }
            }
        }
        best.planner = Planner::TPullup;
        Ok(best)
    }

    /// Joins first, then every atom filter in benefiting order.
    fn joins_then_filters(&self, tagged: bool) -> Result<PlanNode> {
        let order = self.global_order();
        self.pushed_plan(&vec![Vec::new(); self.query.tables.len()], &order, tagged)
    }

    pub fn titerpush(&self) -> Result<Plan> {
        let mut best = self.finish(Planner::TIterPush, true, self.joins_then_filters(true)?)?;
        let tree = self.tree.unwrap();
        for f in self.global_order() {
            let table = tree.atom(f).unwrap().col.table;
            let skel = best.skel().remove_filter(f).push_to_table(f, table);
            let root = self.annotate(&skel, true)?;
            if root.subtree_cost < best.cost() {
                best.root = root;
            }
        }
        Ok(best)
    }

    /// Root AND children split into per-table pushable ones and the rest.
    fn conjuncts(
        &self,
        ordered_push: impl Fn(&[NodeId]) -> Vec<NodeId>,
    ) -> Option<(Vec<Vec<NodeId>>, Vec<NodeId>)> {
        let tree = self.tree.unwrap();
        let root = tree.root();
        if !tree.is_and(root) {
            return None;
        }
        let mut per_table = vec![Vec::new(); self.query.tables.len()];
        let mut rest = Vec::new();
        for &c in tree.children(root) {
            match self.single_table(c) {
                Some(t) => per_table[t].push(c),
                None => rest.push(c),
            }
        }
        let per_table = per_table.iter().map(|v| ordered_push(v)).collect();
        Some((per_table, self.by_selectivity(rest)))
    }

    pub fn tpushconj(&self) -> Result<Plan> {
        let body = match self.conjuncts(|v| self.order(v)) {
            Some((per_table, post)) => self.pushed_plan(&per_table, &post, true)?,
            None => self.joins_then_filters(true)?,
        };
        self.finish(Planner::TPushConj, true, body)
    }

    pub fn tcombined(&self) -> Result<Plan> {
        let mut best: Option<Plan> = None;
        for p in [
            self.tpushdown()?,
            self.tpullup()?,
            self.titerpush()?,
            self.tpushconj()?,
        ] {
            if best.as_ref().is_none_or(|b| p.cost() < b.cost()) {
                best = Some(p);
            }
        }
        let mut best = best.unwrap();
        best.planner = Planner::TCombined;
        Ok(best)
    }

    pub fn bdisj(&self) -> Result<Plan> {
        let tree = self.tree.unwrap();
        let root = tree.root();
        let clauses: Vec<NodeId> = if tree.is_or(root) {
            tree.children(root).to_vec()
        } else {
            vec![root]
        };
        let mut subs = Vec::new();
        for c in clauses {
            let conj: Vec<NodeId> = if tree.is_and(c) {
                tree.children(c).to_vec()
            } else {
                vec![c]
            };
            let mut per_table = vec![Vec::new(); self.query.tables.len()];
            let mut rest = Vec::new();
            for x in conj {
                match self.single_table(x) {
                    Some(t) => per_table[t].push(x),
                    None => rest.push(x),
                }
            }
            let per_table: Vec<Vec<NodeId>> = per_table
                .into_iter()
                .map(|v| self.by_selectivity(v))
                .collect();
            let body = self.pushed_plan(&per_table, &self.by_selectivity(rest), false)?;
            subs.push(self.project_node(body, false)?);
        }
        Ok(Plan {
            planner: Planner::BDisj,
            tagged: false,
            root: self.union_node(subs),
        })
    }

    pub fn bpushconj(&self) -> Result<Plan> {
        let body = match self.conjuncts(|v| self.by_selectivity(v.to_vec())) {
            Some((per_table, post)) => self.pushed_plan(&per_table, &post, false)?,
            None => self.naive_body()?,
        };
        self.finish(Planner::BPushConj, false, body)
    }

    fn naive_body(&self) -> Result<PlanNode> {
        let root = self.tree.unwrap().root();
        self.pushed_plan(&vec![Vec::new(); self.query.tables.len()], &[root], false)
    }

    pub fn naive_oracle(&self) -> Result<Plan> {
        let body = self.naive_body()?;
        self.finish(Planner::NaiveOracle, false, body)
    }

    fn op_label(&self, node: &PlanNode) -> String {
        let q = self.query;
        match &node.op {
            PlanOp::Scan { table } => {
                let t = &q.tables[*table];
                if t.alias == t.name {
                    format!("Table({})", t.name)
                } else {
                    format!("Table({} as {})", t.name, t.alias)
                }
            }
            PlanOp::Filter { node: n, .. } => format!("Filter({})", self.tree.unwrap().label(*n)),
            PlanOp::Join { edge, .. } => {
                let j = &q.joins[*edge];
                let col = |t: usize, c: usize| {
                    let tid = q.tables[t].table_id;
                    format!(
                        "{}.{}",
                        q.tables[t].alias,
                        self.db.catalog().table(tid).schema.columns[c].name
                    )
                };
                let keys: Vec<String> = j
                    .keys
                    .iter()
                    .map(|&(l, r)| format!("{} = {}", col(j.left, l), col(j.right, r)))
                    .collect();
                format!("Join({})", keys.join(" AND "))
            }
            PlanOp::Project { .. } => {
                if q.projection_names.is_empty() {
                    "Project()".into()
                } else {
                    format!("Project({})", q.projection_names.join(", "))
                }
            }
            PlanOp::Union => "Union".into(),
        }
    }

    /// Indented operator tree. `verbose` adds estimates, costs and tag maps.
    pub fn explain(&self, plan: &Plan, verbose: bool) -> String {
        let mut s = String::new();
        if verbose {
            let _ = writeln!(
                s,
                "-- {} ({}), estimated cost {:.1}",
                plan.planner,
                if plan.tagged { "tagged" } else { "traditional" },
                plan.cost()
            );
        }
        self.explain_node(&plan.root, 0, verbose, &mut s);
        s
    }

    fn explain_node(&self, node: &PlanNode, depth: usize, verbose: bool, s: &mut String) {
        let pad = "  ".repeat(depth);
        let _ = write!(s, "{pad}{}", self.op_label(node));
        if verbose {
            let _ = write!(s, "  [rows {:.1}, cost {:.1}", node.est.total(), node.cost);
            if let PlanOp::Join { build, .. } = &node.op {
                let _ = write!(
                    s,
                    ", build {}",
                    if *build == BuildSide::Left {
                        "left"
                    } else {
                        "right"
                    }
                );
            }
            s.push(']');
        }
        s.push('\n');
        if verbose {
            if let Some(tree) = self.tree {
                let map = match &node.op {
                    PlanOp::Filter { map, .. } => Some(map.display(tree).to_string()),
                    PlanOp::Join { map, .. } => Some(map.display(tree).to_string()),
                    PlanOp::Project { tags } => Some(
                        tags.iter()
                            .map(|t| t.display(tree).to_string())
                            .collect::<Vec<_>>()
                            .join(", "),
                    ),
                    _ => None,
                };
                if let Some(m) = map {
                    let _ = writeln!(
                        s,
                        "{pad}  : {}",
                        if m.is_empty() { "(none)".into() } else { m }
                    );
                }
            }
        }
        for c in &node.children {
            self.explain_node(c, depth + 1, verbose, s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{execute, prepare, LogicMode};
    use crate::fixtures::{movie_db, MOVIE_QUERY};

    #[test]
    fn pushdown_matches_figure_shape() {
        let dir = tempfile::tempdir().unwrap();
        let db = movie_db(dir.path()).unwrap();
        let prep = prepare(&db, MOVIE_QUERY, LogicMode::TwoValued).unwrap();
        let ctx =
            PlanContext::new(&db, &prep.query, prep.tree.as_ref(), PlanOptions::default()).unwrap();
        let plan = ctx.tpushdown().unwrap();
        let text = ctx.explain(&plan, false);
        let body: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(
            body,
            vec![
                "  Join(t.id = mi_idx.movie_id)",
                "    Filter(t.year > 1980)",
                "      Filter(t.year > 2000)",
                "        Table(title as t)",
                "    Filter(mi_idx.score > '7.0')",
                "      Filter(mi_idx.score > '8.0')",
                "        Table(movie_info_idx as mi_idx)",
            ]
        );
        assert!(ctx.explain(&plan, true).contains("→"));
    }

    #[test]
    fn planners_agree_on_movie_query() {
        let dir = tempfile::tempdir().unwrap();
        let db = movie_db(dir.path()).unwrap();
        let prep = prepare(&db, MOVIE_QUERY, LogicMode::Auto).unwrap();
        let ctx =
            PlanContext::new(&db, &prep.query, prep.tree.as_ref(), PlanOptions::default()).unwrap();
        let oracle = execute(&db, &prep, &ctx.naive_oracle().unwrap(), Some(true))
            .unwrap()
            .0;
        assert_eq!(oracle.count(), 4);
        let combined = ctx.tcombined().unwrap().cost();
        for p in Planner::ALL {
            let plan = ctx.plan(p).unwrap();
            let (rows, stats) = execute(&db, &prep, &plan, Some(true)).unwrap();
            assert_eq!(rows.canonical_tuples(), oracle.canonical_tuples(), "{p}");
            assert_eq!(stats.precept_violations, 0, "{p}");
            if p.is_tagged() {
                assert!(combined <= plan.cost() + 1e-9, "{p}");
                assert!(stats.scans.values().all(|&n| n == 1));
            }
        }
    }

    #[test]
    fn pull_up_moves_one_node() {
        let (a, b) = (NodeId(0), NodeId(1));
        let s = Skel::Project(Box::new(Skel::Join(
            0,
            Box::new(Skel::filter(b, Skel::filter(a, Skel::Scan(0)))),
            Box::new(Skel::Scan(1)),
        )));
        let s1 = s.pull_up(a).unwrap();
        assert_eq!(
            s1,
            Skel::Project(Box::new(Skel::Join(
                0,
                Box::new(Skel::filter(a, Skel::filter(b, Skel::Scan(0)))),
                Box::new(Skel::Scan(1)),
            )))
        );
        let s2 = s1.pull_up(a).unwrap();
        assert_eq!(
            s2,
            Skel::Project(Box::new(Skel::filter(
                a,
                Skel::Join(
                    0,
                    Box::new(Skel::filter(b, Skel::Scan(0))),
                    Box::new(Skel::Scan(1))
                )
            )))
        );
        assert_eq!(s2.pull_up(a), None);
        let back = s2.remove_filter(a).push_to_table(a, 0);
        assert_eq!(back, s1);
        assert_eq!(s.filters(), vec![a, b]);
    }

    #[test]
    fn planner_names_round_trip() {
        for p in Planner::ALL {
            assert_eq!(p.name().parse::<Planner>().unwrap(), p);
        }
        assert!("bogus".parse::<Planner>().is_err());
    }
}
