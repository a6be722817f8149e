//! Normalized predicate trees with shared duplicate subexpressions.
//!
//! Identical subexpressions are interned into one node, so the "tree" is a
//! DAG; each node remembers every position it occupies in the source tree.

use std::fmt;

use rustc_hash::FxHashMap;

use crate::sql::{Atom, BoundExpr};
use crate::tag::Truth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Index into `PredTree::atoms`.
    Atom(usize),
    And,
    Or,
    Not,
}

#[derive(Debug, Clone)]
pub struct PredNode {
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
}

/// One position of a node in the source tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occurrence {
    /// Child indices from the root.
    pub position: Vec<usize>,
    /// Strict ancestors, nearest first; ends at the root.
    pub ancestors: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct PredTree {
    nodes: Vec<PredNode>,
    atoms: Vec<Atom>,
    atom_nodes: Vec<NodeId>,
    root: NodeId,
    occurrences: Vec<Vec<Occurrence>>,
    parents: Vec<Vec<NodeId>>,
    labels: Vec<String>,
    tables: Vec<u64>,
}

#[derive(PartialEq, Eq, Hash)]
enum Key {
    Atom(String),
    And(Vec<NodeId>),
    Or(Vec<NodeId>),
    Not(NodeId),
}

enum Norm {
    Atom(Atom),
    And(Vec<Norm>),
    Or(Vec<Norm>),
    Not(Box<Norm>),
}

fn normalize(e: &BoundExpr) -> Norm {
    match e {
        BoundExpr::Atom(a) => Norm::Atom(a.clone()),
        BoundExpr::Not(c) => match normalize(c) {
            Norm::Not(inner) => *inner,
            n => Norm::Not(Box::new(n)),
        },
        BoundExpr::And(cs) | BoundExpr::Or(cs) => {
            let is_and = matches!(e, BoundExpr::And(_));
            let mut out = Vec::with_capacity(cs.len());
            for c in cs {
                match (normalize(c), is_and) {
                    (Norm::And(g), true) | (Norm::Or(g), false) => out.extend(g),
                    (n, _) => out.push(n),
                }
            }
            if out.len() == 1 {
                out.pop().unwrap()
            } else if is_and {
                Norm::And(out)
            } else {
                Norm::Or(out)
            }
        }
    }
}

struct Interner {
    nodes: Vec<PredNode>,
    atoms: Vec<Atom>,
    atom_nodes: Vec<NodeId>,
    keys: FxHashMap<Key, NodeId>,
}

impl Interner {
    fn intern(&mut self, n: &Norm) -> NodeId {
        let (key, kind, children) = match n {
            Norm::Atom(a) => (Key::Atom(a.label.clone()), None, Vec::new()),
            Norm::And(cs) => {
                let ch: Vec<_> = cs.iter().map(|c| self.intern(c)).collect();
                (Key::And(ch.clone()), Some(NodeKind::And), ch)
            }
            Norm::Or(cs) => {
                let ch: Vec<_> = cs.iter().map(|c| self.intern(c)).collect();
                (Key::Or(ch.clone()), Some(NodeKind::Or), ch)
            }
            Norm::Not(c) => {
                let ch = self.intern(c);
                (Key::Not(ch), Some(NodeKind::Not), vec![ch])
            }
        };
        if let Some(&id) = self.keys.get(&key) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        let kind = kind.unwrap_or_else(|| {
            let Norm::Atom(a) = n else { unreachable!() };
            self.atoms.push(a.clone());
            self.atom_nodes.push(id);
            NodeKind::Atom(self.atoms.len() - 1)
        });
        self.nodes.push(PredNode { kind, children });
        self.keys.insert(key, id);
        id
    }
}

impl PredTree {
    /// Flattens nested same-type connectives, removes double negation and
    /// interns duplicates. Node ids follow post-order of first occurrence.
    pub fn build(expr: &BoundExpr) -> Self {
        let norm = normalize(expr);
        let mut int = Interner {
            nodes: Vec::new(),
            atoms: Vec::new(),
            atom_nodes: Vec::new(),
            keys: FxHashMap::default(),
        };
        let root = int.intern(&norm);
        let n = int.nodes.len();
        let mut tree = PredTree {
            nodes: int.nodes,
            atoms: int.atoms,
            atom_nodes: int.atom_nodes,
            root,
            occurrences: vec![Vec::new(); n],
            parents: vec![Vec::new(); n],
            labels: Vec::with_capacity(n),
            tables: vec![0; n],
        };
        let mut pos = Vec::new();
        let mut anc = Vec::new();
        tree.walk(root, &mut pos, &mut anc);
        for i in 0..n {
            let label = tree.render(NodeId(i as u32), false);
            tree.labels.push(label);
            tree.tables[i] = match tree.nodes[i].kind {
                NodeKind::Atom(a) => 1u64 << tree.atoms[a].col.table,
                _ => tree.nodes[i]
                    .children
                    .iter()
                    .fold(0, |m, c| m | tree.tables[c.index()]),
            };
        }
        tree
    }

    fn walk(&mut self, id: NodeId, pos: &mut Vec<usize>, anc: &mut Vec<NodeId>) {
        self.occurrences[id.index()].push(Occurrence {
            position: pos.clone(),
            ancestors: anc.iter().rev().copied().collect(),
        });
        if let Some(&p) = anc.last() {
            self.parents[id.index()].push(p);
        }
        anc.push(id);
        for (i, c) in self.nodes[id.index()]
            .children
            .clone()
            .into_iter()
            .enumerate()
        {
            pos.push(i);
            self.walk(c, pos, anc);
            pos.pop();
        }
        anc.pop();
    }

    fn render(&self, id: NodeId, nested: bool) -> String {
        let node = &self.nodes[id.index()];
        match node.kind {
            NodeKind::Atom(a) => self.atoms[a].label.clone(),
            NodeKind::Not => format!("NOT {}", self.render(node.children[0], true)),
            NodeKind::And | NodeKind::Or => {
                let sep = if node.kind == NodeKind::And {
                    " AND "
                } else {
                    " OR "
                };
                let body = node
                    .children
                    .iter()
                    .map(|&c| self.render(c, true))
                    .collect::<Vec<_>>()
                    .join(sep);
                if nested {
                    format!("({body})")
                } else {
                    body
                }
            }
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &PredNode {
        &self.nodes[id.index()]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.index()].kind
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.index()].children
    }

    pub fn is_and(&self, id: NodeId) -> bool {
        self.kind(id) == NodeKind::And
    }

    pub fn is_or(&self, id: NodeId) -> bool {
        self.kind(id) == NodeKind::Or
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, id: NodeId) -> Option<&Atom> {
        match self.kind(id) {
            NodeKind::Atom(a) => Some(&self.atoms[a]),
            _ => None,
        }
    }

    /// Node of the i-th atom.
    pub fn atom_node(&self, atom: usize) -> NodeId {
        self.atom_nodes[atom]
    }

    pub fn atom_nodes(&self) -> &[NodeId] {
        &self.atom_nodes
    }

    /// Human-readable expression for a node, in the notation used for tags.
    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id.index()]
    }

    /// Bitmask of query tables the subexpression references.
    pub fn tables(&self, id: NodeId) -> u64 {
        self.tables[id.index()]
    }

    pub fn occurrences(&self, id: NodeId) -> &[Occurrence] {
        &self.occurrences[id.index()]
    }

    /// One entry per non-root occurrence, so duplicates may repeat.
    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id.index()]
    }

    /// Distinct parents, in first-occurrence order.
    pub fn unique_parents(&self, id: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::new();
        for &p in self.parents(id) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    pub fn ancestor_paths(&self, id: NodeId) -> impl Iterator<Item = &[NodeId]> {
        self.occurrences(id).iter().map(|o| o.ancestors.as_slice())
    }

    pub fn height(&self) -> usize {
        self.occurrences
            .iter()
            .flat_map(|os| os.iter().map(|o| o.ancestors.len()))
            .max()
            .unwrap_or(0)
    }

    /// Ternary bottom-up evaluation of every node given atom values.
    pub fn eval_all(&self, atom_value: impl Fn(usize) -> Truth) -> Vec<Truth> {
        let mut vals: Vec<Truth> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.kind {
                NodeKind::Atom(a) => atom_value(a),
                NodeKind::Not => vals[node.children[0].index()].not(),
                NodeKind::And => node
                    .children
                    .iter()
                    .fold(Truth::T, |acc: Truth, c| acc.and(vals[c.index()])),
                NodeKind::Or => node
                    .children
                    .iter()
                    .fold(Truth::F, |acc: Truth, c| acc.or(vals[c.index()])),
            };
            vals.push(v);
        }
        vals
    }

    pub fn eval(&self, atom_value: impl Fn(usize) -> Truth) -> Truth {
        self.eval_all(atom_value)[self.root.index()]
    }

    /// Rebuilds an expression equivalent to the normalized tree.
    pub fn to_expr(&self) -> BoundExpr {
        self.expr_of(self.root)
    }

    fn expr_of(&self, id: NodeId) -> BoundExpr {
        let node = &self.nodes[id.index()];
        let cs = || node.children.iter().map(|&c| self.expr_of(c)).collect();
        match node.kind {
            NodeKind::Atom(a) => BoundExpr::Atom(self.atoms[a].clone()),
            NodeKind::And => BoundExpr::And(cs()),
            NodeKind::Or => BoundExpr::Or(cs()),
            NodeKind::Not => BoundExpr::Not(Box::new(self.expr_of(node.children[0]))),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::sql::{AtomTest, ColRef};
    use crate::value::DataType;
    use proptest::prelude::*;

    pub(crate) fn atom(label: &str, table: usize) -> BoundExpr {
        BoundExpr::Atom(Atom {
            col: ColRef { table, column: 0 },
            dtype: DataType::Bool,
            test: AtomTest::IsNull,
            label: label.to_string(),
        })
    }

    pub(crate) fn and(cs: Vec<BoundExpr>) -> BoundExpr {
        BoundExpr::And(cs)
    }

    pub(crate) fn or(cs: Vec<BoundExpr>) -> BoundExpr {
        BoundExpr::Or(cs)
    }

    pub(crate) fn not(c: BoundExpr) -> BoundExpr {
        BoundExpr::Not(Box::new(c))
    }

    /// OR(AND(P1,P4), AND(P2,P3)) with ids P1=0 P4=1 AND1=2 P2=3 P3=4 AND2=5 OR=6.
    pub(crate) fn query1() -> PredTree {
        PredTree::build(&or(vec![
            and(vec![atom("P1", 0), atom("P4", 1)]),
            and(vec![atom("P2", 0), atom("P3", 1)]),
        ]))
    }

    fn id(tree: &PredTree, label: &str) -> NodeId {
        tree.node_ids().find(|&n| tree.label(n) == label).unwrap()
    }

    #[test]
    fn query1_tree_shape() {
        let t = query1();
        assert_eq!(t.node_count(), 7);
        assert_eq!(t.atoms().len(), 4);
        assert!(t.is_or(t.root()));
        assert_eq!(t.label(t.root()), "(P1 AND P4) OR (P2 AND P3)");
        let p1 = id(&t, "P1");
        assert_eq!(t.parents(p1), &[id(&t, "P1 AND P4")]);
        assert!(t.parents(t.root()).is_empty());
        assert_eq!(t.tables(t.root()), 0b11);
    }

    #[test]
    fn flattens_same_type() {
        let t = PredTree::build(&and(vec![
            and(vec![atom("A", 0), atom("B", 0)]),
            atom("C", 0),
        ]));
        assert_eq!(t.children(t.root()).len(), 3);
        assert_eq!(t.node_count(), 4);
    }

    #[test]
    fn double_negation_removed() {
        let t = PredTree::build(&not(not(atom("A", 0))));
        assert_eq!(t.node_count(), 1);
        let t = PredTree::build(&and(vec![
            not(not(and(vec![atom("A", 0), atom("B", 0)]))),
            atom("C", 0),
        ]));
        assert_eq!(t.children(t.root()).len(), 3);
    }

    #[test]
    fn duplicates_share_identity() {
        // (A∧B)∨(A∧C)
        let t = PredTree::build(&or(vec![
            and(vec![atom("A", 0), atom("B", 0)]),
            and(vec![atom("A", 0), atom("C", 0)]),
        ]));
        let a = id(&t, "A");
        assert_eq!(t.occurrences(a).len(), 2);
        assert_eq!(t.occurrences(a)[1].position, vec![1, 0]);
        let and1 = id(&t, "A AND B");
        let and2 = id(&t, "A AND C");
        assert_eq!(t.parents(a), &[and1, and2]);
        let paths: Vec<_> = t.ancestor_paths(a).collect();
        assert_eq!(paths, vec![&[and1, t.root()][..], &[and2, t.root()][..]]);
        assert_eq!(
            t.ancestor_paths(t.root()).collect::<Vec<_>>(),
            vec![&[][..]]
        );
    }

    #[test]
    fn ancestor_path_of_unique_leaf() {
        let t = PredTree::build(&or(vec![
            and(vec![atom("A", 0), atom("B", 0)]),
            and(vec![atom("C", 0), atom("D", 0)]),
        ]));
        let b = id(&t, "B");
        let paths: Vec<_> = t.ancestor_paths(b).collect();
        assert_eq!(paths, vec![&[id(&t, "A AND B"), t.root()][..]]);
    }

    #[test]
    fn shared_intermediate_nodes() {
        let x = and(vec![atom("A", 0), atom("B", 0)]);
        let t = PredTree::build(&or(vec![x.clone(), and(vec![not(x), atom("C", 0)])]));
        let a = id(&t, "A");
        assert_eq!(t.occurrences(a).len(), 2);
        assert_eq!(t.occurrences(a)[1].ancestors.len(), 4);
    }

    pub(crate) fn arb_expr(max_atoms: usize) -> impl Strategy<Value = BoundExpr> {
        let leaf = (0..max_atoms).prop_map(|i| atom(&format!("P{i}"), i % 3));
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(BoundExpr::And),
                prop::collection::vec(inner.clone(), 2..4).prop_map(BoundExpr::Or),
                inner.prop_map(|e| BoundExpr::Not(Box::new(e))),
            ]
        })
    }

    fn eval_raw(e: &BoundExpr, val: &dyn Fn(&str) -> Truth) -> Truth {
        match e {
            BoundExpr::Atom(a) => val(&a.label),
            BoundExpr::Not(c) => eval_raw(c, val).not(),
            BoundExpr::And(cs) => cs.iter().fold(Truth::T, |acc, c| acc.and(eval_raw(c, val))),
            BoundExpr::Or(cs) => cs.iter().fold(Truth::F, |acc, c| acc.or(eval_raw(c, val))),
        }
    }

    fn check_invariants(t: &PredTree) {
        for n in t.node_ids() {
            let node = t.node(n);
            match node.kind {
                NodeKind::Atom(_) => assert!(node.children.is_empty()),
                NodeKind::Not => assert_eq!(node.children.len(), 1),
                _ => assert!(node.children.len() >= 2),
            }
            for &c in &node.children {
                assert!(c < n, "children precede parents");
                if node.kind == NodeKind::And || node.kind == NodeKind::Or {
                    assert_ne!(t.kind(c), node.kind);
                }
                if node.kind == NodeKind::Not {
                    assert_ne!(t.kind(c), NodeKind::Not);
                }
            }
            for path in t.ancestor_paths(n) {
                assert_eq!(path.last().copied().unwrap_or(t.root()), t.root());
                assert!(path.len() <= t.height());
            }
        }
    }

    proptest! {
        #[test]
        fn normalization_preserves_truth_table(e in arb_expr(5)) {
            let t = PredTree::build(&e);
            check_invariants(&t);
            let labels: Vec<String> = (0..5).map(|i| format!("P{i}")).collect();
            for mut code in 0..3usize.pow(5) {
                let mut vals = [Truth::T; 5];
                for v in vals.iter_mut() {
                    *v = [Truth::T, Truth::F, Truth::U][code % 3];
                    code /= 3;
                }
                let lookup = |l: &str| vals[labels.iter().position(|x| x == l).unwrap()];
                let expect = eval_raw(&e, &lookup);
                let got = t.eval(|a| lookup(&t.atoms()[a].label));
                prop_assert_eq!(expect, got);
            }
        }

        #[test]
        fn normalization_is_idempotent(e in arb_expr(6)) {
            let t = PredTree::build(&e);
            let t2 = PredTree::build(&t.to_expr());
            prop_assert_eq!(t.node_count(), t2.node_count());
            for n in t.node_ids() {
                prop_assert_eq!(t.label(n), t2.label(n));
                prop_assert_eq!(t.occurrences(n), t2.occurrences(n));
            }
        }
    }
}
