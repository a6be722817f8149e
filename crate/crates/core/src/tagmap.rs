//! Plan-time construction of filter and join tag maps.

use std::cell::RefCell;
use std::fmt;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::predicate::{NodeId, PredTree};
use crate::tag::{generalize, Logic, Tag, Truth};

/// Output tags of one filter tag-map entry; `None` drops that outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutputs {
    pub t: Option<Tag>,
    pub f: Option<Tag>,
    pub u: Option<Tag>,
}

impl FilterOutputs {
    pub fn get(&self, v: Truth) -> Option<&Tag> {
        match v {
            Truth::T => self.t.as_ref(),
            Truth::F => self.f.as_ref(),
            Truth::U => self.u.as_ref(),
        }
    }

    pub fn tags(&self) -> impl Iterator<Item = &Tag> {
        [&self.t, &self.f, &self.u].into_iter().flatten()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterTagMap {
    pub entries: Vec<(Tag, FilterOutputs)>,
}

impl FilterTagMap {
    /// `⟨⟩ → {T: ⟨⟩}`: keep the tuples that satisfy the predicate.
    pub fn keep_true() -> Self {
        Self {
            entries: vec![(
                Tag::empty(),
                FilterOutputs {
                    t: Some(Tag::empty()),
                    ..Default::default()
                },
            )],
        }
    }

    pub fn get(&self, tag: &Tag) -> Option<&FilterOutputs> {
        self.entries.iter().find(|(t, _)| t == tag).map(|(_, o)| o)
    }

    /// Tags present after the filter, given the tags before it.
    pub fn output_tags(&self, input: &[Tag]) -> Vec<Tag> {
        let mut out = Vec::new();
        for t in input {
            match self.get(t) {
                Some(o) => out.extend(o.tags().cloned()),
                None => out.push(t.clone()),
            }
        }
        dedup(out)
    }

    pub fn display<'a>(&'a self, tree: &'a PredTree) -> impl fmt::Display + 'a {
        MapDisplay(move |f: &mut fmt::Formatter<'_>| {
            for (i, (tag, o)) in self.entries.iter().enumerate() {
                if i > 0 {
                    f.write_str("; ")?;
                }
                write!(f, "{} → {{", tag.display(tree))?;
                let mut first = true;
                for v in [Truth::T, Truth::F, Truth::U] {
                    if let Some(t) = o.get(v) {
                        if !first {
                            f.write_str(", ")?;
                        }
                        first = false;
                        write!(f, "{}: {}", v.symbol(), t.display(tree))?;
                    }
                }
                f.write_str("}")?;
            }
            Ok(())
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JoinTagMap {
    /// (left tag, right tag, output tag).
    pub entries: Vec<(Tag, Tag, Tag)>,
}

impl JoinTagMap {
    /// `(⟨⟩, ⟨⟩) → ⟨⟩`.
    pub fn single() -> Self {
        Self {
            entries: vec![(Tag::empty(), Tag::empty(), Tag::empty())],
        }
    }

    pub fn output_tags(&self) -> Vec<Tag> {
        dedup(self.entries.iter().map(|e| e.2.clone()).collect())
    }

    pub fn display<'a>(&'a self, tree: &'a PredTree) -> impl fmt::Display + 'a {
        MapDisplay(move |f: &mut fmt::Formatter<'_>| {
            for (i, (l, r, o)) in self.entries.iter().enumerate() {
                if i > 0 {
                    f.write_str("; ")?;
                }
                write!(
                    f,
                    "({}, {}) → {}",
                    l.display(tree),
                    r.display(tree),
                    o.display(tree)
                )?;
            }
            Ok(())
        })
    }
}

struct MapDisplay<F>(F);

impl<F: Fn(&mut fmt::Formatter<'_>) -> fmt::Result> fmt::Display for MapDisplay<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        (self.0)(f)
    }
}

fn dedup(tags: Vec<Tag>) -> Vec<Tag> {
    let mut seen = rustc_hash::FxHashSet::default();
    tags.into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MapMode {
    /// Generalize tags and apply both precepts.
    #[default]
    Precept,
    /// Keep every outcome and never generalize.
    Naive,
}

/// Builds tag maps for one query; generalization results are memoized.
pub struct TagMapBuilder<'a> {
    tree: &'a PredTree,
    mode: MapMode,
    logic: Logic,
    cache: RefCell<FxHashMap<Tag, Tag>>,
}

impl<'a> TagMapBuilder<'a> {
    pub fn new(tree: &'a PredTree, mode: MapMode, logic: Logic) -> Self {
        Self {
            tree,
            mode,
            logic,
            cache: RefCell::new(FxHashMap::default()),
        }
    }

    pub fn tree(&self) -> &'a PredTree {
        self.tree
    }

    pub fn logic(&self) -> Logic {
        self.logic
    }

    pub fn mode(&self) -> MapMode {
        self.mode
    }

    pub fn generalize(&self, tag: &Tag) -> Result<Tag> {
        if let Some(t) = self.cache.borrow().get(tag) {
            return Ok(t.clone());
        }
        let g = generalize(tag, self.tree, self.logic)?.tag;
        self.cache.borrow_mut().insert(tag.clone(), g.clone());
        Ok(g)
    }

    /// Generalized tag, or `None` when the assignments contradict each other.
    /// Propagation only derives implied values, so a contradiction means no
    /// tuple can carry the tag (e.g. a clause filtered whole, then one of its
    /// atoms filtered again with the opposite outcome).
    fn generalize_feasible(&self, tag: &Tag) -> Result<Option<Tag>> {
        match self.generalize(tag) {
            Ok(t) => Ok(Some(t)),
            Err(Error::TagConflict(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Precept 1: a tag whose root is false (or unknown in 3VL) is dropped.
    fn survives(&self, tag: &Tag) -> bool {
        match tag.get(self.tree.root()) {
            Some(Truth::F) => false,
            Some(Truth::U) => self.logic == Logic::TwoValued,
            _ => true,
        }
    }

    /// Precept 2: every occurrence of `pred` (or the node itself) already
    /// has an assigned ancestor in `tag`.
    pub fn covered(&self, tag: &Tag, pred: NodeId) -> bool {
        tag.contains(pred)
            || self
                .tree
                .ancestor_paths(pred)
                .all(|path| path.iter().any(|&a| tag.contains(a)))
    }

    pub fn filter_map(&self, input: &[Tag], pred: NodeId) -> Result<FilterTagMap> {
        if pred.index() >= self.tree.node_count() {
            return Err(Error::Plan(format!("filter predicate {pred} not in tree")));
        }
        let mut entries = Vec::new();
        for tag in input {
            match self.mode {
                MapMode::Naive => {
                    let mut o = FilterOutputs {
                        t: Some(tag.with(pred, Truth::T)?),
                        f: Some(tag.with(pred, Truth::F)?),
                        u: None,
                    };
                    if self.logic == Logic::ThreeValued {
                        o.u = Some(tag.with(pred, Truth::U)?);
                    }
                    entries.push((tag.clone(), o));
                }
                MapMode::Precept => {
                    if self.covered(tag, pred) {
                        continue;
                    }
                    let mut o = FilterOutputs::default();
                    for &v in self.logic.outcomes() {
                        let Some(g) = self.generalize_feasible(&tag.with(pred, v)?)? else {
                            continue;
                        };
                        if self.survives(&g) {
                            match v {
                                Truth::T => o.t = Some(g),
                                Truth::F => o.f = Some(g),
                                Truth::U => o.u = Some(g),
                            }
                        }
                    }
                    entries.push((tag.clone(), o));
                }
            }
        }
        Ok(FilterTagMap { entries })
    }

    pub fn join_map(&self, left: &[Tag], right: &[Tag]) -> Result<JoinTagMap> {
        let mut entries = Vec::new();
        for l in left {
            for r in right {
                let u = l
                    .union(r)
                    .map_err(|e| Error::Internal(format!("join tag union: {e}")))?;
                match self.mode {
                    MapMode::Naive => entries.push((l.clone(), r.clone(), u)),
                    MapMode::Precept => {
                        let Some(o) = self.generalize_feasible(&u)? else {
                            continue;
                        };
                        if self.survives(&o) {
                            entries.push((l.clone(), r.clone(), o));
                        }
                    }
                }
            }
        }
        Ok(JoinTagMap { entries })
    }

    /// Tags whose tuples satisfy the whole predicate.
    pub fn projection_tags(&self, tags: &[Tag]) -> Result<Vec<Tag>> {
        let root = self.tree.root();
        let mut out = Vec::new();
        for t in tags {
            let v = match self.mode {
                MapMode::Precept => t.get(root),
                MapMode::Naive => self.generalize_feasible(t)?.and_then(|g| g.get(root)),
            };
            if v == Some(Truth::T) {
                out.push(t.clone());
            }
        }
        Ok(out)
    }
}
