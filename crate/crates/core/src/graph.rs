//! Partial ancestral graphs over the tokens of an extended session.
//!
//! Nodes are dense indices `0..n`; index `i` is the `i`-th token of the
//! session, so index order is temporal order. Each node carries an opaque
//! item label. An edge is stored once per unordered pair together with the
//! mark at each of its two endpoints, so the mark "at X" on `{X, Y}` is the
//! same no matter which end the query starts from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque identifier of a catalogue item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Endpoint mark of a PAG edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeMark {
    Arrow,
    Tail,
    Circle,
}

impl EdgeMark {
    fn left_glyph(self) -> char {
        match self {
            EdgeMark::Arrow => '<',
            EdgeMark::Tail => '-',
            EdgeMark::Circle => 'o',
        }
    }

    fn right_glyph(self) -> char {
        match self {
            EdgeMark::Arrow => '>',
            EdgeMark::Tail => '-',
            EdgeMark::Circle => 'o',
        }
    }

    fn from_left_glyph(c: char) -> Option<Self> {
        match c {
            '<' => Some(EdgeMark::Arrow),
            '-' => Some(EdgeMark::Tail),
            'o' => Some(EdgeMark::Circle),
            _ => None,
        }
    }

    fn from_right_glyph(c: char) -> Option<Self> {
        match c {
            '>' => Some(EdgeMark::Arrow),
            '-' => Some(EdgeMark::Tail),
            'o' => Some(EdgeMark::Circle),
            _ => None,
        }
    }

    fn dot_arrow(self) -> &'static str {
        match self {
            EdgeMark::Arrow => "normal",
            EdgeMark::Tail => "none",
            EdgeMark::Circle => "odot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("self-edge on node {0}")]
    SelfEdge(usize),
    #[error("nodes {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("nodes {0} and {1} are already adjacent")]
    AlreadyAdjacent(usize, usize),
    #[error("mark conflict at node {at} on edge {from}-{at}: {existing:?} cannot become {requested:?}")]
    MarkConflict {
        from: usize,
        at: usize,
        existing: EdgeMark,
        requested: EdgeMark,
    },
    #[error("separating set for ({0}, {1}) contains an endpoint")]
    SepsetContainsEndpoint(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

fn key(x: usize, y: usize) -> (usize, usize) {
    if x < y {
        (x, y)
    } else {
        (y, x)
    }
}

/// A mixed graph with arrow, tail and circle endpoint marks.
///
/// Serializes as its text form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Pag {
    labels: Vec<ItemId>,
    // (lo, hi) -> (mark at lo, mark at hi)
    edges: BTreeMap<(usize, usize), (EdgeMark, EdgeMark)>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl Pag {
    /// Graph without edges over the given node labels.
    pub fn new(labels: Vec<ItemId>) -> Self {
        let n = labels.len();
        Pag {
            labels,
            edges: BTreeMap::new(),
            adjacency: vec![BTreeSet::new(); n],
        }
    }

    /// Graph over `n` nodes labelled by their own index.
    pub fn with_nodes(n: usize) -> Self {
        Self::new((0..n as u32).map(ItemId).collect())
    }

    /// Complete graph with circles at every endpoint.
    pub fn complete(labels: Vec<ItemId>) -> Self {
        let mut g = Self::new(labels);
        let n = g.len();
        for x in 0..n {
            for y in (x + 1)..n {
                g.edges.insert((x, y), (EdgeMark::Circle, EdgeMark::Circle));
                g.adjacency[x].insert(y);
                g.adjacency[y].insert(x);
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ItemId] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> Result<ItemId, GraphError> {
        self.labels.get(x).copied().ok_or(GraphError::UnknownNode(x))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn check(&self, x: usize) -> Result<(), GraphError> {
        if x < self.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(x))
        }
    }

    /// Adds edge `{x, y}` with `mark_x` at `x` and `mark_y` at `y`.
    pub fn add_edge(
        &mut self,
        x: usize,
        y: usize,
        mark_x: EdgeMark,
        mark_y: EdgeMark,
    ) -> Result<(), GraphError> {
        self.check(x)?;
        self.check(y)?;
        if x == y {
            return Err(GraphError::SelfEdge(x));
        }
        let k = key(x, y);
        if self.edges.contains_key(&k) {
            return Err(GraphError::AlreadyAdjacent(x, y));
        }
        let marks = if x < y {
            (mark_x, mark_y)
        } else {
            (mark_y, mark_x)
        };
        self.edges.insert(k, marks);
        self.adjacency[x].insert(y);
        self.adjacency[y].insert(x);
        Ok(())
    }

    /// Removes edge `{x, y}`; returns whether it existed.
    pub fn remove_edge(&mut self, x: usize, y: usize) -> Result<bool, GraphError> {
        self.check(x)?;
        self.check(y)?;
        let existed = self.edges.remove(&key(x, y)).is_some();
        self.adjacency[x].remove(&y);
        self.adjacency[y].remove(&x);
        Ok(existed)
    }

    pub fn adjacent(&self, x: usize, y: usize) -> Result<bool, GraphError> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.edges.contains_key(&key(x, y)))
    }

    /// Neighbours of `x` in ascending index order.
    pub fn neighbors(&self, x: usize) -> Result<&BTreeSet<usize>, GraphError> {
        self.adjacency.get(x).ok_or(GraphError::UnknownNode(x))
    }

    /// Mark at `y` on the edge `{x, y}`.
    pub fn mark_at(&self, x: usize, y: usize) -> Result<EdgeMark, GraphError> {
        self.check(x)?;
        self.check(y)?;
        let (lo, hi) = self
            .edges
            .get(&key(x, y))
            .copied()
            .ok_or(GraphError::NotAdjacent(x, y))?;
        Ok(if y < x { lo } else { hi })
    }

    /// Sets the mark at `y` on `{x, y}`. A circle may be refined into an arrow
    /// or a tail; an arrow or tail can only be re-set to itself.
    pub fn set_mark(&mut self, x: usize, y: usize, mark: EdgeMark) -> Result<(), GraphError> {
        let existing = self.mark_at(x, y)?;
        if existing == mark {
            return Ok(());
        }
        if existing != EdgeMark::Circle {
            return Err(GraphError::MarkConflict {
                from: x,
                at: y,
                existing,
                requested: mark,
            });
        }
        let slot = self.edges.get_mut(&key(x, y)).expect("adjacency checked");
        if y < x {
            slot.0 = mark;
        } else {
            slot.1 = mark;
        }
        Ok(())
    }

    /// Turns every endpoint mark back into a circle, keeping the skeleton.
    pub fn reset_marks(&mut self) {
        for marks in self.edges.values_mut() {
            *marks = (EdgeMark::Circle, EdgeMark::Circle);
        }
    }

    /// `u *-> v <-* w` with `u` and `w` non-adjacent.
    pub fn is_unshielded_collider(&self, u: usize, v: usize, w: usize) -> Result<bool, GraphError> {
        self.check(u)?;
        self.check(v)?;
        self.check(w)?;
        if u == v || v == w || u == w {
            return Ok(false);
        }
        if !self.adjacent(u, v)? || !self.adjacent(v, w)? || self.adjacent(u, w)? {
            return Ok(false);
        }
        Ok(self.mark_at(u, v)? == EdgeMark::Arrow && self.mark_at(w, v)? == EdgeMark::Arrow)
    }

    /// Edges as `(x, y, mark at x, mark at y)` with `x < y`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EdgeMark, EdgeMark)> + '_ {
        self.edges.iter().map(|(&(x, y), &(mx, my))| (x, y, mx, my))
    }

    /// Relabels node `i` as `perm[i]`; labels travel with their nodes.
    pub fn permuted(&self, perm: &[usize]) -> Result<Pag, GraphError> {
        let n = self.len();
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(GraphError::UnknownNode(p));
            }
        }
        if perm.len() != n {
            return Err(GraphError::UnknownNode(perm.len()));
        }
        let mut labels = vec![ItemId(0); n];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.labels[old];
        }
        let mut g = Pag::new(labels);
        for (x, y, mx, my) in self.edges() {
            g.add_edge(perm[x], perm[y], mx, my)?;
        }
        Ok(g)
    }

    /// Graphviz rendering; edge labels carry the mark glyphs.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph pag {\n");
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(&format!("  n{i} [label=\"{label}\"];\n"));
        }
        for (x, y, mx, my) in self.edges() {
            out.push_str(&format!(
                "  n{x} -> n{y} [dir=both, arrowtail={}, arrowhead={}, label=\"{}-{}\"];\n",
                mx.dot_arrow(),
                my.dot_arrow(),
                mx.left_glyph(),
                my.right_glyph()
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// Canonical text form:
///
/// ```text
/// node 0 1193
/// node 1 661
/// 0 o-> 1
/// ```
///
/// Node lines carry index and label; edge lines are `X <m>-<m> Y` with
/// `X < Y`, sorted.
impl fmt::Display for Pag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, label) in self.labels.iter().enumerate() {
            writeln!(f, "node {i} {label}")?;
        }
        for (x, y, mx, my) in self.edges() {
            writeln!(f, "{x} {}-{} {y}", mx.left_glyph(), my.right_glyph())?;
        }
        Ok(())
    }
}

impl From<Pag> for String {
    fn from(g: Pag) -> Self {
        g.to_string()
    }
}

impl TryFrom<String> for Pag {
    type Error = GraphError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Pag {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |line: usize, msg: &str| GraphError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut labels = Vec::new();
        let mut edges = Vec::new();
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.first() == Some(&"node") {
                if parts.len() != 3 {
                    return Err(parse_err(lineno, "expected `node <index> <label>`"));
                }
                let idx: usize = parts[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, "bad node index"))?;
                if idx != labels.len() {
                    return Err(parse_err(lineno, "node indices must be dense and ascending"));
                }
                let label: u32 = parts[2].parse().map_err(|_| parse_err(lineno, "bad label"))?;
                labels.push(ItemId(label));
                continue;
            }
            if parts.len() != 3 {
                return Err(parse_err(lineno, "expected `X <m>-<m> Y`"));
            }
            let x: usize = parts[0].parse().map_err(|_| parse_err(lineno, "bad node"))?;
            let y: usize = parts[2].parse().map_err(|_| parse_err(lineno, "bad node"))?;
            let glyphs: Vec<char> = parts[1].chars().collect();
            if glyphs.len() != 3 || glyphs[1] != '-' {
                return Err(parse_err(lineno, "bad edge glyph"));
            }
            let mx = EdgeMark::from_left_glyph(glyphs[0])
                .ok_or_else(|| parse_err(lineno, "bad left mark"))?;
            let my = EdgeMark::from_right_glyph(glyphs[2])
                .ok_or_else(|| parse_err(lineno, "bad right mark"))?;
            edges.push((lineno, x, y, mx, my));
        }
        let mut g = Pag::new(labels);
        for (lineno, x, y, mx, my) in edges {
            g.add_edge(x, y, mx, my).map_err(|e| GraphError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        }
        Ok(g)
    }
}

/// Separating sets recorded when an edge is removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SepsetTable {
    sets: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SepsetTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a sorted copy of `set` for `{x, y}`, replacing any previous entry.
    pub fn insert(&mut self, x: usize, y: usize, set: &[usize]) -> Result<(), GraphError> {
        if set.contains(&x) || set.contains(&y) {
            return Err(GraphError::SepsetContainsEndpoint(x, y));
        }
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        self.sets.insert(key(x, y), sorted);
        Ok(())
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&[usize]> {
        self.sets.get(&key(x, y)).map(Vec::as_slice)
    }

    pub fn contains_pair(&self, x: usize, y: usize) -> bool {
        self.sets.contains_key(&key(x, y))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[usize])> {
        self.sets.iter().map(|(&k, v)| (k, v.as_slice()))
    }
}
