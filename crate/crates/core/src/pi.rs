//! Potential-influence paths, trees and sets.
//!
//! A potential-influence (PI) path from `A` is a simple path on which every
//! interior node is an unshielded collider. Conditioning on all nodes of such
//! a path keeps its endpoints dependent. A PI-set of size `r` is a set of
//! nodes preceding `A` in which every member is reached from `A` by a PI-path
//! whose other nodes all lie in the set.
//!
//! Node indices double as temporal positions: `u` precedes `v` iff `u < v`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{EdgeMark, GraphError, Pag};

/// Which endpoint marks count as an arrowhead into a path node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CircleMode {
    /// Only `Arrow`.
    #[default]
    Strict,
    /// `Arrow` or `Circle`.
    Permissive,
}

impl std::str::FromStr for CircleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(CircleMode::Strict),
            "permissive" => Ok(CircleMode::Permissive),
            _ => Err(format!("expected `strict` or `permissive`, got `{s}`")),
        }
    }
}

impl CircleMode {
    fn counts_as_arrow(self, m: EdgeMark) -> bool {
        match self {
            CircleMode::Strict => m == EdgeMark::Arrow,
            CircleMode::Permissive => m != EdgeMark::Tail,
        }
    }
}

/// `⟨u, v, w⟩` has arrowheads into `v` from both sides and `u`, `w` non-adjacent.
fn collider_triple(g: &Pag, u: usize, v: usize, w: usize, mode: CircleMode) -> Result<bool, GraphError> {
    Ok(mode.counts_as_arrow(g.mark_at(u, v)?)
        && mode.counts_as_arrow(g.mark_at(w, v)?)
        && !g.adjacent(u, w)?)
}

pub fn is_pi_path(g: &Pag, path: &[usize], mode: CircleMode) -> Result<bool, GraphError> {
    if path.len() < 2 {
        return Err(GraphError::InvalidPath("a path needs at least two nodes".into()));
    }
    for (i, &v) in path.iter().enumerate() {
        if path[..i].contains(&v) {
            return Err(GraphError::InvalidPath(format!("node {v} repeats")));
        }
    }
    for w in path.windows(2) {
        if !g.adjacent(w[0], w[1])? {
            return Err(GraphError::NotAdjacent(w[0], w[1]));
        }
    }
    for w in path.windows(3) {
        if !collider_triple(g, w[0], w[1], w[2], mode)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Vertex {
    node: usize,
    parent: Option<usize>,
    depth: usize,
}

/// Every PI-path from a root, stored as a trie.
///
/// A node reachable along several PI-paths appears once per path. Its
/// depth is the length of its shortest PI-path and its parent is the
/// smallest-index predecessor among those shortest paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiTree {
    root: usize,
    vertices: Vec<Vertex>,
    by_node: BTreeMap<usize, Vec<usize>>,
}

pub fn build_pi_tree(g: &Pag, root: usize, mode: CircleMode) -> Result<PiTree, GraphError> {
    g.label(root)?;
    let mut vertices = vec![Vertex {
        node: root,
        parent: None,
        depth: 0,
    }];
    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for vi in frontier {
            let path = path_nodes(&vertices, vi);
            let v = vertices[vi].node;
            let prev = vertices[vi].parent.map(|p| vertices[p].node);
            for &w in g.neighbors(v)? {
                if path.contains(&w) {
                    continue;
                }
                if let Some(u) = prev {
                    if !collider_triple(g, u, v, w, mode)? {
                        continue;
                    }
                }
                vertices.push(Vertex {
                    node: w,
                    parent: Some(vi),
                    depth: vertices[vi].depth + 1,
                });
                next.push(vertices.len() - 1);
            }
        }
        frontier = next;
    }
    let mut by_node: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, v) in vertices.iter().enumerate().skip(1) {
        by_node.entry(v.node).or_default().push(i);
    }
    Ok(PiTree {
        root,
        vertices,
        by_node,
    })
}

/// Nodes from the root to vertex `vi`, root first.
fn path_nodes(vertices: &[Vertex], mut vi: usize) -> Vec<usize> {
    let mut out = vec![vertices[vi].node];
    while let Some(p) = vertices[vi].parent {
        out.push(vertices[p].node);
        vi = p;
    }
    out.reverse();
    out
}

impl PiTree {
    pub fn root(&self) -> usize {
        self.root
    }

    /// Non-root nodes, ascending.
    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_node.keys().copied()
    }

    pub fn contains(&self, node: usize) -> bool {
        node == self.root || self.by_node.contains_key(&node)
    }

    pub fn len(&self) -> usize {
        self.by_node.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn depth(&self, node: usize) -> Option<usize> {
        if node == self.root {
            return Some(0);
        }
        self.by_node
            .get(&node)
            .map(|vs| vs.iter().map(|&v| self.vertices[v].depth).min().expect("non-empty"))
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        let depth = self.depth(node)?;
        self.by_node
            .get(&node)?
            .iter()
            .filter(|&&v| self.vertices[v].depth == depth)
            .filter_map(|&v| self.vertices[v].parent.map(|p| self.vertices[p].node))
            .min()
    }

    /// Every PI-path from the root to `node`, root first.
    pub fn paths_to(&self, node: usize) -> Vec<Vec<usize>> {
        self.by_node
            .get(&node)
            .map(|vs| vs.iter().map(|&v| path_nodes(&self.vertices, v)).collect())
            .unwrap_or_default()
    }

    /// Number of distinct PI-paths recorded.
    pub fn path_count(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Whether some PI-path to `node` has all non-root nodes in `within`.
    fn reachable_within(&self, node: usize, within: &BTreeSet<usize>) -> bool {
        self.by_node.get(&node).is_some_and(|vs| {
            vs.iter().any(|&v| {
                let mut cur = Some(v);
                while let Some(c) = cur {
                    if c == 0 {
                        return true;
                    }
                    if !within.contains(&self.vertices[c].node) {
                        return false;
                    }
                    cur = self.vertices[c].parent;
                }
                true
            })
        })
    }
}

/// A candidate explanation: positions in the session plus the depth total
/// used for ordering. Its radius is the member count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PiSet {
    pub members: Vec<usize>,
    pub depth_sum: usize,
}

impl PiSet {
    pub fn radius(&self) -> usize {
        self.members.len()
    }

    pub fn mean_depth(&self) -> f64 {
        self.depth_sum as f64 / self.members.len() as f64
    }

    /// Smaller total depth first, then sets with later positions.
    pub fn order_key(&self) -> (usize, Reverse<Vec<usize>>) {
        let mut desc = self.members.clone();
        desc.sort_unstable_by(|a, b| b.cmp(a));
        (self.depth_sum, Reverse(desc))
    }
}

/// Sorts candidate sets into search order.
pub fn sort_pi_sets(sets: &mut [PiSet]) {
    sets.sort_by_cached_key(PiSet::order_key);
}

/// Yields the ordered PI-sets of radius 1, 2, … in turn.
///
/// Each radius is derived from the previous one: removing a member of
/// maximal in-set depth from a PI-set leaves a PI-set, so every set of
/// radius `r` extends one of radius `r − 1` by a single node.
#[derive(Debug, Clone)]
pub struct PiSetLevels<'a> {
    tree: &'a PiTree,
    candidates: Vec<usize>,
    previous: Option<Vec<BTreeSet<usize>>>,
    radius: usize,
}

impl<'a> PiSetLevels<'a> {
    pub fn new(tree: &'a PiTree) -> Self {
        let candidates = tree.nodes().filter(|&v| v < tree.root).collect();
        PiSetLevels {
            tree,
            candidates,
            previous: None,
            radius: 0,
        }
    }

    fn to_pi_set(&self, s: &BTreeSet<usize>) -> PiSet {
        PiSet {
            members: s.iter().copied().collect(),
            depth_sum: s.iter().map(|&v| self.tree.depth(v).expect("tree node")).sum(),
        }
    }
}

impl Iterator for PiSetLevels<'_> {
    type Item = Vec<PiSet>;

    fn next(&mut self) -> Option<Vec<PiSet>> {
        let sets: BTreeSet<BTreeSet<usize>> = match &self.previous {
            None => self
                .candidates
                .iter()
                .filter(|&&v| self.tree.reachable_within(v, &BTreeSet::from([v])))
                .map(|&v| BTreeSet::from([v]))
                .collect(),
            Some(prev) => {
                let mut out = BTreeSet::new();
                for base in prev {
                    for &v in &self.candidates {
                        if base.contains(&v) {
                            continue;
                        }
                        let mut grown = base.clone();
                        grown.insert(v);
                        if out.contains(&grown) {
                            continue;
                        }
                        if self.tree.reachable_within(v, &grown) {
                            out.insert(grown);
                        }
                    }
                }
                out
            }
        };
        if sets.is_empty() {
            return None;
        }
        self.radius += 1;
        let mut level: Vec<PiSet> = sets.iter().map(|s| self.to_pi_set(s)).collect();
        sort_pi_sets(&mut level);
        self.previous = Some(sets.into_iter().collect());
        Some(level)
    }
}

/// Ordered PI-sets of radius `r` (`r ≥ 1`).
pub fn enumerate_pi_sets(tree: &PiTree, r: usize) -> Vec<PiSet> {
    if r == 0 {
        return Vec::new();
    }
    PiSetLevels::new(tree).nth(r - 1).unwrap_or_default()
}
