//! Constraint-based structure learning that tolerates latent confounders.
//!
//! The pipeline is FCI-shaped: an adjacency search over growing conditioning
//! sets, unshielded-collider orientation, an optional possible-d-sep pass
//! that removes edges only separable by non-adjacent nodes, and finally the
//! orientation rules run to a fixed point. All scans are lexicographic in
//! node index so a run is fully determined by its inputs.

use std::collections::{BTreeSet, VecDeque};

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ci::{CiError, IndependenceTest};
use crate::graph::{EdgeMark, GraphError, ItemId, Pag, SepsetTable};

use EdgeMark::{Arrow, Circle, Tail};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscoveryError {
    #[error(transparent)]
    Ci(#[from] CiError),
    #[error("{0} (the significance level may be too permissive)")]
    Graph(#[from] GraphError),
    #[error("invalid discovery configuration: {0}")]
    Config(String),
    #[error("no separating set recorded for non-adjacent pair ({0}, {1})")]
    MissingSepset(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RuleSet {
    /// R1–R4.
    #[default]
    Core,
    /// R1–R4 plus the tail rules R8–R10.
    Extended,
}

impl std::str::FromStr for RuleSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "core" => Ok(RuleSet::Core),
            "extended" => Ok(RuleSet::Extended),
            other => Err(format!("unknown rule set `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PossibleDsep {
    /// Run when a bidirected edge appears after collider orientation.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub alpha: f64,
    /// Cap on conditioning-set size; the test's own cap also applies.
    pub max_cond_size: Option<usize>,
    pub rule_set: RuleSet,
    pub possible_dsep: PossibleDsep,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            alpha: 0.01,
            max_cond_size: None,
            rule_set: RuleSet::Core,
            possible_dsep: PossibleDsep::Auto,
        }
    }
}

impl DiscoveryConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        DiscoveryConfig {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DiscoveryError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DiscoveryError::Config(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        Ok(())
    }

    fn cap<T: IndependenceTest + ?Sized>(&self, ci: &T) -> usize {
        let own = self.max_cond_size.unwrap_or(usize::MAX);
        own.min(ci.max_conditioning().unwrap_or(usize::MAX))
    }
}

/// Adjacency search from the complete graph.
///
/// At level `k` every remaining edge `{x, y}` is tested against all size-`k`
/// subsets of the neighbours of `x` (then `y`) as they stood at the start of
/// the level, so removals within a level do not depend on scan order.
pub fn learn_skeleton<T: IndependenceTest + ?Sized>(
    ci: &T,
    labels: Vec<ItemId>,
    cfg: &DiscoveryConfig,
) -> Result<(Pag, SepsetTable), DiscoveryError> {
    cfg.validate()?;
    let mut g = Pag::complete(labels);
    let mut sepsets = SepsetTable::new();
    let cap = cfg.cap(ci);
    let n = g.len();
    let mut level = 0;
    while level <= cap {
        let snapshot: Vec<Vec<usize>> = (0..n)
            .map(|x| g.neighbors(x).map(|s| s.iter().copied().collect()))
            .collect::<Result<_, _>>()?;
        let pairs: Vec<(usize, usize)> = g.edges().map(|(x, y, _, _)| (x, y)).collect();
        let mut testable = false;
        for (x, y) in pairs {
            'sides: for (from, other) in [(x, y), (y, x)] {
                let candidates: Vec<usize> =
                    snapshot[from].iter().copied().filter(|&v| v != other).collect();
                if candidates.len() < level {
                    continue;
                }
                testable = true;
                for z in candidates.into_iter().combinations(level) {
                    if ci.is_independent(x, y, &z, cfg.alpha)? {
                        g.remove_edge(x, y)?;
                        sepsets.insert(x, y, &z)?;
                        break 'sides;
                    }
                }
            }
        }
        if !testable {
            break;
        }
        level += 1;
    }
    Ok((g, sepsets))
}

/// Orients `u *-> v <-* w` for every unshielded triple with `v` outside the
/// separating set of `u` and `w`.
pub fn orient_colliders(g: &mut Pag, sepsets: &SepsetTable) -> Result<(), DiscoveryError> {
    for v in 0..g.len() {
        let nbrs: Vec<usize> = g.neighbors(v)?.iter().copied().collect();
        for (i, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[i + 1..] {
                if g.adjacent(u, w)? {
                    continue;
                }
                let sep = sepsets.get(u, w).ok_or(DiscoveryError::MissingSepset(u, w))?;
                if !sep.contains(&v) {
                    g.set_mark(u, v, Arrow)?;
                    g.set_mark(w, v, Arrow)?;
                }
            }
        }
    }
    Ok(())
}

/// Nodes reachable from `x` along paths on which every inner node is a
/// collider or the middle of a triangle.
pub fn possible_dsep(g: &Pag, x: usize) -> Result<BTreeSet<usize>, DiscoveryError> {
    let mut found = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    for &v in g.neighbors(x)? {
        found.insert(v);
        seen.insert((x, v));
        queue.push_back((x, v));
    }
    while let Some((u, v)) = queue.pop_front() {
        for &w in g.neighbors(v)? {
            if w == u || w == x {
                continue;
            }
            let collider = g.mark_at(u, v)? == Arrow && g.mark_at(w, v)? == Arrow;
            if (collider || g.adjacent(u, w)?) && seen.insert((v, w)) {
                found.insert(w);
                queue.push_back((v, w));
            }
        }
    }
    Ok(found)
}

/// Re-tests every remaining edge against subsets of possible-d-sep sets.
/// Returns whether any edge was removed. Marks are left untouched.
pub fn refine_with_possible_dsep<T: IndependenceTest + ?Sized>(
    ci: &T,
    g: &mut Pag,
    sepsets: &mut SepsetTable,
    cfg: &DiscoveryConfig,
) -> Result<bool, DiscoveryError> {
    let cap = cfg.cap(ci);
    let pds: Vec<BTreeSet<usize>> = (0..g.len())
        .map(|x| possible_dsep(g, x))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(usize, usize)> = g.edges().map(|(x, y, _, _)| (x, y)).collect();
    let mut removed = false;
    for (x, y) in pairs {
        'sides: for (from, other) in [(x, y), (y, x)] {
            let candidates: Vec<usize> = pds[from]
                .iter()
                .copied()
                .filter(|&v| v != other && v != from)
                .collect();
            let adjacent_from = g.neighbors(from)?.clone();
            for size in 1..=candidates.len().min(cap) {
                for z in candidates.iter().copied().combinations(size) {
                    // subsets of the adjacency were already covered by the skeleton search
                    if z.iter().all(|v| adjacent_from.contains(v)) {
                        continue;
                    }
                    if ci.is_independent(x, y, &z, cfg.alpha)? {
                        g.remove_edge(x, y)?;
                        sepsets.insert(x, y, &z)?;
                        removed = true;
                        break 'sides;
                    }
                }
            }
        }
    }
    Ok(removed)
}

fn has_bidirected(g: &Pag) -> bool {
    g.edges().any(|(_, _, a, b)| a == Arrow && b == Arrow)
}

/// Applies the configured orientation rules until nothing changes.
pub fn apply_orientation_rules(
    g: &mut Pag,
    sepsets: &SepsetTable,
    rule_set: RuleSet,
) -> Result<(), DiscoveryError> {
    loop {
        let mut changed = false;
        changed |= rule1(g)?;
        changed |= rule2(g)?;
        changed |= rule3(g)?;
        changed |= rule4(g, sepsets)?;
        if rule_set == RuleSet::Extended {
            changed |= rule8(g)?;
            changed |= rule9(g)?;
            changed |= rule10(g)?;
        }
        if !changed {
            return Ok(());
        }
    }
}

/// Full pipeline: skeleton, colliders, optional possible-d-sep, rules.
pub fn learn_pag<T: IndependenceTest + ?Sized>(
    ci: &T,
    labels: Vec<ItemId>,
    cfg: &DiscoveryConfig,
) -> Result<(Pag, SepsetTable), DiscoveryError> {
    let (mut g, mut sepsets) = learn_skeleton(ci, labels, cfg)?;
    orient_colliders(&mut g, &sepsets)?;
    let run_pds = match cfg.possible_dsep {
        PossibleDsep::Always => true,
        PossibleDsep::Never => false,
        PossibleDsep::Auto => has_bidirected(&g),
    };
    if run_pds {
        refine_with_possible_dsep(ci, &mut g, &mut sepsets, cfg)?;
        g.reset_marks();
        orient_colliders(&mut g, &sepsets)?;
    }
    apply_orientation_rules(&mut g, &sepsets, cfg.rule_set)?;
    Ok((g, sepsets))
}

fn neighbors(g: &Pag, v: usize) -> Result<Vec<usize>, DiscoveryError> {
    Ok(g.neighbors(v)?.iter().copied().collect())
}

fn is(g: &Pag, from: usize, at: usize, m: EdgeMark) -> Result<bool, DiscoveryError> {
    Ok(g.mark_at(from, at)? == m)
}

/// `a -> b`: tail at `a`, arrow at `b`.
fn directed(g: &Pag, a: usize, b: usize) -> Result<bool, DiscoveryError> {
    Ok(is(g, b, a, Tail)? && is(g, a, b, Arrow)?)
}

// R1: a *-> b o-* c, a and c non-adjacent  =>  b -> c
fn rule1(g: &mut Pag) -> Result<bool, DiscoveryError> {
    let mut changed = false;
    for b in 0..g.len() {
        for a in neighbors(g, b)? {
            if !is(g, a, b, Arrow)? {
                continue;
            }
            for c in neighbors(g, b)? {
                if c == a || g.adjacent(a, c)? || !is(g, c, b, Circle)? {
                    continue;
                }
                g.set_mark(c, b, Tail)?;
                g.set_mark(b, c, Arrow)?;
                changed = true;
            }
        }
    }
    Ok(changed)
}

// R2: a -> b *-> c or a *-> b -> c, and a *-o c  =>  a *-> c
fn rule2(g: &mut Pag) -> Result<bool, DiscoveryError> {
    let mut changed = false;
    let edges: Vec<(usize, usize)> = g.edges().map(|(x, y, _, _)| (x, y)).collect();
    for (x, y) in edges {
        for (a, c) in [(x, y), (y, x)] {
            if !is(g, a, c, Circle)? {
                continue;
            }
            for b in neighbors(g, a)? {
                if b == c || !g.adjacent(b, c)? {
                    continue;
                }
                let first = directed(g, a, b)? && is(g, b, c, Arrow)?;
                let second = is(g, a, b, Arrow)? && directed(g, b, c)?;
                if first || second {
                    g.set_mark(a, c, Arrow)?;
                    changed = true;
                    break;
                }
            }
        }
    }
    Ok(changed)
}

// R3: a *-> b <-* c, a *-o d o-* c, a and c non-adjacent, d *-o b  =>  d *-> b
fn rule3(g: &mut Pag) -> Result<bool, DiscoveryError> {
    let mut changed = false;
    for b in 0..g.len() {
        let nbrs = neighbors(g, b)?;
        for &d in &nbrs {
            if !is(g, d, b, Circle)? {
                continue;
            }
            'pairs: for (i, &a) in nbrs.iter().enumerate() {
                for &c in &nbrs[i + 1..] {
                    if a == d || c == d || g.adjacent(a, c)? {
                        continue;
                    }
                    if !(is(g, a, b, Arrow)? && is(g, c, b, Arrow)?) {
                        continue;
                    }
                    if !(g.adjacent(a, d)? && g.adjacent(c, d)?) {
                        continue;
                    }
                    if is(g, a, d, Circle)? && is(g, c, d, Circle)? {
                        g.set_mark(d, b, Arrow)?;
                        changed = true;
                        break 'pairs;
                    }
                }
            }
        }
    }
    Ok(changed)
}

/// Shortest discriminating path `<t, ..., a, b, c>` for `b`, returned as
/// `(t, a)`.
fn discriminating_path(g: &Pag, b: usize, c: usize) -> Result<Option<(usize, usize)>, DiscoveryError> {
    for a in neighbors(g, b)? {
        if a == c || !g.adjacent(a, c)? {
            continue;
        }
        // a must be a collider on the path (arrow at a from b) and a parent of c
        if !(is(g, b, a, Arrow)? && directed(g, a, c)?) {
            continue;
        }
        // breadth-first backwards from a; each state is (head, visited path)
        let mut queue = VecDeque::from([vec![b, a]]);
        let mut expanded = BTreeSet::from([a]);
        while let Some(path) = queue.pop_front() {
            let head = *path.last().expect("non-empty path");
            for p in neighbors(g, head)? {
                if path.contains(&p) || p == c {
                    continue;
                }
                // head is a collider on the path: arrow at head from p
                if !is(g, p, head, Arrow)? {
                    continue;
                }
                if !g.adjacent(p, c)? {
                    return Ok(Some((p, a)));
                }
                if directed(g, p, c)? && expanded.insert(p) {
                    let mut next = path.clone();
                    next.push(p);
                    queue.push_back(next);
                }
            }
        }
    }
    Ok(None)
}

// R4: discriminating path <t, ..., a, b, c> with b o-* c:
// b in sepset(t, c) => b -> c, otherwise a <-> b <-> c
fn rule4(g: &mut Pag, sepsets: &SepsetTable) -> Result<bool, DiscoveryError> {
    let mut changed = false;
    let edges: Vec<(usize, usize)> = g.edges().map(|(x, y, _, _)| (x, y)).collect();
    for (x, y) in edges {
        for (b, c) in [(x, y), (y, x)] {
            if !is(g, c, b, Circle)? {
                continue;
            }
            let Some((t, a)) = discriminating_path(g, b, c)? else {
                continue;
            };
            let sep = sepsets.get(t, c).ok_or(DiscoveryError::MissingSepset(t, c))?;
            if sep.contains(&b) {
                g.set_mark(c, b, Tail)?;
                g.set_mark(b, c, Arrow)?;
            } else {
                g.set_mark(a, b, Arrow)?;
                g.set_mark(c, b, Arrow)?;
                g.set_mark(b, c, Arrow)?;
            }
            changed = true;
        }
    }
    Ok(changed)
}

/// Edges `a o-> c` as `(a, c)`.
fn circle_arrow_edges(g: &Pag) -> Vec<(usize, usize)> {
    g.edges()
        .filter_map(|(x, y, mx, my)| match (mx, my) {
            (Circle, Arrow) => Some((x, y)),
            (Arrow, Circle) => Some((y, x)),
            _ => None,
        })
        .collect()
}

// R8: a -> b -> c or a -o b -> c, and a o-> c  =>  a -> c
fn rule8(g: &mut Pag) -> Result<bool, DiscoveryError> {
    let mut changed = false;
    for (a, c) in circle_arrow_edges(g) {
        if !is(g, c, a, Circle)? {
            continue;
        }
        for b in neighbors(g, a)? {
            if b == c || !g.adjacent(b, c)? {
                continue;
            }
            let a_to_b = is(g, b, a, Tail)? && !is(g, a, b, Tail)?;
            if a_to_b && directed(g, b, c)? {
                g.set_mark(c, a, Tail)?;
                changed = true;
                break;
            }
        }
    }
    Ok(changed)
}

/// Edge `u *-* v` can be read as `u -> v`: no arrow at `u`, no tail at `v`.
fn potentially_directed(g: &Pag, u: usize, v: usize) -> Result<bool, DiscoveryError> {
    Ok(!is(g, v, u, Arrow)? && !is(g, u, v, Tail)?)
}

/// Whether an uncovered potentially directed path `<start, first, ..., target>`
/// exists that avoids `avoid`.
fn uncovered_pd_path(
    g: &Pag,
    start: usize,
    first: usize,
    target: usize,
    avoid: &[usize],
) -> Result<bool, DiscoveryError> {
    if !potentially_directed(g, start, first)? {
        return Ok(false);
    }
    if first == target {
        return Ok(true);
    }
    let mut path = vec![start, first];
    fn extend(
        g: &Pag,
        path: &mut Vec<usize>,
        target: usize,
        avoid: &[usize],
    ) -> Result<bool, DiscoveryError> {
        let n = path.len();
        let (prev, last) = (path[n - 2], path[n - 1]);
        for next in neighbors(g, last)? {
            if path.contains(&next) || avoid.contains(&next) {
                continue;
            }
            if g.adjacent(prev, next)? || !potentially_directed(g, last, next)? {
                continue;
            }
            if next == target {
                return Ok(true);
            }
            path.push(next);
            if extend(g, path, target, avoid)? {
                return Ok(true);
            }
            path.pop();
        }
        Ok(false)
    }
    extend(g, &mut path, target, avoid)
}

// R9: a o-> c with an uncovered p.d. path <a, b, ..., c>, b and c non-adjacent  =>  a -> c
fn rule9(g: &mut Pag) -> Result<bool, DiscoveryError> {
    let mut changed = false;
    for (a, c) in circle_arrow_edges(g) {
        if !is(g, c, a, Circle)? {
            continue;
        }
        for b in neighbors(g, a)? {
            if b == c || g.adjacent(b, c)? {
                continue;
            }
            if uncovered_pd_path(g, a, b, c, &[])? {
                g.set_mark(c, a, Tail)?;
                changed = true;
                break;
            }
        }
    }
    Ok(changed)
}

// R10: a o-> c, b -> c <- d, uncovered p.d. paths from a to b and from a to d
// whose second nodes m, w are distinct and non-adjacent  =>  a -> c
fn rule10(g: &mut Pag) -> Result<bool, DiscoveryError> {
    let mut changed = false;
    for (a, c) in circle_arrow_edges(g) {
        if !is(g, c, a, Circle)? {
            continue;
        }
        let parents: Vec<usize> = neighbors(g, c)?
            .into_iter()
            .filter(|&p| p != a)
            .filter(|&p| directed(g, p, c).unwrap_or(false))
            .collect();
        let firsts = |target: usize| -> Result<Vec<usize>, DiscoveryError> {
            let mut out = Vec::new();
            for m in neighbors(g, a)? {
                if m != c && uncovered_pd_path(g, a, m, target, &[c])? {
                    out.push(m);
                }
            }
            Ok(out)
        };
        let mut fire = false;
        'pairs: for (i, &b) in parents.iter().enumerate() {
            for &d in &parents[i + 1..] {
                let mb = firsts(b)?;
                let md = firsts(d)?;
                for &m in &mb {
                    for &w in &md {
                        if m != w && !g.adjacent(m, w)? {
                            fire = true;
                            break 'pairs;
                        }
                    }
                }
            }
        }
        if fire {
            g.set_mark(c, a, Tail)?;
            changed = true;
        }
    }
    Ok(changed)
}
