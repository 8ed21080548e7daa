//! Directed acyclic graphs with d-separation queries.
//!
//! Used as ground truth: a [`DSeparationOracle`] answers independence queries
//! over a subset of observed nodes, the rest being latent.

use std::collections::{BTreeSet, VecDeque};

use crate::ci::{CiError, IndependenceTest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<BTreeSet<usize>>,
}

impl Dag {
    pub fn new(n: usize) -> Self {
        Dag {
            parents: vec![BTreeSet::new(); n],
        }
    }

    /// Builds a DAG from `(from, to)` pairs; `None` if a cycle or bad index appears.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Option<Self> {
        let mut d = Dag::new(n);
        for &(from, to) in edges {
            if from >= n || to >= n || from == to {
                return None;
            }
            d.parents[to].insert(from);
        }
        d.topological_order().map(|_| d)
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self, v: usize) -> &BTreeSet<usize> {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&c| self.parents[c].contains(&v))
    }

    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(BTreeSet::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for (c, deg) in indegree.iter_mut().enumerate() {
                if self.parents[c].contains(&v) {
                    *deg -= 1;
                    if *deg == 0 {
                        queue.push_back(c);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Ancestors of `v`, including `v` itself.
    pub fn ancestors(&self, v: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([v]);
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for &p in &self.parents[u] {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        self.ancestors(b).contains(&a)
    }

    /// `x ⫫ y | z` in the DAG, via the moral graph of the ancestral set.
    pub fn d_separated(&self, x: usize, y: usize, z: &[usize]) -> bool {
        let mut relevant = BTreeSet::new();
        for &v in [x, y].iter().chain(z) {
            relevant.extend(self.ancestors(v));
        }
        let n = self.len();
        let mut adj = vec![BTreeSet::new(); n];
        for &v in &relevant {
            let ps: Vec<usize> = self.parents[v].iter().copied().collect();
            for &p in &ps {
                adj[v].insert(p);
                adj[p].insert(v);
            }
            for (i, &a) in ps.iter().enumerate() {
                for &b in &ps[i + 1..] {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
        let blocked: BTreeSet<usize> = z.iter().copied().collect();
        let mut seen = BTreeSet::from([x]);
        let mut stack = vec![x];
        while let Some(u) = stack.pop() {
            if u == y {
                return false;
            }
            for &w in &adj[u] {
                if !blocked.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        true
    }
}

/// Independence oracle answering from d-separation in a DAG.
///
/// Learner index `i` refers to DAG node `observed[i]`.
#[derive(Debug, Clone)]
pub struct DSeparationOracle {
    dag: Dag,
    observed: Vec<usize>,
}

impl DSeparationOracle {
    pub fn new(dag: Dag, observed: Vec<usize>) -> Self {
        DSeparationOracle { dag, observed }
    }

    pub fn fully_observed(dag: Dag) -> Self {
        let observed = (0..dag.len()).collect();
        Self::new(dag, observed)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    fn map(&self, i: usize) -> Result<usize, CiError> {
        self.observed.get(i).copied().ok_or(CiError::IndexOutOfRange(i))
    }
}

impl IndependenceTest for DSeparationOracle {
    fn is_independent(&self, x: usize, y: usize, z: &[usize], _alpha: f64) -> Result<bool, CiError> {
        let zs = z.iter().map(|&v| self.map(v)).collect::<Result<Vec<_>, _>>()?;
        Ok(self.dag.d_separated(self.map(x)?, self.map(y)?, &zs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Exhaustive path enumeration: x and y are d-connected given z iff some
    // simple undirected path has every collider in An(z) and no
    // non-collider in z.
    fn d_connected_by_paths(dag: &Dag, x: usize, y: usize, z: &[usize]) -> bool {
        let n = dag.len();
        let zset: BTreeSet<usize> = z.iter().copied().collect();
        let mut anc_z = BTreeSet::new();
        for &v in z {
            anc_z.extend(dag.ancestors(v));
        }
        let edge = |a: usize, b: usize| dag.parents(b).contains(&a);
        fn walk(
            path: &mut Vec<usize>,
            y: usize,
            n: usize,
            ok: &dyn Fn(&[usize]) -> bool,
            adjacent: &dyn Fn(usize, usize) -> bool,
        ) -> bool {
            let last = *path.last().unwrap();
            if last == y {
                return ok(path);
            }
            for next in 0..n {
                if path.contains(&next) || !adjacent(last, next) {
                    continue;
                }
                path.push(next);
                if walk(path, y, n, ok, adjacent) {
                    return true;
                }
                path.pop();
            }
            false
        }
        let ok = |p: &[usize]| {
            p.windows(3).all(|w| {
                let collider = edge(w[0], w[1]) && edge(w[2], w[1]);
                if collider {
                    anc_z.contains(&w[1])
                } else {
                    !zset.contains(&w[1])
                }
            })
        };
        let adjacent = |a: usize, b: usize| edge(a, b) || edge(b, a);
        walk(&mut vec![x], y, n, &ok, &adjacent)
    }

    #[test]
    fn chain_fork_collider() {
        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(!chain.d_separated(0, 2, &[]));
        assert!(chain.d_separated(0, 2, &[1]));
        let collider = Dag::from_edges(3, &[(0, 1), (2, 1)]).unwrap();
        assert!(collider.d_separated(0, 2, &[]));
        assert!(!collider.d_separated(0, 2, &[1]));
    }

    #[test]
    fn descendant_of_collider_opens_path() {
        let g = Dag::from_edges(4, &[(0, 1), (2, 1), (1, 3)]).unwrap();
        assert!(g.d_separated(0, 2, &[]));
        assert!(!g.d_separated(0, 2, &[3]));
    }

    #[test]
    fn cycles_are_rejected() {
        assert!(Dag::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).is_none());
        assert!(Dag::from_edges(2, &[(0, 0)]).is_none());
    }

    #[test]
    fn moralization_agrees_with_path_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let n = rng.random_range(3..7);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.random_bool(0.4) {
                        edges.push((a, b));
                    }
                }
            }
            let dag = Dag::from_edges(n, &edges).unwrap();
            for x in 0..n {
                for y in (x + 1)..n {
                    let others: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                    for mask in 0..(1u32 << others.len()) {
                        let z: Vec<usize> = others
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, &v)| v)
                            .collect();
                        assert_eq!(
                            dag.d_separated(x, y, &z),
                            !d_connected_by_paths(&dag, x, y, &z),
                            "{edges:?} {x} {y} {z:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_maps_observed_indices() {
        // latent 2 confounds observed 0 and 1
        let dag = Dag::from_edges(3, &[(2, 0), (2, 1)]).unwrap();
        let oracle = DSeparationOracle::new(dag, vec![0, 1]);
        assert!(!oracle.is_independent(0, 1, &[], 0.05).unwrap());
        assert!(oracle.is_independent(0, 5, &[], 0.05).is_err());
    }
}
