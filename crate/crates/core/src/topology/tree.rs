use std::collections::VecDeque;

use rand::Rng;

use super::{Adjacency, SiteGraph, DEFAULT_SITE_BUDGET};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// A rooted tree with at most `q` children per vertex, truncated at
/// `max_depth` generations. Vertices are numbered breadth-first, root `0`.
///
/// The complete `q`-ary tree comes from [`build_qary_tree`]; random binomial
/// trees come from [`prune_to_galton_watson`].
#[derive(Debug, Clone, PartialEq)]
pub struct RootedTree {
    q: usize,
    max_depth: usize,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    adjacency: Adjacency,
}

/// Complete `q`-ary tree of the given depth.
pub fn build_qary_tree(q: usize, depth: usize) -> Result<RootedTree> {
    RootedTree::complete(q, depth, DEFAULT_SITE_BUDGET)
}

impl RootedTree {
    pub fn complete(q: usize, depth: usize, budget: u128) -> Result<Self> {
        if q < 2 {
            return Err(Error::param("q", "branching number must be at least 2"));
        }
        // (q^(depth+1) - 1) / (q - 1), with overflow treated as over budget
        let mut count = 0u128;
        let mut level = 1u128;
        for _ in 0..=depth {
            count = count.saturating_add(level);
            level = level.saturating_mul(q as u128);
        }
        if count > budget {
            return Err(Error::Capacity {
                what: "tree vertices",
                requested: count,
                budget,
            });
        }
        let len = count as usize;
        let mut parent = Vec::with_capacity(len);
        let mut depths = Vec::with_capacity(len);
        let mut children = vec![Vec::new(); len];
        parent.push(None);
        depths.push(0);
        for v in 1..len {
            let p = (v - 1) / q;
            parent.push(Some(p));
            depths.push(depths[p] + 1);
            children[p].push(v);
        }
        Ok(Self::from_parts(q, depth, parent, depths, children))
    }

    fn from_parts(
        q: usize,
        max_depth: usize,
        parent: Vec<Option<usize>>,
        depth: Vec<usize>,
        children: Vec<Vec<usize>>,
    ) -> Self {
        let lists = (0..parent.len())
            .map(|v| parent[v].into_iter().chain(children[v].iter().copied()).collect())
            .collect();
        RootedTree {
            q,
            max_depth,
            parent,
            depth,
            children,
            adjacency: Adjacency::from_lists(lists),
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Number of vertices in each generation `0..=max_depth`.
    pub fn generation_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.max_depth + 1];
        for &d in &self.depth {
            sizes[d] += 1;
        }
        sizes
    }
}

impl SiteGraph for RootedTree {
    fn site_count(&self) -> usize {
        self.parent.len()
    }

    fn neighbors(&self, site: usize) -> &[usize] {
        self.adjacency.neighbors(site)
    }

    fn coordination(&self) -> usize {
        self.q + 1
    }

    fn distance(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        let mut steps = 0;
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("non-root has a parent");
            steps += 1;
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("non-root has a parent");
            steps += 1;
        }
        while a != b {
            a = self.parent[a].expect("non-root has a parent");
            b = self.parent[b].expect("non-root has a parent");
            steps += 2;
        }
        steps
    }
}

/// How trap probabilities are assigned to vertices.
#[derive(Debug, Clone, PartialEq)]
pub enum TrapProbability {
    Uniform(f64),
    /// One entry per vertex; the root's entry is ignored.
    PerSite(Vec<f64>),
}

impl TrapProbability {
    fn at(&self, v: usize) -> f64 {
        match self {
            TrapProbability::Uniform(p) => *p,
            TrapProbability::PerSite(ps) => ps[v],
        }
    }
}

/// Trap indicators on a tree together with per-site trap and kill probabilities.
/// A perfect trap has `kill_prob == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapField {
    pub traps: Vec<bool>,
    pub trap_prob: Vec<f64>,
    pub kill_prob: Vec<f64>,
}

impl TrapField {
    pub fn is_trap(&self, v: usize) -> bool {
        self.traps[v]
    }

    pub fn trap_count(&self) -> usize {
        self.traps.iter().filter(|&&t| t).count()
    }

    pub fn is_perfect(&self) -> bool {
        self.kill_prob.iter().all(|&k| k == 1.0)
    }
}

/// Independent Bernoulli traps on every non-root vertex; the root is trapless.
pub fn sample_trap_field(
    tree: &RootedTree,
    trap_prob: &TrapProbability,
    kill_prob: f64,
    seed: u64,
) -> Result<TrapField> {
    sample_trap_field_with(tree, trap_prob, kill_prob, &mut stream_rng(seed, 0))
}

pub(crate) fn sample_trap_field_with<R: Rng>(
    tree: &RootedTree,
    trap_prob: &TrapProbability,
    kill_prob: f64,
    rng: &mut R,
) -> Result<TrapField> {
    let n = tree.site_count();
    if let TrapProbability::PerSite(ps) = trap_prob {
        if ps.len() != n {
            return Err(Error::param(
                "trap_prob",
                format!("expected {n} per-site probabilities, got {}", ps.len()),
            ));
        }
    }
    if !(kill_prob > 0.0 && kill_prob <= 1.0) {
        return Err(Error::param("kill_prob", format!("{kill_prob} is not in (0, 1]")));
    }
    let mut probs = Vec::with_capacity(n);
    let mut traps = Vec::with_capacity(n);
    for v in 0..n {
        let p = trap_prob.at(v);
        if v != tree.root() && !(p > 0.0 && p <= 1.0) {
            return Err(Error::param(
                "trap_prob",
                format!("probability {p} at vertex {v} is not in (0, 1]"),
            ));
        }
        probs.push(p);
        traps.push(v != tree.root() && rng.random_bool(p));
    }
    Ok(TrapField {
        traps,
        trap_prob: probs,
        kill_prob: vec![kill_prob; n],
    })
}

/// Deletes every trap together with its descendants. With uniform trap
/// probability `p` the result is a Galton-Watson tree with `Bin(q, 1 - p)`
/// offspring, truncated at the original depth.
pub fn prune_to_galton_watson(tree: &RootedTree, field: &TrapField) -> Result<RootedTree> {
    if field.traps.len() != tree.site_count() {
        return Err(Error::param("field", "trap field does not match the tree"));
    }
    if !field.is_perfect() {
        return Err(Error::param("field", "pruning needs perfect traps (kill_prob = 1)"));
    }
    let mut parent = vec![None];
    let mut depth = vec![0];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut queue = VecDeque::from([(tree.root(), 0usize)]);
    while let Some((old, new)) = queue.pop_front() {
        for &c in tree.children(old) {
            if field.traps[c] {
                continue;
            }
            let id = parent.len();
            parent.push(Some(new));
            depth.push(depth[new] + 1);
            children.push(Vec::new());
            children[new].push(id);
            queue.push_back((c, id));
        }
    }
    Ok(RootedTree::from_parts(tree.q, tree.max_depth, parent, depth, children))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_tree_sizes() {
        assert_eq!(build_qary_tree(2, 0).unwrap().site_count(), 1);
        assert_eq!(build_qary_tree(2, 3).unwrap().site_count(), 15);
        assert_eq!(build_qary_tree(3, 2).unwrap().site_count(), 13);
        assert!(build_qary_tree(1, 3).is_err());
        assert!(matches!(
            RootedTree::complete(2, 20, 1000),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn complete_tree_degrees() {
        let t = build_qary_tree(3, 4).unwrap();
        assert_eq!(t.neighbors(t.root()).len(), 3);
        for v in 1..t.site_count() {
            assert!(t.depth(v) <= 4);
            if t.depth(v) < 4 {
                assert_eq!(t.neighbors(v).len(), 4);
            } else {
                assert_eq!(t.neighbors(v).len(), 1);
            }
        }
        assert_eq!(t.generation_sizes(), vec![1, 3, 9, 27, 81]);
    }

    #[test]
    fn tree_distance() {
        let t = build_qary_tree(2, 3).unwrap();
        // 7 and 8 are siblings under 3; 3 is under 1.
        assert_eq!(t.distance(7, 8), 2);
        assert_eq!(t.distance(7, 0), 3);
        assert_eq!(t.distance(7, 14), 6);
        assert_eq!(t.distance(5, 5), 0);
    }

    #[test]
    fn all_traps_and_no_traps() {
        let t = build_qary_tree(2, 4).unwrap();
        let f = sample_trap_field(&t, &TrapProbability::Uniform(1.0), 1.0, 3).unwrap();
        assert_eq!(f.trap_count(), t.site_count() - 1);
        assert!(!f.is_trap(0));
        let pruned = prune_to_galton_watson(&t, &f).unwrap();
        assert_eq!(pruned.site_count(), 1);

        let none = TrapField {
            traps: vec![false; t.site_count()],
            trap_prob: vec![0.5; t.site_count()],
            kill_prob: vec![1.0; t.site_count()],
        };
        assert_eq!(prune_to_galton_watson(&t, &none).unwrap(), t);
    }

    #[test]
    fn invalid_probabilities() {
        let t = build_qary_tree(2, 2).unwrap();
        assert!(sample_trap_field(&t, &TrapProbability::Uniform(0.0), 1.0, 1).is_err());
        assert!(sample_trap_field(&t, &TrapProbability::Uniform(1.2), 1.0, 1).is_err());
        assert!(sample_trap_field(&t, &TrapProbability::Uniform(0.5), 0.0, 1).is_err());
        assert!(sample_trap_field(&t, &TrapProbability::PerSite(vec![0.5; 3]), 1.0, 1).is_err());
        // root entry is ignored, even when zero
        let mut ps = vec![0.5; t.site_count()];
        ps[0] = 0.0;
        assert!(sample_trap_field(&t, &TrapProbability::PerSite(ps), 1.0, 1).is_ok());
    }

    #[test]
    fn soft_traps_cannot_be_pruned() {
        let t = build_qary_tree(2, 2).unwrap();
        let f = sample_trap_field(&t, &TrapProbability::Uniform(0.5), 2.0 / 3.0, 1).unwrap();
        assert!(prune_to_galton_watson(&t, &f).is_err());
    }

    #[test]
    fn seeded_fields_are_identical() {
        let t = build_qary_tree(2, 8).unwrap();
        let a = sample_trap_field(&t, &TrapProbability::Uniform(0.4), 1.0, 99).unwrap();
        let b = sample_trap_field(&t, &TrapProbability::Uniform(0.4), 1.0, 99).unwrap();
        let c = sample_trap_field(&t, &TrapProbability::Uniform(0.4), 1.0, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.traps, c.traps);
    }

    #[test]
    fn pruned_tree_is_bfs_ordered() {
        let t = build_qary_tree(2, 6).unwrap();
        let f = sample_trap_field(&t, &TrapProbability::Uniform(0.3), 1.0, 5).unwrap();
        let g = prune_to_galton_watson(&t, &f).unwrap();
        for v in 1..g.site_count() {
            assert!(g.depth(v) >= g.depth(v - 1));
            assert!(g.parent(v).unwrap() < v);
            assert!(g.children(v).len() <= 2);
        }
    }
}
