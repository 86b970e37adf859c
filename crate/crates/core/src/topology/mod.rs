//! Finite site graphs: boxes in `Z^d`, rooted `q`-ary trees, trap fields and
//! site-class maps.
//!
//! Site indices are lexicographic over coordinates for boxes (first axis most
//! significant) and breadth-first for trees. Everything downstream (matrix
//! assembly, height vectors, Green rows) uses these indices.

mod classes;
mod lattice;
mod tree;

use std::io::Write;

pub use classes::{
    build_site_classes, ClassPattern, CompiledPattern, GapSequence, SiteClass, SiteClassMap,
};
pub use lattice::{build_box, BoxLattice};
pub use tree::{
    build_qary_tree, prune_to_galton_watson, sample_trap_field, RootedTree, TrapField,
    TrapProbability,
};

/// Default upper bound on the number of sites a single graph may hold.
pub const DEFAULT_SITE_BUDGET: u128 = 1 << 22;

/// Compressed adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    pub(crate) fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for list in lists {
            targets.extend(list);
            offsets.push(targets.len());
        }
        Adjacency { offsets, targets }
    }

    pub(crate) fn neighbors(&self, site: usize) -> &[usize] {
        &self.targets[self.offsets[site]..self.offsets[site + 1]]
    }
}

/// A finite, undirected, simple graph on `0..site_count()`.
pub trait SiteGraph {
    fn site_count(&self) -> usize;

    fn neighbors(&self, site: usize) -> &[usize];

    /// Degree of a bulk site in the infinite graph this volume is cut from:
    /// `2d` for `Z^d`, `q + 1` for the `q`-ary tree.
    fn coordination(&self) -> usize;

    /// Graph distance inside the ambient infinite graph.
    fn distance(&self, a: usize, b: usize) -> usize;

    /// Undirected edges `(u, v)` with `u < v`, in ascending order of `u`.
    fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.site_count() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    fn edge_count(&self) -> usize {
        (0..self.site_count())
            .map(|u| self.neighbors(u).len())
            .sum::<usize>()
            / 2
    }
}

/// Writes the edge list, one `u v` pair per line with 0-based indices.
pub fn write_edge_list<G: SiteGraph + ?Sized, W: Write>(graph: &G, mut out: W) -> std::io::Result<()> {
    for (u, v) in graph.edges() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_format() {
        let path = BoxLattice::rectangle(&[3]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&path, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1\n1 2\n");
    }
}
