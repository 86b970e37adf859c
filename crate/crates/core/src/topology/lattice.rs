use super::{Adjacency, SiteGraph, DEFAULT_SITE_BUDGET};
use crate::{Error, Result};

/// An axis-aligned box of `Z^d` with nearest-neighbour adjacency.
///
/// [`build_box`] gives the centred cube `[-n, n]^d`; [`BoxLattice::rectangle`]
/// gives `[0, s_1 - 1] x ... x [0, s_d - 1]`, which is how paths and odd-sized
/// rectangles are built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxLattice {
    lo: Vec<i64>,
    hi: Vec<i64>,
    strides: Vec<usize>,
    radius: Option<usize>,
    len: usize,
    adjacency: Adjacency,
}

/// The centred box `Λ_n = [-n, n]^d ∩ Z^d`.
pub fn build_box(d: usize, n: usize) -> Result<BoxLattice> {
    BoxLattice::new(d, n)
}

impl BoxLattice {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        Self::with_budget(d, n, DEFAULT_SITE_BUDGET)
    }

    pub fn with_budget(d: usize, n: usize, budget: u128) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        let n = n as i64;
        let mut lattice = Self::from_bounds(vec![-n; d], vec![n; d], budget)?;
        lattice.radius = Some(n as usize);
        Ok(lattice)
    }

    pub fn rectangle(sides: &[usize]) -> Result<Self> {
        Self::rectangle_with_budget(sides, DEFAULT_SITE_BUDGET)
    }

    pub fn rectangle_with_budget(sides: &[usize], budget: u128) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::param("sides", "dimension must be at least 1"));
        }
        if sides.contains(&0) {
            return Err(Error::param("sides", "every side must hold at least one site"));
        }
        let hi = sides.iter().map(|&s| s as i64 - 1).collect();
        Self::from_bounds(vec![0; sides.len()], hi, budget)
    }

    fn from_bounds(lo: Vec<i64>, hi: Vec<i64>, budget: u128) -> Result<Self> {
        let d = lo.len();
        let sides: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| (h - l + 1) as usize).collect();
        let requested = sides
            .iter()
            .try_fold(1u128, |acc, &s| acc.checked_mul(s as u128))
            .unwrap_or(u128::MAX);
        if requested > budget {
            return Err(Error::Capacity {
                what: "box lattice sites",
                requested,
                budget,
            });
        }
        let len = requested as usize;
        let mut strides = vec![1usize; d];
        for axis in (0..d.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * sides[axis + 1];
        }
        let mut lists = Vec::with_capacity(len);
        for idx in 0..len {
            let mut nbrs = Vec::with_capacity(2 * d);
            let mut rem = idx;
            for axis in 0..d {
                let offset = rem / strides[axis];
                rem %= strides[axis];
                if offset > 0 {
                    nbrs.push(idx - strides[axis]);
                }
                if offset + 1 < sides[axis] {
                    nbrs.push(idx + strides[axis]);
                }
            }
            nbrs.sort_unstable();
            lists.push(nbrs);
        }
        Ok(BoxLattice {
            lo,
            hi,
            strides,
            radius: None,
            len,
            adjacency: Adjacency::from_lists(lists),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// `Some(n)` for boxes built as `[-n, n]^d`.
    pub fn radius(&self) -> Option<usize> {
        self.radius
    }

    pub fn sides(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l + 1) as usize)
            .collect()
    }

    pub fn coords(&self, index: usize) -> Vec<i64> {
        let mut rem = index;
        self.strides
            .iter()
            .zip(&self.lo)
            .map(|(&stride, &lo)| {
                let offset = rem / stride;
                rem %= stride;
                lo + offset as i64
            })
            .collect()
    }

    pub fn index(&self, coords: &[i64]) -> Option<usize> {
        if coords.len() != self.dim() {
            return None;
        }
        let mut idx = 0;
        for axis in 0..self.dim() {
            let c = coords[axis];
            if c < self.lo[axis] || c > self.hi[axis] {
                return None;
            }
            idx += (c - self.lo[axis]) as usize * self.strides[axis];
        }
        Some(idx)
    }

    /// Index of the all-zero coordinate, if it lies in the box.
    pub fn origin(&self) -> Option<usize> {
        self.index(&vec![0; self.dim()])
    }

    /// Sites with fewer than `2d` neighbours inside the box.
    pub fn is_boundary(&self, index: usize) -> bool {
        self.adjacency.neighbors(index).len() < 2 * self.dim()
    }

    /// Iterates over coordinates in index order.
    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len).map(|i| self.coords(i))
    }
}

impl SiteGraph for BoxLattice {
    fn site_count(&self) -> usize {
        self.len
    }

    fn neighbors(&self, site: usize) -> &[usize] {
        self.adjacency.neighbors(site)
    }

    fn coordination(&self) -> usize {
        2 * self.dim()
    }

    fn distance(&self, a: usize, b: usize) -> usize {
        self.coords(a)
            .iter()
            .zip(self.coords(b))
            .map(|(x, y)| (x - y).unsigned_abs() as usize)
            .sum()
    }
}
