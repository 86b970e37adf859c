use serde::Serialize;

use super::stabilize::{check_compatible, Grain, HeightConfig};
use super::{Mode, TopplingMatrix};
use crate::{Error, Result};

/// Default cap on `Π diag(x)` for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BurnResult {
    pub recurrent: bool,
    /// Sites in the order they burnt.
    pub order: Vec<usize>,
}

/// Burning test: repeatedly burn an unburnt site `x` with
/// `η(x) >= gamma * #(unburnt neighbours of x)`. Recurrent iff every site burns.
pub fn burning_test<G: Grain>(matrix: &TopplingMatrix, eta: &HeightConfig<G>) -> Result<BurnResult> {
    check_compatible(matrix, &eta.heights)?;
    if !eta.is_stable(matrix) {
        return Err(Error::param("eta", "burning test needs a stable configuration"));
    }
    let n = matrix.len();
    let gamma = matrix.gamma();
    let mut unburnt_nbrs: Vec<usize> = (0..n).map(|x| matrix.neighbors(x).len()).collect();
    let mut burnt = vec![false; n];
    let can_burn = |x: usize, k: usize| eta.heights[x].to_f64() >= gamma * k as f64;
    let mut stack: Vec<usize> = (0..n).rev().filter(|&x| can_burn(x, unburnt_nbrs[x])).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(x) = stack.pop() {
        if burnt[x] {
            continue;
        }
        burnt[x] = true;
        order.push(x);
        for &y in matrix.neighbors(x) {
            if !burnt[y] {
                unburnt_nbrs[y] -= 1;
                if can_burn(y, unburnt_nbrs[y]) {
                    stack.push(y);
                }
            }
        }
    }
    Ok(BurnResult {
        recurrent: order.len() == n,
        order,
    })
}

/// Every recurrent configuration of an integer sandpile, in lexicographic
/// order of the height vector.
pub fn enumerate_recurrent(matrix: &TopplingMatrix, cap: u128) -> Result<Vec<HeightConfig<i64>>> {
    if matrix.mode() != Mode::IntegerSandpile {
        return Err(Error::ModeMismatch(
            "enumeration needs the integer sandpile".into(),
        ));
    }
    let radix = matrix.integer_diagonal().expect("integer mode");
    let total = radix
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
        .unwrap_or(u128::MAX);
    if total > cap {
        return Err(Error::Capacity {
            what: "stable configurations",
            requested: total,
            budget: cap,
        });
    }
    let n = radix.len();
    let mut eta = HeightConfig::new(vec![0i64; n]);
    let mut out = Vec::new();
    loop {
        if burning_test(matrix, &eta)?.recurrent {
            out.push(eta.clone());
        }
        // odometer-style increment, last site fastest
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            eta.heights[i] += 1;
            if eta.heights[i] < radix[i] {
                break;
            }
            eta.heights[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandpile::{assemble_toppling_matrix, ToppleParams};
    use crate::topology::{build_box, build_site_classes, BoxLattice, ClassPattern};

    fn integer(b: &BoxLattice, p: &ClassPattern) -> TopplingMatrix {
        let c = build_site_classes(b, p).unwrap();
        assemble_toppling_matrix(b, &c, ToppleParams::default(), Mode::IntegerSandpile).unwrap()
    }

    #[test]
    fn two_site_burning() {
        let m = integer(&BoxLattice::rectangle(&[2]).unwrap(), &ClassPattern::Empty);
        let rec = |h: [i64; 2]| burning_test(&m, &HeightConfig::new(h.to_vec())).unwrap().recurrent;
        assert!(rec([1, 1]));
        assert!(rec([1, 0]));
        assert!(rec([0, 1]));
        assert!(!rec([0, 0]));
        let all = enumerate_recurrent(&m, DEFAULT_ENUMERATION_CAP).unwrap();
        let heights: Vec<Vec<i64>> = all.into_iter().map(|c| c.heights).collect();
        assert_eq!(heights, vec![vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn three_site_path_count() {
        let m = integer(&BoxLattice::rectangle(&[3]).unwrap(), &ClassPattern::Empty);
        assert_eq!(enumerate_recurrent(&m, DEFAULT_ENUMERATION_CAP).unwrap().len(), 4);
    }

    #[test]
    fn single_dissipative_site() {
        let m = integer(&build_box(1, 0).unwrap(), &ClassPattern::All);
        for k in 0..3 {
            let r = burning_test(&m, &HeightConfig::new(vec![k])).unwrap();
            assert!(r.recurrent);
            assert_eq!(r.order, vec![0]);
        }
        assert_eq!(enumerate_recurrent(&m, DEFAULT_ENUMERATION_CAP).unwrap().len(), 3);
    }

    #[test]
    fn burn_order_is_recorded() {
        let m = integer(&BoxLattice::rectangle(&[3]).unwrap(), &ClassPattern::Empty);
        let r = burning_test(&m, &HeightConfig::new(vec![1, 0, 1])).unwrap();
        assert!(r.recurrent);
        assert_eq!(r.order.len(), 3);
        assert_eq!(*r.order.last().unwrap(), 1);
    }

    #[test]
    fn enumeration_cap() {
        let m = integer(&build_box(2, 2).unwrap(), &ClassPattern::Empty);
        assert!(matches!(
            enumerate_recurrent(&m, DEFAULT_ENUMERATION_CAP),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn unstable_input_rejected() {
        let m = integer(&BoxLattice::rectangle(&[2]).unwrap(), &ClassPattern::Empty);
        assert!(burning_test(&m, &HeightConfig::new(vec![2, 0])).is_err());
    }
}
