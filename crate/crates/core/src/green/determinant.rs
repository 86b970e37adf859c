use serde::Serialize;

use super::solver::{band_factor, BAND_STORAGE_CAP};
use crate::sandpile::{Mode, TopplingMatrix, DEFAULT_ENUMERATION_CAP};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Determinant {
    /// Exact value for integer-mode volumes under the enumeration cap.
    pub exact: Option<i128>,
    /// `log det Δ` from the Cholesky factor.
    pub log_value: f64,
}

impl Determinant {
    /// Floating-point value; may overflow to infinity for large volumes.
    pub fn value(&self) -> f64 {
        match self.exact {
            Some(v) => v as f64,
            None => self.log_value.exp(),
        }
    }
}

/// `det Δ`. Integer-mode volumes whose stable-configuration count is at most
/// the enumeration cap also get the exact integer (fraction-free
/// elimination in `i128`).
pub fn determinant(matrix: &TopplingMatrix) -> Result<Determinant> {
    let n = matrix.len();
    let bw = matrix.bandwidth();
    let need = n.saturating_mul(bw + 1);
    if need > BAND_STORAGE_CAP {
        return Err(Error::Capacity {
            what: "band storage",
            requested: need as u128,
            budget: BAND_STORAGE_CAP as u128,
        });
    }
    let log_value = log_det_banded(matrix, bw)?;
    let exact = match matrix.integer_diagonal() {
        Some(diag) if matrix.mode() == Mode::IntegerSandpile => {
            let configs = diag
                .iter()
                .try_fold(1u128, |acc, &d| acc.checked_mul(d as u128))
                .unwrap_or(u128::MAX);
            if configs <= DEFAULT_ENUMERATION_CAP {
                bareiss(matrix)
            } else {
                None
            }
        }
        _ => None,
    };
    Ok(Determinant { exact, log_value })
}

fn log_det_banded(matrix: &TopplingMatrix, bw: usize) -> Result<f64> {
    let l = band_factor(matrix, bw)?;
    let w = bw + 1;
    Ok((0..matrix.len()).map(|i| 2.0 * l[i * w + bw].ln()).sum())
}

/// Fraction-free Gaussian elimination; `None` on overflow or a zero pivot.
fn bareiss(matrix: &TopplingMatrix) -> Option<i128> {
    let n = matrix.len();
    let mut a: Vec<Vec<i128>> = matrix
        .to_dense()
        .iter()
        .map(|row| row.iter().map(|&v| v as i128).collect())
        .collect();
    let mut prev = 1i128;
    for k in 0..n.saturating_sub(1) {
        if a[k][k] == 0 {
            return None;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = a[i][j].checked_mul(a[k][k])?.checked_sub(a[i][k].checked_mul(a[k][j])?)?;
                a[i][j] = num / prev;
            }
        }
        prev = a[k][k];
    }
    Some(a[n - 1][n - 1])
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
    fn small_determinants() {
        let path = |k| integer(&BoxLattice::rectangle(&[k]).unwrap(), &ClassPattern::Empty);
        for k in 1..=8 {
            // tridiagonal (2, -1): det = k + 1
            let det = determinant(&path(k)).unwrap();
            assert_eq!(det.exact, Some(k as i128 + 1));
            assert!((det.log_value - ((k + 1) as f64).ln()).abs() < 1e-12);
        }
        let one = integer(&build_box(1, 0).unwrap(), &ClassPattern::All);
        assert_eq!(determinant(&one).unwrap().exact, Some(3));
    }

    #[test]
    fn large_volume_has_float_only() {
        let m = integer(&build_box(2, 4).unwrap(), &ClassPattern::Empty);
        let det = determinant(&m).unwrap();
        assert!(det.exact.is_none());
        assert!(det.log_value > 0.0);
    }
}
