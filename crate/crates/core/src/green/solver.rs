use serde::Serialize;

use crate::sandpile::TopplingMatrix;
use crate::{Error, Result};

/// Relative residual every solve must meet: `‖Δg - b‖∞ <= RESIDUAL_TOLERANCE ‖g‖∞ ‖b‖∞`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Band storage above this many entries switches to conjugate gradients.
pub const BAND_STORAGE_CAP: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Leaf-to-root elimination; no fill-in on trees.
    Tree,
    /// Cholesky factor stored in band form.
    Banded,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient,
}

#[derive(Debug, Clone)]
enum Factor {
    Tree {
        /// Elimination order, leaves before parents; root last.
        order: Vec<usize>,
        parent: Vec<Option<usize>>,
        pivots: Vec<f64>,
    },
    Banded {
        bw: usize,
        /// Row `i` holds `L[i][i - bw..=i]`, left-padded.
        l: Vec<f64>,
    },
    Iterative,
}

/// Factorizes `Δ` once and then solves `Δ g = b` for as many right-hand
/// sides as needed. Construction fails with [`Error::NotPositiveDefinite`]
/// when a pivot is not positive.
#[derive(Debug, Clone)]
pub struct GreenSolver<'m> {
    matrix: &'m TopplingMatrix,
    factor: Factor,
}

impl<'m> GreenSolver<'m> {
    pub fn new(matrix: &'m TopplingMatrix) -> Result<Self> {
        let kind = if matrix.is_tree() {
            SolverKind::Tree
        } else if matrix.len().saturating_mul(matrix.bandwidth() + 1) <= BAND_STORAGE_CAP {
            SolverKind::Banded
        } else {
            SolverKind::ConjugateGradient
        };
        Self::with_kind(matrix, kind)
    }

    pub fn with_kind(matrix: &'m TopplingMatrix, kind: SolverKind) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::param("matrix", "empty volume"));
        }
        let factor = match kind {
            SolverKind::Tree => {
                if !matrix.is_tree() {
                    return Err(Error::param("kind", "tree elimination needs a tree matrix"));
                }
                tree_factor(matrix)?
            }
            SolverKind::Banded => {
                let bw = matrix.bandwidth();
                let need = matrix.len().saturating_mul(bw + 1);
                if need > BAND_STORAGE_CAP {
                    return Err(Error::Capacity {
                        what: "band storage",
                        requested: need as u128,
                        budget: BAND_STORAGE_CAP as u128,
                    });
                }
                banded_cholesky(matrix, bw)?
            }
            SolverKind::ConjugateGradient => {
                if matrix.has_source() {
                    let lam = smallest_eigenvalue(matrix, 2000);
                    if lam <= 0.0 {
                        return Err(Error::NotPositiveDefinite { row: 0, pivot: lam });
                    }
                }
                Factor::Iterative
            }
        };
        Ok(GreenSolver { matrix, factor })
    }

    pub fn kind(&self) -> SolverKind {
        match self.factor {
            Factor::Tree { .. } => SolverKind::Tree,
            Factor::Banded { .. } => SolverKind::Banded,
            Factor::Iterative => SolverKind::ConjugateGradient,
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    /// Solves `Δ g = b` and checks the residual.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.len() {
            return Err(Error::param("b", format!("{} entries for {} sites", b.len(), self.len())));
        }
        let g = match &self.factor {
            Factor::Tree { order, parent, pivots } => tree_solve(self.matrix.gamma(), order, parent, pivots, b),
            Factor::Banded { bw, l } => banded_solve(*bw, l, b),
            Factor::Iterative => conjugate_gradient(self.matrix, b),
        };
        let residual = residual_inf(self.matrix, &g, b);
        let scale = inf_norm(&g) * inf_norm(b);
        if residual > RESIDUAL_TOLERANCE * scale {
            return Err(Error::Residual {
                residual,
                tolerance: RESIDUAL_TOLERANCE * scale,
            });
        }
        Ok(g)
    }

    /// Row `x` of `G = Δ^{-1}`.
    pub fn green_row(&self, x: usize) -> Result<Vec<f64>> {
        if x >= self.len() {
            return Err(Error::SiteOutOfRange(x));
        }
        let mut e = vec![0.0; self.len()];
        e[x] = 1.0;
        self.solve(&e)
    }

    /// `Σ_y G(x, y)` for every `x`, from a single solve against the all-ones
    /// vector (`G` is symmetric).
    pub fn row_sums(&self) -> Result<Vec<f64>> {
        self.solve(&vec![1.0; self.len()])
    }
}

/// Row `x` of `G` for the given matrix.
pub fn solve_green_row(matrix: &TopplingMatrix, x: usize) -> Result<Vec<f64>> {
    GreenSolver::new(matrix)?.green_row(x)
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn residual_inf(matrix: &TopplingMatrix, g: &[f64], b: &[f64]) -> f64 {
    let mut out = vec![0.0; g.len()];
    matrix.apply(g, &mut out);
    out.iter().zip(b).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn tree_factor(matrix: &TopplingMatrix) -> Result<Factor> {
    let n = matrix.len();
    // breadth-first from site 0 gives parents; reversed, leaves come first
    let mut parent = vec![None; n];
    let mut bfs = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    seen[0] = true;
    bfs.push(0);
    let mut head = 0;
    while head < bfs.len() {
        let u = bfs[head];
        head += 1;
        for &v in matrix.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                bfs.push(v);
            }
        }
    }
    let order: Vec<usize> = bfs.into_iter().rev().collect();
    let g2 = matrix.gamma() * matrix.gamma();
    let mut pivots = matrix.diagonal().to_vec();
    for &v in &order {
        if pivots[v] <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                row: v,
                pivot: pivots[v],
            });
        }
        if let Some(p) = parent[v] {
            pivots[p] -= g2 / pivots[v];
        }
    }
    Ok(Factor::Tree { order, parent, pivots })
}

fn tree_solve(gamma: f64, order: &[usize], parent: &[Option<usize>], pivots: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for &v in order {
        if let Some(p) = parent[v] {
            y[p] += gamma * y[v] / pivots[v];
        }
    }
    let mut x = vec![0.0; b.len()];
    for &v in order.iter().rev() {
        let from_parent = parent[v].map_or(0.0, |p| gamma * x[p]);
        x[v] = (y[v] + from_parent) / pivots[v];
    }
    x
}

fn banded_cholesky(matrix: &TopplingMatrix, bw: usize) -> Result<Factor> {
    Ok(Factor::Banded {
        bw,
        l: band_factor(matrix, bw)?,
    })
}

/// Cholesky factor in band storage: row `i` holds `L[i][i - bw..=i]`.
pub(crate) fn band_factor(matrix: &TopplingMatrix, bw: usize) -> Result<Vec<f64>> {
    let n = matrix.len();
    let w = bw + 1;
    let mut l = vec![0.0; n * w];
    // entry L[i][j] lives at l[i * w + (j + bw - i)]
    let at = |i: usize, j: usize| i * w + j + bw - i;
    for i in 0..n {
        l[at(i, i)] = matrix.diag(i);
        for &j in matrix.neighbors(i) {
            if j < i {
                l[at(i, j)] = -matrix.gamma();
            }
        }
    }
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        for j in lo..=i {
            let k0 = lo.max(j.saturating_sub(bw));
            let mut s = l[at(i, j)];
            for k in k0..j {
                s -= l[at(i, k)] * l[at(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                }
                l[at(i, i)] = s.sqrt();
            } else {
                l[at(i, j)] = s / l[at(j, j)];
            }
        }
    }
    Ok(l)
}

fn banded_solve(bw: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let w = bw + 1;
    let at = |i: usize, j: usize| i * w + j + bw - i;
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in i.saturating_sub(bw)..i {
            s -= l[at(i, k)] * y[k];
        }
        y[i] = s / l[at(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..(i + bw + 1).min(n) {
            s -= l[at(k, i)] * y[k];
        }
        y[i] = s / l[at(i, i)];
    }
    y
}

fn conjugate_gradient(matrix: &TopplingMatrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let diag = matrix.diagonal();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let target = 1e-3 * RESIDUAL_TOLERANCE * inf_norm(b);
    for _ in 0..10 * n + 100 {
        if inf_norm(&r) <= target {
            break;
        }
        matrix.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Estimate of the smallest eigenvalue of `Δ` by power iteration on
/// `λ_max I - Δ`, after a power iteration for `λ_max`.
pub fn smallest_eigenvalue(matrix: &TopplingMatrix, iterations: usize) -> f64 {
    let n = matrix.len();
    if n == 0 {
        return f64::NAN;
    }
    let power = |shift: f64, sign: f64| -> f64 {
        // deterministic, non-symmetric start vector
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
        let mut w = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..iterations.max(1) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            matrix.apply(&v, &mut w);
            for i in 0..n {
                w[i] = shift * v[i] + sign * w[i];
            }
            lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            std::mem::swap(&mut v, &mut w);
        }
        lambda
    };
    let lambda_max = power(0.0, 1.0);
    lambda_max - power(lambda_max, -1.0)
}
