use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::topology::{Adjacency, SiteClass, SiteClassMap, SiteGraph};
use crate::{Error, Result};

/// Integer sandpile (grains, thresholds `q + 1`, `2d`, `2d + 1`) or the
/// continuous-height avalanche model with parameters `gamma`, `alpha`, `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    IntegerSandpile,
    ContinuousAvalanche,
}

/// Transfer per edge (`gamma`), extra loss at dissipative sites (`alpha`) and
/// gain at source sites (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToppleParams {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ToppleParams {
    fn default() -> Self {
        ToppleParams {
            gamma: 1.0,
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

/// Symmetric toppling matrix `Δ`: diagonal thresholds and `-gamma` on every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TopplingMatrix {
    mode: Mode,
    diag: Vec<f64>,
    gamma: f64,
    adjacency: Adjacency,
    has_source: bool,
}

/// Builds `Δ` on `graph`. The diagonal at `x` is `coordination * gamma`, plus
/// `alpha` if `x ∈ D`, minus `beta` if `x ∈ S`. Boundary sites need no extra
/// term: the missing neighbours already make them lose mass.
pub fn assemble_toppling_matrix<G: SiteGraph + ?Sized>(
    graph: &G,
    classes: &SiteClassMap,
    params: ToppleParams,
    mode: Mode,
) -> Result<TopplingMatrix> {
    let n = graph.site_count();
    if classes.len() != n {
        return Err(Error::param(
            "classes",
            format!("{} classes for {n} sites", classes.len()),
        ));
    }
    let ToppleParams { gamma, alpha, beta } = params;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", format!("{gamma} must be positive")));
    }
    let has_dissipative = classes.classes().contains(&SiteClass::Dissipative);
    let has_source = classes.classes().contains(&SiteClass::Source);
    let base = graph.coordination() as f64 * gamma;
    if has_dissipative && !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("{alpha} must be positive")));
    }
    if has_source && !(beta > 0.0 && beta < base) {
        return Err(Error::param(
            "beta",
            format!("{beta} must lie in (0, {base}) when sources are present"),
        ));
    }
    if mode == Mode::IntegerSandpile {
        if has_source {
            return Err(Error::ModeMismatch(
                "source sites need the continuous avalanche model".into(),
            ));
        }
        if gamma != 1.0 || alpha != 1.0 || beta != 0.0 {
            return Err(Error::ModeMismatch(format!(
                "integer sandpile needs gamma = 1, alpha = 1, beta = 0 (got {gamma}, {alpha}, {beta})"
            )));
        }
    }
    let diag = classes
        .classes()
        .iter()
        .map(|c| match c {
            SiteClass::Dissipative => base + alpha,
            SiteClass::Source => base - beta,
            SiteClass::Ordinary | SiteClass::Boundary => base,
        })
        .collect();
    let lists = (0..n).map(|i| graph.neighbors(i).to_vec()).collect();
    Ok(TopplingMatrix {
        mode,
        diag,
        gamma,
        adjacency: Adjacency::from_lists(lists),
        has_source,
    })
}

impl TopplingMatrix {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn has_source(&self) -> bool {
        self.has_source
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.neighbors(i)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if self.neighbors(i).contains(&j) {
            -self.gamma
        } else {
            0.0
        }
    }

    /// `out = Δ x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.len() {
            let s: f64 = self.neighbors(i).iter().map(|&j| x[j]).sum();
            out[i] = self.diag[i] * x[i] - self.gamma * s;
        }
    }

    pub fn edge_count(&self) -> usize {
        (0..self.len()).map(|i| self.neighbors(i).len()).sum::<usize>() / 2
    }

    /// `max |i - j|` over the non-zero pattern.
    pub fn bandwidth(&self) -> usize {
        (0..self.len())
            .flat_map(|i| self.neighbors(i).iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// Connected with `n - 1` edges.
    pub fn is_tree(&self) -> bool {
        self.len() > 0 && self.edge_count() + 1 == self.len() && self.distances_from(0).iter().all(|d| d.is_some())
    }

    /// `diag(x) >= gamma * deg(x)` everywhere, strictly somewhere.
    pub fn is_diagonally_dominant(&self) -> bool {
        let margins: Vec<f64> = (0..self.len())
            .map(|i| self.diag[i] - self.gamma * self.neighbors(i).len() as f64)
            .collect();
        margins.iter().all(|&m| m >= 0.0) && margins.iter().any(|&m| m > 0.0)
    }

    /// Thresholds as integers; `None` unless in integer mode.
    pub fn integer_diagonal(&self) -> Option<Vec<i64>> {
        (self.mode == Mode::IntegerSandpile).then(|| self.diag.iter().map(|&d| d as i64).collect())
    }

    /// Graph distances from `x` (breadth-first); `None` for unreachable sites.
    pub fn distances_from(&self, x: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[x] = Some(0);
        let mut queue = VecDeque::from([x]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued sites have a distance");
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Dense copy, row-major. Only for small volumes and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| (0..self.len()).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    /// Coordinate format, one `i j value` triple per non-zero, row-major.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.len() {
            let mut row: Vec<(usize, f64)> = self
                .neighbors(i)
                .iter()
                .map(|&j| (j, -self.gamma))
                .chain(std::iter::once((i, self.diag[i])))
                .collect();
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                writeln!(out, "{i} {j} {v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_box, build_qary_tree, build_site_classes, BoxLattice, ClassPattern};

    fn integer(graph: &BoxLattice, pattern: &ClassPattern) -> TopplingMatrix {
        let classes = build_site_classes(graph, pattern).unwrap();
        assemble_toppling_matrix(graph, &classes, ToppleParams::default(), Mode::IntegerSandpile).unwrap()
    }

    #[test]
    fn three_site_path() {
        let m = integer(&build_box(1, 1).unwrap(), &ClassPattern::Empty);
        assert_eq!(m.diagonal(), &[2.0, 2.0, 2.0]);
        assert_eq!(m.entry(0, 1), -1.0);
        assert_eq!(m.entry(1, 2), -1.0);
        assert_eq!(m.entry(0, 2), 0.0);
        assert_eq!(m.edge_count(), 2);
    }

    #[test]
    fn single_dissipative_site() {
        let m = integer(&build_box(1, 0).unwrap(), &ClassPattern::All);
        assert_eq!(m.diagonal(), &[3.0]);
    }

    #[test]
    fn source_threshold() {
        let b = build_box(2, 1).unwrap();
        let classes = build_site_classes(
            &b,
            &ClassPattern::FiniteSources {
                sources: vec![vec![0, 0]],
            },
        )
        .unwrap();
        let params = ToppleParams {
            gamma: 1.0,
            alpha: 0.5,
            beta: 0.25,
        };
        let m = assemble_toppling_matrix(&b, &classes, params, Mode::ContinuousAvalanche).unwrap();
        assert_eq!(m.diag(b.origin().unwrap()), 3.75);
        assert_eq!(m.diag(0), 4.5);
        assert!(m.has_source());
    }

    #[test]
    fn tree_matrix() {
        let t = build_qary_tree(2, 2).unwrap();
        let m = assemble_toppling_matrix(
            &t,
            &SiteClassMap::ordinary(&t),
            ToppleParams::default(),
            Mode::IntegerSandpile,
        )
        .unwrap();
        assert!(m.diagonal().iter().all(|&d| d == 3.0));
        assert!(m.is_tree());
        assert!(m.is_diagonally_dominant());
    }

    #[test]
    fn parameter_domain() {
        let b = build_box(1, 1).unwrap();
        let d = build_site_classes(&b, &ClassPattern::All).unwrap();
        let s = build_site_classes(
            &b,
            &ClassPattern::Explicit {
                dissipative: vec![],
                sources: vec![vec![0]],
            },
        )
        .unwrap();
        let cont = Mode::ContinuousAvalanche;
        let p = |gamma, alpha, beta| ToppleParams { gamma, alpha, beta };
        assert!(assemble_toppling_matrix(&b, &d, p(0.0, 1.0, 0.0), cont).is_err());
        assert!(assemble_toppling_matrix(&b, &d, p(1.0, 0.0, 0.0), cont).is_err());
        assert!(assemble_toppling_matrix(&b, &s, p(1.0, 1.0, 2.0), cont).is_err());
        assert!(assemble_toppling_matrix(&b, &s, p(1.0, 1.0, 0.0), cont).is_err());
        assert!(assemble_toppling_matrix(&b, &s, p(1.0, 1.0, 1.0), cont).is_ok());
        assert!(matches!(
            assemble_toppling_matrix(&b, &d, p(2.0, 1.0, 0.0), Mode::IntegerSandpile),
            Err(Error::ModeMismatch(_))
        ));
        assert!(matches!(
            assemble_toppling_matrix(&b, &s, p(1.0, 1.0, 1.0), Mode::IntegerSandpile),
            Err(Error::ModeMismatch(_))
        ));
    }

    #[test]
    fn symmetry_and_dominance() {
        let b = build_box(2, 3).unwrap();
        let m = integer(&b, &ClassPattern::Axis { axis: 1 });
        let dense = m.to_dense();
        for (i, row) in dense.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, dense[j][i]);
            }
        }
        assert!(m.is_diagonally_dominant());
        assert_eq!(m.bandwidth(), 7);
    }

    #[test]
    fn coordinate_export() {
        let m = integer(&BoxLattice::rectangle(&[2]).unwrap(), &ClassPattern::Empty);
        let mut buf = Vec::new();
        m.write_coordinate(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 0 2\n0 1 -1\n1 0 -1\n1 1 2\n");
    }
}
