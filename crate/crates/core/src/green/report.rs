use std::io::Write;

use serde::{Deserialize, Serialize};

use super::solver::GreenSolver;
use crate::rng::par_map;
use crate::sandpile::{assemble_toppling_matrix, Mode, ToppleParams, TopplingMatrix};
use crate::topology::{build_box, build_site_classes, BoxLattice, ClassPattern};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    BoundedEvidence,
    GrowingEvidence,
    Inconclusive,
}

/// Thresholds of the verdict heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictRule {
    /// Successive increment ratios must stay below this for bounded evidence.
    pub ratio: f64,
    /// Number of trailing increments inspected.
    pub window: usize,
    /// Increments below `negligible * row_sum` count as zero.
    pub negligible: f64,
}

impl Default for VerdictRule {
    fn default() -> Self {
        VerdictRule {
            ratio: 0.9,
            window: 3,
            negligible: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthDiagnostics {
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    pub last_ratio: Option<f64>,
    /// Row sums non-decreasing in the volume up to `1e-9`.
    pub monotone: bool,
}

/// Applies `rule` to a row-sum sequence over increasing volumes.
pub fn classify(row_sums: &[f64], rule: &VerdictRule) -> (Verdict, GrowthDiagnostics) {
    let increments: Vec<f64> = row_sums.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<f64> = increments.windows(2).map(|w| w[1] / w[0]).collect();
    let monotone = row_sums.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    let diag = GrowthDiagnostics {
        last_ratio: ratios.last().copied(),
        increments: increments.clone(),
        ratios,
        monotone,
    };
    let window = rule.window.max(2);
    if increments.len() < window {
        return (Verdict::Inconclusive, diag);
    }
    let tail = &increments[increments.len() - window..];
    let scale = row_sums.last().copied().unwrap_or(0.0).abs();
    let negligible = |d: f64| d.abs() <= rule.negligible * scale;
    let verdict = if tail.iter().all(|&d| negligible(d)) {
        Verdict::BoundedEvidence
    } else if tail.windows(2).all(|w| w[1] >= w[0]) && tail.iter().all(|&d| d > 0.0) {
        Verdict::GrowingEvidence
    } else if tail
        .windows(2)
        .all(|w| negligible(w[1]) || (w[0] > 0.0 && w[1] / w[0] < rule.ratio))
    {
        Verdict::BoundedEvidence
    } else {
        Verdict::Inconclusive
    };
    (verdict, diag)
}

/// Inputs of a row-sum sequence over centred boxes `Λ_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSumSpec {
    pub d: usize,
    pub pattern: ClassPattern,
    /// Probe site coordinates.
    pub x: Vec<i64>,
    pub volumes: Vec<usize>,
    #[serde(default)]
    pub params: ToppleParams,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub rule: VerdictRule,
}

fn default_mode() -> Mode {
    Mode::IntegerSandpile
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenReport {
    pub volumes: Vec<usize>,
    pub x: Vec<i64>,
    /// Index of the probe in each volume.
    pub x_indices: Vec<usize>,
    pub row_sums: Vec<f64>,
    pub verdict: Verdict,
    pub growth: GrowthDiagnostics,
}

/// Box, classes and toppling matrix of one volume.
pub fn volume_matrix(
    d: usize,
    n: usize,
    pattern: &ClassPattern,
    params: ToppleParams,
    mode: Mode,
) -> Result<(BoxLattice, TopplingMatrix)> {
    let lattice = build_box(d, n)?;
    let classes = build_site_classes(&lattice, pattern)?;
    let matrix = assemble_toppling_matrix(&lattice, &classes, params, mode)?;
    Ok((lattice, matrix))
}

/// `Σ_y G_n(x, y)` for every volume of `spec`, solved in parallel.
pub fn row_sum_sequence(spec: &RowSumSpec) -> Result<GreenReport> {
    if spec.volumes.is_empty() || spec.volumes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("volumes", "must be non-empty and strictly increasing"));
    }
    if spec.x.len() != spec.d {
        return Err(Error::param("x", format!("probe has {} coordinates, d = {}", spec.x.len(), spec.d)));
    }
    let smallest = spec.volumes[0] as i64;
    if spec.x.iter().any(|c| c.abs() > smallest) {
        return Err(Error::param("x", "probe must lie inside the smallest volume"));
    }
    let results = par_map(spec.volumes.len(), |i| -> Result<(usize, f64)> {
        let (lattice, matrix) = volume_matrix(spec.d, spec.volumes[i], &spec.pattern, spec.params, spec.mode)?;
        let x = lattice.index(&spec.x).expect("probe checked against the smallest volume");
        let sums = GreenSolver::new(&matrix)?.row_sums()?;
        Ok((x, sums[x]))
    });
    let mut x_indices = Vec::with_capacity(results.len());
    let mut row_sums = Vec::with_capacity(results.len());
    for r in results {
        let (x, s) = r?;
        x_indices.push(x);
        row_sums.push(s);
    }
    let (verdict, growth) = classify(&row_sums, &spec.rule);
    Ok(GreenReport {
        volumes: spec.volumes.clone(),
        x: spec.x.clone(),
        x_indices,
        row_sums,
        verdict,
        growth,
    })
}

impl GreenReport {
    /// CSV rows `n,x_index,row_sum`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "x_index", "row_sum"])?;
        for ((n, x), s) in self.volumes.iter().zip(&self.x_indices).zip(&self.row_sums) {
            w.write_record([n.to_string(), x.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON block with the verdict and growth diagnostics.
    pub fn verdict_json(&self) -> serde_json::Value {
        serde_json::json!({
            "x": self.x,
            "verdict": self.verdict,
            "growth": self.growth,
        })
    }
}

/// `Σ_{y : d(root, y) > n} G(root, y)` for `n = 0, 1, ..., max distance - 1`.
pub fn tail_sums_by_distance(matrix: &TopplingMatrix, root: usize) -> Result<Vec<f64>> {
    let row = GreenSolver::new(matrix)?.green_row(root)?;
    let dist = matrix.distances_from(root);
    let max = dist.iter().flatten().copied().max().unwrap_or(0);
    let mut by_distance = vec![0.0; max + 1];
    for (g, d) in row.iter().zip(&dist) {
        if let Some(d) = d {
            by_distance[*d] += g;
        }
    }
    // suffix sums strictly beyond n
    let mut out = vec![0.0; max];
    let mut acc = 0.0;
    for n in (0..max).rev() {
        acc += by_distance[n + 1];
        out[n] = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_rules() {
        let rule = VerdictRule::default();
        assert_eq!(classify(&[1.0, 2.0, 4.0, 8.0], &rule).0, Verdict::GrowingEvidence);
        assert_eq!(classify(&[1.0, 1.5, 1.6, 1.61], &rule).0, Verdict::BoundedEvidence);
        assert_eq!(classify(&[1.0, 1.0, 1.0, 1.0], &rule).0, Verdict::BoundedEvidence);
        assert_eq!(classify(&[1.0, 2.0, 2.5, 3.2], &rule).0, Verdict::Inconclusive);
        assert_eq!(classify(&[1.0, 2.0, 3.0], &rule).0, Verdict::Inconclusive);
        let (_, diag) = classify(&[1.0, 0.5, 0.7], &rule);
        assert!(!diag.monotone);
    }

    #[test]
    fn all_sinks_line() {
        let spec = RowSumSpec {
            d: 1,
            pattern: ClassPattern::All,
            x: vec![0],
            volumes: vec![2, 4, 8, 16, 32],
            params: ToppleParams::default(),
            mode: Mode::IntegerSandpile,
            rule: VerdictRule::default(),
        };
        let r = row_sum_sequence(&spec).unwrap();
        assert!(r.row_sums.iter().all(|&s| s > 0.0 && s <= 1.0 + 1e-12));
        assert!((r.row_sums.last().unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(r.verdict, Verdict::BoundedEvidence);
        assert!(r.growth.monotone);
    }

    #[test]
    fn csv_layout() {
        let spec = RowSumSpec {
            d: 1,
            pattern: ClassPattern::Empty,
            x: vec![0],
            volumes: vec![1, 2],
            params: ToppleParams::default(),
            mode: Mode::IntegerSandpile,
            rule: VerdictRule::default(),
        };
        let r = row_sum_sequence(&spec).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,x_index,row_sum");
        // 3-site path, centre row sum 2
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(&fields[..2], &["1", "1"]);
        assert!((fields[2].parse::<f64>().unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(r.verdict_json()["verdict"], "inconclusive");
    }

    #[test]
    fn probe_outside_rejected() {
        let spec = RowSumSpec {
            d: 2,
            pattern: ClassPattern::Empty,
            x: vec![0, 3],
            volumes: vec![2, 4],
            params: ToppleParams::default(),
            mode: Mode::IntegerSandpile,
            rule: VerdictRule::default(),
        };
        assert!(row_sum_sequence(&spec).is_err());
    }
}
