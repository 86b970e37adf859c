use std::collections::VecDeque;

use serde::Serialize;

use crate::topology::{build_box, ClassPattern, GapSequence, SiteGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Covering {
    /// Every probed site lies within `distance` of `D`.
    Bounded { distance: usize },
    /// The largest distance to `D` kept growing with the probe (or `D` is
    /// empty near the probe).
    UnboundedWithinProbe { at_half: Option<usize>, at_full: Option<usize> },
}

/// `sup_{|x|∞ <= r} dist_1(x, D)`, with distances computed in the box of
/// radius `2r` so that any dissipative site within `r` of the probe is seen.
/// `None` when some probed site has no dissipative site within reach.
fn sup_distance(pattern: &ClassPattern, d: usize, r: usize) -> Result<Option<usize>> {
    let compiled = pattern.compile(d)?;
    let outer = build_box(d, 2 * r)?;
    let mut dist = vec![usize::MAX; outer.site_count()];
    let mut queue = VecDeque::new();
    for (i, x) in outer.sites().enumerate() {
        if compiled.is_dissipative(&x) {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in outer.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let r = r as i64;
    let mut sup = 0;
    for (i, x) in outer.sites().enumerate() {
        if x.iter().all(|c| c.abs() <= r) {
            if dist[i] == usize::MAX || dist[i] > r as usize {
                return Ok(None);
            }
            sup = sup.max(dist[i]);
        }
    }
    Ok(Some(sup))
}

/// Compares the covering distance on the probe boxes of radius `radius / 2`
/// and `radius`. Equal values are taken as the bounded covering radius `R + 1`.
pub fn covering_radius(pattern: &ClassPattern, d: usize, radius: usize) -> Result<Covering> {
    if radius < 2 {
        return Err(Error::param("radius", "probe radius must be at least 2"));
    }
    let half = sup_distance(pattern, d, radius / 2)?;
    let full = sup_distance(pattern, d, radius)?;
    Ok(match (half, full) {
        (Some(h), Some(f)) if h == f => Covering::Bounded { distance: f },
        (h, f) => Covering::UnboundedWithinProbe { at_half: h, at_full: f },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiniteComplement {
    pub satisfied: bool,
    /// `|D^c ∩ Λ_r|` for `r = radius, 2 radius, 4 radius`.
    pub counts: [usize; 3],
}

impl FiniteComplement {
    pub fn count(&self) -> usize {
        self.counts[2]
    }
}

/// Counts non-dissipative sites over two probe doublings; a stable count is
/// taken as `|D^c| < ∞`.
pub fn finite_complement_check(pattern: &ClassPattern, d: usize, radius: usize) -> Result<FiniteComplement> {
    let compiled = pattern.compile(d)?;
    let mut counts = [0; 3];
    for (k, count) in counts.iter_mut().enumerate() {
        let lattice = build_box(d, radius << k)?;
        *count = lattice.sites().filter(|x| !compiled.is_dissipative(x)).count();
    }
    Ok(FiniteComplement {
        satisfied: counts[0] == counts[1] && counts[1] == counts[2],
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesVerdict {
    ConvergesCertified,
    DivergesCertified,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSeries {
    pub partial_sums: Vec<f64>,
    /// Largest ratio `a_{k+1} / a_k` over the trailing window.
    pub max_tail_ratio: f64,
    pub min_tail_ratio: f64,
    pub verdict: SeriesVerdict,
}

/// Terms `a_k = (d/(d+1))^k (r_{k+1} - r_k)^2` for `k < k_max` (fewer if the
/// sequence ends). Ratio test on the last `window` ratios: all at most
/// `1 - 1e-3` certifies convergence, all at least `1` divergence.
pub fn lines_gap_bound(gaps: &GapSequence, d: usize, k_max: usize, window: usize) -> Result<GapSeries> {
    if d == 0 || window == 0 {
        return Err(Error::param("window", "need d >= 1 and a positive window"));
    }
    let q = d as f64 / (d as f64 + 1.0);
    let mut terms = Vec::new();
    for k in 0..k_max {
        let (Some(a), Some(b)) = (gaps.value(k), gaps.value(k + 1)) else {
            break;
        };
        let gap = (b - a) as f64;
        terms.push(q.powi(k as i32) * gap * gap);
    }
    let mut partial_sums = Vec::with_capacity(terms.len());
    let mut s = 0.0;
    for t in &terms {
        s += t;
        partial_sums.push(s);
    }
    let ratios: Vec<f64> = terms.windows(2).map(|w| w[1] / w[0]).collect();
    if ratios.len() < window {
        return Ok(GapSeries {
            partial_sums,
            max_tail_ratio: f64::NAN,
            min_tail_ratio: f64::NAN,
            verdict: SeriesVerdict::Inconclusive,
        });
    }
    let tail = &ratios[ratios.len() - window..];
    let max = tail.iter().copied().fold(f64::MIN, f64::max);
    let min = tail.iter().copied().fold(f64::MAX, f64::min);
    let verdict = if max <= 1.0 - 1e-3 {
        SeriesVerdict::ConvergesCertified
    } else if min >= 1.0 {
        SeriesVerdict::DivergesCertified
    } else {
        SeriesVerdict::Inconclusive
    };
    Ok(GapSeries {
        partial_sums,
        max_tail_ratio: max,
        min_tail_ratio: min,
        verdict,
    })
}
