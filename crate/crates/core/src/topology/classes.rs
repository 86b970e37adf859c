use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{BoxLattice, SiteGraph};
use crate::{Error, Result};

/// Role of a site in the toppling dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiteClass {
    Ordinary,
    Dissipative,
    Source,
    /// An otherwise ordinary site of a finite box with a neighbour missing.
    Boundary,
}

/// Positions `0 < r_1 < r_2 < ...` of the dissipative hyperplanes `x_d = ±r_k`
/// (plus `x_d = 0`) of a lines pattern. `r_0 = 0` for every variant except
/// `Geometric`, where `r_k = base^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GapSequence {
    /// `r_1, r_2, ...` listed explicitly; finitely many lines.
    Explicit { values: Vec<i64> },
    /// `r_k = k^exponent`.
    Power { exponent: u32 },
    /// `r_k = base^k`.
    Geometric { base: i64 },
    /// `r_k = k (k + 1) / 2`.
    Triangular,
}

impl GapSequence {
    /// `r_k`, or `None` past the end of an explicit list or on overflow.
    pub fn value(&self, k: usize) -> Option<i64> {
        match self {
            GapSequence::Explicit { values } => {
                if k == 0 {
                    Some(0)
                } else {
                    values.get(k - 1).copied()
                }
            }
            GapSequence::Power { exponent } => (k as i64).checked_pow(*exponent),
            GapSequence::Geometric { base } => base.checked_pow(u32::try_from(k).ok()?),
            GapSequence::Triangular => (k as i64).checked_mul(k as i64 + 1).map(|v| v / 2),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            GapSequence::Explicit { values } => {
                if values.first().is_some_and(|&v| v <= 0) {
                    return Err(Error::MalformedPattern(
                        "line positions must be positive".into(),
                    ));
                }
                if values.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::MalformedPattern(
                        "line positions must be strictly increasing".into(),
                    ));
                }
            }
            GapSequence::Power { exponent } if *exponent == 0 => {
                return Err(Error::MalformedPattern("power exponent must be >= 1".into()));
            }
            GapSequence::Geometric { base } if *base < 2 => {
                return Err(Error::MalformedPattern("geometric base must be >= 2".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether `|y|` is `0` or some `r_k` with `k >= 1`.
    pub fn is_line(&self, y: i64) -> bool {
        let y = y.abs();
        if y == 0 {
            return true;
        }
        if let GapSequence::Explicit { values } = self {
            return values.binary_search(&y).is_ok();
        }
        let mut k = 1;
        while let Some(r) = self.value(k) {
            if r == y {
                return true;
            }
            if r > y {
                return false;
            }
            k += 1;
        }
        false
    }
}

/// Declarative description of which sites are dissipative or sources.
/// Patterns are defined on all of `Z^d`; [`CompiledPattern`] evaluates them
/// lazily and [`build_site_classes`] restricts them to a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassPattern {
    /// `D = ∅`.
    Empty,
    /// `D = Z^d`.
    All,
    /// The coordinate axis `{x : x_j = 0 for j != axis}`.
    Axis { axis: usize },
    /// `{x : x_i ≡ 0 mod period_i for all i}`.
    Sublattice { period: Vec<i64> },
    /// Hyperplanes `x_d ∈ {0, ±r_1, ±r_2, ...}` orthogonal to the last axis.
    Lines { gaps: GapSequence },
    /// Explicit finite sets of dissipative and source sites.
    Explicit {
        #[serde(default)]
        dissipative: Vec<Vec<i64>>,
        #[serde(default)]
        sources: Vec<Vec<i64>>,
    },
    /// Every site except the finitely many `holes`.
    FiniteComplement { holes: Vec<Vec<i64>> },
    /// Finitely many sources, every other site dissipative.
    FiniteSources { sources: Vec<Vec<i64>> },
}

impl ClassPattern {
    /// Checks the pattern against the dimension and compiles it.
    pub fn compile(&self, d: usize) -> Result<CompiledPattern> {
        if d == 0 {
            return Err(Error::MalformedPattern("dimension must be at least 1".into()));
        }
        let set = |sites: &[Vec<i64>], what: &str| -> Result<HashSet<Vec<i64>>> {
            for s in sites {
                if s.len() != d {
                    return Err(Error::MalformedPattern(format!(
                        "{what} site {s:?} has {} coordinates, expected {d}",
                        s.len()
                    )));
                }
            }
            Ok(sites.iter().cloned().collect())
        };
        match self {
            ClassPattern::Axis { axis } if *axis >= d => {
                return Err(Error::MalformedPattern(format!(
                    "axis {axis} out of range for dimension {d}"
                )));
            }
            ClassPattern::Sublattice { period } => {
                if period.len() != d {
                    return Err(Error::MalformedPattern(format!(
                        "period vector has {} entries, expected {d}",
                        period.len()
                    )));
                }
                if period.iter().any(|&p| p <= 0) {
                    return Err(Error::MalformedPattern("periods must be positive".into()));
                }
            }
            ClassPattern::Lines { gaps } => gaps.validate()?,
            _ => {}
        }
        let (dissipative, sources) = match self {
            ClassPattern::Explicit {
                dissipative,
                sources,
            } => {
                let (d_set, s_set) = (set(dissipative, "dissipative")?, set(sources, "source")?);
                if d_set.intersection(&s_set).next().is_some() {
                    return Err(Error::MalformedPattern(
                        "a site cannot be both dissipative and a source".into(),
                    ));
                }
                (d_set, s_set)
            }
            ClassPattern::FiniteComplement { holes } => (set(holes, "hole")?, HashSet::new()),
            ClassPattern::FiniteSources { sources } => (HashSet::new(), set(sources, "source")?),
            _ => (HashSet::new(), HashSet::new()),
        };
        Ok(CompiledPattern {
            pattern: self.clone(),
            dim: d,
            dissipative,
            sources,
        })
    }
}

/// A validated pattern that classifies arbitrary sites of `Z^d`.
#[derive(Debug, Clone)]
pub struct CompiledPattern {
    pattern: ClassPattern,
    dim: usize,
    dissipative: HashSet<Vec<i64>>,
    sources: HashSet<Vec<i64>>,
}

impl CompiledPattern {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pattern(&self) -> &ClassPattern {
        &self.pattern
    }

    /// Class of `x` in the infinite lattice: never [`SiteClass::Boundary`].
    pub fn class_of(&self, x: &[i64]) -> SiteClass {
        debug_assert_eq!(x.len(), self.dim);
        let dissipative = match &self.pattern {
            ClassPattern::Empty => false,
            ClassPattern::All => true,
            ClassPattern::Axis { axis } => x
                .iter()
                .enumerate()
                .all(|(j, &c)| j == *axis || c == 0),
            ClassPattern::Sublattice { period } => {
                x.iter().zip(period).all(|(&c, &p)| c.rem_euclid(p) == 0)
            }
            ClassPattern::Lines { gaps } => gaps.is_line(x[self.dim - 1]),
            ClassPattern::Explicit { .. } => {
                if self.sources.contains(x) {
                    return SiteClass::Source;
                }
                self.dissipative.contains(x)
            }
            ClassPattern::FiniteComplement { .. } => !self.dissipative.contains(x),
            ClassPattern::FiniteSources { .. } => {
                if self.sources.contains(x) {
                    return SiteClass::Source;
                }
                true
            }
        };
        if dissipative {
            SiteClass::Dissipative
        } else {
            SiteClass::Ordinary
        }
    }

    pub fn is_dissipative(&self, x: &[i64]) -> bool {
        self.class_of(x) == SiteClass::Dissipative
    }
}

/// Per-site classes of a finite volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteClassMap {
    classes: Vec<SiteClass>,
}

/// Restricts `pattern` to `lattice`. Ordinary sites with a missing neighbour
/// are labelled [`SiteClass::Boundary`]; dissipative and source labels take
/// precedence so that `D_n = D ∩ Λ_n` and `S_n = S ∩ Λ_n`.
pub fn build_site_classes(lattice: &BoxLattice, pattern: &ClassPattern) -> Result<SiteClassMap> {
    let compiled = pattern.compile(lattice.dim())?;
    let classes = (0..lattice.site_count())
        .map(|i| match compiled.class_of(&lattice.coords(i)) {
            SiteClass::Ordinary if lattice.is_boundary(i) => SiteClass::Boundary,
            c => c,
        })
        .collect();
    Ok(SiteClassMap { classes })
}

impl SiteClassMap {
    /// Every site ordinary; the map used for trees.
    pub fn ordinary<G: SiteGraph + ?Sized>(graph: &G) -> Self {
        SiteClassMap {
            classes: vec![SiteClass::Ordinary; graph.site_count()],
        }
    }

    pub fn from_classes(classes: Vec<SiteClass>) -> Self {
        SiteClassMap { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, site: usize) -> SiteClass {
        self.classes[site]
    }

    pub fn classes(&self) -> &[SiteClass] {
        &self.classes
    }

    fn with_class(&self, class: SiteClass) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&i| self.classes[i] == class)
            .collect()
    }

    /// `D_n`, in index order.
    pub fn dissipative(&self) -> Vec<usize> {
        self.with_class(SiteClass::Dissipative)
    }

    /// `S_n`, in index order.
    pub fn sources(&self) -> Vec<usize> {
        self.with_class(SiteClass::Source)
    }

    pub fn boundary(&self) -> Vec<usize> {
        self.with_class(SiteClass::Boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_box;

    fn coords_of(lattice: &BoxLattice, sites: &[usize]) -> Vec<Vec<i64>> {
        sites.iter().map(|&i| lattice.coords(i)).collect()
    }

    #[test]
    fn axis_pattern() {
        let b = build_box(2, 3).unwrap();
        let classes = build_site_classes(&b, &ClassPattern::Axis { axis: 0 }).unwrap();
        let d = coords_of(&b, &classes.dissipative());
        assert_eq!(d.len(), 7);
        assert!(d.iter().all(|c| c[1] == 0));
        // 4 * 6 boundary sites minus the two on the axis
        assert_eq!(classes.boundary().len(), 22);
    }

    #[test]
    fn even_sublattice_in_one_dimension() {
        let b = build_box(1, 4).unwrap();
        let classes = build_site_classes(&b, &ClassPattern::Sublattice { period: vec![2] }).unwrap();
        let d = coords_of(&b, &classes.dissipative());
        assert_eq!(d, vec![vec![-4], vec![-2], vec![0], vec![2], vec![4]]);
    }

    #[test]
    fn lines_pattern_rows() {
        let b = build_box(2, 5).unwrap();
        let pattern = ClassPattern::Lines {
            gaps: GapSequence::Explicit {
                values: vec![1, 3, 6],
            },
        };
        let classes = build_site_classes(&b, &pattern).unwrap();
        let mut rows: Vec<i64> = coords_of(&b, &classes.dissipative())
            .iter()
            .map(|c| c[1])
            .collect();
        rows.sort_unstable();
        rows.dedup();
        assert_eq!(rows, vec![-3, -1, 0, 1, 3]);
    }

    #[test]
    fn gap_sequences() {
        let tri = GapSequence::Triangular;
        assert_eq!((0..5).map(|k| tri.value(k).unwrap()).collect::<Vec<_>>(), vec![0, 1, 3, 6, 10]);
        assert!(tri.is_line(-6) && !tri.is_line(7));
        let geo = GapSequence::Geometric { base: 2 };
        assert!(geo.is_line(8) && !geo.is_line(6));
        let pow = GapSequence::Power { exponent: 2 };
        assert!(pow.is_line(9) && !pow.is_line(10));
        let ex = GapSequence::Explicit { values: vec![2, 5] };
        assert_eq!(ex.value(3), None);
        assert!(ex.is_line(5) && !ex.is_line(7));
    }

    #[test]
    fn sources_and_complements() {
        let b = build_box(2, 2).unwrap();
        let classes = build_site_classes(
            &b,
            &ClassPattern::FiniteSources {
                sources: vec![vec![0, 0]],
            },
        )
        .unwrap();
        assert_eq!(classes.sources(), vec![b.origin().unwrap()]);
        assert_eq!(classes.dissipative().len(), 24);

        let holes: Vec<Vec<i64>> = (-1..=1)
            .flat_map(|x| (-1..=1).map(move |y| vec![x, y]))
            .collect();
        let classes = build_site_classes(&b, &ClassPattern::FiniteComplement { holes }).unwrap();
        assert_eq!(classes.dissipative().len(), 16);
        assert!(classes.boundary().is_empty());
    }

    #[test]
    fn malformed_patterns() {
        let b = build_box(2, 2).unwrap();
        let bad = [
            ClassPattern::Axis { axis: 2 },
            ClassPattern::Sublattice { period: vec![2] },
            ClassPattern::Sublattice { period: vec![2, 0] },
            ClassPattern::Lines {
                gaps: GapSequence::Explicit { values: vec![3, 2] },
            },
            ClassPattern::Lines {
                gaps: GapSequence::Geometric { base: 1 },
            },
            ClassPattern::Explicit {
                dissipative: vec![vec![0]],
                sources: vec![],
            },
            ClassPattern::Explicit {
                dissipative: vec![vec![0, 0]],
                sources: vec![vec![0, 0]],
            },
        ];
        for p in bad {
            assert!(
                matches!(build_site_classes(&b, &p), Err(Error::MalformedPattern(_))),
                "{p:?} accepted"
            );
        }
    }

    #[test]
    fn patterns_round_trip_through_toml() {
        #[derive(Serialize, Deserialize)]
        struct Wrap {
            pattern: ClassPattern,
        }
        let text = "pattern = { kind = \"lines\", gaps = { kind = \"power\", exponent = 2 } }";
        let w: Wrap = toml::from_str(text).unwrap();
        assert_eq!(
            w.pattern,
            ClassPattern::Lines {
                gaps: GapSequence::Power { exponent: 2 }
            }
        );
    }
}
