use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub title: &'static str,
    /// Book chapter and section that explain the claim being checked.
    pub anchor: &'static str,
}

const CATALOG: [CatalogEntry; 7] = [
    CatalogEntry {
        id: "e1",
        title: "survival tail of the annealed trapped walk on the binary tree decays exponentially",
        anchor: "trapped-walks.md#survival-tail",
    },
    CatalogEntry {
        id: "e2",
        title: "stationary mean odometer equals the Green function on a path and a square",
        anchor: "toppling.md#dhars-formula",
    },
    CatalogEntry {
        id: "e3",
        title: "number of recurrent configurations equals det of the toppling matrix",
        anchor: "burning.md#counting-recurrent-configurations",
    },
    CatalogEntry {
        id: "e4",
        title: "row-sum verdicts for all, even, empty and axis dissipation patterns",
        anchor: "green.md#criticality-verdicts",
    },
    CatalogEntry {
        id: "e5",
        title: "Green tails and avalanche diameters on binomial trees",
        anchor: "trapped-walks.md#avalanches-on-binomial-trees",
    },
    CatalogEntry {
        id: "e6",
        title: "killed-walk survival time bounds the Green row sum",
        anchor: "green.md#walk-representation",
    },
    CatalogEntry {
        id: "e7",
        title: "pinning free energy scan over gamma and the factorized single-source mass",
        anchor: "sources.md#gamma-scan",
    },
];

/// The seven named experiments.
pub fn list_experiments() -> &'static [CatalogEntry] {
    &CATALOG
}

/// Case-insensitive lookup by id.
pub fn find_experiment(id: &str) -> Result<&'static CatalogEntry> {
    CATALOG
        .iter()
        .find(|e| e.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| Error::UnknownExperiment(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        assert_eq!(list_experiments().len(), 7);
        assert!(list_experiments().iter().all(|e| e.anchor.contains(".md#")));
        assert_eq!(find_experiment("E1").unwrap().id, "e1");
        assert!(matches!(find_experiment("e9"), Err(Error::UnknownExperiment(_))));
    }
}
