use std::collections::VecDeque;
use std::fmt::Debug;
use std::ops::{AddAssign, SubAssign};

use rand::Rng;
use serde::Serialize;

use super::{Mode, TopplingMatrix};
use crate::{Error, Result};

/// Default per-site toppling budget.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Height values: `i64` grains for the integer sandpile, `f64` mass for the
/// avalanche model.
pub trait Grain: Copy + PartialOrd + AddAssign + SubAssign + Default + Debug + Send + Sync {
    const INTEGRAL: bool;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Grain for i64 {
    const INTEGRAL: bool = true;
    fn from_f64(v: f64) -> Self {
        v as i64
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Grain for f64 {
    const INTEGRAL: bool = false;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeightConfig<G> {
    pub heights: Vec<G>,
}

impl<G: Grain> HeightConfig<G> {
    pub fn new(heights: Vec<G>) -> Self {
        HeightConfig { heights }
    }

    pub fn zeros(n: usize) -> Self {
        HeightConfig {
            heights: vec![G::default(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    /// `heights(x) < diag(x)` at every site.
    pub fn is_stable(&self, matrix: &TopplingMatrix) -> bool {
        self.heights
            .iter()
            .zip(matrix.diagonal())
            .all(|(h, &d)| *h < G::from_f64(d))
    }
}

impl HeightConfig<i64> {
    /// `diag(x) - 1` everywhere; always recurrent.
    pub fn maximal(matrix: &TopplingMatrix) -> Self {
        HeightConfig {
            heights: matrix.diagonal().iter().map(|&d| d as i64 - 1).collect(),
        }
    }
}

/// Toppling counts `N(x, y, η)` of one stabilization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Odometer {
    pub counts: Vec<u64>,
    pub source_site: Option<usize>,
}

impl Odometer {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sites that toppled at least once, in index order.
    pub fn toppled(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&y| self.counts[y] > 0).collect()
    }
}

/// Order in which unstable sites are toppled.
pub enum Scheduler<'r, R: Rng> {
    /// FIFO queue with an enqueued flag per site.
    Fifo,
    /// Uniformly random unstable site at every step.
    Random(&'r mut R),
}

pub(crate) fn check_compatible<G: Grain>(matrix: &TopplingMatrix, heights: &[G]) -> Result<()> {
    if heights.len() != matrix.len() {
        return Err(Error::param(
            "heights",
            format!("{} heights for {} sites", heights.len(), matrix.len()),
        ));
    }
    match (G::INTEGRAL, matrix.mode()) {
        (true, Mode::IntegerSandpile) | (false, Mode::ContinuousAvalanche) => Ok(()),
        (true, Mode::ContinuousAvalanche) => Err(Error::ModeMismatch(
            "integer heights on a continuous avalanche matrix".into(),
        )),
        (false, Mode::IntegerSandpile) => Err(Error::ModeMismatch(
            "real heights on an integer sandpile matrix".into(),
        )),
    }
}

/// Topples until stable, in place. `counts` accumulates the odometer.
pub(crate) fn relax<G: Grain, R: Rng>(
    matrix: &TopplingMatrix,
    heights: &mut [G],
    counts: &mut [u64],
    budget: u64,
    scheduler: Scheduler<'_, R>,
) -> Result<()> {
    let thresholds: Vec<G> = matrix.diagonal().iter().map(|&d| G::from_f64(d)).collect();
    let transfer = G::from_f64(matrix.gamma());
    let n = heights.len();
    let mut total = 0u64;
    let mut topple = |x: usize, heights: &mut [G], total: &mut u64| -> Result<()> {
        counts[x] += 1;
        *total += 1;
        if counts[x] > budget {
            return Err(Error::NonStabilizable {
                site: x,
                count: counts[x],
                budget,
                total: *total,
            });
        }
        heights[x] -= thresholds[x];
        for &y in matrix.neighbors(x) {
            heights[y] += transfer;
        }
        Ok(())
    };
    match scheduler {
        Scheduler::Fifo => {
            let mut queued = vec![false; n];
            let mut queue = VecDeque::new();
            for x in 0..n {
                if heights[x] >= thresholds[x] {
                    queued[x] = true;
                    queue.push_back(x);
                }
            }
            while let Some(x) = queue.pop_front() {
                queued[x] = false;
                if heights[x] < thresholds[x] {
                    continue;
                }
                topple(x, heights, &mut total)?;
                if heights[x] >= thresholds[x] {
                    queued[x] = true;
                    queue.push_back(x);
                }
                for &y in matrix.neighbors(x) {
                    if !queued[y] && heights[y] >= thresholds[y] {
                        queued[y] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        Scheduler::Random(rng) => loop {
            let unstable: Vec<usize> = (0..n).filter(|&x| heights[x] >= thresholds[x]).collect();
            if unstable.is_empty() {
                break;
            }
            let x = unstable[rng.random_range(0..unstable.len())];
            topple(x, heights, &mut total)?;
        },
    }
    Ok(())
}

fn stabilize_with<G: Grain, R: Rng>(
    matrix: &TopplingMatrix,
    eta: &HeightConfig<G>,
    budget: u64,
    scheduler: Scheduler<'_, R>,
) -> Result<(HeightConfig<G>, Odometer)> {
    check_compatible(matrix, &eta.heights)?;
    if budget == 0 {
        return Err(Error::param("budget", "must be at least 1"));
    }
    if eta.heights.iter().any(|h| *h < G::default()) {
        return Err(Error::param("heights", "heights must be non-negative"));
    }
    let mut heights = eta.heights.clone();
    let mut counts = vec![0; matrix.len()];
    relax(matrix, &mut heights, &mut counts, budget, scheduler)?;
    Ok((
        HeightConfig { heights },
        Odometer {
            counts,
            source_site: None,
        },
    ))
}

/// Stabilizes `eta` with the FIFO scheduler.
pub fn stabilize<G: Grain>(
    matrix: &TopplingMatrix,
    eta: &HeightConfig<G>,
    budget: u64,
) -> Result<(HeightConfig<G>, Odometer)> {
    stabilize_with::<G, rand_chacha::ChaCha8Rng>(matrix, eta, budget, Scheduler::Fifo)
}

/// Stabilizes `eta` toppling a uniformly random unstable site at each step.
/// Same result as [`stabilize`]; exists to exercise the Abelian property.
pub fn stabilize_random_order<G: Grain, R: Rng>(
    matrix: &TopplingMatrix,
    eta: &HeightConfig<G>,
    budget: u64,
    rng: &mut R,
) -> Result<(HeightConfig<G>, Odometer)> {
    stabilize_with(matrix, eta, budget, Scheduler::Random(rng))
}

/// The set of sites that toppled when a grain was added at `site`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AvalancheRecord {
    pub site: usize,
    pub toppled: Vec<usize>,
    pub size: usize,
    /// `max d(site, y)` over toppled `y`; `0` for an empty avalanche.
    pub diameter: usize,
}

impl AvalancheRecord {
    pub fn from_odometer(matrix: &TopplingMatrix, site: usize, odometer: &Odometer) -> Self {
        let toppled = odometer.toppled();
        let diameter = if toppled.is_empty() {
            0
        } else {
            let dist = matrix.distances_from(site);
            toppled
                .iter()
                .map(|&y| dist[y].expect("toppled sites are connected to the addition site"))
                .max()
                .unwrap_or(0)
        };
        AvalancheRecord {
            site,
            size: toppled.len(),
            toppled,
            diameter,
        }
    }
}

/// `a_x(η) = S(η + δ_x)` together with the odometer and avalanche record.
pub fn add_and_stabilize<G: Grain>(
    matrix: &TopplingMatrix,
    eta: &HeightConfig<G>,
    site: usize,
    budget: u64,
) -> Result<(HeightConfig<G>, Odometer, AvalancheRecord)> {
    check_compatible(matrix, &eta.heights)?;
    if site >= matrix.len() {
        return Err(Error::SiteOutOfRange(site));
    }
    if !eta.is_stable(matrix) {
        return Err(Error::param("eta", "additions act on stable configurations"));
    }
    let mut added = eta.clone();
    added.heights[site] += G::from_f64(1.0);
    let (out, mut odometer) = stabilize(matrix, &added, budget)?;
    odometer.source_site = Some(site);
    let record = AvalancheRecord::from_odometer(matrix, site, &odometer);
    Ok((out, odometer, record))
}

/// Largest absolute deviation from `after = before + δ_x - Δ N`.
pub fn conservation_residual<G: Grain>(
    matrix: &TopplingMatrix,
    before: &HeightConfig<G>,
    added_at: Option<usize>,
    odometer: &Odometer,
    after: &HeightConfig<G>,
) -> f64 {
    let counts: Vec<f64> = odometer.counts.iter().map(|&c| c as f64).collect();
    let mut lost = vec![0.0; matrix.len()];
    matrix.apply(&counts, &mut lost);
    (0..matrix.len())
        .map(|y| {
            let delta = if added_at == Some(y) { 1.0 } else { 0.0 };
            let expected = before.heights[y].to_f64() + delta - lost[y];
            (after.heights[y].to_f64() - expected).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::sandpile::{assemble_toppling_matrix, ToppleParams};
    use crate::topology::{build_box, build_site_classes, BoxLattice, ClassPattern};

    fn path(len: usize) -> TopplingMatrix {
        let b = BoxLattice::rectangle(&[len]).unwrap();
        let c = build_site_classes(&b, &ClassPattern::Empty).unwrap();
        assemble_toppling_matrix(&b, &c, ToppleParams::default(), Mode::IntegerSandpile).unwrap()
    }

    #[test]
    fn two_site_hand_simulation() {
        let m = path(2);
        let eta = HeightConfig::new(vec![1i64, 1]);
        let (out, odo, rec) = add_and_stabilize(&m, &eta, 0, DEFAULT_BUDGET).unwrap();
        assert_eq!(out.heights, vec![1, 0]);
        assert_eq!(odo.counts, vec![1, 1]);
        assert_eq!(odo.source_site, Some(0));
        assert_eq!(rec.toppled, vec![0, 1]);
        assert_eq!(rec.size, 2);
        assert_eq!(rec.diameter, 1);
        assert_eq!(conservation_residual(&m, &eta, Some(0), &odo, &out), 0.0);
    }

    #[test]
    fn stable_input_is_fixed() {
        let m = path(4);
        let eta = HeightConfig::new(vec![1i64, 0, 1, 1]);
        let (out, odo) = stabilize(&m, &eta, DEFAULT_BUDGET).unwrap();
        assert_eq!(out, eta);
        assert_eq!(odo.total(), 0);
    }

    #[test]
    fn empty_avalanche_from_zero_heights() {
        let m = path(5);
        let eta = HeightConfig::<i64>::zeros(5);
        for x in 0..5 {
            let (_, odo, rec) = add_and_stabilize(&m, &eta, x, DEFAULT_BUDGET).unwrap();
            assert_eq!(odo.total(), 0);
            assert_eq!(rec.size, 0);
            assert_eq!(rec.diameter, 0);
        }
    }

    #[test]
    fn full_path_avalanche() {
        let m = path(5);
        let eta = HeightConfig::new(vec![1i64; 5]);
        let (out, odo, rec) = add_and_stabilize(&m, &eta, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(rec.size, 5);
        assert_eq!(rec.diameter, 2);
        assert!(out.is_stable(&m));
        assert_eq!(conservation_residual(&m, &eta, Some(2), &odo, &out), 0.0);
    }

    #[test]
    fn random_order_agrees() {
        let m = path(6);
        let eta = HeightConfig::new(vec![5i64, 0, 3, 1, 4, 2]);
        let (a, oa) = stabilize(&m, &eta, DEFAULT_BUDGET).unwrap();
        let (b, ob) = stabilize_random_order(&m, &eta, DEFAULT_BUDGET, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
    }

    #[test]
    fn input_validation() {
        let m = path(2);
        assert!(stabilize(&m, &HeightConfig::new(vec![1i64]), 10).is_err());
        assert!(stabilize(&m, &HeightConfig::new(vec![1i64, 1]), 0).is_err());
        assert!(stabilize(&m, &HeightConfig::new(vec![-1i64, 1]), 10).is_err());
        assert!(matches!(
            stabilize(&m, &HeightConfig::new(vec![1.0, 1.0]), 10),
            Err(Error::ModeMismatch(_))
        ));
        assert!(add_and_stabilize(&m, &HeightConfig::new(vec![2i64, 0]), 0, 10).is_err());
        assert!(add_and_stabilize(&m, &HeightConfig::new(vec![0i64, 0]), 2, 10).is_err());
    }

    #[test]
    fn continuous_dissipative_stabilizes() {
        let b = build_box(1, 2).unwrap();
        let c = build_site_classes(&b, &ClassPattern::All).unwrap();
        let params = ToppleParams {
            gamma: 0.7,
            alpha: 0.3,
            beta: 0.0,
        };
        let m = assemble_toppling_matrix(&b, &c, params, Mode::ContinuousAvalanche).unwrap();
        let eta = HeightConfig::new(vec![5.0, 0.3, 7.1, 0.0, 2.2]);
        let (out, odo) = stabilize(&m, &eta, DEFAULT_BUDGET).unwrap();
        assert!(out.is_stable(&m));
        let scale = eta.heights.iter().cloned().fold(0.0, f64::max);
        assert!(conservation_residual(&m, &eta, None, &odo, &out) <= 1e-9 * scale);
    }

    #[test]
    fn single_source_without_sinks_runs_away() {
        // All sites ordinary except a source at the centre; the matrix has a
        // negative eigenvalue so no stable end state exists.
        let b = build_box(1, 2).unwrap();
        let c = build_site_classes(
            &b,
            &ClassPattern::Explicit {
                dissipative: vec![],
                sources: vec![vec![0]],
            },
        )
        .unwrap();
        let params = ToppleParams {
            gamma: 1.0,
            alpha: 1.0,
            beta: 1.5,
        };
        let m = assemble_toppling_matrix(&b, &c, params, Mode::ContinuousAvalanche).unwrap();
        let near_max: Vec<f64> = m.diagonal().iter().map(|d| d - 0.01).collect();
        let eta = HeightConfig::new(near_max);
        let mut last_total = 0;
        for budget in [100, 1_000, 10_000] {
            match add_and_stabilize(&m, &eta, 2, budget) {
                Err(Error::NonStabilizable { total, count, .. }) => {
                    assert!(count > budget);
                    assert!(total > last_total, "odometer must keep growing");
                    last_total = total;
                }
                other => panic!("expected NonStabilizable, got {other:?}"),
            }
        }
    }
}
