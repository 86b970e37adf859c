use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use super::WalkTrace;
use crate::rng::{chunked, stream_rng};
use crate::stats::{binomial_estimate, Accumulator, MeanEstimate};
use crate::topology::{ClassPattern, CompiledPattern, SiteClass};
use crate::{Error, Result};

/// Moves `x` to a uniformly chosen nearest neighbour in `Z^d`.
pub(crate) fn lattice_step<R: Rng>(x: &mut [i64], rng: &mut R) {
    let r = rng.random_range(0..2 * x.len());
    x[r / 2] += if r % 2 == 0 { 1 } else { -1 };
}

fn check_start(pattern: &CompiledPattern, x0: &[i64]) -> Result<()> {
    if x0.len() != pattern.dim() {
        return Err(Error::param(
            "x0",
            format!("start has {} coordinates, pattern lives in d = {}", x0.len(), pattern.dim()),
        ));
    }
    Ok(())
}

/// Survival factor `2d/(2d+1)` per visit to a dissipative site.
pub fn survival_factor(d: usize) -> f64 {
    let z = 2.0 * d as f64;
    z / (z + 1.0)
}

/// Runs the killed walk for at most `horizon` steps from `x0`. At each time
/// spent on a dissipative site the walk dies with probability `1/(2d+1)`
/// before stepping, so `T̂ = j + 1` if the kill happens at time `j`. Source
/// sites count as ordinary here.
fn killed_walk<R: Rng>(
    pattern: &CompiledPattern,
    x: &mut [i64],
    horizon: u64,
    rng: &mut R,
    mut record: Option<&mut Vec<Vec<i64>>>,
) -> (u64, bool) {
    let kill = 1.0 / (2.0 * x.len() as f64 + 1.0);
    for j in 0..horizon {
        if pattern.is_dissipative(x) && rng.random_bool(kill) {
            return (j + 1, true);
        }
        lattice_step(x, rng);
        if let Some(r) = record.as_deref_mut() {
            r.push(x.to_vec());
        }
    }
    (horizon, false)
}

/// Killed walk trace. `positions` holds `X_0, ..., X_{T̂-1}` for a killed
/// walk; a censored walk also records its position at the horizon.
pub fn run_killed_lattice_walk(
    pattern: &CompiledPattern,
    x0: &[i64],
    horizon: u64,
    seed: u64,
) -> Result<WalkTrace<Vec<i64>>> {
    check_start(pattern, x0)?;
    let mut x = x0.to_vec();
    let mut positions = vec![x.clone()];
    let (t, killed) = killed_walk(pattern, &mut x, horizon, &mut stream_rng(seed, 0), Some(&mut positions));
    if killed {
        positions.truncate(t as usize);
    }
    Ok(WalkTrace {
        positions,
        survival_time: t,
        killed,
        censored: !killed,
        escaped: false,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KilledSurvival {
    /// Mean of `min(T̂, horizon)`.
    pub estimate: MeanEstimate,
    pub horizon: u64,
    pub censored: usize,
}

impl KilledSurvival {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.estimate.n as f64
    }
}

/// `Ê_x(T̂)` over `n_walks` killed walks censored at `horizon`.
pub fn expected_killed_survival(
    pattern: &CompiledPattern,
    x0: &[i64],
    horizon: u64,
    n_walks: usize,
    seed: u64,
) -> Result<KilledSurvival> {
    check_start(pattern, x0)?;
    if horizon == 0 || n_walks < 2 {
        return Err(Error::param("n_walks", "need a positive horizon and at least two walks"));
    }
    let parts = chunked(n_walks, |range| {
        let mut acc = Accumulator::default();
        let mut censored = 0;
        let mut x = x0.to_vec();
        for i in range {
            x.copy_from_slice(x0);
            let (t, killed) = killed_walk(pattern, &mut x, horizon, &mut stream_rng(seed, i as u64), None);
            acc.push(t as f64);
            censored += usize::from(!killed);
        }
        (acc, censored)
    });
    let mut acc = Accumulator::default();
    let mut censored = 0;
    for (a, c) in parts {
        acc.merge(&a);
        censored += c;
    }
    Ok(KilledSurvival {
        estimate: acc.estimate(),
        horizon,
        censored,
    })
}

/// Partial sums `Σ_{k=0}^{K} E_x[ρ^{l_k(D)}]`, `ρ = 2d/(2d+1)`, for `K = 0..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTimeFunctional {
    pub partial_sums: Vec<MeanEstimate>,
    /// Mean of the last term `E_x[ρ^{l_{k_max}(D)}]`.
    pub last_increment: f64,
    /// Last increment at most `tolerance` times the partial sum.
    pub converged: bool,
}

impl LocalTimeFunctional {
    pub fn total(&self) -> MeanEstimate {
        *self.partial_sums.last().expect("k_max + 1 partial sums")
    }
}

/// Evaluates the product weight along unkilled simple-walk paths, which is
/// the conditional survival probability of the killed walk given the path.
/// Its partial sum up to `K` estimates `E_x[min(T̂, K + 1)]`.
pub fn local_time_functional(
    x0: &[i64],
    pattern: &CompiledPattern,
    k_max: usize,
    n_walks: usize,
    tolerance: f64,
    seed: u64,
) -> Result<LocalTimeFunctional> {
    check_start(pattern, x0)?;
    if n_walks < 2 {
        return Err(Error::param("n_walks", "need at least two walks"));
    }
    let rho = survival_factor(x0.len());
    let parts = chunked(n_walks, |range| {
        let mut accs = vec![Accumulator::default(); k_max + 1];
        let mut x = x0.to_vec();
        for i in range {
            let mut rng = stream_rng(seed, i as u64);
            x.copy_from_slice(x0);
            let mut weight = 1.0; // ρ^{l_k(D)}, starting from l_0 = 0
            let mut sum = 0.0;
            for acc in accs.iter_mut() {
                sum += weight;
                acc.push(sum);
                if pattern.is_dissipative(&x) {
                    weight *= rho;
                }
                lattice_step(&mut x, &mut rng);
            }
        }
        accs
    });
    let mut accs = vec![Accumulator::default(); k_max + 1];
    for part in &parts {
        for (a, b) in accs.iter_mut().zip(part) {
            a.merge(b);
        }
    }
    let partial_sums: Vec<MeanEstimate> = accs.iter().map(Accumulator::estimate).collect();
    let last_increment = if k_max == 0 {
        partial_sums[0].mean
    } else {
        partial_sums[k_max].mean - partial_sums[k_max - 1].mean
    };
    let total = partial_sums[k_max].mean;
    Ok(LocalTimeFunctional {
        converged: last_increment <= tolerance * total,
        last_increment,
        partial_sums,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingEstimate {
    /// Mean of `min(τ, horizon)`.
    pub estimate: MeanEstimate,
    pub censored: usize,
    /// More than 1% of the walks were censored.
    pub flagged: bool,
    /// `(a, b)` of the gap containing the start when `D` is a family of
    /// hyperplanes orthogonal to the last axis.
    pub gap: Option<(i64, i64)>,
    /// `d (b - a)^2 / 4` for that gap.
    pub bound: Option<f64>,
}

/// Nearest dissipative levels strictly below and above `x0` along the last
/// axis, for patterns that only depend on the last coordinate.
pub fn bracketing_gap(pattern: &CompiledPattern, x0: &[i64]) -> Option<(i64, i64)> {
    let last_axis_only = matches!(pattern.pattern(), ClassPattern::Lines { .. }) || pattern.dim() == 1;
    if !last_axis_only || pattern.is_dissipative(x0) {
        return None;
    }
    const REACH: i64 = 1 << 20;
    let mut y = x0.to_vec();
    let d = y.len() - 1;
    let mut probe = |offset: i64| {
        y[d] = x0[d] + offset;
        pattern.class_of(&y) == SiteClass::Dissipative
    };
    let b = (1..=REACH).find(|&k| probe(k))?;
    let a = (1..=REACH).find(|&k| probe(-k))?;
    Some((x0[d] - a, x0[d] + b))
}

/// `d (b - a)^2 / 4`: the walk's last coordinate moves with probability
/// `1/d` per step, and a one-dimensional walk leaves `(a, b)` from inside in
/// at most `(b - a)^2 / 4` expected steps.
pub fn gap_hitting_bound(a: i64, b: i64, d: usize) -> f64 {
    d as f64 * ((b - a) as f64).powi(2) / 4.0
}

/// `τ_x(D) = inf{k >= 1 : X_k ∈ D}` for the simple walk.
pub fn hitting_time(
    x0: &[i64],
    pattern: &CompiledPattern,
    n_walks: usize,
    horizon: u64,
    seed: u64,
) -> Result<HittingEstimate> {
    check_start(pattern, x0)?;
    if horizon == 0 || n_walks < 2 {
        return Err(Error::param("n_walks", "need a positive horizon and at least two walks"));
    }
    let parts = chunked(n_walks, |range| {
        let mut acc = Accumulator::default();
        let mut censored = 0usize;
        let mut x = x0.to_vec();
        for i in range {
            let mut rng = stream_rng(seed, i as u64);
            x.copy_from_slice(x0);
            let mut tau = None;
            for k in 1..=horizon {
                lattice_step(&mut x, &mut rng);
                if pattern.is_dissipative(&x) {
                    tau = Some(k);
                    break;
                }
            }
            acc.push(tau.unwrap_or(horizon) as f64);
            censored += usize::from(tau.is_none());
        }
        (acc, censored)
    });
    let mut acc = Accumulator::default();
    let mut censored = 0;
    for (a, c) in parts {
        acc.merge(&a);
        censored += c;
    }
    let gap = bracketing_gap(pattern, x0);
    Ok(HittingEstimate {
        estimate: acc.estimate(),
        censored,
        flagged: censored as f64 > 0.01 * n_walks as f64,
        gap,
        bound: gap.map(|(a, b)| gap_hitting_bound(a, b, x0.len())),
    })
}

/// Visit counts or occupation times per site up to a horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTimeLedger<T> {
    pub times: HashMap<Vec<i64>, T>,
    pub horizon: T,
}

impl LocalTimeLedger<u64> {
    /// `l_k(x) = #{0 <= j < k : X_j = x}`.
    pub fn discrete(positions: &[Vec<i64>], k: usize) -> Result<Self> {
        if k > positions.len() {
            return Err(Error::param(
                "k",
                format!("horizon {k} exceeds the {} recorded positions", positions.len()),
            ));
        }
        let mut times = HashMap::new();
        for x in &positions[..k] {
            *times.entry(x.clone()).or_insert(0) += 1;
        }
        Ok(LocalTimeLedger {
            times,
            horizon: k as u64,
        })
    }

    pub fn total(&self) -> u64 {
        self.times.values().sum()
    }

    pub fn max(&self) -> u64 {
        self.times.values().copied().max().unwrap_or(0)
    }
}

/// `P̂(sup_x l_k(x) > k^{1/2 + δ})` for the simple walk on `Z^d`, per `k` in
/// `k_grid`. Used as a monitor; no fit is attempted.
pub fn sup_local_time_tail(
    d: usize,
    k_grid: &[usize],
    delta: f64,
    n_walks: usize,
    seed: u64,
) -> Result<Vec<(usize, MeanEstimate)>> {
    if d == 0 || k_grid.is_empty() || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("k_grid", "need d >= 1 and a strictly increasing grid"));
    }
    let k_max = *k_grid.last().expect("non-empty");
    let parts = chunked(n_walks, |range| {
        let mut hits = vec![0usize; k_grid.len()];
        for i in range {
            let mut rng = stream_rng(seed, i as u64);
            let mut x = vec![0i64; d];
            let mut visits: HashMap<Vec<i64>, u64> = HashMap::new();
            let mut sup = 0u64;
            let mut g = 0;
            for k in 1..=k_max {
                let c = visits.entry(x.clone()).or_insert(0);
                *c += 1;
                sup = sup.max(*c);
                lattice_step(&mut x, &mut rng);
                if k == k_grid[g] {
                    if sup as f64 > (k as f64).powf(0.5 + delta) {
                        hits[g] += 1;
                    }
                    g += 1;
                }
            }
        }
        hits
    });
    let mut hits = vec![0usize; k_grid.len()];
    for part in parts {
        for (h, p) in hits.iter_mut().zip(part) {
            *h += p;
        }
    }
    Ok(k_grid
        .iter()
        .zip(hits)
        .map(|(&k, h)| (k, binomial_estimate(h, n_walks)))
        .collect())
}
