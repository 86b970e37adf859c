use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::lattice::lattice_step;
use super::LocalTimeLedger;
use crate::rng::{chunked, stream_rng};
use crate::stats::{least_squares, Accumulator, LinearFit, MeanEstimate};
use crate::topology::{CompiledPattern, SiteClass};
use crate::{Error, Result};

/// Piecewise-constant continuous-time walk on `Z^d`: starts at `x0` and jumps
/// to `jumps[i].1` at time `jumps[i].0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousPath {
    pub x0: Vec<i64>,
    pub jumps: Vec<(f64, Vec<i64>)>,
    pub horizon: f64,
}

fn holding(rate: f64) -> Result<Exp<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::param("rate", format!("{rate} must be positive")));
    }
    Exp::new(rate).map_err(|e| Error::param("rate", e.to_string()))
}

/// Walk with total jump rate `rate` (uniform neighbour at each jump) up to `horizon`.
pub fn run_continuous_walk(x0: &[i64], rate: f64, horizon: f64, seed: u64) -> Result<ContinuousPath> {
    let exp = holding(rate)?;
    let mut rng = stream_rng(seed, 0);
    let mut x = x0.to_vec();
    let mut now = 0.0;
    let mut jumps = Vec::new();
    loop {
        now += exp.sample(&mut rng);
        if now >= horizon {
            break;
        }
        lattice_step(&mut x, &mut rng);
        jumps.push((now, x.clone()));
    }
    Ok(ContinuousPath {
        x0: x0.to_vec(),
        jumps,
        horizon,
    })
}

impl LocalTimeLedger<f64> {
    /// Occupation time of every visited site over `[0, horizon]`.
    pub fn continuous(path: &ContinuousPath) -> Self {
        let mut times: HashMap<Vec<i64>, f64> = HashMap::new();
        let mut site = &path.x0;
        let mut since = 0.0;
        for (t, next) in &path.jumps {
            *times.entry(site.clone()).or_insert(0.0) += t - since;
            site = next;
            since = *t;
        }
        *times.entry(site.clone()).or_insert(0.0) += path.horizon - since;
        LocalTimeLedger {
            times,
            horizon: path.horizon,
        }
    }

    pub fn total_time(&self) -> f64 {
        self.times.values().sum()
    }
}

/// `∫_0^h value(X_s) ds` for every `h` in the increasing list `horizons`.
/// Holding times are exact exponentials, so each integral is exact for the
/// sampled path.
pub(crate) fn path_integrals<R: Rng, F: Fn(&[i64]) -> f64>(
    x0: &[i64],
    exp: &Exp<f64>,
    horizons: &[f64],
    value: F,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    out.clear();
    let mut x = x0.to_vec();
    let mut now = 0.0;
    let mut integral = 0.0;
    let mut h = 0;
    while h < horizons.len() {
        let v = value(&x);
        let next = now + exp.sample(rng);
        while h < horizons.len() && horizons[h] <= next {
            out.push(integral + v * (horizons[h] - now));
            h += 1;
        }
        integral += v * (next - now);
        now = next;
        lattice_step(&mut x, rng);
    }
}

/// Potential `+alpha` on dissipative sites, `-beta` on sources, `0` elsewhere.
#[derive(Debug, Clone)]
pub struct Potential {
    pub pattern: CompiledPattern,
    pub alpha: f64,
    pub beta: f64,
}

impl Potential {
    pub fn value(&self, x: &[i64]) -> f64 {
        match self.pattern.class_of(x) {
            SiteClass::Dissipative => self.alpha,
            SiteClass::Source => -self.beta,
            SiteClass::Ordinary | SiteClass::Boundary => 0.0,
        }
    }
}

/// `mass(t) = Ê[exp(-∫_0^t V)]` on a time grid with its time integral.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassCurve {
    pub t_grid: Vec<f64>,
    pub mass: Vec<MeanEstimate>,
    /// Trapezoid rule over `[0, t_max]` with `mass(0) = 1`.
    pub integral: f64,
    /// Decay rate from an exponential fit to the second half of the grid.
    pub decay_rate: Option<f64>,
    /// `integral + mass(t_max) / decay_rate` when a decay rate was found.
    pub extrapolated_integral: Option<f64>,
    /// Some grid point has relative standard error above 50%.
    pub high_variance: bool,
}

impl MassCurve {
    /// No decay could be established, so the integral is not known to converge.
    pub fn inconclusive(&self) -> bool {
        self.extrapolated_integral.is_none()
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("t_grid", "must be non-empty, non-negative and increasing"));
    }
    Ok(())
}

/// Runs `n_walks` walks at total jump rate `rate`, evaluates
/// `exp(-weight ∫_0^{scale t} V)` at every grid `t` and averages.
fn mass_estimates(
    x0: &[i64],
    potential: &Potential,
    rate: f64,
    scale: f64,
    weight: f64,
    t_grid: &[f64],
    n_walks: usize,
    seed: u64,
) -> Result<Vec<MeanEstimate>> {
    check_grid(t_grid)?;
    if x0.len() != potential.pattern.dim() {
        return Err(Error::param("x0", "start and potential dimensions differ"));
    }
    if n_walks < 2 {
        return Err(Error::param("n_walks", "need at least two walks"));
    }
    let exp = holding(rate)?;
    let horizons: Vec<f64> = t_grid.iter().map(|t| t * scale).collect();
    let parts = chunked(n_walks, |range| {
        let mut accs = vec![Accumulator::default(); t_grid.len()];
        let mut ints = Vec::with_capacity(t_grid.len());
        for i in range {
            let mut rng = stream_rng(seed, i as u64);
            path_integrals(x0, &exp, &horizons, |x| potential.value(x), &mut rng, &mut ints);
            for (acc, int) in accs.iter_mut().zip(&ints) {
                acc.push((-weight * int).exp());
            }
        }
        accs
    });
    let mut accs = vec![Accumulator::default(); t_grid.len()];
    for part in &parts {
        for (a, b) in accs.iter_mut().zip(part) {
            a.merge(b);
        }
    }
    Ok(accs.iter().map(Accumulator::estimate).collect())
}

/// Assembles integral, decay fit and flags from per-time estimates.
pub fn mass_curve(t_grid: &[f64], mass: Vec<MeanEstimate>) -> Result<MassCurve> {
    check_grid(t_grid)?;
    if mass.len() != t_grid.len() {
        return Err(Error::param("mass", "one estimate per grid time"));
    }
    let mut ts = Vec::with_capacity(t_grid.len() + 1);
    let mut ms = Vec::with_capacity(t_grid.len() + 1);
    if t_grid[0] > 0.0 {
        ts.push(0.0);
        ms.push(1.0);
    }
    ts.extend_from_slice(t_grid);
    ms.extend(mass.iter().map(|e| e.mean));
    let integral: f64 = ts
        .windows(2)
        .zip(ms.windows(2))
        .map(|(t, m)| 0.5 * (t[1] - t[0]) * (m[0] + m[1]))
        .sum();
    let half = t_grid.len() / 2;
    let (fx, fy): (Vec<f64>, Vec<f64>) = t_grid[half..]
        .iter()
        .zip(&mass[half..])
        .filter(|(_, e)| e.mean > 0.0)
        .map(|(t, e)| (*t, e.mean.ln()))
        .unzip();
    let decay_rate = least_squares(&fx, &fy)
        .filter(|fit: &LinearFit| fit.slope < 0.0 && fit.significant(3.0))
        .map(|fit| -fit.slope);
    let last = mass.last().expect("non-empty").mean;
    Ok(MassCurve {
        t_grid: t_grid.to_vec(),
        high_variance: mass.iter().any(|e| e.relative_error() > 0.5),
        extrapolated_integral: decay_rate.map(|r| integral + last / r),
        decay_rate,
        mass,
        integral,
    })
}

/// Feynman-Kac mass for the walk with jump rate `2dγ` from `x0`.
pub fn feynman_kac_mass(
    x0: &[i64],
    potential: &Potential,
    gamma: f64,
    t_grid: &[f64],
    n_walks: usize,
    seed: u64,
) -> Result<MassCurve> {
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", "must be positive"));
    }
    let rate = 2.0 * x0.len() as f64 * gamma;
    let mass = mass_estimates(x0, potential, rate, 1.0, 1.0, t_grid, n_walks, seed)?;
    mass_curve(t_grid, mass)
}

/// Same quantity through the rate-`2d` walk: `E[exp(-(1/γ) ∫_0^{γt} V)]`.
pub fn feynman_kac_mass_rescaled(
    x0: &[i64],
    potential: &Potential,
    gamma: f64,
    t_grid: &[f64],
    n_walks: usize,
    seed: u64,
) -> Result<MassCurve> {
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", "must be positive"));
    }
    let rate = 2.0 * x0.len() as f64;
    let mass = mass_estimates(x0, potential, rate, gamma, 1.0 / gamma, t_grid, n_walks, seed)?;
    mass_curve(t_grid, mass)
}

/// One source at the origin, every other site dissipative:
/// `e^{-αt} E[exp(((α+β)/γ) l_{γt}(o))]` with the rate-`2d` walk and `l` the
/// occupation time of the origin.
pub fn single_source_mass(
    d: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    t_grid: &[f64],
    n_walks: usize,
    seed: u64,
) -> Result<Vec<MeanEstimate>> {
    check_grid(t_grid)?;
    if d == 0 || !(gamma > 0.0) || n_walks < 2 {
        return Err(Error::param("gamma", "need d >= 1, gamma > 0 and at least two walks"));
    }
    let exp = holding(2.0 * d as f64)?;
    let m = (alpha + beta) / gamma;
    let horizons: Vec<f64> = t_grid.iter().map(|t| t * gamma).collect();
    let origin = vec![0i64; d];
    let parts = chunked(n_walks, |range| {
        let mut accs = vec![Accumulator::default(); t_grid.len()];
        let mut ints = Vec::with_capacity(t_grid.len());
        for i in range {
            let mut rng = stream_rng(seed, i as u64);
            let at_origin = |x: &[i64]| if x.iter().all(|&c| c == 0) { 1.0 } else { 0.0 };
            path_integrals(&origin, &exp, &horizons, at_origin, &mut rng, &mut ints);
            for (acc, l) in accs.iter_mut().zip(&ints) {
                acc.push((m * l).exp());
            }
        }
        accs
    });
    let mut accs = vec![Accumulator::default(); t_grid.len()];
    for part in &parts {
        for (a, b) in accs.iter_mut().zip(part) {
            a.merge(b);
        }
    }
    Ok(accs
        .iter()
        .zip(t_grid)
        .map(|(acc, &t)| {
            let e = acc.estimate();
            let f = (-alpha * t).exp();
            MeanEstimate {
                mean: f * e.mean,
                stderr: f * e.stderr,
                n: e.n,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::ClassPattern;

    fn potential(p: ClassPattern, d: usize, alpha: f64, beta: f64) -> Potential {
        Potential {
            pattern: p.compile(d).unwrap(),
            alpha,
            beta,
        }
    }

    #[test]
    fn zero_potential() {
        let v = potential(ClassPattern::Empty, 1, 1.0, 0.0);
        let c = feynman_kac_mass(&[0], &v, 1.0, &[1.0, 2.0, 3.0, 4.0], 50, 0).unwrap();
        assert!(c.mass.iter().all(|e| e.mean == 1.0));
        assert!(c.inconclusive());
        assert_eq!(c.integral, 4.0);
    }

    #[test]
    fn constant_killing() {
        let alpha = 0.7;
        let v = potential(ClassPattern::All, 2, alpha, 0.0);
        let grid: Vec<f64> = (1..=400).map(|k| k as f64 * 0.05).collect();
        let c = feynman_kac_mass(&[0, 0], &v, 1.0, &grid, 10, 0).unwrap();
        for (t, e) in grid.iter().zip(&c.mass) {
            assert!((e.mean - (-alpha * t).exp()).abs() < 1e-12);
        }
        assert!((c.decay_rate.unwrap() - alpha).abs() < 1e-9);
        assert!((c.extrapolated_integral.unwrap() - 1.0 / alpha).abs() < 1e-3);
    }

    #[test]
    fn continuous_ledger_sums_to_horizon() {
        for seed in 0..10 {
            let path = run_continuous_walk(&[0, 0], 4.0, 12.5, seed).unwrap();
            let l = LocalTimeLedger::continuous(&path);
            assert!((l.total_time() - 12.5).abs() < 1e-9);
        }
    }

    #[test]
    fn path_integral_matches_ledger() {
        let path = run_continuous_walk(&[0], 2.0, 7.0, 3).unwrap();
        let ledger = LocalTimeLedger::continuous(&path);
        let exp = Exp::new(2.0).unwrap();
        let mut out = Vec::new();
        let mut rng = stream_rng(3, 0);
        path_integrals(&[0], &exp, &[7.0], |x| if x[0] == 0 { 1.0 } else { 0.0 }, &mut rng, &mut out);
        let at_origin = ledger.times.get(&vec![0]).copied().unwrap_or(0.0);
        assert!((out[0] - at_origin).abs() < 1e-9);
    }

    #[test]
    fn grid_checked() {
        let v = potential(ClassPattern::All, 1, 1.0, 0.0);
        assert!(feynman_kac_mass(&[0], &v, 1.0, &[2.0, 1.0], 10, 0).is_err());
        assert!(feynman_kac_mass(&[0], &v, 0.0, &[1.0], 10, 0).is_err());
    }
}
