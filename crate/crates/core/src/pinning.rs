//! Homogeneous pinning free energy `F(m) = lim (1/t) log E_o[exp(m l_t(o))]`
//! of the continuous-time walk with jump rate `2d`, and the `gamma` scan
//! `γ F((α+β)/γ)` for models with finitely many sources.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::randomwalk::lattice_step;
use crate::rng::{stream_rng, SimRng};
use crate::stats::{mean_stderr, MeanEstimate};
use crate::{Error, Result};

/// Fewest independent populations allowed for the batch-means standard error.
pub const MIN_BATCHES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeEnergyOptions {
    /// Independent populations; walkers are split evenly between them.
    pub batches: usize,
    /// How often the horizon may double before giving up on stability.
    pub max_doublings: u32,
    /// Time between two resampling steps.
    pub resample_every: f64,
    /// An `m` whose populations ever fall below this effective-size fraction
    /// is flagged unreliable.
    pub min_ess_fraction: f64,
}

impl Default for FreeEnergyOptions {
    fn default() -> Self {
        FreeEnergyOptions {
            batches: MIN_BATCHES,
            max_doublings: 3,
            resample_every: 0.5,
            min_ess_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEnergyEstimate {
    pub m_grid: Vec<f64>,
    /// Growth rate `(1/t) log(E[exp(m l_{2t})] / E[exp(m l_t)])` at the accepted `t`.
    pub f_hat: Vec<MeanEstimate>,
    /// Same over `[2t, 4t]`.
    pub f_hat_doubled: Vec<MeanEstimate>,
    /// `(1/t) log E[exp(m l_t)]`, which carries an `O(1/t)` prefactor bias.
    pub f_hat_cumulative: Vec<MeanEstimate>,
    /// Accepted horizon per `m`.
    pub t: Vec<f64>,
    pub n_walks: usize,
    pub batches: usize,
    /// Per `m`: moved by less than `3σ` when `t` doubled.
    pub stable: Vec<bool>,
    pub reliable: Vec<bool>,
    /// Smallest effective-size fraction seen per `m`.
    pub min_ess: Vec<f64>,
    pub largest_reliable_m: Option<f64>,
}

impl FreeEnergyEstimate {
    /// Consecutive estimates never drop by more than `k` combined σ.
    pub fn monotone_within(&self, k: f64) -> bool {
        self.f_hat
            .windows(2)
            .all(|w| w[1].mean >= w[0].mean - k * w[0].stderr.hypot(w[1].stderr))
    }

    /// Every reliable `m` passed the doubling check.
    pub fn all_stable(&self) -> bool {
        self.stable.iter().zip(&self.reliable).all(|(&s, &r)| s || !r)
    }

    /// CSV rows `m,F_hat,stderr,t,n_walks`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "F_hat", "stderr", "t", "n_walks"])?;
        for ((m, f), t) in self.m_grid.iter().zip(&self.f_hat).zip(&self.t) {
            w.write_record([
                m.to_string(),
                f.mean.to_string(),
                f.stderr.to_string(),
                t.to_string(),
                self.n_walks.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the walk from `x` for time `dt` and returns the time spent at the origin.
fn occupy<R: Rng>(x: &mut [i64], exp: &Exp<f64>, dt: f64, rng: &mut R) -> f64 {
    let mut now = 0.0;
    let mut at_origin = 0.0;
    loop {
        let hold = exp.sample(rng);
        if x.iter().all(|&c| c == 0) {
            at_origin += hold.min(dt - now);
        }
        now += hold;
        if now >= dt {
            return at_origin;
        }
        lattice_step(x, rng);
    }
}

/// Walkers under the tilt `exp(m l)`, resampled every `dt`.
struct Population {
    d: usize,
    m: f64,
    dt: f64,
    exp: Exp<f64>,
    rng: SimRng,
    /// Flat positions, `d` coordinates per walker.
    walkers: Vec<i64>,
    spare: Vec<i64>,
    weights: Vec<f64>,
    /// Running `log Ê[exp(m l_s)]` after each step.
    growth: Vec<f64>,
    min_ess: f64,
}

impl Population {
    fn new(d: usize, m: f64, size: usize, dt: f64, rng: SimRng) -> Result<Self> {
        Ok(Population {
            d,
            m,
            dt,
            exp: Exp::new(2.0 * d as f64).map_err(|e| Error::param("d", e.to_string()))?,
            rng,
            walkers: vec![0; size * d],
            spare: vec![0; size * d],
            weights: vec![0.0; size],
            growth: Vec::new(),
            min_ess: 1.0,
        })
    }

    fn extend_to(&mut self, steps: usize) -> Result<()> {
        let size = self.weights.len();
        while self.growth.len() < steps {
            for (x, w) in self.walkers.chunks_mut(self.d).zip(self.weights.iter_mut()) {
                *w = (self.m * occupy(x, &self.exp, self.dt, &mut self.rng)).exp();
            }
            let sum: f64 = self.weights.iter().sum();
            let sum_sq: f64 = self.weights.iter().map(|w| w * w).sum();
            let last = self.growth.last().copied().unwrap_or(0.0);
            self.growth.push(last + (sum / size as f64).ln());
            self.min_ess = self.min_ess.min(sum * sum / sum_sq / size as f64);
            if self.m != 0.0 {
                let pick = WeightedIndex::new(&self.weights).map_err(|e| Error::param("m", e.to_string()))?;
                for dst in self.spare.chunks_mut(self.d) {
                    let i = pick.sample(&mut self.rng);
                    dst.copy_from_slice(&self.walkers[i * self.d..(i + 1) * self.d]);
                }
                std::mem::swap(&mut self.walkers, &mut self.spare);
            }
        }
        Ok(())
    }

    /// Growth rate over steps `[a, b)`.
    fn rate(&self, a: usize, b: usize) -> f64 {
        let before = if a == 0 { 0.0 } else { self.growth[a - 1] };
        (self.growth[b - 1] - before) / ((b - a) as f64 * self.dt)
    }
}

struct SingleM {
    f_hat: MeanEstimate,
    doubled: MeanEstimate,
    cumulative: MeanEstimate,
    t: f64,
    stable: bool,
    min_ess: f64,
}

fn single_m(d: usize, m: f64, t: f64, size: usize, seed: u64, options: &FreeEnergyOptions) -> Result<SingleM> {
    let mut k = (t / options.resample_every).round().max(1.0) as usize;
    let dt = t / k as f64;
    let mut pops = (0..options.batches)
        .map(|b| Population::new(d, m, size, dt, stream_rng(seed, b as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut doubling = 0;
    loop {
        pops.par_iter_mut().try_for_each(|p| p.extend_to(4 * k))?;
        let n = size * pops.len();
        let summarize = |f: &dyn Fn(&Population) -> f64| MeanEstimate {
            n,
            ..mean_stderr(&pops.iter().map(f).collect::<Vec<_>>())
        };
        let f_hat = summarize(&|p| p.rate(k, 2 * k));
        let doubled = summarize(&|p| p.rate(2 * k, 4 * k));
        let stable = f_hat.agrees_with(&doubled, 3.0);
        if stable || doubling >= options.max_doublings {
            return Ok(SingleM {
                f_hat,
                doubled,
                cumulative: summarize(&|p| p.rate(0, k)),
                t: k as f64 * dt,
                stable,
                min_ess: pops.iter().map(|p| p.min_ess).fold(1.0, f64::min),
            });
        }
        k *= 2;
        doubling += 1;
    }
}

/// Estimates `F(m)` for every `m` in `m_grid` with independent resampled
/// populations. Per `m`, `t` doubles until the growth rate over `[t, 2t]`
/// agrees with the one over `[2t, 4t]` within `3σ` or `max_doublings` is
/// reached. Populations with the same batch index share their random stream
/// across `m`.
pub fn free_energy(
    d: usize,
    m_grid: &[f64],
    t: f64,
    n_walks: usize,
    seed: u64,
    options: &FreeEnergyOptions,
) -> Result<FreeEnergyEstimate> {
    if d == 0 {
        return Err(Error::param("d", "dimension must be at least 1"));
    }
    if m_grid.is_empty() || m_grid.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::param("m_grid", "need non-negative finite values"));
    }
    if !(options.resample_every > 0.0 && options.resample_every.is_finite()) {
        return Err(Error::param("resample_every", "must be positive"));
    }
    if !(t >= options.resample_every && t.is_finite()) {
        return Err(Error::param("t", "horizon must be at least one resampling interval"));
    }
    if options.batches < MIN_BATCHES {
        return Err(Error::param("batches", format!("at least {MIN_BATCHES} batches are required")));
    }
    if n_walks < 2 * options.batches {
        return Err(Error::InsufficientSamples(format!(
            "{n_walks} walks cannot fill {} populations",
            options.batches
        )));
    }
    let size = n_walks / options.batches;
    let mut out = FreeEnergyEstimate {
        m_grid: m_grid.to_vec(),
        f_hat: Vec::new(),
        f_hat_doubled: Vec::new(),
        f_hat_cumulative: Vec::new(),
        t: Vec::new(),
        n_walks: size * options.batches,
        batches: options.batches,
        stable: Vec::new(),
        reliable: Vec::new(),
        min_ess: Vec::new(),
        largest_reliable_m: None,
    };
    for &m in m_grid {
        let r = single_m(d, m, t, size, seed, options)?;
        let reliable = r.min_ess >= options.min_ess_fraction;
        if reliable {
            out.largest_reliable_m = Some(out.largest_reliable_m.map_or(m, |a: f64| a.max(m)));
        }
        out.f_hat.push(r.f_hat);
        out.f_hat_doubled.push(r.doubled);
        out.f_hat_cumulative.push(r.cumulative);
        out.t.push(r.t);
        out.stable.push(r.stable);
        out.reliable.push(reliable);
        out.min_ess.push(r.min_ess);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRow {
    pub gamma: f64,
    /// Argument `2^{n-1} (α+β)/γ` passed to `F`.
    pub m: f64,
    /// `γ F̂(m)`.
    pub value: MeanEstimate,
    /// `γ F̂(m) < α`: the exponent in the factorized mass is net negative.
    pub below_alpha: bool,
    pub reliable: bool,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaScan {
    pub alpha: f64,
    pub beta: f64,
    pub n_sources: usize,
    pub rows: Vec<GammaRow>,
    /// Smallest `γ` on the grid with `γ F̂ < α`.
    pub first_below_alpha: Option<f64>,
    pub stable: bool,
}

impl GammaScan {
    /// Point estimates strictly decreasing along the grid.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].value.mean < w[0].value.mean)
    }

    /// CSV rows `gamma,value,stderr,flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gamma", "value", "stderr", "flag"])?;
        for r in &self.rows {
            let flag = if !r.reliable {
                "unreliable"
            } else if r.below_alpha {
                "below-alpha"
            } else {
                "above-alpha"
            };
            w.write_record([
                r.gamma.to_string(),
                r.value.mean.to_string(),
                r.value.stderr.to_string(),
                flag.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `γ F̂(2^{n-1}(α+β)/γ)` for every `γ` in `gamma_grid`, `n = n_sources`.
/// With several sources the argument carries the factor `2^{n-1}` from
/// repeated Cauchy-Schwarz, which is loose but gives an upper bound.
#[allow(clippy::too_many_arguments)]
pub fn gamma_scan(
    d: usize,
    alpha: f64,
    beta: f64,
    gamma_grid: &[f64],
    n_sources: usize,
    t: f64,
    n_walks: usize,
    seed: u64,
    options: &FreeEnergyOptions,
) -> Result<GammaScan> {
    if !(alpha > 0.0) || beta < 0.0 {
        return Err(Error::param("alpha", "need alpha > 0 and beta >= 0"));
    }
    if gamma_grid.is_empty() || gamma_grid[0] <= 0.0 || gamma_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("gamma_grid", "must be positive and strictly increasing"));
    }
    if n_sources == 0 {
        return Err(Error::param("n_sources", "at least one source"));
    }
    let inflation = 2f64.powi(n_sources as i32 - 1);
    let m_grid: Vec<f64> = gamma_grid.iter().map(|g| inflation * (alpha + beta) / g).collect();
    // free_energy wants the grid sorted increasingly
    let mut order: Vec<usize> = (0..m_grid.len()).collect();
    order.sort_by(|&a, &b| m_grid[a].total_cmp(&m_grid[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| m_grid[i]).collect();
    let fe = free_energy(d, &sorted, t, n_walks, seed, options)?;
    let mut rows: Vec<GammaRow> = order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let g = gamma_grid[i];
            let f = fe.f_hat[k];
            let value = MeanEstimate {
                mean: g * f.mean,
                stderr: g * f.stderr,
                n: f.n,
            };
            GammaRow {
                gamma: g,
                m: sorted[k],
                below_alpha: value.mean < alpha,
                value,
                reliable: fe.reliable[k],
                t: fe.t[k],
            }
        })
        .collect();
    rows.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    Ok(GammaScan {
        alpha,
        beta,
        n_sources,
        first_below_alpha: rows.iter().find(|r| r.below_alpha).map(|r| r.gamma),
        rows,
        stable: fe.all_stable(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tilt_is_exact() {
        let fe = free_energy(1, &[0.0, 0.5], 4.0, 3000, 1, &FreeEnergyOptions::default()).unwrap();
        assert_eq!(fe.f_hat[0].mean, 0.0);
        assert_eq!(fe.f_hat[0].stderr, 0.0);
        assert!(fe.f_hat[1].mean > 0.0);
    }

    #[test]
    fn input_checks() {
        let o = FreeEnergyOptions::default();
        assert!(free_energy(0, &[0.1], 1.0, 100, 0, &o).is_err());
        assert!(free_energy(1, &[-0.1], 1.0, 100, 0, &o).is_err());
        assert!(free_energy(1, &[0.1], 1.0, 10, 0, &o).is_err());
        let few = FreeEnergyOptions { batches: 10, ..o };
        assert!(free_energy(1, &[0.1], 1.0, 100, 0, &few).is_err());
        assert!(gamma_scan(1, 1.0, 1.0, &[2.0, 1.0], 1, 1.0, 100, 0, &o).is_err());
    }

    #[test]
    fn source_inflation() {
        let o = FreeEnergyOptions {
            max_doublings: 0,
            ..Default::default()
        };
        let scan = gamma_scan(1, 1.0, 1.0, &[4.0, 8.0], 3, 2.0, 600, 0, &o).unwrap();
        assert_eq!(scan.rows[0].m, 2.0);
        assert_eq!(scan.rows[1].m, 1.0);
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("gamma,value,stderr,flag\n4,"));
    }
}
