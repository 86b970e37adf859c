use serde::Serialize;

use super::tree::{survival_samples, SurvivalModel};
use crate::stats::{binomial_estimate, log_linear_fit, LinearFit, MeanEstimate};
use crate::{Error, Result};

/// Exponent pair from the Chernoff bound on the depth process:
/// `P(X_n < eps n) <= exp(-c n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChernoffRate {
    pub t: f64,
    pub c: f64,
}

/// `t = ½ log(2q/(1+eps) - q)` and `c = -[eps t + log((q e^{-t} + e^t)/(q+1))]`.
/// Admissible `eps` lie in `(0, (q-1)/(q+1))`.
pub fn chernoff_rate(q: usize, p: f64, eps: f64) -> Result<ChernoffRate> {
    if q < 2 {
        return Err(Error::param("q", "branching number must be at least 2"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param("p", format!("{p} is not in (0, 1)")));
    }
    let qf = q as f64;
    let drift = (qf - 1.0) / (qf + 1.0);
    if !(eps > 0.0 && eps < drift) {
        return Err(Error::param(
            "eps",
            format!("{eps} is outside the admissible range (0, {drift})"),
        ));
    }
    let t = 0.5 * (2.0 * qf / (1.0 + eps) - qf).ln();
    let c = -(eps * t + ((qf * (-t).exp() + t.exp()) / (qf + 1.0)).ln());
    if !(t > 0.0 && c > 0.0) {
        return Err(Error::param("eps", format!("{eps} gives no decay (t = {t}, c = {c})")));
    }
    Ok(ChernoffRate { t, c })
}

/// `(1-p)^{eps n} + e^{-c n}`.
pub fn analytic_tail_bound(q: usize, p: f64, eps: f64, n: u64) -> Result<f64> {
    let rate = chernoff_rate(q, p, eps)?;
    let n = n as f64;
    Ok((1.0 - p).powf(eps * n) + (-rate.c * n).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub grid: Vec<u64>,
    /// `P̂(T > n)` per grid point, binomial standard errors.
    pub survival: Vec<MeanEstimate>,
    pub fit: Option<LinearFit>,
    /// Analytic bound on the grid, when the model has one.
    pub bound: Option<Vec<f64>>,
    pub n_walks: usize,
}

impl TailEstimate {
    /// Every grid point with `P̂ <= bound + k σ`; `None` without a bound.
    pub fn below_bound(&self, k: f64) -> Option<bool> {
        let bound = self.bound.as_ref()?;
        Some(
            self.survival
                .iter()
                .zip(bound)
                .all(|(e, b)| e.mean <= b + k * e.stderr),
        )
    }
}

/// Monte Carlo survival tail on `n_grid`. With an annealed perfect- or
/// soft-trap law and `eps`, the analytic bound is attached.
///
/// Fails when the deepest grid point saw no survivor although shallower ones
/// did: the fit would then rest on an empty bucket. An identically zero tail
/// (e.g. every vertex a perfect trap) is a valid answer.
pub fn survival_tail(
    model: &SurvivalModel<'_>,
    n_grid: &[u64],
    n_walks: usize,
    eps: Option<f64>,
    seed: u64,
) -> Result<TailEstimate> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("n_grid", "must be non-empty and strictly increasing"));
    }
    if n_walks < 2 {
        return Err(Error::param("n_walks", "need at least two walks"));
    }
    let horizon = *n_grid.last().expect("non-empty grid");
    let samples = survival_samples(model, horizon, n_walks, seed)?;
    let survival: Vec<MeanEstimate> = n_grid
        .iter()
        .map(|&n| {
            let alive = samples.iter().filter(|&&(t, killed)| !killed || t > n).count();
            binomial_estimate(alive, n_walks)
        })
        .collect();
    let any = survival.iter().any(|e| e.mean > 0.0);
    if any && survival.last().expect("non-empty").mean == 0.0 {
        return Err(Error::InsufficientSamples(format!(
            "no walk out of {n_walks} survived past n = {horizon}"
        )));
    }
    let xs: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = survival.iter().map(|e| e.mean).collect();
    let bound = match (model, eps) {
        (SurvivalModel::Annealed(law), Some(eps)) if law.trap_prob > 0.0 && law.trap_prob < 1.0 => {
            // A soft trap kills with probability trap_prob * kill_prob per new
            // vertex, which dominates the perfect-trap law with that parameter.
            let p = law.trap_prob * law.kill_prob;
            Some(
                n_grid
                    .iter()
                    .map(|&n| analytic_tail_bound(law.q, p, eps, n))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        _ => None,
    };
    Ok(TailEstimate {
        grid: n_grid.to_vec(),
        survival,
        fit: log_linear_fit(&xs, &ys),
        bound,
        n_walks,
    })
}
