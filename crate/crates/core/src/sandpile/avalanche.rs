use serde::Serialize;

use super::sampler::StationaryChain;
use super::stabilize::AvalancheRecord;
use super::TopplingMatrix;
use crate::stats::{binomial_estimate, log_linear_fit, LinearFit, MeanEstimate};
use crate::{Error, Result};

/// Avalanches of additions at a fixed site `x`, each probed from a stationary
/// state. The chain itself keeps adding at uniform sites; the probe does not
/// move it.
pub fn avalanches_at(
    matrix: &TopplingMatrix,
    x: usize,
    burn_in: u64,
    n_samples: usize,
    thinning: usize,
    seed: u64,
    budget: u64,
) -> Result<Vec<AvalancheRecord>> {
    if thinning == 0 {
        return Err(Error::param("thinning", "must be at least 1"));
    }
    let mut chain = StationaryChain::new(matrix, seed, budget)?;
    for _ in 0..burn_in {
        chain.advance()?;
    }
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..thinning {
            chain.advance()?;
        }
        let odo = chain.probe(x)?;
        out.push(AvalancheRecord::from_odometer(matrix, x, &odo));
    }
    Ok(out)
}

/// Empirical `P(size > k)` and `P(diameter > n)` with log-linear fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvalancheTails {
    pub n_samples: usize,
    pub size_tail: Vec<(usize, MeanEstimate)>,
    pub diameter_tail: Vec<(usize, MeanEstimate)>,
    pub mean_size: MeanEstimate,
    /// `None` when fewer than three tail points are positive.
    pub size_fit: Option<LinearFit>,
    pub diameter_fit: Option<LinearFit>,
}

/// Tails on `0..=max_size` and `0..=max_diameter`. Fits use the points
/// with positive estimates only.
pub fn avalanche_statistics(
    records: &[AvalancheRecord],
    max_size: usize,
    max_diameter: usize,
) -> Result<AvalancheTails> {
    if records.is_empty() {
        return Err(Error::InsufficientSamples("no avalanche records".into()));
    }
    let n = records.len();
    let tail = |max: usize, f: &dyn Fn(&AvalancheRecord) -> usize| -> Vec<(usize, MeanEstimate)> {
        (0..=max)
            .map(|k| {
                let hits = records.iter().filter(|r| f(r) > k).count();
                (k, binomial_estimate(hits, n))
            })
            .collect()
    };
    let size_tail = tail(max_size, &|r| r.size);
    let diameter_tail = tail(max_diameter, &|r| r.diameter);
    let sizes: Vec<f64> = records.iter().map(|r| r.size as f64).collect();
    let fit = |t: &[(usize, MeanEstimate)]| {
        let xs: Vec<f64> = t.iter().map(|(k, _)| *k as f64).collect();
        let ys: Vec<f64> = t.iter().map(|(_, e)| e.mean).collect();
        log_linear_fit(&xs, &ys)
    };
    Ok(AvalancheTails {
        n_samples: n,
        size_fit: fit(&size_tail),
        diameter_fit: fit(&diameter_tail),
        mean_size: crate::stats::mean_stderr(&sizes),
        size_tail,
        diameter_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandpile::{assemble_toppling_matrix, Mode, ToppleParams, DEFAULT_BUDGET};
    use crate::topology::{build_box, build_site_classes, ClassPattern};

    #[test]
    fn one_site_volume() {
        let b = build_box(1, 0).unwrap();
        let c = build_site_classes(&b, &ClassPattern::Empty).unwrap();
        let m = assemble_toppling_matrix(&b, &c, ToppleParams::default(), Mode::IntegerSandpile).unwrap();
        let recs = avalanches_at(&m, 0, 10, 300, 1, 3, DEFAULT_BUDGET).unwrap();
        assert!(recs.iter().all(|r| r.size <= 1 && r.diameter == 0));
        let t = avalanche_statistics(&recs, 2, 2).unwrap();
        assert!(t.diameter_tail.iter().all(|(_, e)| e.mean == 0.0));
        assert_eq!(t.size_tail[1].1.mean, 0.0);
        // height uniform on {0, 1}: the addition topples iff the height is 1
        assert!(t.size_tail[0].1.agrees_with_value(0.5, 4.0));
        assert!(t.diameter_fit.is_none());
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            avalanche_statistics(&[], 3, 3),
            Err(Error::InsufficientSamples(_))
        ));
    }
}
