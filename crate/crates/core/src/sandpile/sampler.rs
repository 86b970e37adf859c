use std::io::Write;

use rand::Rng;
use serde::Serialize;

use super::stabilize::{relax, AvalancheRecord, HeightConfig, Odometer, Scheduler};
use super::{Mode, TopplingMatrix};
use crate::rng::{stream_rng, SimRng};
use crate::stats::{Accumulator, MeanEstimate};
use crate::{Error, Result};

/// Markov chain on recurrent configurations: add a grain at a uniformly random
/// site and stabilize. The uniform measure on recurrent configurations is
/// invariant. The chain starts from the maximal stable configuration, which
/// is recurrent.
pub struct StationaryChain<'m> {
    matrix: &'m TopplingMatrix,
    heights: Vec<i64>,
    rng: SimRng,
    budget: u64,
    seed: u64,
    step: u64,
}

impl<'m> StationaryChain<'m> {
    pub fn new(matrix: &'m TopplingMatrix, seed: u64, budget: u64) -> Result<Self> {
        if matrix.mode() != Mode::IntegerSandpile {
            return Err(Error::ModeMismatch(
                "stationary sampling is implemented for the integer sandpile only".into(),
            ));
        }
        if budget == 0 {
            return Err(Error::param("budget", "must be at least 1"));
        }
        Ok(StationaryChain {
            matrix,
            heights: HeightConfig::maximal(matrix).heights,
            rng: stream_rng(seed, 0),
            budget,
            seed,
            step: 0,
        })
    }

    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Adds a grain at `site`, advancing the chain.
    pub fn add_at(&mut self, site: usize) -> Result<Odometer> {
        if site >= self.matrix.len() {
            return Err(Error::SiteOutOfRange(site));
        }
        let mut counts = vec![0; self.matrix.len()];
        self.heights[site] += 1;
        relax::<i64, SimRng>(self.matrix, &mut self.heights, &mut counts, self.budget, Scheduler::Fifo)?;
        self.step += 1;
        Ok(Odometer {
            counts,
            source_site: Some(site),
        })
    }

    /// One chain step with a uniformly random addition site.
    pub fn advance(&mut self) -> Result<(usize, Odometer)> {
        let site = self.rng.random_range(0..self.matrix.len());
        let odo = self.add_at(site)?;
        Ok((site, odo))
    }

    /// Odometer of `η + δ_site` for the current state, without moving the chain.
    pub fn probe(&self, site: usize) -> Result<Odometer> {
        if site >= self.matrix.len() {
            return Err(Error::SiteOutOfRange(site));
        }
        let mut heights = self.heights.clone();
        let mut counts = vec![0; self.matrix.len()];
        heights[site] += 1;
        relax::<i64, SimRng>(self.matrix, &mut heights, &mut counts, self.budget, Scheduler::Fifo)?;
        Ok(Odometer {
            counts,
            source_site: Some(site),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarySample {
    pub seed: u64,
    pub step: u64,
    pub heights: Vec<i64>,
    pub avalanche: AvalancheRecord,
}

/// Iterator over thinned chain states after burn-in. Each item carries the
/// avalanche of the addition that produced it.
pub struct StationaryStream<'m> {
    chain: StationaryChain<'m>,
    remaining: usize,
    thinning: usize,
    failed: bool,
}

impl Iterator for StationaryStream<'_> {
    type Item = Result<StationarySample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 || self.failed {
            return None;
        }
        let mut last = None;
        for _ in 0..self.thinning {
            match self.chain.advance() {
                Ok(step) => last = Some(step),
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        let (site, odo) = last.expect("thinning >= 1");
        self.remaining -= 1;
        Some(Ok(StationarySample {
            seed: self.chain.seed,
            step: self.chain.step,
            heights: self.chain.heights.clone(),
            avalanche: AvalancheRecord::from_odometer(self.chain.matrix, site, &odo),
        }))
    }
}

/// Runs `burn_in` steps, then yields every `thinning`-th state, `n_samples` times.
pub fn sample_stationary(
    matrix: &TopplingMatrix,
    burn_in: u64,
    n_samples: usize,
    thinning: usize,
    seed: u64,
    budget: u64,
) -> Result<StationaryStream<'_>> {
    if thinning == 0 {
        return Err(Error::param("thinning", "must be at least 1"));
    }
    let mut chain = StationaryChain::new(matrix, seed, budget)?;
    for _ in 0..burn_in {
        chain.advance()?;
    }
    Ok(StationaryStream {
        chain,
        remaining: n_samples,
        thinning,
        failed: false,
    })
}

/// Stationary means of `N(x, y, η)` for each probe site `x` and every `y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdometerMeans {
    pub probe: usize,
    pub means: Vec<MeanEstimate>,
}

/// Estimates `E_μ N(x, ·, η)` for each `x` in `probes` by probing the chain
/// state every `thinning` steps. Standard errors come from `batches` batch
/// means, which absorbs the chain's autocorrelation.
pub fn mean_odometer(
    matrix: &TopplingMatrix,
    probes: &[usize],
    burn_in: u64,
    n_samples: usize,
    thinning: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<OdometerMeans>> {
    if thinning == 0 || batches == 0 || n_samples < batches {
        return Err(Error::InsufficientSamples(format!(
            "{n_samples} samples cannot fill {batches} batches"
        )));
    }
    let n = matrix.len();
    let mut chain = StationaryChain::new(matrix, seed, super::DEFAULT_BUDGET)?;
    for _ in 0..burn_in {
        chain.advance()?;
    }
    let batch_len = n_samples / batches;
    let used = batch_len * batches;
    let mut batch_sums = vec![vec![0.0; n]; probes.len()];
    let mut batch_acc = vec![vec![Accumulator::default(); n]; probes.len()];
    for s in 0..used {
        for _ in 0..thinning {
            chain.advance()?;
        }
        for (p, &x) in probes.iter().enumerate() {
            let odo = chain.probe(x)?;
            for (sum, &c) in batch_sums[p].iter_mut().zip(&odo.counts) {
                *sum += c as f64;
            }
        }
        if (s + 1) % batch_len == 0 {
            for p in 0..probes.len() {
                for y in 0..n {
                    batch_acc[p][y].push(batch_sums[p][y] / batch_len as f64);
                    batch_sums[p][y] = 0.0;
                }
            }
        }
    }
    Ok(probes
        .iter()
        .enumerate()
        .map(|(p, &x)| OdometerMeans {
            probe: x,
            means: batch_acc[p]
                .iter()
                .map(|acc| {
                    let mut est = acc.estimate();
                    est.n = used;
                    est
                })
                .collect(),
        })
        .collect())
}

#[derive(Serialize)]
struct HeightLine<'a> {
    seed: u64,
    step: u64,
    heights: &'a [i64],
}

/// One JSON object `{seed, step, heights}` per line.
pub fn write_heights_jsonl<W: Write>(samples: &[StationarySample], mut out: W) -> Result<()> {
    for s in samples {
        serde_json::to_writer(
            &mut out,
            &HeightLine {
                seed: s.seed,
                step: s.step,
                heights: &s.heights,
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// CSV rows `seed,step,site,size,diameter`.
pub fn write_avalanche_csv<W: Write>(samples: &[StationarySample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "step", "site", "size", "diameter"])?;
    for s in samples {
        w.write_record([
            s.seed.to_string(),
            s.step.to_string(),
            s.avalanche.site.to_string(),
            s.avalanche.size.to_string(),
            s.avalanche.diameter.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandpile::{assemble_toppling_matrix, burning_test, ToppleParams, DEFAULT_BUDGET};
    use crate::topology::{build_box, build_site_classes, BoxLattice, ClassPattern};

    fn integer(b: &BoxLattice, p: &ClassPattern) -> TopplingMatrix {
        let c = build_site_classes(b, p).unwrap();
        assemble_toppling_matrix(b, &c, ToppleParams::default(), Mode::IntegerSandpile).unwrap()
    }

    #[test]
    fn chain_stays_recurrent() {
        let m = integer(&build_box(2, 2).unwrap(), &ClassPattern::Empty);
        let stream = sample_stationary(&m, 100, 50, 3, 11, DEFAULT_BUDGET).unwrap();
        for s in stream {
            let s = s.unwrap();
            assert!(burning_test(&m, &HeightConfig::new(s.heights)).unwrap().recurrent);
        }
    }

    #[test]
    fn stream_is_seeded() {
        let m = integer(&BoxLattice::rectangle(&[4]).unwrap(), &ClassPattern::Empty);
        let run = |seed| -> Vec<StationarySample> {
            sample_stationary(&m, 10, 20, 1, seed, DEFAULT_BUDGET)
                .unwrap()
                .map(Result::unwrap)
                .collect()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn output_formats() {
        let m = integer(&BoxLattice::rectangle(&[2]).unwrap(), &ClassPattern::Empty);
        let samples: Vec<_> = sample_stationary(&m, 0, 2, 1, 7, DEFAULT_BUDGET)
            .unwrap()
            .map(Result::unwrap)
            .collect();
        let mut jsonl = Vec::new();
        write_heights_jsonl(&samples, &mut jsonl).unwrap();
        let text = String::from_utf8(jsonl).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["seed"], 7);
        assert_eq!(first["step"], 1);
        assert_eq!(first["heights"].as_array().unwrap().len(), 2);

        let mut csv = Vec::new();
        write_avalanche_csv(&samples, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("seed,step,site,size,diameter\n7,1,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn continuous_chain_rejected() {
        let b = build_box(1, 1).unwrap();
        let c = build_site_classes(&b, &ClassPattern::All).unwrap();
        let params = ToppleParams {
            gamma: 0.5,
            alpha: 1.0,
            beta: 0.0,
        };
        let m = assemble_toppling_matrix(&b, &c, params, Mode::ContinuousAvalanche).unwrap();
        assert!(matches!(
            StationaryChain::new(&m, 0, 10),
            Err(Error::ModeMismatch(_))
        ));
    }
}
