//! Small statistical helpers shared by the Monte Carlo estimators.

use serde::Serialize;

/// A sample mean together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// `|self - other| <= k * sqrt(se1^2 + se2^2)`.
    pub fn agrees_with(&self, other: &MeanEstimate, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.stderr.hypot(other.stderr)
    }

    /// `|self - value| <= k * se`.
    pub fn agrees_with_value(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }

    pub fn relative_error(&self) -> f64 {
        if self.mean == 0.0 {
            if self.stderr == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.stderr / self.mean).abs()
        }
    }
}

/// Running sums that merge associatively.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn estimate(&self) -> MeanEstimate {
        if self.n == 0 {
            return MeanEstimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n: 0,
            };
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let stderr = if self.n > 1 {
            let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            stderr,
            n: self.n,
        }
    }
}

pub fn mean_stderr(xs: &[f64]) -> MeanEstimate {
    let mut acc = Accumulator::default();
    xs.iter().for_each(|&x| acc.push(x));
    acc.estimate()
}

/// Batch-means estimate: `xs` is cut into `batches` contiguous batches and the
/// standard error is the spread of batch means. Robust to serial correlation
/// shorter than a batch.
pub fn batch_means(xs: &[f64], batches: usize) -> MeanEstimate {
    let batches = batches.clamp(1, xs.len().max(1));
    let size = xs.len() / batches;
    if size == 0 {
        return mean_stderr(xs);
    }
    let mut acc = Accumulator::default();
    for b in 0..batches {
        let chunk = &xs[b * size..(b + 1) * size];
        acc.push(chunk.iter().sum::<f64>() / size as f64);
    }
    let mut est = acc.estimate();
    // Report the mean over every sample, not just the batched prefix.
    est.mean = xs.iter().sum::<f64>() / xs.len() as f64;
    est.n = xs.len();
    est
}

pub fn binomial_estimate(successes: usize, trials: usize) -> MeanEstimate {
    let p = successes as f64 / trials as f64;
    MeanEstimate {
        mean: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        n: trials,
    }
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

impl LinearFit {
    /// `|slope| > k * stderr`.
    pub fn significant(&self, k: f64) -> bool {
        self.slope.abs() > k * self.slope_stderr
    }
}

/// Unweighted least squares. Needs at least three points for a standard error.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_stderr = (rss / (nf - 2.0) / sxx).sqrt();
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
        points: n,
    })
}

/// Least-squares fit of `log(values)` against `xs`, skipping non-positive values.
pub fn log_linear_fit(xs: &[f64], values: &[f64]) -> Option<LinearFit> {
    let (fx, fy): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&x, &v)| (x, v.ln()))
        .unzip();
    least_squares(&fx, &fy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let est = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(est.mean, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((est.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        xs[..40].iter().for_each(|&x| a.push(x));
        xs[40..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        let whole = mean_stderr(&xs);
        assert!((a.estimate().mean - whole.mean).abs() < 1e-12);
        assert!((a.estimate().stderr - whole.stderr).abs() < 1e-12);
    }

    #[test]
    fn exact_line_has_zero_stderr() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 0.5 * x).collect();
        let fit = least_squares(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(least_squares(&[0.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn batch_means_of_constant() {
        let est = batch_means(&[2.0; 100], 10);
        assert_eq!(est.mean, 2.0);
        assert_eq!(est.stderr, 0.0);
    }
}
