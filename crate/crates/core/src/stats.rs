//! Sample statistics over disorder samples and Markov-chain time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean, standard error of the mean and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl Estimate {
    /// An exact value, e.g. an analytic reference.
    pub fn exact(value: f64) -> Self {
        Estimate {
            mean: value,
            stderr: 0.0,
            n_samples: 1,
        }
    }

    /// Mean and `sd/√n` of i.i.d. samples, accumulated in slice order.
    /// Bitwise-identical samples give their common value and stderr 0.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n_samples: 0,
            };
        }
        if xs.iter().all(|x| x.to_bits() == xs[0].to_bits()) {
            return Estimate {
                mean: xs[0],
                stderr: 0.0,
                n_samples: n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            0.0
        } else {
            let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n as f64 - 1.0) / n as f64).sqrt()
        };
        Estimate {
            mean,
            stderr,
            n_samples: n,
        }
    }

    /// `√(se_a² + se_b²)`.
    pub fn combined_stderr(&self, other: &Estimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    pub fn scaled(&self, a: f64) -> Estimate {
        Estimate {
            mean: a * self.mean,
            stderr: a.abs() * self.stderr,
            n_samples: self.n_samples,
        }
    }
}

/// Per-sample differences `a_i − b_i`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Delta-method standard error of `f(x̄_1, …, x̄_k)` given per-sample
/// columns and the gradient of `f` at the means.
pub fn delta_method_stderr(columns: &[&[f64]], gradient: &[f64]) -> f64 {
    let n = columns.first().map_or(0, |c| c.len());
    if n < 2 {
        return 0.0;
    }
    let means: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
    let combined: Vec<f64> = (0..n)
        .map(|i| {
            columns
                .iter()
                .zip(&means)
                .zip(gradient)
                .map(|((c, m), g)| g * (c[i] - m))
                .sum()
        })
        .collect();
    let ss: f64 = combined.iter().map(|x| x * x).sum();
    (ss / (n as f64 - 1.0) / n as f64).sqrt()
}

/// One level of a blocking analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockLevel {
    pub block_size: usize,
    pub n_blocks: usize,
    pub stderr: f64,
}

/// Flyvbjerg-Petersen blocking: stderr of the mean estimated from block
/// means at block sizes 1, 2, 4, … while at least `min_blocks` remain.
pub fn blocking_analysis(series: &[f64], min_blocks: usize) -> Vec<BlockLevel> {
    let mut levels = Vec::new();
    let mut data = series.to_vec();
    let mut block_size = 1;
    let min_blocks = min_blocks.max(2);
    while data.len() >= min_blocks {
        let n = data.len();
        let m = mean(&data);
        let var = data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
        levels.push(BlockLevel {
            block_size,
            n_blocks: n,
            stderr: (var / n as f64).sqrt(),
        });
        data = data.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        block_size *= 2;
    }
    levels
}

/// Plateau estimate of the stderr: the largest value over levels that keep
/// at least 16 blocks (or the last level if none do).
pub fn blocked_stderr(series: &[f64]) -> f64 {
    let levels = blocking_analysis(series, 2);
    let usable: Vec<&BlockLevel> = levels.iter().filter(|l| l.n_blocks >= 16).collect();
    if usable.is_empty() {
        return levels.last().map_or(0.0, |l| l.stderr);
    }
    usable.iter().map(|l| l.stderr).fold(0.0, f64::max)
}

/// Integrated autocorrelation time from the blocking plateau,
/// `τ = ½ (se_blocked / se_naive)²`.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let levels = blocking_analysis(series, 2);
    let naive = levels.first().map_or(0.0, |l| l.stderr);
    if naive <= 0.0 {
        return 0.5;
    }
    let r = blocked_stderr(series) / naive;
    0.5 * r * r
}

/// Ordinary least squares `y = a + b x`; returns `(slope, slope_stderr)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::usage("linear fit needs at least two (x, y) points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::usage("linear fit needs distinct x values"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, stderr))
}

/// Composite Simpson weights for `nodes` equally spaced points on `[a, b]`.
pub fn simpson_weights(a: f64, b: f64, nodes: usize) -> Result<Vec<f64>> {
    if nodes < 3 || nodes.is_multiple_of(2) {
        return Err(Error::usage(format!(
            "Simpson quadrature needs an odd node count >= 3, got {nodes}"
        )));
    }
    let h = (b - a) / (nodes - 1) as f64;
    Ok((0..nodes)
        .map(|i| {
            let w = if i == 0 || i == nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn estimate_of_constant_series() {
        let e = Estimate::from_samples(&[0.25; 100]);
        assert_eq!(e.mean, 0.25);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.n_samples, 100);
    }

    #[test]
    fn estimate_mean_and_stderr() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sd = sqrt(5/3), stderr = sd/2
        assert!((e.stderr - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(Estimate::from_samples(&[3.0]).stderr, 0.0);
    }

    #[test]
    fn delta_method_on_linear_function_is_exact() {
        let a = [1.0, 2.0, 4.0, 3.0];
        let b = [0.5, 0.1, 0.9, 0.2];
        let diff = paired_difference(&a, &b);
        let se = delta_method_stderr(&[&a, &b], &[1.0, -1.0]);
        assert!((se - Estimate::from_samples(&diff).stderr).abs() < 1e-15);
    }

    #[test]
    fn blocking_grows_for_correlated_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = 0.0;
        let series: Vec<f64> = (0..1 << 14)
            .map(|_| {
                x = 0.9 * x + rng.random::<f64>() - 0.5;
                x
            })
            .collect();
        let levels = blocking_analysis(&series, 16);
        let first = levels[0].stderr;
        let plateau = blocked_stderr(&series);
        assert!(plateau > 3.0 * first, "{plateau} vs {first}");
        // non-decreasing until the plateau (τ ≈ 10 here, so the first five levels)
        for w in levels[..5].windows(2) {
            assert!(w[1].stderr >= w[0].stderr);
        }
        let tau = integrated_autocorrelation(&series);
        // AR(1) with φ = 0.9: τ = (1+φ)/(2(1−φ)) = 9.5
        assert!((5.0..15.0).contains(&tau), "tau {tau}");
    }

    #[test]
    fn linear_fit_recovers_slope() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 1.0 * v).collect();
        let (b, se) = linear_fit(&x, &y).unwrap();
        assert!((b + 1.0).abs() < 1e-14);
        assert!(se < 1e-14);
        let y2 = [1.1, -0.1, -0.9, -2.1];
        let (b, se) = linear_fit(&x, &y2).unwrap();
        // hand least squares: sxx = 5, sxy = -5.2
        assert!((b + 1.04).abs() < 1e-12);
        assert!(se > 0.0);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let w = simpson_weights(0.0, 2.0, 5).unwrap();
        let nodes: Vec<f64> = (0..5).map(|i| i as f64 * 0.5).collect();
        let integral: f64 = w.iter().zip(&nodes).map(|(w, x)| w * (x * x * x - x)).sum();
        assert!((integral - (4.0 - 2.0)).abs() < 1e-14);
        assert!(simpson_weights(0.0, 1.0, 4).is_err());
        assert!(simpson_weights(0.0, 1.0, 1).is_err());
    }
}
