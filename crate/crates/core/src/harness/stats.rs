//! Estimators and intervals used by the reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean with a 95% normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub count: u64,
    pub mean: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn estimate(&self) -> MeanEstimate {
        let var = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        let std_err = if self.count > 0 {
            (var / self.count as f64).sqrt()
        } else {
            0.0
        };
        MeanEstimate {
            count: self.count,
            mean: self.mean,
            std_err,
            ci_low: self.mean - Z95 * std_err,
            ci_high: self.mean + Z95 * std_err,
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Observed proportion with a 95% Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn wilson(successes: u64, trials: u64) -> Proportion {
    if trials == 0 {
        return Proportion {
            successes,
            trials,
            estimate: 0.0,
            ci_low: 0.0,
            ci_high: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        estimate: p,
        ci_low: (centre - half).max(0.0),
        ci_high: (centre + half).min(1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Pearson test of `counts` against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> ChiSquareTest {
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    if k < 2 || total == 0 {
        return ChiSquareTest {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        };
    }
    let expected = total as f64 / k as f64;
    let statistic = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = (k - 1) as u64;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    ChiSquareTest {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_matches_textbook_values() {
        let acc: Accumulator = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0].into_iter().collect();
        let e = acc.estimate();
        assert_eq!(e.mean, 5.0);
        // sample variance 32/7
        assert!((e.std_err - (32.0f64 / 7.0 / 8.0).sqrt()).abs() < 1e-12);
        assert!(e.ci_low < 5.0 && e.ci_high > 5.0);
    }

    #[test]
    fn constant_sample_has_zero_width() {
        let e: MeanEstimate = [0.0; 10].into_iter().collect::<Accumulator>().estimate();
        assert_eq!((e.ci_low, e.ci_high), (0.0, 0.0));
    }

    #[test]
    fn wilson_interval_reference() {
        // 8 of 10: reference interval (0.4902, 0.9433)
        let p = wilson(8, 10);
        assert!((p.ci_low - 0.4902).abs() < 1e-3);
        assert!((p.ci_high - 0.9433).abs() < 1e-3);
        assert!(wilson(0, 10).ci_low == 0.0);
    }

    #[test]
    fn chi_square_reference() {
        let t = chi_square_uniform(&[25, 25, 25, 25]);
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        // statistic 7.815 at 3 dof has p = 0.05
        let skew = chi_square_uniform(&[15, 25, 25, 35]);
        assert!((skew.statistic - 8.0).abs() < 1e-12);
        assert!(skew.p_value < 0.05 && skew.p_value > 0.04);
    }
}
