//! Estimators and confidence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% standard-normal quantile.
pub const Z95: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<Interval> {
    if trials == 0 {
        return Err(Error::InvalidParameter("Wilson interval needs trials >= 1".into()));
    }
    if successes > trials {
        return Err(Error::InvalidParameter(format!(
            "successes {successes} exceed trials {trials}"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let mut lo = (center - half).max(0.0);
    let mut hi = (center + half).min(1.0);
    // the closed form reaches the boundaries only up to rounding
    if successes == 0 {
        lo = 0.0;
    }
    if successes == trials {
        hi = 1.0;
    }
    Ok(Interval { lo, hi })
}

/// Running mean and variance (Welford), merged in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Normal-approximation CI `mean ± z s / sqrt(n)`.
    pub fn normal_ci(&self, z: f64) -> Interval {
        if self.n == 0 {
            return Interval { lo: 0.0, hi: 0.0 };
        }
        let half = z * (self.sample_variance() / self.n as f64).sqrt();
        Interval {
            lo: self.mean - half,
            hi: self.mean + half,
        }
    }
}

/// Least-squares slope of `ln y` against `ln x`. Needs at least two points
/// with positive coordinates and distinct `x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter(
            "slope fit needs two or more paired points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "log-log fit needs finite positive values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope fit needs distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Kolmogorov-Smirnov distance of a sample on `[0,1]` from the uniform law.
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64Mcg;

    /// Wilson bounds as the roots of `(p̂ - p)² = z² p (1-p) / n`,
    /// found by bisection on each side of p̂.
    fn wilson_by_root_finding(k: u64, n: u64, z: f64) -> (f64, f64) {
        let ph = k as f64 / n as f64;
        let f = |p: f64| (ph - p).powi(2) - z * z * p * (1.0 - p) / n as f64;
        let bisect = |mut a: f64, mut b: f64| {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (f(a) > 0.0) == (f(m) > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let lo = if k == 0 { 0.0 } else { bisect(0.0, ph) };
        let hi = if k == n { 1.0 } else { bisect(ph, 1.0) };
        (lo, hi)
    }

    #[test]
    fn wilson_examples() {
        let ci = wilson_interval(0, 40, Z95).unwrap();
        assert_eq!(ci.lo, 0.0);
        let ci = wilson_interval(40, 40, Z95).unwrap();
        assert_eq!(ci.hi, 1.0);

        let (lo, hi) = wilson_by_root_finding(50, 100, Z95);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let ci = wilson_interval(50, 100, Z95).unwrap();
        assert!((ci.lo - lo).abs() < 1e-9 && (ci.hi - hi).abs() < 1e-9);
        assert!((ci.lo - 0.4038).abs() < 1e-3 && (ci.hi - 0.5962).abs() < 1e-3);

        for (k, n) in [(1, 7), (3, 10), (999, 1000), (17, 6000)] {
            let (lo, hi) = wilson_by_root_finding(k, n, Z95);
            let ci = wilson_interval(k, n, Z95).unwrap();
            assert!((ci.lo - lo).abs() < 1e-9 && (ci.hi - hi).abs() < 1e-9);
            assert!(ci.contains(k as f64 / n as f64));
        }

        assert!(wilson_interval(0, 0, Z95).is_err());
        assert!(wilson_interval(5, 4, Z95).is_err());
    }

    #[test]
    fn wilson_coverage_on_synthetic_bernoulli() {
        let mut rng = Pcg64Mcg::seed_from_u64(2024);
        for p in [0.02, 0.3, 0.7] {
            let n = 6000u64;
            let hits = (0..1000)
                .filter(|_| {
                    let k = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
                    wilson_interval(k, n, Z95).unwrap().contains(p)
                })
                .count();
            assert!(hits >= 930, "p={p}: {hits}/1000");
        }
    }

    #[test]
    fn accumulator_matches_two_pass() {
        let xs = [1.5, 2.0, -0.25, 8.0, 3.125, 0.0];
        let mut acc = MeanAccumulator::default();
        xs.iter().for_each(|&x| acc.push(x));
        let m = xs.iter().sum::<f64>() / 6.0;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 5.0;
        assert!((acc.mean() - m).abs() < 1e-12);
        assert!((acc.sample_variance() - v).abs() < 1e-12);
        let ci = acc.normal_ci(Z95);
        assert!((ci.hi - ci.lo - 2.0 * Z95 * (v / 6.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [100.0, 400.0, 1600.0, 10_000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.9)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 0.9).abs() < 1e-12);
        assert!(loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ks_of_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&xs) <= 0.0005 + 1e-12);
        let skew: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(ks_uniform(&skew) > 0.2);
    }
}
