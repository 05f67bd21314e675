//! Sample means with standard errors.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and standard error of `values` (unbiased sample variance).
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        // Welford keeps the result independent of the magnitude of the mean.
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self {
            mean: if n > 0 { mean } else { f64::NAN },
            se: (var / n.max(1) as f64).sqrt(),
            n,
        }
    }

    pub fn variance(&self) -> f64 {
        self.se * self.se * self.n as f64
    }

    /// `|a − b| / √(se_a² + se_b²)`.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let s = (self.se * self.se + other.se * other.se).sqrt();
        let d = (self.mean - other.mean).abs();
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / s
        }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

pub fn rms(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for v in values {
        n += 1;
        s += v * v;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_sample() {
        let e = Estimate::of([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.n, 4);
        assert!((e.mean - 2.5).abs() < 1e-15);
        assert!((e.variance() - 5.0 / 3.0).abs() < 1e-14);
        assert!((e.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_samples() {
        let e = Estimate::of([7.0]);
        assert_eq!((e.mean, e.se), (7.0, 0.0));
        assert!(Estimate::of(std::iter::empty()).mean.is_nan());
        let a = Estimate {
            mean: 1.0,
            se: 0.0,
            n: 1,
        };
        assert_eq!(a.z_score(&a), 0.0);
        assert!(a.covers(1.0, 3.0));
    }

    #[test]
    fn rms_values() {
        assert!((rms([3.0, 4.0]) - (12.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(rms(std::iter::empty()), 0.0);
    }
}
