//! Empirical CDFs and percentiles.

use crate::error::{Error, Result};

/// Sorted samples with step-CDF and interpolated percentile queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `(x₍ᵢ₎, i/n)` for i = 1..n.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
    }

    /// Percentile `p` in [0, 100], interpolating linearly between order
    /// statistics at rank `p/100·(n-1)`.
    pub fn percentile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let rank = (p.clamp(0.0, 100.0) / 100.0) * (n - 1) as f64;
        let lo = rank.floor() as usize;
        let hi = rank.ceil() as usize;
        let frac = rank - lo as f64;
        if lo == hi {
            self.sorted[lo]
        } else {
            self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo])
        }
    }

    pub fn median(&self) -> f64 {
        self.percentile(50.0)
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("empirical CDF samples"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("samples", "NaN sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { sorted })
}

pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    Ok(empirical_cdf(samples)?.percentile(p))
}
