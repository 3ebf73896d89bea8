//! Sample moments with standard errors, and a two-sided normal quantile.

use serde::{Deserialize, Serialize};

use crate::numerics::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Fourth central sample moment.
    pub m4: f64,
}

impl Summary {
    /// Two-pass moments with compensated accumulation; `values` must be
    /// nonempty.
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        assert!(count > 0, "summary of an empty sample");
        let m = count as f64;
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / m;
        let mut s2 = CompensatedSum::new();
        let mut s4 = CompensatedSum::new();
        for &x in values {
            let d = x - mean;
            let d2 = d * d;
            s2.add(d2);
            s4.add(d2 * d2);
        }
        let variance = if count > 1 { s2.value() / (m - 1.0) } else { 0.0 };
        Summary {
            count,
            mean,
            variance,
            m4: s4.value() / m,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }

    /// Asymptotic standard error of the sample variance,
    /// `sqrt((mu_4 - sigma^4) / m)`.
    pub fn se_variance(&self) -> f64 {
        ((self.m4 - self.variance * self.variance).max(0.0) / self.count as f64).sqrt()
    }

    /// Number of standard errors separating the sample variance from `target`.
    pub fn variance_z(&self, target: f64) -> f64 {
        (self.variance - target) / self.se_variance()
    }
}
