//! Boxplot summaries.

use crate::error::{Error, Result};

/// Five-number boxplot summary with 1.5 IQR whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Smallest sample within `q1 - 1.5 IQR`.
    pub whisker_lo: f64,
    /// Largest sample within `q3 + 1.5 IQR`.
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Result<f64> {
    Ok(boxplot(values)?.median)
}

pub fn boxplot(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Usage("boxplot of an empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBreakdown("boxplot sample has non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let fence = 1.5 * (q3 - q1);
    let (lo_fence, hi_fence) = (q1 - fence, q3 + fence);
    let mut inside = sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
    let whisker_lo = inside.clone().next().unwrap_or(q1);
    let whisker_hi = inside.next_back().unwrap_or(q3);
    Ok(BoxStats {
        count: sorted.len(),
        median: quantile_sorted(&sorted, 0.5),
        q1,
        q3,
        whisker_lo,
        whisker_hi,
        outliers: sorted
            .iter()
            .copied()
            .filter(|v| !(lo_fence..=hi_fence).contains(v))
            .collect(),
    })
}
