use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::stats::inverse_normal_cdf;

/// Piecewise-linear map from a column's empirical distribution onto the
/// standard normal. Knots are the distinct training values paired with the
/// normal quantile of their mid-rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNormalizer {
    values: Vec<f64>,
    scores: Vec<f64>,
}

/// Fit on a column, ignoring NaN (missing) entries.
pub fn fit_normalizer(column: &[f64]) -> Result<QuantileNormalizer> {
    QuantileNormalizer::fit(column)
}

impl QuantileNormalizer {
    pub fn fit(column: &[f64]) -> Result<Self> {
        ensure!(column.iter().all(|v| !v.is_infinite()), Data, "column contains infinite values");
        let mut xs: Vec<f64> = column.iter().copied().filter(|v| v.is_finite()).collect();
        ensure!(!xs.is_empty(), Data, "cannot fit a normalizer on a column with no observed values");
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let mut values = Vec::new();
        let mut scores = Vec::new();
        let mut i = 0;
        while i < xs.len() {
            let mut j = i;
            while j < xs.len() && xs[j] == xs[i] {
                j += 1;
            }
            // mean of (k + 0.5) / n over the tied block [i, j)
            let level = (i + j) as f64 / 2.0 / n;
            values.push(xs[i]);
            scores.push(inverse_normal_cdf(level));
            i = j;
        }
        if values.len() == 1 {
            scores[0] = 0.0;
        }
        Ok(Self { values, scores })
    }

    /// A constant column: every value normalizes to 0.
    pub fn is_degenerate(&self) -> bool {
        self.values.len() == 1
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.values, &self.scores)
    }

    pub fn normalize(&self, x: f64) -> Result<f64> {
        ensure!(x.is_finite(), NonFinite, "cannot normalize {x}");
        Ok(interpolate(&self.values, &self.scores, x))
    }

    /// Inverse map; results are clamped to the training range.
    pub fn denormalize(&self, z: f64) -> Result<f64> {
        ensure!(z.is_finite(), NonFinite, "cannot denormalize {z}");
        Ok(interpolate(&self.scores, &self.values, z))
    }
}

/// Linear interpolation through increasing knots `xs -> ys`, constant
/// beyond the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let hi = xs.partition_point(|&k| k <= x);
    let lo = hi - 1;
    if xs[lo] == x {
        return ys[lo];
    }
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}
