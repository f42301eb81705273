//! Percentage-difference tables between two result vectors.
//!
//! Each element contributes `|a - b| / max(|a|, FLOOR_GUARD) * 100` where
//! `a` is the baseline. Elements with both magnitudes below the guard are
//! reported as 0% and counted as tiny.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FLOOR_GUARD: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceRow {
    pub metric: String,
    pub min_percent: f64,
    pub max_percent: f64,
    pub mean_percent: f64,
    pub elements: usize,
    pub tiny_elements: usize,
}

pub fn percent_difference(baseline: f64, candidate: f64) -> (f64, bool) {
    if baseline.abs() < FLOOR_GUARD && candidate.abs() < FLOOR_GUARD {
        return (0.0, true);
    }
    ((baseline - candidate).abs() / baseline.abs().max(FLOOR_GUARD) * 100.0, false)
}

pub fn difference_row(metric: &str, baseline: &[f64], candidate: &[f64]) -> Result<DifferenceRow> {
    if baseline.len() != candidate.len() {
        return Err(Error::Usage(format!(
            "{metric}: baseline has {} elements, candidate {}",
            baseline.len(),
            candidate.len()
        )));
    }
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let mut tiny = 0;
    for (&a, &b) in baseline.iter().zip(candidate) {
        let (pct, is_tiny) = percent_difference(a, b);
        tiny += usize::from(is_tiny);
        min = min.min(pct);
        max = max.max(pct);
        sum += pct;
    }
    let elements = baseline.len();
    Ok(DifferenceRow {
        metric: metric.to_string(),
        min_percent: if elements == 0 { 0.0 } else { min },
        max_percent: max,
        mean_percent: if elements == 0 { 0.0 } else { sum / elements as f64 },
        elements,
        tiny_elements: tiny,
    })
}
