//! Region-versus-reference differences: chi-square for histograms, absolute
//! differences for plain vectors.

use crate::error::{Error, Result};

/// Chi-square distance Σ 2(a−b)²/(a+b); bins empty on both sides are skipped.
pub fn chi_square(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.iter()
        .zip(b)
        .filter(|(x, y)| *x + *y > 0.0)
        .map(|(x, y)| 2.0 * (x - y) * (x - y) / (x + y))
        .sum())
}

pub fn abs_diff(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect())
}

/// Dispatches on `is_histogram`; the chi-square branch returns a one-element vector.
pub fn feature_diff(a: &[f64], b: &[f64], is_histogram: bool) -> Result<Vec<f64>> {
    if is_histogram {
        Ok(vec![chi_square(a, b)?])
    } else {
        abs_diff(a, b)
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "feature lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}
