//! Straight-line fits: `E(Δ) = E₀ + a·Δ` by weighted least squares.

use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// A fitted line with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_stderr: f64,
    pub slope_stderr: f64,
    /// Weighted coefficient of determination.
    pub r_squared: f64,
    pub studentized: Vec<f64>,
}

impl LineFit {
    pub fn max_abs_studentized(&self) -> f64 {
        self.studentized.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Fits `y = intercept + slope·x`.
///
/// With `sigma`, points are weighted by `1/σ²` and the covariance is taken
/// as known. Without it the fit is ordinary least squares and the covariance
/// is scaled by the residual variance.
pub fn fit_line(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LineFit, ExperimentError> {
    let n = x.len();
    if n < 3 || y.len() != n || sigma.is_some_and(|s| s.len() != n) {
        return Err(ExperimentError::TooFewPoints { got: n, need: 3 });
    }
    let w: Vec<f64> = match sigma {
        Some(s) => {
            if s.iter().any(|&v| !(v > 0.0)) {
                return Err(ExperimentError::NonPositiveStderr);
            }
            s.iter().map(|v| 1.0 / (v * v)).collect()
        }
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if !(det > 1e-300 * sw * sxx.max(1e-300)) || x.iter().all(|&v| v == x[0]) {
        return Err(ExperimentError::SingularDesign);
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;

    let resid: Vec<f64> = x.iter().zip(y).map(|(x, y)| y - intercept - slope * x).collect();
    let rss: f64 = w.iter().zip(&resid).map(|(w, r)| w * r * r).sum();
    let scale = if sigma.is_some() { 1.0 } else { rss / (n - 2) as f64 };
    let ybar = sy / sw;
    let tss: f64 = w.iter().zip(y).map(|(w, y)| w * (y - ybar).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    let studentized = (0..n)
        .map(|i| {
            let h = w[i] * (sxx - 2.0 * x[i] * sx + x[i] * x[i] * sw) / det;
            let denom = (scale / w[i] * (1.0 - h).max(0.0)).sqrt();
            if denom > 0.0 {
                resid[i] / denom
            } else {
                0.0
            }
        })
        .collect();

    Ok(LineFit {
        intercept,
        slope,
        intercept_stderr: (scale * sxx / det).sqrt(),
        slope_stderr: (scale * sw / det).sqrt(),
        r_squared,
        studentized,
    })
}
