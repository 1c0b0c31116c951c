//! Error bars for autocorrelated series by repeated pair averaging.

use super::ExperimentError;

/// Shortest series accepted by [`blocking_error`].
pub const MIN_SERIES: usize = 32;

/// Levels with fewer blocks than this are too noisy to take part in the
/// plateau search.
pub const MIN_BLOCKS: usize = 64;

fn naive_stderr(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Naive standard error of the mean at each blocking level, starting with
/// the raw series.
pub fn blocking_levels(series: &[f64]) -> Vec<(usize, f64)> {
    let mut levels = Vec::new();
    let mut cur = series.to_vec();
    while cur.len() >= 2 {
        levels.push((cur.len(), naive_stderr(&cur)));
        cur = cur.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    }
    levels
}

/// Standard error of the mean of an autocorrelated series: the maximum of
/// the naive estimate over blocking levels that still hold at least
/// [`MIN_BLOCKS`] blocks (the raw level always counts).
pub fn blocking_error(series: &[f64]) -> Result<f64, ExperimentError> {
    if series.len() < MIN_SERIES {
        return Err(ExperimentError::SeriesTooShort {
            len: series.len(),
            min: MIN_SERIES,
        });
    }
    Ok(blocking_levels(series)
        .into_iter()
        .enumerate()
        .filter(|(k, (n, _))| *k == 0 || *n >= MIN_BLOCKS)
        .map(|(_, (_, s))| s)
        .fold(0.0, f64::max))
}
