//! Statistical checks on simulation output.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{mean_and_stderr, SimResult, MAX_LAG};
use crate::error::{Error, Result};

/// Trial mean of the per-stage cost and its between-trial standard error.
pub fn empirical_cost(result: &SimResult) -> Result<(f64, f64)> {
    if result.trials < 2 {
        return Err(Error::InvalidInput(
            "a standard error needs at least two trials".into(),
        ));
    }
    Ok((result.cost_per_stage, result.cost_stderr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    /// Estimate of `E[x^' Q (x - x^)]` per stage.
    pub estimate: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Passes when the estimate lies within four standard errors of zero.
pub fn orthogonality_check(result: &SimResult) -> OrthogonalityReport {
    let (estimate, stderr) = mean_and_stderr(&result.trial_orthogonality);
    OrthogonalityReport {
        estimate,
        stderr,
        pass: estimate.abs() <= 4.0 * stderr,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenessReport {
    /// `(lag, component, autocorrelation)` for lags `1..=5`.
    pub autocorrelations: Vec<(usize, usize, f64)>,
    /// Half-width of the acceptance band at each lag.
    pub bands: Vec<f64>,
    pub pass: bool,
}

/// Sample autocorrelations of the whitened innovations at lags 1 to 5, each
/// tested against a 95% band, Bonferroni-corrected over all lags and components.
pub fn whiteness_check(result: &SimResult) -> Result<WhitenessReport> {
    let lags = result
        .innovation_lags
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no innovation sequence was recorded".into()))?;
    let dim = lags.sums[0].len();
    if dim == 0 || lags.counts[MAX_LAG] == 0 {
        return Err(Error::InvalidInput(
            "too few innovations for the whiteness check".into(),
        ));
    }
    let tests = (MAX_LAG * dim) as f64;
    let z = Normal::standard().inverse_cdf(1.0 - 0.05 / (2.0 * tests));
    let mut autocorrelations = Vec::with_capacity(MAX_LAG * dim);
    let mut bands = Vec::with_capacity(MAX_LAG);
    let mut pass = true;
    for lag in 1..=MAX_LAG {
        let count = lags.counts[lag] as f64;
        let band = z / count.sqrt();
        bands.push(band);
        for i in 0..dim {
            let variance = lags.sums[0][i] / lags.counts[0] as f64;
            let rho = lags.sums[lag][i] / count / variance;
            pass &= rho.abs() <= band;
            autocorrelations.push((lag, i, rho));
        }
    }
    Ok(WhitenessReport {
        autocorrelations,
        bands,
        pass,
    })
}
