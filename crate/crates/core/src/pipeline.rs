//! Aggregate, estimate and diagonalize a return panel across scales.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fitting::EigenCurve;
use crate::model::ReturnPanel;
use crate::moments::{
    aggregate_returns, sample_correlation, sample_covariance, MatrixKind, ScaleMatrix,
};
use crate::spectral::{dense_eigenvalues, Spectrum};

/// Sample covariance or correlation of `panel` aggregated over `tau` steps.
pub fn scale_matrix(panel: &ReturnPanel, tau: u64, kind: MatrixKind) -> Result<ScaleMatrix> {
    let aggregated = aggregate_returns(panel, tau)?;
    match kind {
        MatrixKind::Covariance => sample_covariance(&aggregated),
        MatrixKind::Correlation => sample_correlation(&aggregated),
    }
}

pub fn scale_spectrum(panel: &ReturnPanel, tau: u64, kind: MatrixKind) -> Result<Spectrum> {
    dense_eigenvalues(&scale_matrix(panel, tau, kind)?)
}

/// Checks a scale grid against a series of `len` steps.
pub fn check_scales(taus: &[u64], len: usize) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument("empty scale grid".into()));
    }
    if taus[0] == 0 {
        return Err(Error::InvalidArgument("scales must be at least 1".into()));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "scales must be strictly ascending".into(),
        ));
    }
    let unusable: Vec<u64> = taus
        .iter()
        .copied()
        .filter(|&t| (len as u64) / t < 2)
        .collect();
    if !unusable.is_empty() {
        return Err(Error::UnusableScales { taus: unusable });
    }
    Ok(())
}

/// The `top_k` largest eigenvalues at each scale, one curve per rank.
///
/// Scales are processed in parallel on the current rayon pool.
pub fn eigencurves(
    panel: &ReturnPanel,
    taus: &[u64],
    kind: MatrixKind,
    top_k: usize,
) -> Result<Vec<EigenCurve>> {
    let n = panel.n_assets();
    if top_k == 0 || top_k > n {
        return Err(Error::InvalidArgument(format!(
            "top-k must lie in 1..={n}, got {top_k}"
        )));
    }
    check_scales(taus, panel.n_steps())?;
    let tops = taus
        .par_iter()
        .map(|&tau| Ok(scale_spectrum(panel, tau, kind)?.top(top_k)))
        .collect::<Result<Vec<_>>>()?;
    (0..top_k)
        .map(|k| {
            let values = tops.iter().map(|top| top[k]).collect();
            EigenCurve::new(taus.to_vec(), values, k + 1)
        })
        .collect()
}

/// `1, 2, 4, ..., max` (powers of two not exceeding `max`).
pub fn dyadic_scales(max: u64) -> Vec<u64> {
    std::iter::successors(Some(1u64), |&t| t.checked_mul(2))
        .take_while(|&t| t <= max)
        .collect()
}
