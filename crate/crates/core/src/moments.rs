//! Second moments of aggregated returns: closed forms and sample estimators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Compounding, ModelSpec, ReturnPanel};
use crate::spectral::LoadingMatrix;

/// Aggregation scale: a finite number of base steps, or the `tau -> inf`
/// limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Steps(u64),
    Infinite,
}

impl From<u64> for Horizon {
    fn from(tau: u64) -> Self {
        Horizon::Steps(tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Covariance,
    Correlation,
}

/// Covariance or correlation matrix of returns aggregated over `scale` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMatrix {
    pub values: DMatrix<f64>,
    pub scale: u64,
    pub kind: MatrixKind,
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Largest `|a_ij - a_ji|` relative to the largest entry.
pub(crate) fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.amax().max(f64::MIN_POSITIVE);
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in j + 1..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / norm
}

impl ScaleMatrix {
    pub fn new(values: DMatrix<f64>, scale: u64, kind: MatrixKind) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, expected square",
                values.nrows(),
                values.ncols()
            )));
        }
        if scale == 0 {
            return Err(Error::InvalidArgument("scale must be positive".into()));
        }
        let asymmetry = relative_asymmetry(&values);
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        if kind == MatrixKind::Correlation {
            for i in 0..values.nrows() {
                if (values[(i, i)] - 1.0).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "correlation diagonal entry {i} is {}",
                        values[(i, i)]
                    )));
                }
            }
            if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(
                    "correlation entries must lie in [-1, 1]".into(),
                ));
            }
        }
        Ok(ScaleMatrix {
            values,
            scale,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Rescales a covariance matrix to unit diagonal.
    pub fn to_correlation(&self) -> Result<ScaleMatrix> {
        let n = self.dim();
        let sd: Vec<f64> = (0..n).map(|i| self.values[(i, i)].sqrt()).collect();
        if let Some(i) = sd.iter().position(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::ZeroVariance {
                index: i,
                label: format!("#{i}"),
            });
        }
        Ok(ScaleMatrix {
            values: normalize(&self.values),
            scale: self.scale,
            kind: MatrixKind::Correlation,
        })
    }
}

fn normalize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()).clamp(-1.0, 1.0)
        }
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "alpha must satisfy 0 <= alpha < 1, got {alpha}"
        )))
    }
}

fn check_tau(tau: u64) -> Result<()> {
    if tau == 0 {
        Err(Error::Domain("tau must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `kappa_alpha(tau) = [tau (1 - alpha^2) - 2 alpha (1 - alpha^tau)] / (1 - alpha^2)`.
pub fn kappa(alpha: f64, tau: u64) -> Result<f64> {
    check_alpha(alpha)?;
    check_tau(tau)?;
    let t = tau as f64;
    let a2 = 1.0 - alpha * alpha;
    Ok((t * a2 - 2.0 * alpha * (1.0 - alpha.powf(t))) / a2)
}

/// `eta(tau) = tau (1 - alpha)^2 / kappa_alpha(tau)`.
///
/// Decreases from `1 - alpha^2` at `tau = 1` to `(1 - alpha)^2` as
/// `tau -> inf`; the limit is returned exactly for [`Horizon::Infinite`].
pub fn eta(alpha: f64, tau: impl Into<Horizon>) -> Result<f64> {
    check_alpha(alpha)?;
    let floor = (1.0 - alpha) * (1.0 - alpha);
    match tau.into() {
        Horizon::Infinite => Ok(floor),
        Horizon::Steps(tau) => {
            check_tau(tau)?;
            let t = tau as f64;
            // same quantity as tau (1-a)^2 / kappa, without the cancellation
            let excess = 2.0 * alpha * (1.0 - alpha.powf(t)) / ((1.0 - alpha * alpha) * t);
            Ok(floor / (1.0 - excess))
        }
    }
}

/// Variance of an aggregated unit-variance factor path,
/// `kappa_alpha(tau) / (1 - alpha)^2 = tau / eta(tau)`.
pub fn factor_accumulation(alpha: f64, tau: u64) -> Result<f64> {
    Ok(tau as f64 / eta(alpha, tau)?)
}

/// Model covariance of returns aggregated over `tau` steps:
/// `C_ij = tau sigma_i^2 delta_ij + kappa/(1-alpha)^2 sum_f Sigma_f^2 beta_if beta_jf`.
pub fn theoretical_covariance(spec: &ModelSpec, tau: u64) -> Result<ScaleMatrix> {
    spec.validate()?;
    let growth = factor_accumulation(spec.alpha, tau)?;
    let n = spec.n_assets;
    let mut scaled = spec.beta.clone();
    for (f, mut col) in scaled.column_iter_mut().enumerate() {
        col *= spec.factor_sigma[f];
    }
    let mut c = &scaled * scaled.transpose() * growth;
    for i in 0..n {
        c[(i, i)] += tau as f64 * spec.sigma[i].powi(2);
    }
    ScaleMatrix::new(symmetrize(c), tau, MatrixKind::Covariance)
}

/// Model correlation `delta_ij + (1 - delta_ij) sum_f rho_if rho_jf`.
pub fn theoretical_correlation(spec: &ModelSpec, tau: u64) -> Result<ScaleMatrix> {
    let loadings = LoadingMatrix::from_spec(spec, tau)?;
    ScaleMatrix::new(loadings.assemble(), tau, MatrixKind::Correlation)
}

pub(crate) fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    a
}

/// Non-overlapping block aggregation; trailing rows that do not fill a block
/// are dropped.
pub fn aggregate_returns(panel: &ReturnPanel, tau: u64) -> Result<ReturnPanel> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    let len = panel.n_steps();
    if tau as usize > len {
        return Err(Error::ScaleExceedsLength { tau, len });
    }
    if tau == 1 {
        return Ok(panel.clone());
    }
    let width = tau as usize;
    let blocks = len / width;
    let n = panel.n_assets();
    let mut out = DMatrix::zeros(n, blocks);
    for b in 0..blocks {
        let mut acc = out.column_mut(b);
        match panel.compounding {
            Compounding::Arithmetic => {
                for t in b * width..(b + 1) * width {
                    acc += panel.returns.column(t);
                }
            }
            Compounding::Geometric => {
                acc.fill(1.0);
                for t in b * width..(b + 1) * width {
                    for (a, r) in acc.iter_mut().zip(panel.returns.column(t).iter()) {
                        *a *= 1.0 + r;
                    }
                }
                acc.add_scalar_mut(-1.0);
            }
        }
    }
    Ok(ReturnPanel {
        returns: out,
        base_scale_minutes: panel.base_scale_minutes,
        scale: panel.scale * tau,
        asset_labels: panel.asset_labels.clone(),
        compounding: panel.compounding,
    })
}

const CHUNK: usize = 4096;

/// Mean-subtracted, `1/(T-1)` normalized sample covariance.
pub fn sample_covariance(panel: &ReturnPanel) -> Result<ScaleMatrix> {
    let (n, len) = (panel.n_assets(), panel.n_steps());
    if len < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample covariance needs at least 2 steps, got {len}"
        )));
    }
    let mean: Vec<f64> = panel.returns.row_iter().map(|r| r.mean()).collect();
    let mut cov = DMatrix::zeros(n, n);
    let mut start = 0;
    while start < len {
        let width = CHUNK.min(len - start);
        let mut block = panel.returns.columns(start, width).into_owned();
        for mut col in block.column_iter_mut() {
            for (x, m) in col.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        cov.gemm(1.0, &block, &block.transpose(), 1.0);
        start += width;
    }
    cov /= (len - 1) as f64;
    ScaleMatrix::new(symmetrize(cov), panel.scale, MatrixKind::Covariance)
}

/// Sample correlation; the diagonal is exactly one.
pub fn sample_correlation(panel: &ReturnPanel) -> Result<ScaleMatrix> {
    let cov = sample_covariance(panel)?;
    let n = cov.dim();
    let sd: Vec<f64> = (0..n).map(|i| cov.values[(i, i)].sqrt()).collect();
    if let Some(i) = sd.iter().position(|s| s.is_nan() || *s <= 0.0) {
        return Err(Error::ZeroVariance {
            index: i,
            label: panel.asset_labels[i].clone(),
        });
    }
    ScaleMatrix::new(normalize(&cov.values), cov.scale, MatrixKind::Correlation)
}
