//! One-factor correlation matrices `C_ij = delta_ij + (1 - delta_ij) rho_i rho_j`.
//!
//! With `z_i = 1 - rho_i^2` the matrix is `diag(z) + rho rho^T`, a rank-one
//! update of a diagonal matrix. Its spectrum consists of
//!
//! * `1` for every `rho_i = 0`,
//! * `z` with multiplicity `m - 1` for every group of `m` equal `z_i`,
//! * one root of `f(z) = sum_i rho_i^2 / (z - z_i) = 1` in each gap between
//!   consecutive distinct `z_i`, plus one above the largest.
//!
//! `f` is strictly decreasing between its poles, so every root is found by
//! plain bisection inside its bracket.

use nalgebra::{DMatrix, DVector};

use super::dense::symmetric_eigen;
use super::Spectrum;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::moments::{eta, Horizon};

/// Absolute tolerance under which two `z_i` are treated as one pole.
pub const GROUP_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 2_000;

/// Per-asset loadings `rho_i(tau)` of a one-factor correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingVector {
    pub rho: Vec<f64>,
    pub scale: Horizon,
}

impl LoadingVector {
    /// Rejects any `rho_i^2 > 1`: such a matrix is not a correlation matrix.
    pub fn new(rho: Vec<f64>, scale: impl Into<Horizon>) -> Result<Self> {
        check_loadings(&rho)?;
        Ok(LoadingVector {
            rho,
            scale: scale.into(),
        })
    }

    /// `rho_i = (1 + eta(tau) / gamma_i)^(-1/2)`, zero where `gamma_i = 0`.
    pub fn from_gammas(gammas: &[f64], alpha: f64, scale: impl Into<Horizon>) -> Result<Self> {
        let scale = scale.into();
        let e = eta(alpha, scale)?;
        let rho = gammas
            .iter()
            .map(|&g| {
                if g < 0.0 || !g.is_finite() {
                    Err(Error::Domain(format!("gamma must be nonnegative, got {g}")))
                } else if g == 0.0 {
                    Ok(0.0)
                } else {
                    Ok((1.0 + e / g).powf(-0.5))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rho, scale)
    }

    /// Loadings of a one-factor spec, carrying the sign of each `beta_i`.
    pub fn from_spec(spec: &ModelSpec, scale: impl Into<Horizon>) -> Result<Self> {
        spec.validate()?;
        if spec.n_factors != 1 {
            return Err(Error::InvalidArgument(format!(
                "one-factor loadings need n_factors = 1, got {}",
                spec.n_factors
            )));
        }
        let mut lv = Self::from_gammas(&spec.gammas(), spec.alpha, scale)?;
        for (r, b) in lv.rho.iter_mut().zip(spec.beta.column(0).iter()) {
            if *b < 0.0 {
                *r = -*r;
            }
        }
        Ok(lv)
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// The correlation matrix `delta_ij + (1 - delta_ij) rho_i rho_j`.
    pub fn assemble(&self) -> DMatrix<f64> {
        assemble_one_factor(&self.rho)
    }
}

/// Builds `delta_ij + (1 - delta_ij) rho_i rho_j` without validating `rho`.
pub fn assemble_one_factor(rho: &[f64]) -> DMatrix<f64> {
    let n = rho.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho[i] * rho[j] })
}

fn check_loadings(rho: &[f64]) -> Result<()> {
    for (index, r) in rho.iter().enumerate() {
        let rho_sq = r * r;
        if !rho_sq.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rho[{index}] is not finite"
            )));
        }
        if rho_sq > 1.0 {
            return Err(Error::NotCorrelationStructure { index, rho_sq });
        }
    }
    Ok(())
}

/// Eigenvalues of the equal-loading matrix: `1 + (N-1) rho^2` once and
/// `1 - rho^2` with multiplicity `N - 1`.
pub fn basic_eigenvalues(n_assets: usize, rho_sq: f64) -> Result<Spectrum> {
    if n_assets == 0 {
        return Err(Error::InvalidArgument("n_assets must be positive".into()));
    }
    if !(0.0..=1.0).contains(&rho_sq) {
        return Err(Error::Domain(format!(
            "rho^2 must lie in [0, 1], got {rho_sq}"
        )));
    }
    Ok(Spectrum::from_levels(vec![
        (1.0 + (n_assets - 1) as f64 * rho_sq, 1),
        (1.0 - rho_sq, n_assets - 1),
    ]))
}

/// `rho(tau) = (1 + eta(tau) / gamma)^(-1/2)`.
pub fn rho_of_tau(gamma: f64, alpha: f64, tau: impl Into<Horizon>) -> Result<f64> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let e = eta(alpha, tau)?;
    Ok((1.0 + e / gamma).powf(-0.5))
}

/// `f(z) = sum_i rho_i^2 / (z - 1 + rho_i^2)`; the eigenvalues off the
/// degenerate levels solve `f(z) = 1`.
pub fn secular_function(rho: &[f64], z: f64) -> f64 {
    rho.iter()
        .filter(|r| **r != 0.0)
        .map(|r| {
            let w = r * r;
            w / (z - (1.0 - w))
        })
        .sum()
}

/// `lambda_1 ~ sum_i rho_i^2`, the large-`N` approximation.
pub fn largest_eigenvalue_approx(loadings: &LoadingVector) -> f64 {
    loadings.rho.iter().map(|r| r * r).sum()
}

/// Distinct poles of the secular function with their merged weights.
struct PoleGroup {
    z: f64,
    weight: f64,
    members: Vec<usize>,
}

struct Decomposition {
    trivial: Vec<usize>,
    groups: Vec<PoleGroup>,
}

fn decompose(rho: &[f64]) -> Decomposition {
    let mut trivial = Vec::new();
    let mut active: Vec<(f64, usize)> = Vec::new();
    for (i, r) in rho.iter().enumerate() {
        if *r == 0.0 {
            trivial.push(i);
        } else {
            active.push((1.0 - r * r, i));
        }
    }
    active.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut groups: Vec<PoleGroup> = Vec::new();
    let mut prev_z = f64::NEG_INFINITY;
    for (z, i) in active {
        let w = rho[i] * rho[i];
        match groups.last_mut() {
            Some(g) if z - prev_z <= GROUP_TOL => {
                g.weight += w;
                g.members.push(i);
                g.z += (z - g.z) / g.members.len() as f64;
            }
            _ => groups.push(PoleGroup {
                z,
                weight: w,
                members: vec![i],
            }),
        }
        prev_z = z;
    }
    Decomposition { trivial, groups }
}

fn grouped_secular(groups: &[PoleGroup], z: f64) -> f64 {
    groups.iter().map(|g| g.weight / (z - g.z)).sum()
}

/// Root of the decreasing function `f - 1` on `(lo, hi]`.
fn bisect(groups: &[PoleGroup], mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if grouped_secular(groups, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Brackets `(z_g, z_{g+1})` and `(z_last, z_last + sum rho^2]`.
fn secular_roots(groups: &[PoleGroup]) -> Vec<f64> {
    let total: f64 = groups.iter().map(|g| g.weight).sum();
    (0..groups.len())
        .map(|g| {
            let lo = groups[g].z;
            let hi = groups.get(g + 1).map_or(lo + total, |next| next.z);
            bisect(groups, lo, hi)
        })
        .collect()
}

/// Exact spectrum of a one-factor correlation matrix.
pub fn secular_solve(loadings: &LoadingVector) -> Result<Spectrum> {
    check_loadings(&loadings.rho)?;
    let dec = decompose(&loadings.rho);
    let mut levels: Vec<(f64, usize)> = Vec::new();
    if !dec.trivial.is_empty() {
        levels.push((1.0, dec.trivial.len()));
    }
    for g in &dec.groups {
        if g.members.len() > 1 {
            levels.push((g.z, g.members.len() - 1));
        }
    }
    levels.extend(secular_roots(&dec.groups).into_iter().map(|r| (r, 1)));
    Ok(Spectrum::from_levels(levels))
}

/// [`secular_solve`] plus orthonormal eigenvectors.
///
/// Root eigenvectors are `v_i = rho_i Q / (lambda - 1 + rho_i^2)` with `Q`
/// fixed by the unit norm; degenerate levels get an orthonormal basis of
/// their eigenspace.
pub fn secular_eigenvectors(loadings: &LoadingVector) -> Result<Spectrum> {
    check_loadings(&loadings.rho)?;
    let rho = &loadings.rho;
    let n = rho.len();
    let dec = decompose(rho);
    let mut pairs: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n);

    for &i in &dec.trivial {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        pairs.push((1.0, v));
    }

    let mut pole_of = vec![0.0; n];
    for g in &dec.groups {
        for &i in &g.members {
            pole_of[i] = g.z;
        }
        let m = g.members.len();
        if m > 1 {
            // orthogonal complement of rho restricted to the group
            let u = DVector::from_iterator(m, g.members.iter().map(|&i| rho[i])).normalize();
            let projector = DMatrix::identity(m, m) - &u * u.transpose();
            let (_, basis) = symmetric_eigen(&projector, true)?;
            let basis = basis.expect("vectors requested");
            for c in 0..m - 1 {
                let mut v = DVector::zeros(n);
                for (k, &i) in g.members.iter().enumerate() {
                    v[i] = basis[(k, c)];
                }
                pairs.push((g.z, v));
            }
        }
    }

    for root in secular_roots(&dec.groups) {
        let mut v = DVector::zeros(n);
        for g in &dec.groups {
            for &i in &g.members {
                v[i] = rho[i] / (root - pole_of[i]);
            }
        }
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        pairs.push((root, v));
    }
    Ok(Spectrum::from_pairs(pairs))
}
