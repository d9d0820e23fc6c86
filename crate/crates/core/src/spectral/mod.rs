//! Eigenvalues of lead-lag correlation matrices.
//!
//! * [`onefactor`]: closed forms for the basic model and the secular-equation
//!   solver for identity-plus-rank-one correlation matrices.
//! * [`multifactor`]: the `F x F` determinant reduction, the `rho^T rho`
//!   approximation and the practical `N gamma_f / eta(tau)` law.
//! * [`dense`]: a general symmetric eigensolver, used on sample matrices and
//!   as an independent check of the structured routes.

pub mod dense;
pub mod multifactor;
pub mod onefactor;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use dense::{dense_eigenvalues, dense_spectrum, symmetric_eigen};
pub use multifactor::{
    gamma_matrix, multifactor_large_eigs, practical_eigencurve, reduced_determinant, reduced_roots,
    GammaMatrix, LoadingMatrix,
};
pub use onefactor::{
    basic_eigenvalues, largest_eigenvalue_approx, rho_of_tau, secular_eigenvectors,
    secular_function, secular_solve, LoadingVector,
};

/// Eigenvalues grouped into levels, in descending order.
///
/// `eigenvalues[k]` occurs `multiplicities[k]` times. Levels are merged only
/// when exactly equal. When present, the columns of `eigenvectors` follow
/// [`Spectrum::expanded`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    #[serde(skip)]
    pub eigenvectors: Option<DMatrix<f64>>,
}

impl Spectrum {
    /// Builds a spectrum from `(value, multiplicity)` pairs in any order.
    pub fn from_levels(mut levels: Vec<(f64, usize)>) -> Self {
        levels.retain(|&(_, m)| m > 0);
        levels.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut eigenvalues: Vec<f64> = Vec::with_capacity(levels.len());
        let mut multiplicities: Vec<usize> = Vec::with_capacity(levels.len());
        for (value, m) in levels {
            match eigenvalues.last() {
                Some(&last) if last == value => *multiplicities.last_mut().unwrap() += m,
                _ => {
                    eigenvalues.push(value);
                    multiplicities.push(m);
                }
            }
        }
        Spectrum {
            eigenvalues,
            multiplicities,
            eigenvectors: None,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self::from_levels(values.into_iter().map(|v| (v, 1)).collect())
    }

    /// Builds a spectrum from eigenpairs, sorting the vectors alongside.
    pub fn from_pairs(mut pairs: Vec<(f64, DVector<f64>)>) -> Self {
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let n = pairs.first().map_or(0, |p| p.1.len());
        let vectors = DMatrix::from_fn(n, pairs.len(), |r, c| pairs[c].1[r]);
        let mut spectrum = Self::from_values(pairs.iter().map(|p| p.0).collect());
        spectrum.eigenvectors = Some(vectors);
        spectrum
    }

    /// All eigenvalues with repeats, descending.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(&v, &m)| std::iter::repeat_n(v, m))
            .collect()
    }

    /// The `k` largest eigenvalues (with repeats).
    pub fn top(&self, k: usize) -> Vec<f64> {
        let mut all = self.expanded();
        all.truncate(k);
        all
    }

    pub fn dimension(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.multiplicities)
            .map(|(&v, &m)| v * m as f64)
            .sum()
    }

    pub fn largest(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }

    pub fn smallest(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }
}
