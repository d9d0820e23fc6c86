//! Multi-factor correlation matrices `C = (I - P) + rho rho^T`.
//!
//! `rho` is `N x F` and `P = diag(rho_i^2)` holds its squared row norms. For
//! `lambda > 1` the matrix `lambda I - I + P` is invertible and
//!
//! ```text
//! det(lambda I - C) = det(lambda I - I + P) det(I - phi(lambda)),
//! phi_fg(lambda) = sum_i rho_if rho_ig / (lambda - 1 + rho_i^2),
//! ```
//!
//! so the large eigenvalues follow from an `F x F` problem.

use nalgebra::DMatrix;

use super::dense::symmetric_eigen;
use crate::error::{Error, Result};
use crate::fitting::EigenCurve;
use crate::model::ModelSpec;
use crate::moments::{eta, Horizon};

const ROW_NORM_TOL: f64 = 1e-12;
const POLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    /// `N x F` loadings `rho_{i,f}(tau)`.
    pub rho: DMatrix<f64>,
    pub scale: Horizon,
}

impl LoadingMatrix {
    pub fn new(rho: DMatrix<f64>, scale: impl Into<Horizon>) -> Result<Self> {
        if rho.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("loadings must be finite".into()));
        }
        for (index, row) in rho.row_iter().enumerate() {
            let rho_sq = row.norm_squared();
            if rho_sq > 1.0 + ROW_NORM_TOL {
                return Err(Error::NotCorrelationStructure { index, rho_sq });
            }
        }
        Ok(LoadingMatrix {
            rho,
            scale: scale.into(),
        })
    }

    /// `rho_{i,f} = Sigma_f beta_{i,f} / beta_i * rho_i(tau)` with
    /// `beta_i^2 = sum_f Sigma_f^2 beta_{i,f}^2` and `gamma_i = beta_i^2 / sigma_i^2`.
    pub fn from_spec(spec: &ModelSpec, scale: impl Into<Horizon>) -> Result<Self> {
        spec.validate()?;
        let scale = scale.into();
        let e = eta(spec.alpha, scale)?;
        let mut rho = DMatrix::zeros(spec.n_assets, spec.n_factors);
        for i in 0..spec.n_assets {
            let loading_sq = spec.loading_sq(i);
            if loading_sq == 0.0 {
                continue;
            }
            let gamma = loading_sq / spec.sigma[i].powi(2);
            let rho_i = (1.0 + e / gamma).powf(-0.5);
            let beta_i = loading_sq.sqrt();
            for f in 0..spec.n_factors {
                rho[(i, f)] = spec.factor_sigma[f] * spec.beta[(i, f)] / beta_i * rho_i;
            }
        }
        Self::new(rho, scale)
    }

    pub fn n_assets(&self) -> usize {
        self.rho.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.rho.ncols()
    }

    /// Diagonal of `P`.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        self.rho.row_iter().map(|r| r.norm_squared()).collect()
    }

    /// The full `N x N` correlation matrix, with an exact unit diagonal.
    pub fn assemble(&self) -> DMatrix<f64> {
        let mut c = &self.rho * self.rho.transpose();
        let n = c.nrows();
        for j in 0..n {
            for i in j + 1..n {
                let m = 0.5 * (c[(i, j)] + c[(j, i)]);
                c[(i, j)] = m;
                c[(j, i)] = m;
            }
            c[(j, j)] = 1.0;
        }
        c
    }

    /// The `F x F` Gram matrix `rho^T rho`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.rho.transpose() * &self.rho
    }
}

/// `phi(lambda)`; rows with zero loadings contribute nothing and are skipped.
fn resolvent_gram(rho: &DMatrix<f64>, norms: &[f64], lambda: f64) -> DMatrix<f64> {
    let nf = rho.ncols();
    let mut phi = DMatrix::zeros(nf, nf);
    for (i, &p) in norms.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let w = 1.0 / (lambda - 1.0 + p);
        for g in 0..nf {
            let rg = rho[(i, g)] * w;
            for f in 0..=g {
                phi[(f, g)] += rho[(i, f)] * rg;
            }
        }
    }
    for g in 0..nf {
        for f in 0..g {
            phi[(g, f)] = phi[(f, g)];
        }
    }
    phi
}

/// `det(I_F - phi(lambda))`; its zeros above 1 are the eigenvalues of `C`
/// above 1.
pub fn reduced_determinant(loadings: &LoadingMatrix, lambda: f64) -> Result<f64> {
    let norms = loadings.row_norms_sq();
    for (index, p) in norms.iter().enumerate() {
        if (lambda - (1.0 - p)).abs() < POLE_TOL {
            return Err(Error::Singular { lambda, index });
        }
    }
    let nf = loadings.n_factors();
    let phi = resolvent_gram(&loadings.rho, &norms, lambda);
    Ok((DMatrix::identity(nf, nf) - phi).determinant())
}

/// Number of eigenvalues of `C` strictly above `lambda >= 1`.
///
/// By the inertia of the Schur complements of `[[D, rho], [rho^T, I]]` with
/// `D = lambda I - I + P`, this equals the number of negative eigenvalues of
/// `I - phi(lambda)`, i.e. the number of eigenvalues of `phi` above one.
fn count_above(rho: &DMatrix<f64>, norms: &[f64], lambda: f64) -> Result<usize> {
    let phi = resolvent_gram(rho, norms, lambda);
    let (values, _) = symmetric_eigen(&phi, false)?;
    Ok(values.iter().filter(|&&v| v > 1.0).count())
}

/// All eigenvalues of `C` above 1, descending, from the reduced problem.
///
/// The sign changes of `det(I - phi)` are the jumps of the eigenvalue count
/// above, which is monotone in `lambda`; bisecting on the count finds every
/// root, repeated ones included.
pub fn reduced_roots(loadings: &LoadingMatrix) -> Result<Vec<f64>> {
    let rho = &loadings.rho;
    let norms = loadings.row_norms_sq();
    let lo = 1.0;
    // lambda_max(C) <= lambda_max(I - P) + trace(rho^T rho)
    let hi = 1.0 + norms.iter().sum::<f64>() + 1e-9;
    let above = count_above(rho, &norms, lo)?;
    let mut roots = Vec::with_capacity(above);
    for k in 1..=above {
        // largest lambda with at least k eigenvalues above it
        let (mut a, mut b) = (lo, roots.last().copied().unwrap_or(hi).min(hi));
        if count_above(rho, &norms, b)? >= k {
            // repeated root: the previous one also accounts for this rank
            roots.push(b);
            continue;
        }
        loop {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if count_above(rho, &norms, mid)? >= k {
                a = mid;
            } else {
                b = mid;
            }
        }
        roots.push(0.5 * (a + b));
    }
    Ok(roots)
}

/// Eigenvalues of `rho^T rho`, descending: the large eigenvalues of `C` when
/// `P - I` is negligible against `lambda`.
pub fn multifactor_large_eigs(loadings: &LoadingMatrix) -> Result<Vec<f64>> {
    let (values, _) = symmetric_eigen(&loadings.gram(), false)?;
    Ok(values.into_iter().map(|v| v.max(0.0)).collect())
}

/// Scale-free factor structure
/// `Gamma_fg = Sigma_f Sigma_g / N sum_i beta_if beta_ig / sigma_i^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrix {
    pub values: DMatrix<f64>,
}

impl GammaMatrix {
    /// `gamma_f`, descending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(symmetric_eigen(&self.values, false)?.0)
    }
}

pub fn gamma_matrix(spec: &ModelSpec) -> Result<GammaMatrix> {
    spec.validate()?;
    let n = spec.n_assets;
    let nf = spec.n_factors;
    let weighted = DMatrix::from_fn(n, nf, |i, f| {
        spec.factor_sigma[f] * spec.beta[(i, f)] / spec.sigma[i]
    });
    let mut values = weighted.transpose() * &weighted / n as f64;
    for g in 0..nf {
        for f in 0..g {
            let m = 0.5 * (values[(f, g)] + values[(g, f)]);
            values[(f, g)] = m;
            values[(g, f)] = m;
        }
    }
    Ok(GammaMatrix { values })
}

/// `lambda_f(tau) ~ N gamma_f / eta(tau)` on a grid of scales.
pub fn practical_eigencurve(
    n_assets: usize,
    gamma_f: f64,
    alpha: f64,
    taus: &[u64],
) -> Result<EigenCurve> {
    if !(gamma_f > 0.0 && gamma_f.is_finite()) {
        return Err(Error::Domain(format!(
            "gamma_f must be positive, got {gamma_f}"
        )));
    }
    let amplitude = n_assets as f64 * gamma_f;
    let values = taus
        .iter()
        .map(|&t| Ok(amplitude / eta(alpha, t)?))
        .collect::<Result<Vec<_>>>()?;
    EigenCurve::new(taus.to_vec(), values, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dense::dense_spectrum;
    use crate::spectral::onefactor::{largest_eigenvalue_approx, secular_solve, LoadingVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_loadings(n: usize, nf: usize, rng: &mut ChaCha8Rng) -> LoadingMatrix {
        let mut rho = DMatrix::from_fn(n, nf, |_, _| rng.random_range(-1.0..1.0));
        for mut row in rho.row_iter_mut() {
            let target = rng.random_range(0.05f64..0.95).sqrt();
            let norm = row.norm();
            row *= target / norm;
        }
        LoadingMatrix::new(rho, 1u64).unwrap()
    }

    #[test]
    fn one_factor_reduction_is_secular_equation() {
        let rho = vec![0.3, 0.5, 0.7, 0.2];
        let lm = LoadingMatrix::new(DMatrix::from_vec(4, 1, rho.clone()), 1u64).unwrap();
        for lambda in [1.5, 2.0, 4.0] {
            let expected = 1.0
                - rho
                    .iter()
                    .map(|r| r * r / (lambda - 1.0 + r * r))
                    .sum::<f64>();
            assert!((reduced_determinant(&lm, lambda).unwrap() - expected).abs() < 1e-14);
        }
        let roots = reduced_roots(&lm).unwrap();
        let lv = LoadingVector::new(rho, 1u64).unwrap();
        let exact = secular_solve(&lv).unwrap();
        let above: Vec<f64> = exact.expanded().into_iter().filter(|&v| v > 1.0).collect();
        assert_eq!(roots.len(), above.len());
        for (a, b) in roots.iter().zip(&above) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn determinant_tends_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lm = random_loadings(20, 3, &mut rng);
        let d = reduced_determinant(&lm, 1e12).unwrap();
        assert!((d - 1.0).abs() < 1e-10);
    }

    #[test]
    fn determinant_detects_poles() {
        let lm = LoadingMatrix::new(DMatrix::from_vec(2, 1, vec![0.6, 0.0]), 1u64).unwrap();
        assert!(matches!(
            reduced_determinant(&lm, 0.64),
            Err(Error::Singular { index: 0, .. })
        ));
        assert!(matches!(
            reduced_determinant(&lm, 1.0),
            Err(Error::Singular { index: 1, .. })
        ));
    }

    #[test]
    fn reduced_roots_match_dense_two_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..10 {
            let lm = random_loadings(20, 2, &mut rng);
            let roots = reduced_roots(&lm).unwrap();
            let dense: Vec<f64> = dense_spectrum(&lm.assemble(), false)
                .unwrap()
                .expanded()
                .into_iter()
                .filter(|&v| v > 1.0)
                .collect();
            assert_eq!(roots.len(), dense.len());
            for (a, b) in roots.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-8);
            }
            for r in &roots {
                assert!(reduced_determinant(&lm, *r).unwrap().abs() < 1e-6);
            }
        }
    }

    #[test]
    fn repeated_roots_are_found() {
        // two identical orthogonal blocks give a double eigenvalue above 1
        let mut rho = DMatrix::zeros(6, 2);
        for i in 0..3 {
            rho[(i, 0)] = 0.8;
            rho[(i + 3, 1)] = 0.8;
        }
        let lm = LoadingMatrix::new(rho, 1u64).unwrap();
        let roots = reduced_roots(&lm).unwrap();
        let expected = 1.0 + 2.0 * 0.64;
        assert_eq!(roots.len(), 2);
        assert!(
            roots.iter().all(|r| (r - expected).abs() < 1e-12),
            "{roots:?}"
        );
    }

    #[test]
    fn gram_eigs_examples() {
        // orthogonal columns: eigenvalues are the column norms
        let mut rho = DMatrix::zeros(4, 2);
        rho[(0, 0)] = 0.6;
        rho[(1, 0)] = 0.5;
        rho[(2, 1)] = 0.9;
        rho[(3, 1)] = -0.3;
        let lm = LoadingMatrix::new(rho, 1u64).unwrap();
        let eigs = multifactor_large_eigs(&lm).unwrap();
        assert!((eigs[0] - 0.9).abs() < 1e-15);
        assert!((eigs[1] - 0.61).abs() < 1e-15);

        let col = vec![0.3, 0.1, -0.4, 0.8];
        let lm = LoadingMatrix::new(DMatrix::from_vec(4, 1, col.clone()), 1u64).unwrap();
        let lv = LoadingVector::new(col, 1u64).unwrap();
        let single = multifactor_large_eigs(&lm).unwrap();
        assert!((single[0] - largest_eigenvalue_approx(&lv)).abs() < 1e-15);
    }

    #[test]
    fn gram_eigs_approximate_large_eigenvalues() {
        // three sectors with separated strengths, N = 100
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100;
        let mut rho = DMatrix::zeros(n, 3);
        for i in 0..n {
            let market = rng.random_range(0.78..0.86);
            rho[(i, 0)] = market;
            let sector = if i % 2 == 0 { 0.4 } else { -0.4 };
            rho[(i, 1)] = sector + rng.random_range(-0.02..0.02);
            rho[(i, 2)] = if (i / 2) % 2 == 0 { 0.25 } else { -0.25 };
        }
        let lm = LoadingMatrix::new(rho, 1u64).unwrap();
        let approx = multifactor_large_eigs(&lm).unwrap();
        let dense = dense_spectrum(&lm.assemble(), false).unwrap().top(3);
        for (a, d) in approx.iter().zip(&dense) {
            assert!(((a - d) / d).abs() < 0.05, "{a} vs {d}");
        }
    }

    #[test]
    fn from_spec_matches_model_correlation() {
        let mut spec = ModelSpec::uniform(5, 2, 0.3, 1.0, 1.0, 0.0, 0).unwrap();
        spec.beta =
            DMatrix::from_row_slice(5, 2, &[0.5, 0.1, -0.2, 0.6, 0.0, 0.0, 0.3, 0.3, 0.9, -0.4]);
        spec.factor_sigma = vec![1.2, 0.7];
        let lm = LoadingMatrix::from_spec(&spec, 8u64).unwrap();
        let norms = lm.row_norms_sq();
        let gammas = spec.gammas();
        let e = eta(0.3, 8u64).unwrap();
        for i in 0..5 {
            let expected = if gammas[i] == 0.0 {
                0.0
            } else {
                gammas[i] / (gammas[i] + e)
            };
            assert!((norms[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_matrix_examples() {
        let spec = ModelSpec::uniform(7, 1, 0.2, 1.0, 1.0, 0.3, 0).unwrap();
        let g = gamma_matrix(&spec).unwrap();
        assert!((g.values[(0, 0)] - 0.09).abs() < 1e-15);

        let mut spec = ModelSpec::uniform(3, 1, 0.2, 1.0, 1.0, 0.0, 0).unwrap();
        spec.sigma = vec![0.5, 1.0, 2.0];
        spec.beta = DMatrix::from_vec(3, 1, vec![0.1, 0.2, 0.4]);
        spec.factor_sigma = vec![1.5];
        let mean: f64 = (0..3)
            .map(|i| 2.25 * spec.beta[(i, 0)].powi(2) / spec.sigma[i].powi(2))
            .sum::<f64>()
            / 3.0;
        assert!((gamma_matrix(&spec).unwrap().values[(0, 0)] - mean).abs() < 1e-15);

        // orthogonal under the 1/sigma^2 weighting
        let mut spec = ModelSpec::uniform(4, 2, 0.2, 1.0, 1.0, 0.0, 0).unwrap();
        spec.beta = DMatrix::from_row_slice(4, 2, &[0.3, 0.1, 0.3, -0.1, 0.3, 0.1, 0.3, -0.1]);
        let g = gamma_matrix(&spec).unwrap();
        assert_eq!(g.values[(0, 1)], 0.0);
        assert_eq!(g.values[(1, 0)], 0.0);
        let eigs = g.eigenvalues().unwrap();
        assert!(eigs[1] >= -1e-12);
    }

    #[test]
    fn practical_curve_examples() {
        let flat = practical_eigencurve(533, 0.17, 0.0, &[1, 2, 4, 128]).unwrap();
        assert!(flat.values.iter().all(|&v| (v - 90.61).abs() < 1e-10));

        let curve = practical_eigencurve(533, 0.17, 0.16, &[1, 1 << 40]).unwrap();
        assert!((curve.values[0] - 90.61 / (1.0 - 0.0256)).abs() < 1e-10);
        assert!((curve.values[1] - 128.0).abs() < 1.0);
        let limit = 90.61 / 0.84f64.powi(2);
        assert!((curve.values[1] - limit).abs() < 1e-8);

        let taus: Vec<u64> = (1..=128).collect();
        let curve = practical_eigencurve(100, 0.2, 0.3, &taus).unwrap();
        assert!(curve.values.windows(2).all(|w| w[1] > w[0]));
        assert!(practical_eigencurve(100, 0.0, 0.3, &taus).is_err());
    }
}
