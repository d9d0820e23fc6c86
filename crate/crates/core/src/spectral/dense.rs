//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! the implicit QL iteration (the EISPACK `tred2`/`tql2` pair).

use nalgebra::DMatrix;

use super::Spectrum;
use crate::error::{Error, Result};
use crate::moments::{relative_asymmetry, ScaleMatrix};

const SYMMETRY_TOL: f64 = 1e-12;
const MAX_QL_SWEEPS: usize = 60;

/// Eigen-decomposition of a real symmetric matrix.
///
/// Returns eigenvalues in descending order and, when requested, the matching
/// orthonormal eigenvectors as columns.
pub fn symmetric_eigen(
    a: &DMatrix<f64>,
    with_vectors: bool,
) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    let asymmetry = relative_asymmetry(a);
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), with_vectors.then(|| DMatrix::zeros(0, 0))));
    }

    // Column-major working copy: v[c * n + r] is V[r][c]. The inner loops
    // below walk down columns, which keeps them contiguous.
    let mut v: Vec<f64> = a.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e, with_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = with_vectors.then(|| DMatrix::from_fn(n, n, |r, c| v[order[c] * n + r]));
    Ok((values, vectors))
}

fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |r: usize, c: usize| c * n + r;

    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    // accumulate the transformations
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(
    n: usize,
    v: &mut [f64],
    d: &mut [f64],
    e: &mut [f64],
    with_vectors: bool,
) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] == 0 guarantees the search stops inside the matrix
        let m = m.min(n - 1);

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::Numerical(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if with_vectors {
                        let (left, right) = v.split_at_mut((i + 1) * n);
                        let col_i = &mut left[i * n..];
                        let col_i1 = &mut right[..n];
                        for k in 0..n {
                            let hk = col_i1[k];
                            col_i1[k] = s * col_i[k] + c * hk;
                            col_i[k] = c * col_i[k] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Full spectrum of a covariance or correlation matrix.
pub fn dense_eigenvalues(matrix: &ScaleMatrix) -> Result<Spectrum> {
    dense_spectrum(&matrix.values, false)
}

/// Full spectrum of any real symmetric matrix, optionally with vectors.
pub fn dense_spectrum(a: &DMatrix<f64>, with_vectors: bool) -> Result<Spectrum> {
    let (values, vectors) = symmetric_eigen(a, with_vectors)?;
    let mut spectrum = Spectrum::from_values(values);
    spectrum.eigenvectors = vectors;
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MatrixKind;
    use crate::spectral::basic_eigenvalues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    fn lu_determinant(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        let mut m = a.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
                .unwrap();
            if m[(pivot, col)] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                m.swap_rows(pivot, col);
                det = -det;
            }
            det *= m[(col, col)];
            for r in col + 1..n {
                let factor = m[(r, col)] / m[(col, col)];
                for c in col..n {
                    m[(r, c)] -= factor * m[(col, c)];
                }
            }
        }
        det
    }

    #[test]
    fn identity_has_unit_spectrum() {
        for n in [1, 2, 7, 40] {
            let s = dense_spectrum(&DMatrix::identity(n, n), false).unwrap();
            assert_eq!(s.expanded(), vec![1.0; n]);
            assert_eq!(s.multiplicities, vec![n]);
        }
    }

    #[test]
    fn basic_model_matrix() {
        let n = 25;
        let rho_sq = 0.37;
        let c = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho_sq });
        let m = ScaleMatrix::new(c, 1, MatrixKind::Correlation).unwrap();
        let got = dense_eigenvalues(&m).unwrap().expanded();
        let want = basic_eigenvalues(n, rho_sq).unwrap().expanded();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_and_determinant_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let a = random_symmetric(8, &mut rng);
            let values = dense_spectrum(&a, false).unwrap().expanded();
            let sum: f64 = values.iter().sum();
            assert!((sum - a.trace()).abs() < 1e-10);
            let prod: f64 = values.iter().product();
            let det = lu_determinant(&a);
            assert!(((prod - det) / det).abs() < 1e-8, "{prod} vs {det}");
        }
    }

    #[test]
    fn residuals_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [1, 2, 3, 10, 60] {
            let a = random_symmetric(n, &mut rng);
            let s = dense_spectrum(&a, true).unwrap();
            let v = s.eigenvectors.as_ref().unwrap();
            let values = s.expanded();
            let norm = a.norm();
            for (k, lambda) in values.iter().enumerate() {
                let col = v.column(k);
                let residual = (&a * col - col * *lambda).norm();
                assert!(residual < 1e-9 * norm.max(1.0));
            }
            let gram = v.transpose() * v;
            assert!((gram - DMatrix::identity(n, n)).amax() < 1e-12);
            assert!(values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn degenerate_and_diagonal_inputs() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 3.0, 0.0]));
        let s = dense_spectrum(&d, true).unwrap();
        assert_eq!(s.expanded(), vec![3.0, 3.0, 0.0, -1.0]);
        assert_eq!(s.multiplicities, vec![2, 1, 1]);

        let zero = DMatrix::zeros(5, 5);
        assert_eq!(
            dense_spectrum(&zero, false).unwrap().expanded(),
            vec![0.0; 5]
        );
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            symmetric_eigen(&a, false),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(symmetric_eigen(&DMatrix::zeros(2, 3), false).is_err());
    }
}
