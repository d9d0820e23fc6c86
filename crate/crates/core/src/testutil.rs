use nalgebra::DMatrix;

/// Batch-means estimate of a covariance matrix and of its standard error.
///
/// Columns are split into `batches` contiguous blocks; the batches are
/// long compared with the memory of the simulated series, so their
/// covariances are close to independent.
pub fn batch_covariance(x: &DMatrix<f64>, batches: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let len = x.ncols() / batches;
    let mean: Vec<f64> = (0..n).map(|i| x.row(i).mean()).collect();
    let mut sum = DMatrix::zeros(n, n);
    let mut sum_sq = DMatrix::zeros(n, n);
    for b in 0..batches {
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for t in b * len..(b + 1) * len {
            for i in 0..n {
                let xi = x[(i, t)] - mean[i];
                for j in 0..n {
                    cov[(i, j)] += xi * (x[(j, t)] - mean[j]);
                }
            }
        }
        cov /= len as f64;
        sum += &cov;
        sum_sq += cov.component_mul(&cov);
    }
    let k = batches as f64;
    let avg = &sum / k;
    let var = (sum_sq / k - avg.component_mul(&avg)) * (k / (k - 1.0));
    let se = var.map(|v| (v.max(0.0) / k).sqrt());
    (avg, se)
}
