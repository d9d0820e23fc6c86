//! Lead-lag multi-factor model and synthetic return panels.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Burn-in tolerance used when the caller does not pick one.
pub const DEFAULT_BURN_IN_TOLERANCE: f64 = 1e-15;

/// Parameters of the lead-lag multi-factor model
///
/// ```text
/// r_i(t) = eps_i(t) + sum_{k>=0} alpha^k sum_f beta[i,f] R_f(t-k)
/// ```
///
/// with `eps_i ~ N(0, sigma_i^2)` and `R_f ~ N(0, factor_sigma_f^2)`, all
/// independent. Volatilities are per base step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_assets: usize,
    pub n_factors: usize,
    /// Memory decay of the lead-lag kernel, in `[0, 1)`.
    pub alpha: f64,
    /// Idiosyncratic volatilities, one per asset.
    pub sigma: Vec<f64>,
    /// Factor volatilities, one per factor.
    pub factor_sigma: Vec<f64>,
    /// Sensitivities, `n_assets x n_factors`.
    #[serde(with = "crate::io::matrix_rows")]
    pub beta: DMatrix<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    /// Builds a spec with the same volatility for every asset and every
    /// factor, and the same sensitivity everywhere.
    pub fn uniform(
        n_assets: usize,
        n_factors: usize,
        alpha: f64,
        sigma: f64,
        factor_sigma: f64,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = ModelSpec {
            n_assets,
            n_factors,
            alpha,
            sigma: vec![sigma; n_assets],
            factor_sigma: vec![factor_sigma; n_factors],
            beta: DMatrix::from_element(n_assets, n_factors, beta),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One-factor spec with per-asset volatilities and sensitivities.
    pub fn one_factor(
        alpha: f64,
        sigma: Vec<f64>,
        factor_sigma: f64,
        beta: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let n = beta.len();
        let spec = ModelSpec {
            n_assets: n,
            n_factors: 1,
            alpha,
            sigma,
            factor_sigma: vec![factor_sigma],
            beta: DMatrix::from_vec(n, 1, beta),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 {
            return Err(Error::InvalidSpec("n_assets must be positive".into()));
        }
        if self.n_factors == 0 {
            return Err(Error::InvalidSpec("n_factors must be positive".into()));
        }
        if !(self.alpha.is_finite() && (0.0..1.0).contains(&self.alpha)) {
            return Err(Error::InvalidSpec(format!(
                "alpha must satisfy 0 <= alpha < 1, got {}",
                self.alpha
            )));
        }
        if self.sigma.len() != self.n_assets {
            return Err(Error::InvalidSpec(format!(
                "sigma has {} entries, expected n_assets = {}",
                self.sigma.len(),
                self.n_assets
            )));
        }
        if let Some(i) = self.sigma.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidSpec(format!(
                "sigma[{i}] must be positive and finite, got {}",
                self.sigma[i]
            )));
        }
        if self.factor_sigma.len() != self.n_factors {
            return Err(Error::InvalidSpec(format!(
                "factor_sigma has {} entries, expected n_factors = {}",
                self.factor_sigma.len(),
                self.n_factors
            )));
        }
        if let Some(f) = self
            .factor_sigma
            .iter()
            .position(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::InvalidSpec(format!(
                "factor_sigma[{f}] must be positive and finite, got {}",
                self.factor_sigma[f]
            )));
        }
        if self.beta.shape() != (self.n_assets, self.n_factors) {
            return Err(Error::InvalidSpec(format!(
                "beta is {}x{}, expected {}x{}",
                self.beta.nrows(),
                self.beta.ncols(),
                self.n_assets,
                self.n_factors
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidSpec("beta entries must be finite".into()));
        }
        Ok(())
    }

    /// Squared total factor loading `beta_i^2 = sum_f Sigma_f^2 beta_{i,f}^2`.
    pub fn loading_sq(&self, asset: usize) -> f64 {
        (0..self.n_factors)
            .map(|f| (self.factor_sigma[f] * self.beta[(asset, f)]).powi(2))
            .sum()
    }

    /// Per-asset signal-to-noise ratios `gamma_i = beta_i^2 / sigma_i^2`.
    pub fn gammas(&self) -> Vec<f64> {
        (0..self.n_assets)
            .map(|i| self.loading_sq(i) / self.sigma[i].powi(2))
            .collect()
    }
}

/// How returns within a block are combined when aggregating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compounding {
    /// `r(1) + ... + r(tau)`
    #[default]
    Arithmetic,
    /// `(1 + r(1)) ... (1 + r(tau)) - 1`
    Geometric,
}

/// Rectangular panel of returns: one row per asset, one column per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    /// `n_assets x n_steps` dimensionless returns.
    pub returns: DMatrix<f64>,
    /// Duration of one step of the finest (unaggregated) series, in minutes.
    pub base_scale_minutes: f64,
    /// Number of finest steps summed into one column.
    pub scale: u64,
    pub asset_labels: Vec<String>,
    pub compounding: Compounding,
}

impl ReturnPanel {
    pub fn new(
        returns: DMatrix<f64>,
        asset_labels: Vec<String>,
        base_scale_minutes: f64,
    ) -> Result<Self> {
        let panel = ReturnPanel {
            returns,
            base_scale_minutes,
            scale: 1,
            asset_labels,
            compounding: Compounding::Arithmetic,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn with_compounding(mut self, compounding: Compounding) -> Self {
        self.compounding = compounding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.returns.ncols() == 0 {
            return Err(Error::InvalidArgument("panel has no time steps".into()));
        }
        if self.asset_labels.len() != self.returns.nrows() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} assets",
                self.asset_labels.len(),
                self.returns.nrows()
            )));
        }
        if !(self.base_scale_minutes.is_finite() && self.base_scale_minutes > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "base scale must be positive, got {}",
                self.base_scale_minutes
            )));
        }
        if self.scale == 0 {
            return Err(Error::InvalidArgument("scale must be positive".into()));
        }
        if let Some(k) = self.returns.iter().position(|r| !r.is_finite()) {
            let (n, t) = (self.returns.nrows(), k);
            return Err(Error::InvalidArgument(format!(
                "non-finite return for asset {} at step {}",
                t % n,
                t / n
            )));
        }
        Ok(())
    }

    pub fn n_assets(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.returns.ncols()
    }

    /// Duration of one column in minutes.
    pub fn step_minutes(&self) -> f64 {
        self.base_scale_minutes * self.scale as f64
    }
}

/// Default labels `A0001, A0002, ...`.
pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("A{i:04}")).collect()
}

/// Smallest `k` with `alpha^k < tolerance`; zero when `alpha == 0`.
pub fn stationary_burn_in(alpha: f64, tolerance: f64) -> Result<usize> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "burn-in tolerance must lie in (0, 1), got {tolerance}"
        )));
    }
    if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
        return Err(Error::InvalidArgument(format!(
            "alpha must satisfy 0 <= alpha < 1, got {alpha}"
        )));
    }
    if alpha == 0.0 {
        return Ok(0);
    }
    let mut power = 1.0;
    let mut k = 0;
    while power >= tolerance {
        power *= alpha;
        k += 1;
    }
    Ok(k)
}

/// Stream ids: assets take `0..n_assets`, factors follow.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Advances the factor states by one step and writes the asset returns.
///
/// `state_f(t) = Sigma_f z_f(t) + alpha state_f(t-1)` equals the infinite
/// lag sum exactly once the initial condition has decayed.
#[inline]
fn advance(spec: &ModelSpec, state: &mut [f64], eps: &[f64], factor: &[f64], out: &mut [f64]) {
    for (f, s) in state.iter_mut().enumerate() {
        *s = spec.factor_sigma[f] * factor[f] + spec.alpha * *s;
    }
    for (i, r) in out.iter_mut().enumerate() {
        let mut x = spec.sigma[i] * eps[i];
        for (f, s) in state.iter().enumerate() {
            x += spec.beta[(i, f)] * s;
        }
        *r = x;
    }
}

/// Simulates `n_steps` returns after discarding `burn_in` warm-up steps.
///
/// Deterministic in `spec.seed`; each asset and factor draws from its own
/// ChaCha stream.
pub fn simulate_panel(spec: &ModelSpec, n_steps: usize, burn_in: usize) -> Result<ReturnPanel> {
    spec.validate()?;
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let (n, nf) = (spec.n_assets, spec.n_factors);
    let mut asset_rngs: Vec<_> = (0..n).map(|i| stream_rng(spec.seed, i as u64)).collect();
    let mut factor_rngs: Vec<_> = (0..nf)
        .map(|f| stream_rng(spec.seed, (n + f) as u64))
        .collect();

    let mut returns = DMatrix::zeros(n, n_steps);
    let mut state = vec![0.0; nf];
    let mut eps = vec![0.0; n];
    let mut factor = vec![0.0; nf];
    let mut scratch = vec![0.0; n];
    for t in 0..burn_in + n_steps {
        for (z, rng) in eps.iter_mut().zip(asset_rngs.iter_mut()) {
            *z = StandardNormal.sample(rng);
        }
        for (z, rng) in factor.iter_mut().zip(factor_rngs.iter_mut()) {
            *z = StandardNormal.sample(rng);
        }
        if t < burn_in {
            advance(spec, &mut state, &eps, &factor, &mut scratch);
        } else {
            let mut col = returns.column_mut(t - burn_in);
            advance(spec, &mut state, &eps, &factor, col.as_mut_slice());
        }
    }
    ReturnPanel::new(returns, default_labels(n), 1.0)
}

#[cfg(test)]
/// Same recursion as [`simulate_panel`] driven by caller-supplied standard
/// normal innovations (`n_assets x total` and `n_factors x total`).
pub(crate) fn simulate_from_innovations(
    spec: &ModelSpec,
    eps: &DMatrix<f64>,
    factor: &DMatrix<f64>,
    burn_in: usize,
) -> DMatrix<f64> {
    let total = eps.ncols();
    let mut out = DMatrix::zeros(spec.n_assets, total - burn_in);
    let mut state = vec![0.0; spec.n_factors];
    let mut scratch = vec![0.0; spec.n_assets];
    for t in 0..total {
        let e = eps.column(t).iter().copied().collect::<Vec<_>>();
        let z = factor.column(t).iter().copied().collect::<Vec<_>>();
        if t < burn_in {
            advance(spec, &mut state, &e, &z, &mut scratch);
        } else {
            let mut col = out.column_mut(t - burn_in);
            advance(spec, &mut state, &e, &z, col.as_mut_slice());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{sample_correlation, theoretical_covariance};
    use crate::testutil::batch_covariance;

    fn basic_spec(alpha: f64, seed: u64) -> ModelSpec {
        ModelSpec::uniform(10, 1, alpha, 1.0, 1.0, 0.5, seed).unwrap()
    }

    #[test]
    fn burn_in_examples() {
        assert_eq!(stationary_burn_in(0.0, 1e-12).unwrap(), 0);
        assert_eq!(stationary_burn_in(0.5, 0.25).unwrap(), 3);

        let k = stationary_burn_in(0.16, 1e-12).unwrap();
        // integer search oracle: first power below the tolerance
        let oracle = (0..).find(|&j| 0.16f64.powi(j) < 1e-12).unwrap() as usize;
        assert_eq!(k, oracle);
        assert_eq!(k, 16);
    }

    #[test]
    fn burn_in_rejects_bad_tolerance() {
        assert!(stationary_burn_in(0.5, 0.0).is_err());
        assert!(stationary_burn_in(0.5, 1.0).is_err());
        assert!(stationary_burn_in(0.5, -1.0).is_err());
    }

    #[test]
    fn invalid_specs_are_named() {
        let mut spec = basic_spec(0.3, 1);
        spec.alpha = 1.0;
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("alpha"), "{msg}");

        let mut spec = basic_spec(0.3, 1);
        spec.sigma[3] = 0.0;
        assert!(spec
            .validate()
            .unwrap_err()
            .to_string()
            .contains("sigma[3]"));

        let mut spec = basic_spec(0.3, 1);
        spec.factor_sigma[0] = -1.0;
        assert!(spec
            .validate()
            .unwrap_err()
            .to_string()
            .contains("factor_sigma[0]"));

        let mut spec = basic_spec(0.3, 1);
        spec.beta = DMatrix::zeros(9, 1);
        assert!(spec.validate().unwrap_err().to_string().contains("beta"));

        let mut spec = basic_spec(0.3, 1);
        spec.beta[(0, 0)] = f64::NAN;
        assert!(spec.validate().is_err());

        assert!(matches!(
            simulate_panel(&basic_spec(0.3, 1), 0, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = basic_spec(0.3, 42);
        let a = simulate_panel(&spec, 500, 10).unwrap();
        let b = simulate_panel(&spec, 500, 10).unwrap();
        assert_eq!(a.returns.as_slice(), b.returns.as_slice());
        let c = simulate_panel(&basic_spec(0.3, 43), 500, 10).unwrap();
        assert_ne!(a.returns.as_slice(), c.returns.as_slice());
    }

    #[test]
    fn streams_match_innovation_driven_recursion() {
        let spec = basic_spec(0.4, 9);
        let burn = 20;
        let total = burn + 200;
        let mut eps = DMatrix::zeros(spec.n_assets, total);
        let mut fac = DMatrix::zeros(spec.n_factors, total);
        for i in 0..spec.n_assets {
            let mut rng = stream_rng(spec.seed, i as u64);
            for t in 0..total {
                eps[(i, t)] = StandardNormal.sample(&mut rng);
            }
        }
        let mut rng = stream_rng(spec.seed, spec.n_assets as u64);
        for t in 0..total {
            fac[(0, t)] = StandardNormal.sample(&mut rng);
        }
        let expected = simulate_from_innovations(&spec, &eps, &fac, burn);
        let panel = simulate_panel(&spec, 200, burn).unwrap();
        assert_eq!(panel.returns, expected);
    }

    #[test]
    fn recursive_state_matches_truncated_sum() {
        let mut spec = ModelSpec::uniform(4, 2, 0.7, 0.8, 1.3, 0.0, 3).unwrap();
        spec.beta = DMatrix::from_row_slice(4, 2, &[0.5, -0.2, 1.0, 0.3, -0.4, 0.9, 0.1, 0.0]);
        let depth = stationary_burn_in(spec.alpha, 1e-15).unwrap();
        let steps = 10_000;
        let total = depth + steps;

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let eps = DMatrix::from_fn(4, total, |_, _| StandardNormal.sample(&mut rng));
        let fac = DMatrix::from_fn(2, total, |_, _| StandardNormal.sample(&mut rng));
        let got = simulate_from_innovations(&spec, &eps, &fac, depth);

        // explicit convolution truncated at `depth` lags
        let mut max_err: f64 = 0.0;
        for t in depth..total {
            for i in 0..4 {
                let mut r = spec.sigma[i] * eps[(i, t)];
                for f in 0..2 {
                    let mut acc = 0.0;
                    let mut w = 1.0;
                    for k in 0..=depth.min(t) {
                        acc += w * spec.factor_sigma[f] * fac[(f, t - k)];
                        w *= spec.alpha;
                    }
                    r += spec.beta[(i, f)] * acc;
                }
                max_err = max_err.max((r - got[(i, t - depth)]).abs());
            }
        }
        assert!(max_err < 1e-12, "max deviation {max_err:e}");
    }

    #[test]
    fn no_factor_gives_identity_correlation() {
        let spec = ModelSpec::uniform(5, 1, 0.6, 1.0, 1.0, 0.0, 11).unwrap();
        let n = 200_000;
        let panel = simulate_panel(&spec, n, 100).unwrap();
        let corr = sample_correlation(&panel).unwrap();
        let bound = 5.0 / (n as f64).sqrt();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(corr.values[(i, j)].abs() < bound);
                }
            }
        }
    }

    #[test]
    fn memoryless_factor_has_no_lagged_cross_covariance() {
        let spec = ModelSpec::uniform(3, 1, 0.0, 1.0, 1.0, 0.8, 0).unwrap();
        let total = 400_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = DMatrix::from_fn(3, total, |_, _| StandardNormal.sample(&mut rng));
        let fac = DMatrix::from_fn(1, total, |_, _| StandardNormal.sample(&mut rng));
        let r = simulate_from_innovations(&spec, &eps, &fac, 0);
        let lag1: f64 =
            (1..total).map(|t| r[(0, t)] * fac[(0, t - 1)]).sum::<f64>() / (total - 1) as f64;
        let lag0: f64 = (0..total).map(|t| r[(0, t)] * fac[(0, t)]).sum::<f64>() / total as f64;
        // sd of the lag-1 product mean is sqrt(var(r))/sqrt(T)
        let se = (1.0f64 + 0.64).sqrt() / (total as f64).sqrt();
        assert!(lag1.abs() < 4.0 * se, "lag1 = {lag1}");
        assert!((lag0 - 0.8).abs() < 4.0 * se, "lag0 = {lag0}");
    }

    #[test]
    fn sample_covariance_matches_closed_form() {
        let spec = basic_spec(0.3, 2024);
        let n = 1_000_000;
        let panel = simulate_panel(&spec, n, stationary_burn_in(0.3, 1e-15).unwrap()).unwrap();
        let theory = theoretical_covariance(&spec, 1).unwrap();
        let (mean, se) = batch_covariance(&panel.returns, 100);
        for i in 0..10 {
            for j in 0..10 {
                let dev = (mean[(i, j)] - theory.values[(i, j)]).abs();
                assert!(
                    dev < 3.0 * se[(i, j)],
                    "({i},{j}): {} vs {} (se {})",
                    mean[(i, j)],
                    theory.values[(i, j)],
                    se[(i, j)]
                );
            }
        }
    }

    #[test]
    fn sample_means_vanish() {
        let spec = basic_spec(0.3, 8);
        let n = 1_000_000;
        let panel = simulate_panel(&spec, n, 50).unwrap();
        for i in 0..10 {
            let mean = panel.returns.row(i).mean();
            assert!(
                mean.abs() < 5.0 * spec.sigma[i] / (n as f64).sqrt(),
                "asset {i}: {mean}"
            );
        }
    }

    #[test]
    fn halves_agree() {
        let spec = basic_spec(0.5, 31);
        let panel = simulate_panel(&spec, 1_000_000, 60).unwrap();
        let half = panel.n_steps() / 2;
        let first = panel.returns.columns(0, half).into_owned();
        let second = panel.returns.columns(half, half).into_owned();
        let (m1, s1) = batch_covariance(&first, 50);
        let (m2, s2) = batch_covariance(&second, 50);
        for i in 0..10 {
            for j in 0..10 {
                let se = (s1[(i, j)].powi(2) + s2[(i, j)].powi(2)).sqrt();
                assert!((m1[(i, j)] - m2[(i, j)]).abs() < 5.0 * se);
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let mut spec = basic_spec(0.25, 99);
        spec.beta[(3, 0)] = -0.125;
        let json = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
