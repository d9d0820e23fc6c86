//! Least-squares fits of `lambda(tau) = A / eta(alpha, tau)` to eigenvalue
//! curves, one rank at a time, with `A = N gamma_f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::eta;

/// Largest admissible `alpha`.
pub const ALPHA_MAX: f64 = 1.0 - 1e-6;
/// Multi-start grid for `alpha`.
pub const ALPHA_STARTS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

const MIN_POINTS: usize = 3;
const MAX_ITERATIONS: usize = 500;
const FD_STEP: f64 = 1e-6;
const STEP_TOL: f64 = 1e-14;
const MU_MAX: f64 = 1e16;

/// One eigenvalue rank as a function of the aggregation scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "crate::io::CurveRecord", try_from = "crate::io::CurveRecord")]
pub struct EigenCurve {
    /// Scales in base steps, strictly ascending.
    pub taus: Vec<u64>,
    pub values: Vec<f64>,
    /// 1 for the largest eigenvalue.
    pub rank: usize,
}

impl EigenCurve {
    pub fn new(taus: Vec<u64>, values: Vec<f64>, rank: usize) -> Result<Self> {
        if taus.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scales but {} values",
                taus.len(),
                values.len()
            )));
        }
        if rank == 0 {
            return Err(Error::InvalidArgument("rank starts at 1".into()));
        }
        if taus.first() == Some(&0) {
            return Err(Error::InvalidArgument("scales must be at least 1".into()));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "scales must be strictly ascending".into(),
            ));
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue at tau = {} must be positive and finite, got {}",
                taus[k], values[k]
            )));
        }
        Ok(EigenCurve { taus, values, rank })
    }

    pub fn with_rank(mut self, rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidArgument("rank starts at 1".into()));
        }
        self.rank = rank;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// `(tau, value)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.taus.iter().copied().zip(self.values.iter().copied())
    }
}

/// Fitted parameters of one eigenvalue curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: f64,
    /// `N gamma_f`.
    pub amplitude: f64,
    pub gamma_f: f64,
    /// Relaxation time in minutes; absent when `alpha == 0`.
    pub t_alpha: Option<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    /// Fitted eigenvalue at scale `tau`.
    pub fn predict(&self, tau: u64) -> Result<f64> {
        Ok(self.amplitude / eta(self.alpha, tau)?)
    }

    /// The fitted law sampled on `taus`.
    pub fn curve(&self, taus: &[u64], rank: usize) -> Result<EigenCurve> {
        let values = taus
            .iter()
            .map(|&t| self.predict(t))
            .collect::<Result<Vec<_>>>()?;
        EigenCurve::new(taus.to_vec(), values, rank)
    }
}

/// `t_alpha = tau_0 / ln(1 / alpha)`, in the unit of `base_scale_minutes`.
pub fn relaxation_time(alpha: f64, base_scale_minutes: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Err(Error::Domain(
            "no memory: relaxation time undefined (zero)".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "relaxation time needs 0 < alpha < 1, got {alpha}"
        )));
    }
    if !(base_scale_minutes.is_finite() && base_scale_minutes > 0.0) {
        return Err(Error::Domain(format!(
            "base scale must be positive, got {base_scale_minutes}"
        )));
    }
    Ok(base_scale_minutes / (1.0 / alpha).ln())
}

/// Result of one local search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub alpha: f64,
    pub amplitude: f64,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    taus: &'a [u64],
    y: &'a [f64],
}

impl Problem<'_> {
    fn shape(&self, alpha: f64) -> Vec<f64> {
        self.taus
            .iter()
            .map(|&t| 1.0 / eta(alpha, t).expect("alpha kept in range"))
            .collect()
    }

    /// `d shape / d alpha` by finite differences, central inside the box and
    /// second-order one-sided at its edges.
    fn shape_derivative(&self, alpha: f64) -> Vec<f64> {
        let h = FD_STEP;
        if alpha - h >= 0.0 && alpha + h <= ALPHA_MAX {
            let up = self.shape(alpha + h);
            let down = self.shape(alpha - h);
            up.iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * h))
                .collect()
        } else {
            let s = if alpha - h < 0.0 { h } else { -h };
            let g0 = self.shape(alpha);
            let g1 = self.shape(alpha + s);
            let g2 = self.shape(alpha + 2.0 * s);
            (0..g0.len())
                .map(|k| (-3.0 * g0[k] + 4.0 * g1[k] - g2[k]) / (2.0 * s))
                .collect()
        }
    }

    /// Least-squares amplitude for a fixed shape.
    fn best_amplitude(&self, g: &[f64]) -> f64 {
        let num: f64 = g.iter().zip(self.y).map(|(g, y)| g * y).sum();
        let den: f64 = g.iter().map(|g| g * g).sum();
        (num / den).max(f64::MIN_POSITIVE)
    }

    fn rss(&self, g: &[f64], amplitude: f64) -> f64 {
        g.iter()
            .zip(self.y)
            .map(|(g, y)| (y - amplitude * g).powi(2))
            .sum()
    }
}

/// Damped Gauss-Newton (Levenberg-Marquardt) from `alpha0`, with the
/// amplitude started at its least-squares value.
pub fn fit_from_start(curve: &EigenCurve, alpha0: f64) -> Result<Candidate> {
    if curve.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            got: curve.len(),
            need: MIN_POINTS,
        });
    }
    if !(0.0..=ALPHA_MAX).contains(&alpha0) {
        return Err(Error::Domain(format!(
            "starting alpha must lie in [0, {ALPHA_MAX}], got {alpha0}"
        )));
    }
    let problem = Problem {
        taus: &curve.taus,
        y: &curve.values,
    };
    let mut alpha = alpha0;
    let mut g = problem.shape(alpha);
    let mut amplitude = problem.best_amplitude(&g);
    let mut rss = problem.rss(&g, amplitude);
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if rss == 0.0 {
            converged = true;
            break;
        }
        let dg = problem.shape_derivative(alpha);
        // residual r = y - A g; Jacobian columns are -A dg and -g
        let (mut aa, mut ab, mut bb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..g.len() {
            let ja = -amplitude * dg[k];
            let jb = -g[k];
            let r = problem.y[k] - amplitude * g[k];
            aa += ja * ja;
            ab += ja * jb;
            bb += jb * jb;
            ga += ja * r;
            gb += jb * r;
        }
        let (a11, a22) = (aa * (1.0 + mu), bb * (1.0 + mu));
        let det = a11 * a22 - ab * ab;
        let (step_alpha, step_amp) = if det > 0.0 && det.is_finite() {
            ((-ga * a22 + gb * ab) / det, (-gb * a11 + ga * ab) / det)
        } else {
            (0.0, -gb / a22)
        };

        let raw_alpha = alpha + step_alpha;
        let new_alpha = raw_alpha.clamp(0.0, ALPHA_MAX);
        let (new_amp, g_new) = if new_alpha != raw_alpha && new_alpha == alpha {
            // pinned at a bound: optimise the amplitude alone
            let g_new = problem.shape(new_alpha);
            (problem.best_amplitude(&g_new), g_new)
        } else {
            let amp = amplitude + step_amp;
            let amp = if amp > 0.0 { amp } else { 0.5 * amplitude };
            (amp, problem.shape(new_alpha))
        };
        let rss_new = problem.rss(&g_new, new_amp);

        if rss_new < rss {
            let small = (new_alpha - alpha).abs() <= STEP_TOL * alpha.max(1.0)
                && (new_amp - amplitude).abs() <= STEP_TOL * amplitude;
            alpha = new_alpha;
            amplitude = new_amp;
            g = g_new;
            rss = rss_new;
            mu = (mu / 3.0).max(1e-12);
            if small {
                converged = true;
                break;
            }
        } else {
            let stalled = (new_alpha - alpha).abs() <= STEP_TOL * alpha.max(1.0)
                && (new_amp - amplitude).abs() <= STEP_TOL * amplitude;
            if stalled || mu >= MU_MAX {
                converged = true;
                break;
            }
            mu *= 4.0;
        }
    }
    Ok(Candidate {
        alpha,
        amplitude,
        rss,
        iterations,
        converged,
    })
}

/// Every multi-start candidate, in the order of [`ALPHA_STARTS`].
pub fn fit_candidates(curve: &EigenCurve) -> Result<Vec<Candidate>> {
    ALPHA_STARTS
        .iter()
        .map(|&a0| fit_from_start(curve, a0))
        .collect()
}

/// Fits `lambda(tau) = N gamma_f / eta(alpha, tau)` to `curve`.
///
/// Runs [`fit_from_start`] from each point of [`ALPHA_STARTS`] and keeps the
/// converged candidate with the smallest residual. If none converges the best
/// candidate is returned with `converged == false`.
pub fn fit_eigencurve(
    curve: &EigenCurve,
    n_assets: usize,
    base_scale_minutes: f64,
) -> Result<FitResult> {
    if n_assets == 0 {
        return Err(Error::InvalidArgument("n_assets must be positive".into()));
    }
    if !(base_scale_minutes.is_finite() && base_scale_minutes > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "base scale must be positive, got {base_scale_minutes}"
        )));
    }
    let candidates = fit_candidates(curve)?;
    let best_of = |converged_only: bool| {
        candidates
            .iter()
            .filter(|c| c.converged || !converged_only)
            .min_by(|a, b| a.rss.total_cmp(&b.rss))
            .copied()
    };
    let best = best_of(true)
        .or_else(|| best_of(false))
        .expect("at least one start");
    let t_alpha = if best.alpha > 0.0 {
        Some(relaxation_time(best.alpha, base_scale_minutes)?)
    } else {
        None
    };
    Ok(FitResult {
        alpha: best.alpha,
        amplitude: best.amplitude,
        gamma_f: best.amplitude / n_assets as f64,
        t_alpha,
        rss: best.rss,
        iterations: best.iterations,
        converged: best.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::practical_eigencurve;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const TABLE: [(f64, f64); 4] = [(0.17, 0.16), (0.03, 0.25), (0.02, 0.18), (0.01, 0.26)];

    fn dense_grid() -> Vec<u64> {
        (1..=128).collect()
    }

    fn dyadic() -> Vec<u64> {
        (0..8).map(|k| 1u64 << k).collect()
    }

    fn noisy(curve: &EigenCurve, level: f64, seed: u64) -> EigenCurve {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, level).unwrap();
        let values = curve
            .values
            .iter()
            .map(|v| v * (1.0 + noise.sample(&mut rng)))
            .collect();
        EigenCurve::new(curve.taus.clone(), values, curve.rank).unwrap()
    }

    #[test]
    fn curve_validation() {
        assert!(EigenCurve::new(vec![1, 2], vec![1.0], 1).is_err());
        assert!(EigenCurve::new(vec![2, 1], vec![1.0, 1.0], 1).is_err());
        assert!(EigenCurve::new(vec![1, 1], vec![1.0, 1.0], 1).is_err());
        assert!(EigenCurve::new(vec![0, 1], vec![1.0, 1.0], 1).is_err());
        assert!(EigenCurve::new(vec![1, 2], vec![1.0, 0.0], 1).is_err());
        assert!(EigenCurve::new(vec![1, 2], vec![1.0, f64::NAN], 1).is_err());
        assert!(EigenCurve::new(vec![1, 2], vec![1.0, 1.0], 0).is_err());
        assert!(EigenCurve::new(vec![], vec![], 1).is_ok());
    }

    #[test]
    fn relaxation_time_examples() {
        assert!((relaxation_time(0.16, 1.0).unwrap() - 1.0 / 6.25f64.ln()).abs() < 1e-15);
        assert!((relaxation_time(0.25, 1.0).unwrap() - 1.0 / 4f64.ln()).abs() < 1e-15);
        assert!((relaxation_time((-1.0f64).exp(), 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((relaxation_time(0.25, 5.0).unwrap() - 5.0 / 4f64.ln()).abs() < 1e-14);
        let err = relaxation_time(0.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("no memory"));
        assert!(relaxation_time(1.0, 1.0).is_err());
        assert!(relaxation_time(0.5, 0.0).is_err());
    }

    #[test]
    fn reference_parameters_round_trip() {
        for (gamma, alpha) in TABLE {
            for taus in [dense_grid(), dyadic()] {
                let curve = practical_eigencurve(533, gamma, alpha, &taus).unwrap();
                let fit = fit_eigencurve(&curve, 533, 1.0).unwrap();
                assert!(fit.converged);
                assert!((fit.alpha - alpha).abs() < 1e-6, "{fit:?}");
                assert!((fit.amplitude - 533.0 * gamma).abs() < 1e-6, "{fit:?}");
                assert!((fit.gamma_f - gamma).abs() < 1e-6 / 533.0 * 2.0);
                let t = fit.t_alpha.unwrap();
                assert!((t - 1.0 / (1.0 / alpha).ln()).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn flat_curve_gives_zero_alpha() {
        let curve = EigenCurve::new(dyadic(), vec![7.5; 8], 1).unwrap();
        let fit = fit_eigencurve(&curve, 100, 1.0).unwrap();
        assert_eq!(fit.alpha, 0.0);
        assert!((fit.amplitude - 7.5).abs() < 1e-12);
        assert_eq!(fit.t_alpha, None);
        assert!(fit.rss < 1e-20);

        // a slowly falling curve pins alpha at the lower bound
        let values: Vec<f64> = (0..8).map(|k| 10.0 - 0.1 * k as f64).collect();
        let curve = EigenCurve::new(dyadic(), values.clone(), 1).unwrap();
        let fit = fit_eigencurve(&curve, 100, 1.0).unwrap();
        assert_eq!(fit.alpha, 0.0);
        let mean = values.iter().sum::<f64>() / 8.0;
        assert!((fit.amplitude - mean).abs() < 1e-10);
    }

    #[test]
    fn too_few_points() {
        let curve = EigenCurve::new(vec![1, 2], vec![1.0, 2.0], 1).unwrap();
        assert!(matches!(
            fit_eigencurve(&curve, 10, 1.0),
            Err(Error::TooFewPoints { got: 2, need: 3 })
        ));
        let curve = EigenCurve::new(vec![1, 2, 4], vec![1.0, 2.0, 2.5], 1).unwrap();
        assert!(fit_eigencurve(&curve, 0, 1.0).is_err());
        assert!(fit_eigencurve(&curve, 10, -1.0).is_err());
    }

    #[test]
    fn refit_is_idempotent() {
        for (k, (gamma, alpha)) in TABLE.iter().enumerate() {
            let truth = practical_eigencurve(533, *gamma, *alpha, &dyadic()).unwrap();
            let fit = fit_eigencurve(&noisy(&truth, 0.03, k as u64), 533, 1.0).unwrap();
            let regenerated = fit.curve(&dyadic(), 1).unwrap();
            let refit = fit_eigencurve(&regenerated, 533, 1.0).unwrap();
            assert!((refit.alpha - fit.alpha).abs() < 1e-9, "{fit:?} {refit:?}");
            assert!((refit.amplitude - fit.amplitude).abs() < 1e-9 * fit.amplitude.max(1.0));
        }
    }

    #[test]
    fn amplitude_scales_alpha_does_not() {
        for seed in 0..4 {
            let truth = practical_eigencurve(100, 0.2, 0.3, &dyadic()).unwrap();
            let curve = noisy(&truth, 0.05, seed);
            let base = fit_eigencurve(&curve, 100, 1.0).unwrap();
            for c in [0.01, 3.0, 250.0] {
                let values = curve.values.iter().map(|v| v * c).collect();
                let scaled = EigenCurve::new(curve.taus.clone(), values, 1).unwrap();
                let fit = fit_eigencurve(&scaled, 100, 1.0).unwrap();
                assert!((fit.alpha - base.alpha).abs() < 1e-9, "{base:?} {fit:?}");
                assert!((fit.amplitude / (c * base.amplitude) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn best_rss_beats_every_converged_start() {
        for seed in 0..6 {
            let truth = practical_eigencurve(50, 0.1, 0.6, &dyadic()).unwrap();
            let curve = noisy(&truth, 0.1, 100 + seed);
            let fit = fit_eigencurve(&curve, 50, 1.0).unwrap();
            for c in fit_candidates(&curve).unwrap() {
                if c.converged {
                    assert!(fit.rss <= c.rss);
                }
            }
            assert!(fit.rss >= 0.0);
        }
    }

    #[test]
    fn fit_is_a_stationary_point() {
        // at an interior optimum the profile residual is flat in alpha
        let truth = practical_eigencurve(100, 0.2, 0.4, &dense_grid()).unwrap();
        let curve = noisy(&truth, 0.02, 9);
        let fit = fit_eigencurve(&curve, 100, 1.0).unwrap();
        assert!(fit.alpha > 0.0);
        let problem = Problem {
            taus: &curve.taus,
            y: &curve.values,
        };
        let profile = |a: f64| {
            let g = problem.shape(a);
            problem.rss(&g, problem.best_amplitude(&g))
        };
        for h in [1e-3, 1e-4] {
            assert!(profile(fit.alpha + h) >= fit.rss * (1.0 - 1e-12));
            assert!(profile(fit.alpha - h) >= fit.rss * (1.0 - 1e-12));
        }
    }

    #[test]
    fn large_alpha_is_recovered() {
        let curve = practical_eigencurve(200, 0.05, 0.95, &dense_grid()).unwrap();
        let fit = fit_eigencurve(&curve, 200, 1.0).unwrap();
        assert!((fit.alpha - 0.95).abs() < 1e-6);
        assert!((fit.amplitude - 10.0).abs() < 1e-6);
    }
}
