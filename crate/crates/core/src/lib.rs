//! Lead-lag factor model for the time-scale dependence of the eigenvalues
//! of securities correlation matrices.
//!
//! Returns follow
//!
//! ```text
//! r_i(t) = eps_i(t) + sum_k alpha^k sum_f beta_{i,f} R_f(t - k)
//! ```
//!
//! and are aggregated over `tau` base steps. The crate covers the whole chain:
//! simulating panels ([`model`]), closed-form and sample second moments
//! ([`moments`]), eigenvalue machinery ([`spectral`]), fitting the
//! `N gamma_f / eta(tau)` law to eigenvalue curves ([`fitting`]), the
//! scale ladder that ties them together ([`pipeline`]) and file formats
//! ([`io`]).

pub mod error;
pub mod fitting;
pub mod io;
pub mod model;
pub mod moments;
pub mod pipeline;
pub mod spectral;

pub use error::{Error, Result};
pub use fitting::{fit_eigencurve, relaxation_time, EigenCurve, FitResult};
pub use model::{simulate_panel, stationary_burn_in, Compounding, ModelSpec, ReturnPanel};
pub use moments::{eta, kappa, Horizon, MatrixKind, ScaleMatrix};
pub use pipeline::{eigencurves, scale_spectrum};
pub use spectral::{
    basic_eigenvalues, dense_eigenvalues, gamma_matrix, practical_eigencurve, rho_of_tau,
    secular_solve, GammaMatrix, LoadingMatrix, LoadingVector, Spectrum,
};

#[cfg(test)]
pub(crate) mod testutil;
