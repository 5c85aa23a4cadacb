//! Statistical finite elements for reaction-diffusion systems.
//!
//! The crate couples a P1 finite element discretisation of semilinear
//! reaction-diffusion equations with Gaussian-process model error and a
//! low-rank extended Kalman filter. The covariance of the filtering
//! distribution is carried as an `n x k` square-root factor; each timestep
//! widens the factor with the leading modes of the forcing covariance,
//! truncates back to rank `k` by eigendecomposition, and conditions on data
//! through the Woodbury identity.
//!
//! Modules:
//! - [`linalg`]: sparse LU with factor reuse, dense/truncated symmetric
//!   eigensolvers, Cholesky with a jitter policy.
//! - [`fem`]: structured interval/rectangle meshes, mass/stiffness assembly,
//!   point interpolation, Dirichlet elimination.
//! - [`gp`]: squared-exponential kernel, the projected model-error
//!   covariance and its low-rank square root.
//! - [`models`]: the concrete reaction-diffusion systems and their initial
//!   condition generators.
//! - [`integrators`]: Crank-Nicolson with Newton iteration, first-order
//!   IMEX, and Euler-Maruyama sampling of the stochastic prior.
//! - [`filters`]: static Gaussian update, full-rank reference filter, and
//!   the low-rank extended Kalman filter.
//! - [`hyper`]: per-step MAP estimation of the forcing amplitude and
//!   observation noise.
//! - [`diagnostics`]: effective rank, retained variance, relative errors,
//!   divergence detection.

pub mod diagnostics;
pub mod fem;
pub mod filters;
pub mod gp;
pub mod hyper;
pub mod integrators;
pub mod linalg;
pub mod models;

/// Crate-wide error type aggregating the per-module failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Mesh(#[from] fem::MeshError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    Integration(#[from] integrators::IntegrationError),
    #[error(transparent)]
    Filter(#[from] filters::FilterError),
    #[error(transparent)]
    Diagnostics(#[from] diagnostics::DiagnosticsError),
}

pub type Result<T> = std::result::Result<T, Error>;
