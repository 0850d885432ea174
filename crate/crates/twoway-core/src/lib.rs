//! Solver library for two-way (forward-backward) diffusion boundary value
//! problems
//!
//! ```text
//!     h(θ) ∂f/∂x = -A f,      A v = -(p v')',      0 ≤ x ≤ L,
//! ```
//!
//! where the weight `h` changes sign on (a, b) and boundary data is given on
//! the half-ranges: `f(0,θ) = w(θ)` where `h > 0` and `f(L,θ) = w(θ)` where
//! `h < 0`.
//!
//! The solution is expanded over the eigenfunctions of `(p u')' + λ h u = 0`
//! together with the zero-mode companions `1` and `x + g(θ)` when present,
//! and the expansion coefficients are produced by a projected Neumann series
//! whose convergence is certified by finite-rank operator-norm estimates.
//!
//! Module map:
//! - [`quad`]: grids, quadrature and the three inner products.
//! - [`spectral`]: the indefinite-weight eigensolvers (trigonometric
//!   recurrence for periodic weights, spectral elements otherwise).
//! - [`operators`]: expansions and the finite-rank realizations of the
//!   half-range projections Q±, P±, V, W, M_L, W_L, P and P_Λ.
//! - [`solver`]: the Neumann iteration, a least-squares oracle, solution
//!   evaluation, flux and boundary residuals.
//! - [`norms`]: ‖W_{L,N}‖ via a generalized eigenproblem, ‖P‖ analytic and
//!   numeric, power-law fits and the divergence lower bound.
//! - [`periodic`]: closed-form series coefficients, large-L asymptotics,
//!   λ_R extraction and the diffusivity estimate for the periodic cosine
//!   channel problem.

pub mod error;
pub mod legendre;
pub mod linalg;
pub mod norms;
pub mod operators;
pub mod periodic;
pub mod quad;
pub mod solver;
pub mod spectral;

pub use error::Error;
pub use quad::{Bc, BoundaryData, ProblemSpec, Quadrature, WeightKind};
pub use spectral::{solve_spectrum, Spectrum};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
