//! Pseudo-spectral simulator and verification toolkit for a doubly parabolic
//! Keller-Segel system with fractional diffusion.
//!
//! The model couples a cell density `rho` and a chemoattractant concentration
//! `c` on a periodic truncation of R^d:
//!
//! ```text
//! d/dt rho = -Lambda^alpha rho - chi div(rho grad c)
//! tau d/dt c = -Lambda^beta c + rho - gamma c
//! ```
//!
//! where `Lambda^a = (-Delta)^{a/2}` is the fractional Laplacian with Fourier
//! symbol `|k|^a`. The crate provides:
//!
//! - [`spectral`]: Fourier-multiplier operators (fractional Laplacian,
//!   semigroup `exp(-t Lambda^a)`, gradients) on periodic grids;
//! - [`kernels`]: real-space fractional heat kernel evaluation by Hankel-form
//!   quadrature, scaling-law checks, weighted norms and moments;
//! - [`feasibility`]: the exponent calculus that gates the mild-solution
//!   theory (hypotheses on `(p, r)`, the decay rate `sigma`, the data
//!   exponents `p1, p2`, the gradient exponent `wp`, and the auxiliary region
//!   with `r*sigma <= d/alpha`);
//! - [`mild`]: the constructive Duhamel machinery (initial term, bilinear and
//!   linear Duhamel operators, Picard iteration) plus an independent
//!   exponential-time-differencing integrator used as an oracle;
//! - [`diagnostics`]: conservation laws, the closed-form chemical mass,
//!   decay envelopes, positivity reports, the fractional-Laplacian
//!   definition equivalence crosscheck, and the sign-inequality suite.
//!
//! All operators act on [`field::Field`] values attached to a [`grid::Grid`]
//! describing the box `[-L, L)^d` with `n` samples per axis.

pub mod bessel;
pub mod diagnostics;
pub mod error;
pub mod feasibility;
pub mod field;
pub mod grid;
pub mod kernels;
pub mod mild;
pub mod params;
pub mod quad;
pub mod spectral;

pub use error::{FksError, Result};
pub use field::{Field, VectorField};
pub use grid::Grid;
pub use params::SystemParams;
