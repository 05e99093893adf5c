//! Recovery of Dirichlet-series coefficients from noisy samples of the sum
//! `F_a(t) = Σ a_k e^{-λ_k t}`, and inversion of initial data for 1-D and
//! tensor-product fractional heat equations from point, boundary-flux and
//! hyperplane measurements.
//!
//! Three recovery routes are provided, each matched to a regime of the
//! exponent sequence `(λ_k)`:
//!
//! * [`biortho`] — linear extraction against a biorthogonal family in
//!   `L²(0,T)`, available when `Σ 1/λ_k < ∞` (logarithmic stability);
//! * [`peeling`] — sequential estimate-subtract-recurse for the divergent
//!   regime `Σ 1/λ_k = ∞` (double-logarithmic stability);
//! * [`vandermonde`] — sampling at equispaced times and solving the
//!   structured Vandermonde system in the nodes `x_n = e^{-λ_n}`
//!   (Hölder stability under a gap condition).
//!
//! All arithmetic is arbitrary-precision ([`rug::Float`], MPFR) with a
//! per-run precision in bits; the Gram and Vandermonde systems involved are
//! exponentially ill-conditioned, so fixed 64-bit floats fail beyond very
//! small truncation levels.
//!
//! The [`lab`] module drives noise sweeps over the recovery pipelines and
//! fits the observed error curves against logarithmic, double-logarithmic
//! and Hölder rate models.

// Guards written as `!(x > 0)` are NaN-aware on purpose: a NaN scale or
// horizon must take the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biortho;
pub mod error;
pub mod forward;
pub mod inverse_heat;
pub mod lab;
pub mod linalg;
pub mod peeling;
pub mod precision;
pub mod quadrature;
pub mod report;
pub mod sensor;
pub mod sequences;
pub mod vandermonde;

pub use error::{Error, Result};
pub use precision::Prec;
