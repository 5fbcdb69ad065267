//! Monte Carlo laboratory for Fleming-Viot particle systems driven by
//! Bessel-type diffusions.
//!
//! The crate pairs path-level simulation with closed-form analytics so that
//! each side can verify the other:
//!
//! * [`specfun`] — deterministic numerics: log-gamma, digamma, the gamma and
//!   Student-t densities, the jump-location density of the two-particle
//!   system, the collapse ODE flow and the constants controlling it.
//! * [`sampling`] — seeded, reproducible sampling of every distribution the
//!   analytics name (gamma, normal, chi-squared, Student-t, the hitting-time
//!   law of a squared Bessel process, and the exact jump-location law).
//! * [`paths`] — Euler-Maruyama simulation of the three driving diffusions
//!   with adaptive stepping near the absorbing boundary, plus a
//!   Freidlin-Wentzell-style deviation check against the zero-noise flow.
//! * [`fleming_viot`] — the N-particle engine with the uniform-jump rule,
//!   the exact two-particle scaling construction, and the sum-of-squares
//!   coupling against a squared Bessel process.
//! * [`diagnostics`] — estimators tying simulation to theory: a perpetuity
//!   convergence test, Kolmogorov-Smirnov tests, exponential tail fitting,
//!   and mergeable summary statistics.
//! * [`quad`] — adaptive Gauss-Kronrod quadrature used by the density
//!   checks.

pub mod diagnostics;
pub mod error;
pub mod fleming_viot;
pub mod paths;
pub mod quad;
pub mod sampling;
pub mod specfun;

pub use error::{Error, Result};
