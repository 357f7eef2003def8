//! Numerical laboratory for nonlocal heat equations.
//!
//! The crate solves Cauchy–Dirichlet problems for integro-differential
//! equations of the form `L_K u + du/dt = f` on a bounded interval or
//! rectangle, where `L_K` is a symmetric jump operator with kernel
//! comparable to the fractional one of order `s`, and the Dirichlet datum
//! is prescribed on the whole exterior of the domain (not just its
//! topological boundary). On top of the solvers it provides an audit layer
//! that re-checks, on computed fields, the quantitative inequalities this
//! class of equations is supposed to satisfy: order/comparison principles,
//! energy (Caccioppoli) estimates, local boundedness, and Harnack-type
//! bounds with their nonlocal tail corrections, together with the covering
//! and iteration lemmas those proofs lean on.
//!
//! Module map:
//!
//! * [`kernel`] — admissible jump kernels and the fractional normalization;
//! * [`grid`] — lattice discretization of the domain and its exterior
//!   collar, plus space-time cylinders;
//! * [`field`] — space-time lattice functions with exterior data;
//! * [`op`] — assembly and application of the discrete operator, energy
//!   forms and norms;
//! * [`spectral`] — the Dirichlet eigenbasis of the discrete operator;
//! * [`evolve`] — time stepping (spectral Galerkin and monotone implicit
//!   Euler), boundary lifting, energy accounting;
//! * [`tail`] — the nonlocal tail functional;
//! * [`covering`] — parabolic distance, cylinder dilation, and the covering
//!   dichotomy on discrete point sets;
//! * [`iteration`] — geometric-decay and interpolation iteration lemmas;
//! * [`audit`] — inequality audits on computed fields;
//! * [`scenario`] — configuration, presets, and the reproducible runner.

pub mod audit;
pub mod covering;
pub mod error;
pub mod evolve;
pub mod field;
pub mod grid;
pub mod iteration;
pub mod kernel;
pub mod op;
pub mod quad;
pub mod scenario;
pub mod spectral;
pub mod tail;

pub use error::{Error, Result};
