//! Numerical experiments for non-autonomous parabolic evolution systems with
//! fast-oscillating time dependence on periodic boxes.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: periodic grids, Fourier transforms, fields and norms.
//! - [`operator`]: the coefficient family `A(t)`, its audits and Cesàro means.
//! - [`evolution`]: propagators `U_λ(t, s)` and the averaged semigroup.
//! - [`mild`]: mild solutions of the semilinear problem.
//! - [`harness`]: λ-sweeps, convergence-order fits and reports.

pub mod error;
pub mod evolution;
pub mod harness;
pub mod mild;
pub mod operator;
pub mod profile;
pub mod quadrature;
pub mod spectral;

pub use error::{EvolutionError, HarnessError, OperatorError, QuadratureError, SolverError, SpectralError};
