//! Brascamp-Lieb and reversed Brascamp-Lieb constants from the Gaussian
//! fixed-point equation, with independent numerical oracles.
//!
//! The linear-algebra layer ([`datum`], [`gaussian_solver`], [`quadform`],
//! [`gaussian_verify`], [`structure`], [`young`]) is generic over the scalar
//! type through [`Real`]; the grid quadrature ([`functional_verify`]) and the
//! Monte Carlo layer ([`stochastic`]) work in `f64`. The aliases below fix the
//! scalar to `f64` for the common case.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datum;
pub mod error;
pub mod functional_verify;
pub mod gaussian_solver;
pub mod gaussian_verify;
pub mod linalg;
pub mod quadform;
pub mod sampling;
mod scalar;
pub mod stochastic;
pub mod structure;
pub mod young;

pub use datum::{validate, BLDatum, DatumDiagnostics, DatumDocument, LinearFactor};
pub use error::{Error, Result};
pub use gaussian_solver::{solve, Constant, SolveOptions, SolveResult, SpdMatrix};
pub use gaussian_verify::VerificationReport;
pub use quadform::GaussianTuple;
pub use scalar::Real;

/// `f64` datum.
pub type Datum = BLDatum<f64>;
/// `f64` linear factor.
pub type Factor = LinearFactor<f64>;
/// `f64` SPD matrix.
pub type Spd = SpdMatrix<f64>;
/// `f64` Gaussian tuple.
pub type Tuple = GaussianTuple<f64>;
/// `f64` solver output.
pub type Solution = SolveResult<f64>;
/// `f64` subspace.
pub type Subspace = structure::Subspace<f64>;
/// `f64` Young exponents.
pub type YoungExponents = young::YoungExponents<f64>;

/// Library version embedded in machine-readable reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
