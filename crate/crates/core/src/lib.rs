//! Harmonic analysis for the Bessel operator
//! B_lambda = -d^2/dx^2 + lambda(lambda-1)/x^2 on (0, oo).
//!
//! The crate evaluates the Poisson and heat semigroups generated by
//! -sqrt(B_lambda) and -B_lambda, the Hankel transform that diagonalizes
//! them, BMO-type norms adapted to odd extensions, Carleson norms and
//! balayage of discrete measures on the upper half-plane, and a dyadic
//! stopping-time decomposition that reassembles a compactly supported
//! function from boundary measures of its Poisson extension.

pub mod carleson;
pub mod decomposition;
pub mod error;
pub mod grid;
pub mod hankel;
pub mod kernels;
pub mod quad;
pub mod semigroup;
pub mod spaces;
pub mod specfun;

pub use error::{Error, Result};
pub use quad::QuadratureSpec;
