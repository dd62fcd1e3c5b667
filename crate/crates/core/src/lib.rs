//! Exact bound states of the (12,6) Lennard-Jones radial Schrodinger equation.
//!
//! The dimensionless equation has irregular singular points at the origin
//! (rank 5) and at infinity (rank 1). The crate constructs its multiplicative
//! (Floquet) solutions on the punctured plane, formal solutions at both
//! singular points, and the connection factors linking them; bound-state
//! energies are roots of a quantization condition built from those factors,
//! wave functions come from matched series representations, and critical
//! intensities (where a new state appears at zero energy) from an outward
//! integration at eps = 0. An independent finite-difference oracle is
//! included for cross-validation.
//!
//! All arithmetic runs at a configurable mantissa width (default 113 bits);
//! complex values are pairs of `rug::Float`.

pub mod error;
pub mod num;
pub mod problem;

pub mod linalg;
pub mod ode;
pub mod quad;

pub mod connection;
pub mod critical;
pub mod floquet;
pub mod oracle;
pub mod spectrum;
pub mod thome;

pub use error::{Error, Result};
pub use num::Cx;
pub use problem::{exponent_coefficients, make_problem, ExponentCoefficients, NumericsConfig, ProblemSpec};
