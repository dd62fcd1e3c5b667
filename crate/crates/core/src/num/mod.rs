//! Configurable-precision numeric substrate: complex pairs and gamma.

pub mod complex;
pub mod gamma;

pub use complex::Cx;
pub use gamma::{gamma, lngamma};
