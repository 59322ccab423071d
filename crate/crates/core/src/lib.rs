//! Adaptive neural-network subspace Galerkin solver for 2D elliptic and
//! interface problems.

pub mod diffnet;
pub mod error;
pub mod galerkin;
pub mod harness;
pub mod losses;
pub mod par;
pub mod problems;
pub mod quadrature;
pub mod space;
pub mod training;

pub use error::{Error, Result};
