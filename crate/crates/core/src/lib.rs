//! Numerical toolkit for generalized complex Hénon maps: filtration and escape
//! classification, saddle orbits, parametrized stable manifolds, Fubini–Study
//! speeds, and the rescaling pipeline that produces Brody-type limit curves.

pub mod acceptance;
pub mod cli;
pub mod error;
pub mod escape;
pub mod fs;
pub mod gallery;
pub mod henon;
pub mod manifold;
pub mod mapspec;
pub mod output;
pub mod pipeline;
pub mod saddle;
pub mod scalar;

pub use error::{HenonError, Result};
pub use henon::{AffinePoint, HenonMap, Jacobian2, Polynomial, ProjectivePoint};
pub use scalar::{MpFloat, Real, C, C64};
