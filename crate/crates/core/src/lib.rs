//! Numerical laboratory for coarse graining high-contrast coefficient fields.
//!
//! The crate generates stationary random coefficient fields a = s + k on the
//! periodic cell lattice (d = 1, 2), computes coarse-grained matrices by
//! convex minimization over potential/flux pairs on a multiscale hierarchy of
//! cubes adapted to the homogenized coefficient, and measures how fast the
//! coarse matrices settle: per-scale defects, multiscale error functionals,
//! quantitative interior estimates, harmonic approximation, and the dimension
//! of spaces of subquadratically growing solutions.

pub mod coarsegrain;
pub mod error;
pub mod fem;
pub mod fieldgen;
pub mod geometry;
pub mod harmonics;
pub mod matrix;
pub mod snapshot;
pub mod sobolev;
pub mod verify;

pub use error::{Error, Result};
pub use fieldgen::CoefficientField;
pub use coarsegrain::{CoarseBlocks, CoarseMatrix, HomogenizedEstimate};
pub use geometry::{AdaptedCube, AdaptedGeometry};
pub use matrix::{DMat, DVec};
