//! Trajectory optimization on manifolds by successive pseudospectral
//! convexification.
//!
//! Trajectories are parameterized by retractions about a reference,
//! transcribed with hp flipped-Radau collocation in tangent-space frame
//! coordinates, and solved as a sequence of second-order cone programs.
//! Updates are applied through the retraction, so unit-norm states and
//! controls stay on their manifolds without renormalization.

pub mod collocation;
pub mod conic;
pub mod error;
pub mod geometry;
pub mod landing;
pub mod problems;
pub mod scvx;
pub mod transcription;

pub use error::{Error, Result};
