//! Spectral shape correspondence toolkit.
//!
//! The pipeline: load a triangle mesh, assemble the cotangent
//! Laplace-Beltrami pencil (W, D), reduce to the dominant low-frequency
//! eigenspace, integrate a heat / wave / damped-wave equation in the reduced
//! space with an interchangeable one-step scheme, and read off per-vertex
//! time-signature descriptors. Descriptor sets from two shapes are matched
//! by nearest neighbour in the L1 sense and scored against a ground-truth
//! correspondence with normalized geodesic errors.

pub mod error;
pub mod mesh;
pub mod sparse;
pub mod laplacian;
pub mod binio;
pub mod spectrum;
pub mod integrators;
pub mod descriptor;
pub mod correspondence;
pub mod evaluation;
pub mod config;
pub mod cli;

#[doc(hidden)]
pub mod testing;

pub use error::{Error, Result};
