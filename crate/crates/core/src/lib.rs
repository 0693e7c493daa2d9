//! Spectral solver for the Laplacian on planar domains with cylindrical ends
//! or an artificial circle around a compactly supported perturbation.

pub mod error;
pub mod geometry;
pub mod mesh;
pub mod sparse;
pub mod specfun;
pub mod transverse;
pub mod eigen;
pub mod fem;
pub mod ntd;
pub mod solver;
pub mod resonance;
pub mod pipeline;
pub mod validate;
pub mod cli;

pub use error::{Error, Result};
