//! Wong-Zakai approximation of reflected SDEs in admissible planar domains.
//!
//! A Brownian driver is sampled on a dyadic grid ([`wiener`]), polygonalized,
//! and fed to a reflected ODE solved by closest-point projection
//! ([`reflect`]). [`coupling`] runs pairs of reflected Brownian motions and
//! checks their angle invariants; [`diagnostics`] holds the Monte-Carlo
//! statistics.

pub mod cones;
pub mod coupling;
pub mod diagnostics;
pub mod geometry;
pub mod linalg;
pub mod reflect;
pub mod wiener;

pub use linalg::{Matrix, Vector};
